"""Experiment configuration: YAML in, validated ExperimentConfig out.

Schema (unknown keys are errors)::

    system: oscillator | spheroid | cms
    <system keys>                 # see SYSTEM_KEYS
    t_span: [t0, t1]
    suite: all | conservation | brackets | commutators | groups | action_angle
           (or a list of these)
    seed: 0
    samples: 20                   # random states for bracket-type checks
    tol_scale: 1.0
    tolerances: {check_id: tol}   # per-check overrides
    integrator: {rtol: 1e-12, atol: 1e-13}
    output: path                  # report directory
"""
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

SUITES = ("conservation", "brackets", "commutators", "groups", "action_angle")

SYSTEM_KEYS = {
    "oscillator": {
        "required": ("beta", "q0", "qdot0"),
        "optional": {"omega": 1.0, "sigma0": [0.0, 1.0], "sigma_at": 0.0},
    },
    "spheroid": {
        "required": ("R", "theta0", "phi0", "thetadot0", "phidot0"),
        "optional": {},
    },
    "cms": {
        "required": ("k", "x0", "xdot0"),
        "optional": {},
    },
}

COMMON_KEYS = {"system", "t_span", "suite", "seed", "samples", "tol_scale", "tolerances",
               "integrator", "output"}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    system: str
    params: dict
    t_span: tuple
    suites: tuple = SUITES
    seed: int = 0
    samples: int = 20
    tol_scale: float = 1.0
    tolerances: dict = field(default_factory=dict)
    rtol: float = 1e-12
    atol: float = 1e-13
    output: str = "noetherlab-out"

    def tol(self, check_id, default):
        return float(self.tolerances.get(check_id, default)) * self.tol_scale


def _num(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{name} must be a finite number, got {v!r}")
    return float(v)


def _vec(name, v, n):
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ConfigError(f"{name} must be a list of {n} numbers")
    return [_num(f"{name}[{i}]", x) for i, x in enumerate(v)]


def _system_params(system, raw):
    spec = SYSTEM_KEYS[system]
    out = {}
    for k in spec["required"]:
        if k not in raw:
            raise ConfigError(f"{system}: missing key {k!r}")
    for k, default in spec["optional"].items():
        raw.setdefault(k, default)
    if system == "oscillator":
        beta = raw["beta"]
        if beta not in (1, -1):
            raise ConfigError("beta must be +1 or -1")
        out["beta"] = int(beta)
        om = raw["omega"]
        if isinstance(om, dict):
            if set(om) != {"omega2"}:
                raise ConfigError("omega must be a number or {omega2: [c0, c1, ...]}")
            coeffs = om["omega2"]
            if not isinstance(coeffs, list) or not coeffs:
                raise ConfigError("omega.omega2 must be a non-empty list")
            out["omega2"] = [_num("omega2", c) for c in coeffs]
        else:
            w = _num("omega", om)
            if w <= 0:
                raise ConfigError("omega must be positive")
            out["omega2"] = [w * w]
        out["sigma0"] = _vec("sigma0", raw["sigma0"], 2)
        if out["sigma0"] == [0.0, 0.0]:
            raise ConfigError("sigma0 must not be (0, 0)")
        out["sigma_at"] = _num("sigma_at", raw["sigma_at"])
        out["q0"] = _num("q0", raw["q0"])
        out["qdot0"] = _num("qdot0", raw["qdot0"])
        if out["q0"] == 0:
            raise ConfigError("q0 must be nonzero")
    elif system == "spheroid":
        for k in spec["required"]:
            out[k] = _num(k, raw[k])
        if out["R"] <= 0:
            raise ConfigError("R must be positive")
        if math.sin(out["theta0"]) == 0:
            raise ConfigError("theta0 must avoid the poles")
    else:
        out["k"] = _num("k", raw["k"])
        if out["k"] <= 0:
            raise ConfigError("k must be positive")
        out["x0"] = _vec("x0", raw["x0"], 3)
        out["xdot0"] = _vec("xdot0", raw["xdot0"], 3)
        if len(set(out["x0"])) < 3:
            raise ConfigError("x0 must hold distinct positions")
    return out


def parse_config(data):
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    data = dict(data)
    system = data.get("system")
    if system not in SYSTEM_KEYS:
        raise ConfigError(f"unknown system id {system!r}; expected one of {sorted(SYSTEM_KEYS)}")
    spec = SYSTEM_KEYS[system]
    allowed = COMMON_KEYS | set(spec["required"]) | set(spec["optional"])
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    raw = {k: data[k] for k in data if k not in COMMON_KEYS}
    params = _system_params(system, raw)

    ts = data.get("t_span")
    if not isinstance(ts, (list, tuple)) or len(ts) != 2:
        raise ConfigError("t_span must be [t0, t1]")
    t0, t1 = _num("t_span[0]", ts[0]), _num("t_span[1]", ts[1])
    if not t1 > t0:
        raise ConfigError("t_span must be nonempty with t1 > t0")

    suite = data.get("suite", "all")
    names = [suite] if isinstance(suite, str) else suite
    if not isinstance(names, list) or not names:
        raise ConfigError("suite must be a name or a list of names")
    if "all" in names:
        suites = SUITES
    else:
        bad = [s for s in names if s not in SUITES]
        if bad:
            raise ConfigError(f"unknown suite(s): {', '.join(map(str, bad))}")
        suites = tuple(s for s in SUITES if s in names)

    integ = data.get("integrator", {}) or {}
    if not isinstance(integ, dict) or set(integ) - {"rtol", "atol"}:
        raise ConfigError("integrator accepts only rtol and atol")
    tols = data.get("tolerances", {}) or {}
    if not isinstance(tols, dict):
        raise ConfigError("tolerances must be a mapping of check id to value")
    from .checks import catalog  # late import: checks import this module

    known = {c.id for c in catalog(system)}
    bad = sorted(set(tols) - known)
    if bad:
        raise ConfigError(f"tolerance overrides for unknown checks: {', '.join(bad)}")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    samples = data.get("samples", 20)
    if isinstance(samples, bool) or not isinstance(samples, int) or samples < 1:
        raise ConfigError("samples must be a positive integer")
    scale = _num("tol_scale", data.get("tol_scale", 1.0))
    if scale <= 0:
        raise ConfigError("tol_scale must be positive")
    return ExperimentConfig(
        system=system,
        params=params,
        t_span=(t0, t1),
        suites=suites,
        seed=seed,
        samples=samples,
        tol_scale=scale,
        tolerances={k: _num(f"tolerances.{k}", v) for k, v in tols.items()},
        rtol=_num("rtol", integ.get("rtol", 1e-12)),
        atol=_num("atol", integ.get("atol", 1e-13)),
        output=str(data.get("output", "noetherlab-out")),
    )


def load_config(path):
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: invalid YAML: {exc}") from exc
    return parse_config(data)
