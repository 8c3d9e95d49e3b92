"""Adaptive Dormand-Prince 5(4) integration with dense output and events.

The stepping loop is a single numba-compatible function.  It runs compiled
when a system supplies a jitted first-order kernel ``rhs(t, y, params)`` and
JIT is enabled; otherwise the identical loop runs as plain Python, calling
the system's ``force`` callback.

Dense output is the standard free 4th-order interpolant of the pair.  Events
are located after stepping: each step is scanned for sign changes of the
event functions evaluated on the interpolant, and every crossing is refined
with :func:`find_root`.
"""
import csv
import hashlib
import importlib.util
import inspect
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import optimize as _spo

from . import _jit
from .core import State

__all__ = [
    "EventSpec",
    "Event",
    "Trajectory",
    "StepSizeUnderflow",
    "NonFiniteState",
    "OutOfRange",
    "NoSignChange",
    "integrate",
    "integrate_first_order",
    "dense_eval",
    "find_root",
    "export_csv",
]


class StepSizeUnderflow(RuntimeError):
    """Step size fell below the minimum; typically a singularity ahead."""


class NonFiniteState(RuntimeError):
    """The right-hand side produced NaN or inf at an accepted state."""


class OutOfRange(ValueError):
    """Dense evaluation requested outside the integrated span."""


class NoSignChange(ValueError):
    """Root bracket without a sign change."""


# Dormand-Prince coefficients
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                                49.0 / 176.0, -5103.0 / 18656.0)
_A71, _A73, _A74, _A75, _A76 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                                -2187.0 / 6784.0, 11.0 / 84.0)
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                                -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)
_D1, _D3, _D4, _D5, _D6, _D7 = (-12715105075.0 / 11282082432.0, 87487479700.0 / 32700410799.0,
                                -10690763975.0 / 1880347072.0, 701980252875.0 / 199316789632.0,
                                -1453857185.0 / 822651844.0, 69997945.0 / 29380423.0)

STATUS_OK = 0
STATUS_UNDERFLOW = 1
STATUS_NONFINITE = 2
STATUS_MAXSTEPS = 3
_STATUS_TEXT = {
    STATUS_OK: "ok",
    STATUS_UNDERFLOW: "step size underflow",
    STATUS_NONFINITE: "non-finite right-hand side",
    STATUS_MAXSTEPS: "maximum number of steps reached",
}


@_jit.njit
def _err_norm(y0, y1, e, rtol, atol):
    acc = 0.0
    for i in range(y0.shape[0]):
        sk = atol + rtol * max(abs(y0[i]), abs(y1[i]))
        acc += (e[i] / sk) ** 2
    return math.sqrt(acc / y0.shape[0])


@_jit.njit
def _all_finite(v):
    for i in range(v.shape[0]):
        if not math.isfinite(v[i]):
            return False
    return True


def _dopri_loop(rhs, params, t0, y0, t1, rtol, atol, h0, hmin, max_steps):
    """Core stepping loop.

    Returns ``(ts, ys, conts, nacc, status)``: accepted node times, node
    states, and the five dense-output coefficient rows of every step.
    """
    dim = y0.shape[0]
    direction = 1.0 if t1 > t0 else -1.0
    cap = 256
    ts = np.empty(cap)
    ys = np.empty((cap, dim))
    conts = np.empty((cap, 5, dim))
    ts[0] = t0
    ys[0, :] = y0
    nacc = 0
    t = t0
    y = y0.copy()
    k1 = rhs(t, y, params)
    if not _all_finite(k1):
        return ts[:1], ys[:1], conts[:0], 0, STATUS_NONFINITE
    h = h0
    facold = 1e-4
    nstep = 0
    status = STATUS_OK
    while True:
        if direction * (t + 1.01 * h * direction - t1) >= 0.0:
            h = abs(t1 - t)
        if h < hmin:
            status = STATUS_UNDERFLOW
            break
        if nstep >= max_steps:
            status = STATUS_MAXSTEPS
            break
        nstep += 1
        hs = h * direction
        k2 = rhs(t + _C2 * hs, y + hs * (_A21 * k1), params)
        k3 = rhs(t + _C3 * hs, y + hs * (_A31 * k1 + _A32 * k2), params)
        k4 = rhs(t + _C4 * hs, y + hs * (_A41 * k1 + _A42 * k2 + _A43 * k3), params)
        k5 = rhs(t + _C5 * hs, y + hs * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4), params)
        y6 = y + hs * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5)
        tn = t + hs
        if direction * (tn - t1) > 0.0 or abs(t1 - tn) < 1e-15 * max(1.0, abs(t1)):
            tn = t1
        k6 = rhs(tn, y6, params)
        ynew = y + hs * (_A71 * k1 + _A73 * k3 + _A74 * k4 + _A75 * k5 + _A76 * k6)
        k7 = rhs(tn, ynew, params)
        e = hs * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        if _all_finite(ynew) and _all_finite(k7) and _all_finite(e):
            err = _err_norm(y, ynew, e, rtol, atol)
        else:
            err = math.inf
        if not math.isfinite(err):
            h = h * 0.1
            continue
        fac11 = err ** 0.17
        if err <= 1.0:
            fac = fac11 / facold ** 0.04
            fac = max(0.1, min(5.0, fac / 0.9))
            if nacc + 2 > cap:
                cap *= 2
                ts2 = np.empty(cap)
                ys2 = np.empty((cap, dim))
                conts2 = np.empty((cap, 5, dim))
                ts2[:nacc + 1] = ts[:nacc + 1]
                ys2[:nacc + 1] = ys[:nacc + 1]
                conts2[:nacc] = conts[:nacc]
                ts, ys, conts = ts2, ys2, conts2
            ydiff = ynew - y
            bspl = hs * k1 - ydiff
            conts[nacc, 0, :] = y
            conts[nacc, 1, :] = ydiff
            conts[nacc, 2, :] = bspl
            conts[nacc, 3, :] = ydiff - hs * k7 - bspl
            conts[nacc, 4, :] = hs * (_D1 * k1 + _D3 * k3 + _D4 * k4 + _D5 * k5 + _D6 * k6 + _D7 * k7)
            nacc += 1
            facold = max(err, 1e-4)
            t = tn
            y = ynew
            k1 = k7
            ts[nacc] = t
            ys[nacc, :] = y
            if t == t1:
                break
            h = h / fac
        else:
            h = h / min(5.0, fac11 / 0.9)
    return ts[:nacc + 1], ys[:nacc + 1], conts[:nacc], nacc, status


_dopri_loop_jit = _jit.njit(_dopri_loop) if _jit.JIT_ENABLED else None

# numba cannot cache a function that receives a jitted function as an
# argument, so every kernel gets the loop instantiated in a small generated
# module that imports the kernel by name; that module caches normally.
_LOOPS = {}
_GEN_TEMPLATE = """# generated by noetherlab.odeint for {module}.{name}; do not edit
# kernel source hash {digest}
import math

import numpy as np

from noetherlab import odeint as _o
from noetherlab._jit import njit
from {module} import {name} as rhs

globals().update({{k: getattr(_o, k) for k in _o._LOOP_NAMES}})


@njit
{source}
"""
_LOOP_NAMES = tuple(n for n in _dopri_loop.__code__.co_names if n in globals())


def _cache_dir():
    env = os.environ.get("NOETHERLAB_CACHE_DIR")
    return Path(env) if env else Path.home() / ".cache" / "noetherlab"


def _specialized_loop(rhs):
    """Kernel-specific compiled loop ``(params, t0, y0, ...)`` or None."""
    py = getattr(rhs, "py_func", None)
    if py is None or "<" in py.__qualname__:
        return None
    key = (py.__module__, py.__qualname__)
    if key in _LOOPS:
        return _LOOPS[key]
    loop = None
    try:
        kernel_file = inspect.getsourcefile(py)
        digest = hashlib.sha256(Path(kernel_file).read_bytes()
                                + inspect.getsource(_dopri_loop).encode()).hexdigest()[:16]
        src = inspect.getsource(_dopri_loop).replace(
            "def _dopri_loop(rhs, params,", "def loop(params,", 1)
        text = _GEN_TEMPLATE.format(module=key[0], name=key[1], digest=digest, source=src)
        name = "_nl_loop_" + hashlib.sha256(".".join(key).encode()).hexdigest()[:12]
        d = _cache_dir()
        d.mkdir(parents=True, exist_ok=True)
        path = d / f"{name}.py"
        if not path.exists() or path.read_text() != text:
            tmp = path.with_suffix(f".{os.getpid()}.tmp")
            tmp.write_text(text)
            os.replace(tmp, path)
        spec = importlib.util.spec_from_file_location(name, path)
        mod = importlib.util.module_from_spec(spec)
        sys.modules[name] = mod
        spec.loader.exec_module(mod)
        loop = mod.loop
    except (OSError, TypeError, ImportError, SyntaxError):
        loop = None
    _LOOPS[key] = loop
    return loop


def _initial_step(rhs, params, t0, y0, t1, rtol, atol):
    f0 = rhs(t0, y0, params)
    sk = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / sk) ** 2))
    d1 = np.sqrt(np.mean((f0 / sk) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    span = abs(t1 - t0)
    h0 = min(h0, span)
    direction = 1.0 if t1 > t0 else -1.0
    f1 = rhs(t0 + direction * h0, y0 + direction * h0 * f0, params)
    d2 = np.sqrt(np.mean(((f1 - f0) / sk) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, span)


@dataclass(frozen=True)
class EventSpec:
    """Event function along a trajectory; ``direction`` is rising/falling/any."""

    id: str
    fn: Callable
    direction: str = "any"

    def __post_init__(self):
        if self.direction not in ("rising", "falling", "any"):
            raise ValueError(f"bad event direction {self.direction!r}")


@dataclass(frozen=True)
class Event:
    t: float
    id: str
    state: State

    def as_dict(self):
        return {"id": self.id, "t": self.t, "state": self.state.as_dict()}


@dataclass(frozen=True)
class Trajectory:
    """Dense solution ``y(t) = [q, qdot]`` on ``t_span`` with located events."""

    sys: object
    ts: np.ndarray
    ys: np.ndarray
    conts: np.ndarray
    events: tuple = ()
    status: str = "ok"
    nfev: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def t_span(self):
        return (float(self.ts[0]), float(self.ts[-1]))

    @property
    def truncated(self):
        return self.status != "ok"

    @property
    def segments(self):
        """List of ``((t_a, t_b), coefficients)`` pairs tiling the span."""
        return [((float(self.ts[i]), float(self.ts[i + 1])), self.conts[i])
                for i in range(len(self.conts))]

    def _locate(self, t):
        lo, hi = min(self.ts[0], self.ts[-1]), max(self.ts[0], self.ts[-1])
        if not (lo <= t <= hi):
            raise OutOfRange(f"t={t} outside integrated span [{lo}, {hi}]")
        forward = self.ts[-1] >= self.ts[0]
        keys = self.ts if forward else -self.ts
        key = t if forward else -t
        i = int(np.searchsorted(keys, key, side="right")) - 1
        return min(max(i, 0), len(self.conts) - 1)

    def y_at(self, t):
        t = float(t)
        if len(self.conts) == 0:
            if t == self.ts[0]:
                return self.ys[0].copy()
            raise OutOfRange("empty trajectory")
        i = self._locate(t)
        if t == self.ts[i]:
            return self.ys[i].copy()
        if t == self.ts[i + 1]:
            return self.ys[i + 1].copy()
        c = self.conts[i]
        th = (t - self.ts[i]) / (self.ts[i + 1] - self.ts[i])
        th1 = 1.0 - th
        return c[0] + th * (c[1] + th1 * (c[2] + th * (c[3] + th1 * c[4])))

    def state_at(self, t):
        return State.from_y(t, self.y_at(t))

    def sample(self, times):
        """Array of ``y`` rows at the given times."""
        return np.array([self.y_at(t) for t in np.atleast_1d(times)])

    def nodes(self):
        return [State.from_y(t, y) for t, y in zip(self.ts, self.ys)]

    def events_with_id(self, eid):
        return [e for e in self.events if e.id == eid]


def _system_rhs(sys):
    """First-order right-hand side ``(t, y, params) -> dy`` and its params."""
    if sys.rhs_kernel is not None:
        params = sys.kernel_params
        if params is None:
            params = np.zeros(1)
        return sys.rhs_kernel, np.asarray(params, dtype=float), True
    n = sys.n_dof

    def rhs(t, y, params):
        if not np.all(np.isfinite(y)):
            return np.full(2 * n, np.nan)  # the loop reports it as non-finite
        s = State.from_y(t, y)
        return np.concatenate([y[n:], np.atleast_1d(np.asarray(sys.force(s), dtype=float))])

    return rhs, np.zeros(1), False


def _run_loop(rhs, params, jitted, t0, y0, t1, rtol, atol, max_steps):
    y0 = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise NonFiniteState("initial state is not finite")
    if t1 == t0:
        raise ValueError("t1 must differ from the initial time")
    span = abs(t1 - t0)
    hmin = 1e-14 * span
    with np.errstate(all="ignore"):
        try:
            h0 = _initial_step(rhs, params, t0, y0, t1, rtol, atol)
        except (ZeroDivisionError, FloatingPointError):
            h0 = 1e-6 * span
        if not np.isfinite(h0) or h0 <= 0:
            h0 = 1e-6 * span
        h0 = max(h0, 10 * hmin)
        loop = _dopri_loop_jit if (jitted and _dopri_loop_jit is not None) else _dopri_loop
        if not jitted and _jit.JIT_ENABLED and getattr(rhs, "py_func", None) is not None:
            rhs = rhs.py_func
        args = (params, float(t0), y0, float(t1), float(rtol), float(atol), float(h0),
                float(hmin), int(max_steps))
        special = _specialized_loop(rhs) if loop is _dopri_loop_jit else None
        try:
            if special is not None:
                ts, ys, conts, nacc, status = special(*args)
            else:
                ts, ys, conts, nacc, status = loop(rhs, *args)
        except ZeroDivisionError:
            raise NonFiniteState("division by zero in right-hand side")
    return np.array(ts), np.array(ys), np.array(conts), int(status)


def _scan_events(traj_core, events, t_tol, n_sub):
    """Locate sign changes of every event function along the dense output."""
    found = []
    if not events:
        return found
    ts = traj_core.ts

    def g(ev, t):
        return float(ev.fn(traj_core.state_at(t)))

    for k, ev in enumerate(events):
        prev_t = ts[0]
        prev_g = g(ev, prev_t)
        for i in range(len(ts) - 1):
            sub = np.linspace(ts[i], ts[i + 1], n_sub + 2)[1:]
            for tt in sub:
                gg = g(ev, tt)
                crossing = (prev_g < 0.0 <= gg) or (prev_g > 0.0 >= gg)
                if crossing and gg == 0.0:
                    tc = tt
                elif crossing:
                    tc = find_root(lambda x: g(ev, x), (prev_t, tt), t_tol)
                if crossing:
                    rising = prev_g < 0.0
                    if ev.direction == "any" or (ev.direction == "rising") == rising:
                        found.append((tc, k, ev.id))
                prev_t, prev_g = tt, gg
    found.sort(key=lambda e: (e[0] * (1 if ts[-1] >= ts[0] else -1), e[1]))
    return [Event(tc, eid, traj_core.state_at(tc)) for tc, _, eid in found]


def integrate(sys, init, t1, rtol=1e-10, atol=1e-12, events=(), max_steps=1_000_000,
              strict=False, event_tol=1e-13, event_substeps=1):
    """Integrate ``qddot = force`` from ``init`` to ``t1``.

    Near a singularity the step size underflows and the trajectory is
    returned truncated with ``status`` set; with ``strict=True`` this raises
    :class:`StepSizeUnderflow` instead.  A non-finite right-hand side at an
    accepted state raises :class:`NonFiniteState`.
    """
    sys.check_state(init)
    rhs, params, jitted = _system_rhs(sys)
    ts, ys, conts, status = _run_loop(rhs, params, jitted, init.t, init.y, float(t1),
                                      rtol, atol, max_steps)
    if status == STATUS_NONFINITE:
        raise NonFiniteState(f"{sys.name}: non-finite right-hand side at t={ts[-1]}")
    if status == STATUS_UNDERFLOW and strict:
        raise StepSizeUnderflow(f"{sys.name}: step size underflow at t={ts[-1]}")
    traj = Trajectory(sys, ts, ys, conts, (), _STATUS_TEXT[status],
                      meta={"rtol": rtol, "atol": atol, "backend": "numba" if (
                          jitted and _dopri_loop_jit is not None) else "python"})
    if events:
        evs = _scan_events(traj, list(events), event_tol, event_substeps)
        traj = Trajectory(sys, ts, ys, conts, tuple(evs), traj.status, meta=traj.meta)
    return traj


def integrate_first_order(rhs, t0, y0, t1, params=None, rtol=1e-10, atol=1e-12,
                          max_steps=1_000_000):
    """Integrate a first-order system ``y' = rhs(t, y, params)``.

    Returns a :class:`Trajectory` without a system attached.
    """
    params = np.zeros(1) if params is None else np.asarray(params, dtype=float)
    jitted = _jit.JIT_ENABLED and hasattr(rhs, "py_func")
    ts, ys, conts, status = _run_loop(rhs, params, jitted, float(t0), y0, float(t1),
                                      rtol, atol, max_steps)
    if status == STATUS_NONFINITE:
        raise NonFiniteState(f"non-finite right-hand side at t={ts[-1]}")
    return Trajectory(None, ts, ys, conts, (), _STATUS_TEXT[status])


def dense_eval(traj, t):
    """State of ``traj`` at time ``t`` (exact at step nodes)."""
    return traj.state_at(t)


def find_root(fn, bracket, tol=1e-12):
    """Root of ``fn`` in ``bracket`` by Brent's safeguarded secant/bisection."""
    a, b = float(bracket[0]), float(bracket[1])
    fa, fb = float(fn(a)), float(fn(b))
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if fa * fb > 0.0:
        raise NoSignChange(f"no sign change on [{a}, {b}]")
    return float(_spo.brentq(fn, a, b, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=200))


def export_csv(traj, path):
    """Write nodes as CSV (t, q_1.., qdot_1..) and events as a JSON sidecar.

    Returns the pair of written paths.
    """
    n = traj.ys.shape[1] // 2
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"q_{i + 1}" for i in range(n)] + [f"qdot_{i + 1}" for i in range(n)])
    for t, y in zip(traj.ts, traj.ys):
        w.writerow([repr(float(t))] + [repr(float(v)) for v in y])
    path = str(path)
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
    side = _sidecar_path(path)
    payload = {"status": traj.status, "events": [e.as_dict() for e in traj.events]}
    with open(side, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path, side


def _sidecar_path(path):
    return (path[:-4] if path.endswith(".csv") else path) + ".events.json"
