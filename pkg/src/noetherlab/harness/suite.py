"""Run check suites, assemble reports, export trajectories and plot data."""
import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..odeint import export_csv
from ..systems import cms, oscillator, spheroid
from .checks import Context, NotApplicableCheck, catalog


@dataclass
class CheckResult:
    id: str
    suite: str
    anchor: str
    criterion: int
    residual: float
    tol: float
    status: str  # pass | fail | skipped
    note: str = ""
    wall: float = 0.0

    @property
    def failed(self):
        return self.status == "fail"

    def as_dict(self):
        r = self.residual
        return {
            "id": self.id,
            "suite": self.suite,
            "anchor": self.anchor,
            "criterion": self.criterion,
            "max_residual": r if r is None or math.isfinite(r) else str(r),
            "tolerance": self.tol,
            "status": self.status,
            "note": self.note,
        }


@dataclass
class VerificationReport:
    system: str
    suites: tuple
    seed: int
    tol_scale: float
    results: list = field(default_factory=list)

    @property
    def n_failed(self):
        return sum(r.failed for r in self.results)

    @property
    def passed(self):
        return self.n_failed == 0

    @property
    def exit_code(self):
        return 0 if self.passed else 1

    def as_dict(self):
        """Deterministic content (wall times live in :meth:`timings`)."""
        return {
            "system": self.system,
            "suites": list(self.suites),
            "seed": self.seed,
            "tol_scale": self.tol_scale,
            "passed": self.passed,
            "checks": [r.as_dict() for r in self.results],
        }

    def timings(self):
        return {r.id: r.wall for r in self.results}

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self):
        lines = [f"noetherlab verification: system={self.system} seed={self.seed} "
                 f"tol_scale={self.tol_scale:g}"]
        w = max((len(r.id) for r in self.results), default=10)
        for r in self.results:
            res = "-" if r.residual is None else f"{r.residual:.3e}"
            lines.append(f"{r.status.upper():7s} {r.id:{w}s}  residual {res:>10s}  "
                         f"tol {r.tol:.1e}  {r.note}".rstrip())
        n = len(self.results)
        skipped = sum(r.status == "skipped" for r in self.results)
        lines.append(f"{n - self.n_failed - skipped} passed, {self.n_failed} failed, "
                     f"{skipped} skipped")
        return "\n".join(lines) + "\n"

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"report_{self.system}"
        (out / f"{stem}.json").write_text(self.to_json())
        (out / f"{stem}.txt").write_text(self.to_text())
        (out / f"{stem}.timings.json").write_text(
            json.dumps(self.timings(), indent=2, sort_keys=True) + "\n")
        return out / f"{stem}.json"


def _run_one(ctx, chk):
    tol = ctx.cfg.tol(chk.id, chk.tol)
    t0 = time.perf_counter()
    note = ""
    try:
        out = chk.fn(ctx)
        res, note = out if isinstance(out, tuple) else (out, "")
        res = float(res)
        status = "pass" if res <= tol else "fail"
    except NotApplicableCheck as exc:
        res, status, note = None, "skipped", str(exc)
    except Exception as exc:  # numeric errors are check failures, not crashes
        res, status, note = math.inf, "fail", f"{type(exc).__name__}: {exc}"
    return CheckResult(chk.id, chk.suite, chk.anchor, chk.criterion, res, tol, status,
                       note, time.perf_counter() - t0)


def run_suite(cfg, out_dir=None, ctx=None):
    """Run every catalogued check of the selected suites; write reports if asked."""
    ctx = ctx or Context(cfg)
    report = VerificationReport(cfg.system, tuple(cfg.suites), cfg.seed, cfg.tol_scale)
    for chk in catalog(cfg.system, cfg.suites):
        report.results.append(_run_one(ctx, chk))
    if out_dir is not None:
        report.write(out_dir)
    return report


def export_trajectory(traj, path):
    """CSV of the step nodes plus the JSON event sidecar."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return export_csv(traj, path)


def _series(ctx, n=600):
    """(series, t, value) rows for the configured system."""
    P, tr = ctx.params, ctx.traj
    t0, t1 = tr.t_span
    rows = []
    if ctx.system == "oscillator":
        lo, hi = P.sol.window
        for t in np.linspace(t0, t1, n):
            s = tr.state_at(t)
            rows.append(("q", t, float(s.q[0])))
            rows.append(("C", t, oscillator.osc_C(P, s)))
        a, b = max(lo, t0), min(hi, t1)
        if b > a:
            s0 = tr.state_at(a)
            kappa, C = oscillator.osc_upsilon0(P, s0), oscillator.osc_C(P, s0)
            sgnQ = 1.0 if float(s0.q[0]) / P.sol.sigma(a) > 0 else -1.0
            for case in ("tp_beta_plus",) if P.beta == 1 else ("tp_beta_minus_outer", "ip"):
                anchors = oscillator.osc_anchor_times(P, kappa, C, sgnQ, case)
                if not anchors:
                    continue
                for t in np.linspace(a, b, n)[1:-1]:
                    before = [T for T in anchors if T <= t]
                    T = before[-1] if before else anchors[0]
                    try:
                        u = oscillator.osc_upsilon(P, tr.state_at(t), case, anchor=T)
                    except (ArithmeticError, ValueError):
                        continue
                    rows.append((f"Upsilon.{case}", t, u))
    elif ctx.system == "spheroid":
        for t in np.linspace(t0, t1, n):
            s = tr.state_at(t)
            rows += [("theta", t, float(s.q[0])), ("phi", t, float(s.q[1])),
                     ("Theta", t, spheroid.geo_Theta(P, s)), ("T", t, spheroid.geo_T(P, s))]
    else:
        for t in np.linspace(t0, t1, n):
            s = tr.state_at(t)
            x = s.q
            rows += [("x1", t, x[0]), ("x2", t, x[1]), ("x3", t, x[2]),
                     ("y", t, x[0] - 0.5 * (x[1] + x[2])), ("z", t, x[1] - x[2]),
                     ("Psi", t, cms.cms_Psi(P, s)),
                     ("shape_residual", t, cms.cms_shape_residual(P, s))]
    return rows


def emit_plot_data(source, path):
    """Long-format CSV ``series,t,value``.

    ``source`` is a Context (system time series) or a VerificationReport
    (one row per check with its residual, ``t`` left empty).
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["series", "t", "value"])
    if isinstance(source, VerificationReport):
        for r in source.results:
            w.writerow([r.id, "", "" if r.residual is None else repr(float(r.residual))])
    else:
        for name, t, v in _series(source):
            w.writerow([name, repr(float(t)), repr(float(v))])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
    return str(path)
