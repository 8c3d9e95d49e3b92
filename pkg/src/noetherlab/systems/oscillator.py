"""Nonlinear oscillator ``qddot + omega(t)^2 q + beta q^-3 = 0`` with beta = +-1.

Notation used throughout:

* ``sigma`` is a fixed non-trivial solution of ``sigma'' + omega^2 sigma = 0``
  and ``calB(t) = int sigma^-2 dt``.
* ``w = sigma qdot - sigma' q``, so the conserved integral is
  ``C = (w^2 - beta sigma^2 q^-2) / 2``.

With ``tau = calB(t)`` and ``Q = q / sigma`` the motion becomes the
autonomous problem ``Q'' = -beta Q^-3`` whose energy is ``C``.  Hence on
every sigma-window (an interval between zeros of sigma)::

    Q^2 = (4 C^2 (calB(t) - kappa)^2 - beta) / (2 C)

with ``kappa = calB(t) - q w / (2 C sigma)`` constant.  ``kappa`` is the
smooth integral :func:`osc_upsilon0`; the anchored integrals of
:func:`osc_upsilon` are ``calB(T)`` at turning or inertial times ``T`` of
this explicit solution.
"""
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import BPoly

from .._jit import njit
from ..core import ScalarField, State, SymmetryField, SystemDef
from ..ellint import DomainError
from ..odeint import EventSpec, find_root, integrate_first_order

__all__ = [
    "Omega",
    "OscillatorParams",
    "OscBranchState",
    "SigmaSolution",
    "Singularity",
    "SigmaZeroCrossing",
    "SigmaBranch",
    "NotApplicable",
    "CASES",
    "make_system",
    "osc_rhs",
    "sigma",
    "osc_C",
    "osc_w",
    "osc_theta",
    "osc_upsilon0",
    "osc_qdot_from_C",
    "osc_special_points",
    "osc_explicit_state",
    "osc_anchor_times",
    "osc_anchor_theta",
    "osc_upsilon",
    "osc_upsilon_displayed",
    "osc_explicit_q",
    "osc_point_group",
    "osc_point_group_implicit",
    "osc_dyn_group",
    "osc_monotone_interval",
    "scalar_fields",
    "symmetry_fields",
    "energy",
    "turning_events",
    "inertial_events",
]


class Singularity(ArithmeticError):
    """q = 0, where the force and C are singular."""


class SigmaZeroCrossing(ArithmeticError):
    """calB(t) requested across a zero of sigma."""


class SigmaBranch(ArithmeticError):
    """No monotone sigma branch contains the requested value."""


class NotApplicable(ValueError):
    """Special point kind does not exist for these parameters."""


CASES = ("tp_beta_plus", "tp_beta_minus_outer", "tp_beta_minus_inner", "ip")


@njit
def _poly(c, t):
    acc = 0.0
    for i in range(c.shape[0] - 1, -1, -1):
        acc = acc * t + c[i]
    return acc


@njit
def _osc_kernel(t, y, p):
    # p = [beta, c0, c1, ...] with omega(t)^2 = sum c_k t^k
    out = np.empty(2)
    q = y[0]
    out[0] = y[1]
    out[1] = -_poly(p[1:], t) * q - p[0] / (q * q * q)
    return out


@njit
def _sigma_kernel(t, y, p):
    out = np.empty(3)
    out[0] = y[1]
    out[1] = -_poly(p, t) * y[0]
    out[2] = 1.0 / (y[0] * y[0])
    return out


@njit
def _sigma_only_kernel(t, y, p):
    out = np.empty(2)
    out[0] = y[1]
    out[1] = -_poly(p, t) * y[0]
    return out


@dataclass(frozen=True)
class Omega:
    """Frequency profile given by ``omega(t)^2 = sum_k coeffs[k] t^k``."""

    coeffs: tuple = (1.0,)

    @classmethod
    def constant(cls, w):
        if not w > 0:
            raise ValueError("omega must be positive")
        return cls((float(w) ** 2,))

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @property
    def array(self):
        return np.array(self.coeffs, dtype=float)

    def sq(self, t):
        return float(np.polynomial.polynomial.polyval(t, self.coeffs))

    def __call__(self, t):
        w2 = self.sq(t)
        if w2 <= 0:
            raise DomainError(f"omega(t)^2 = {w2} is not positive at t={t}")
        return math.sqrt(w2)

    def dsq(self, t):
        return float(np.polynomial.polynomial.polyval(
            t, np.polynomial.polynomial.polyder(self.coeffs)))


class SigmaSolution:
    """High-accuracy sigma, sigma' on a time range and calB on one window.

    sigma is integrated once over ``t_range`` and interpolated by quintic
    Hermite pieces using (sigma, sigma', sigma'' = -omega^2 sigma) at the
    step nodes, which keeps finite differences in t clean.  calB is
    integrated from ``t0`` inside the sigma-window containing ``t0``.
    """

    RTOL = 1e-13
    ATOL = 1e-15

    def __init__(self, omega, t0, s0, ds0, t_range, calB_at=None, calB0=0.0, edge=1e-3):
        self.omega = omega
        self.t0 = float(t0)
        self.t_range = (float(t_range[0]), float(t_range[1]))
        if not (self.t_range[0] <= self.t0 <= self.t_range[1]):
            raise ValueError("t0 must lie inside t_range")
        if s0 == 0 and ds0 == 0:
            raise ValueError("sigma must not vanish identically")
        coeffs = omega.array
        y0 = np.array([s0, ds0], dtype=float)
        pieces = []
        for t1 in self.t_range:
            if t1 != self.t0:
                tr = integrate_first_order(_sigma_only_kernel, self.t0, y0, t1, coeffs,
                                           rtol=self.RTOL, atol=self.ATOL)
                pieces.append((tr.ts, tr.ys))
        ts, ys = _merge(pieces, self.t0, y0)
        self._ts = ts
        d2 = np.array([-omega.sq(t) * s for t, s in zip(ts, ys[:, 0])])
        self._sig = BPoly.from_derivatives(ts, np.column_stack([ys[:, 0], ys[:, 1], d2]))
        self._dsig = self._sig.derivative()
        self.zeros = self._zeros()
        self.calB_at = self._default_anchor() if calB_at is None else float(calB_at)
        self.window = self._window(edge)
        self._calB = self._build_calB(calB0, coeffs)

    def _default_anchor(self):
        """t0 itself, or the first extremum of sigma after t0 when sigma(t0) = 0."""
        if abs(float(self._sig(self.t0))) > 0:
            return self.t0
        ts = self._ts
        for a, b in zip(ts[:-1], ts[1:]):
            if a >= self.t0 and float(self._dsig(a)) * float(self._dsig(b)) < 0:
                return find_root(lambda x: float(self._dsig(x)), (a, b), 1e-14)
        raise SigmaZeroCrossing("no point with sigma != 0 found to anchor calB")

    def _zeros(self):
        ts = self._ts
        vals = self._sig(ts)
        out = []
        for a, b, fa, fb in zip(ts[:-1], ts[1:], vals[:-1], vals[1:]):
            if fa == 0.0:
                out.append(a)
            elif fa * fb < 0:
                out.append(find_root(lambda x: float(self._sig(x)), (a, b), 1e-14))
        return out

    def _window(self, edge):
        zs = self.zeros
        ta = self.calB_at
        left = max([z for z in zs if z < ta], default=self.t_range[0])
        right = min([z for z in zs if z > ta], default=self.t_range[1])
        if any(abs(z - ta) < 1e-12 for z in zs):
            raise SigmaZeroCrossing("sigma vanishes at the calB anchor")
        # stop short of the zeros where calB blows up
        scale = float(np.max(np.abs(self._sig(self._ts))))

        def cut(a, b):
            lo, hi = a, b
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if abs(float(self._sig(mid))) < edge * scale:
                    lo = mid
                else:
                    hi = mid
            return hi

        lo = cut(left, ta) if left in zs else left
        hi = cut(right, ta) if right in zs else right
        return (lo, hi)

    def _build_calB(self, calB0, coeffs):
        ta = self.calB_at
        y0 = np.array([float(self._sig(ta)), float(self._dsig(ta)), calB0], dtype=float)
        pieces = []
        for t1 in self.window:
            if t1 != ta:
                tr = integrate_first_order(_sigma_kernel, ta, y0, t1, coeffs,
                                           rtol=self.RTOL, atol=self.ATOL)
                pieces.append((tr.ts, tr.ys))
        ts, ys = _merge(pieces, ta, y0)
        s = np.array([float(self._sig(t)) for t in ts])
        ds = np.array([float(self._dsig(t)) for t in ts])
        vals = np.column_stack([ys[:, 2], s ** -2, -2.0 * ds * s ** -3])
        return BPoly.from_derivatives(ts, vals)

    def sigma(self, t):
        self._check(t, self.t_range)
        return float(self._sig(t))

    def dsigma(self, t):
        self._check(t, self.t_range)
        return float(self._dsig(t))

    def calB(self, t):
        if not (self.window[0] <= t <= self.window[1]):
            raise SigmaZeroCrossing(
                f"calB undefined at t={t}: outside sigma-window {self.window}")
        return float(self._calB(t))

    @staticmethod
    def _check(t, rng):
        if not (rng[0] <= t <= rng[1]):
            raise DomainError(f"t={t} outside the sigma solution range {rng}")


def _merge(pieces, t0, y0):
    ts = [np.array([t0])]
    ys = [np.array([y0])]
    for pts, pys in pieces:
        ts.append(pts[1:])
        ys.append(pys[1:])
    ts = np.concatenate(ts)
    ys = np.concatenate(ys)
    order = np.argsort(ts)
    return ts[order], ys[order]


@dataclass(frozen=True)
class OscillatorParams:
    """beta = +-1, frequency profile, and sigma initial data at ``t0``."""

    beta: int = -1
    omega: Omega = field(default_factory=Omega)
    sigma0: tuple = (0.0, 1.0)
    t0: float = 0.0
    calB0: float = 0.0
    sigma_t0: float = None
    t_range: tuple = (-20.0, 60.0)

    def __post_init__(self):
        if self.beta not in (1, -1):
            raise ValueError("beta must be +1 or -1")
        if isinstance(self.omega, (int, float)):
            object.__setattr__(self, "omega", Omega.constant(self.omega))
        if self.sigma0[0] == 0 and self.sigma0[1] == 0:
            raise ValueError("sigma must not vanish identically")

    @cached_property
    def sol(self):
        """The sigma solution; calB equals ``calB0`` at ``sigma_t0`` (default
        t0, or the first extremum of sigma after t0 if sigma(t0) = 0)."""
        return SigmaSolution(self.omega, self.t0, self.sigma0[0], self.sigma0[1],
                             self.t_range, calB_at=self.sigma_t0, calB0=self.calB0)


@dataclass
class OscBranchState:
    """Branch bookkeeping for anchored integrals along one trajectory."""

    sgn_rhs: int
    case: str
    calB_const: float = 0.0

    def flip(self):
        self.sgn_rhs = -self.sgn_rhs


# --------------------------------------------------------------------------
# basic quantities
# --------------------------------------------------------------------------


def sigma(params, t):
    """``(sigma(t), sigma'(t), calB(t))``."""
    sol = params.sol
    return sol.sigma(t), sol.dsigma(t), sol.calB(t)


def _sig(params, t):
    sol = params.sol
    return sol.sigma(t), sol.dsigma(t)


def _q(s):
    q = float(s.q[0])
    if q == 0.0:
        raise Singularity("q = 0")
    return q


def osc_rhs(params, s):
    """Acceleration ``f = -omega^2 q - beta q^-3`` as a length-1 array."""
    q = _q(s)
    return np.array([-params.omega.sq(s.t) * q - params.beta / q ** 3])


def osc_w(params, s):
    sg, dsg = _sig(params, s.t)
    return sg * float(s.qdot[0]) - dsg * float(s.q[0])


def osc_C(params, s):
    """``C = ((sigma qdot - sigma' q)^2 - beta sigma^2 q^-2) / 2``."""
    q = _q(s)
    sg, dsg = _sig(params, s.t)
    w = sg * float(s.qdot[0]) - dsg * q
    return 0.5 * (w * w - params.beta * sg * sg / (q * q))


def energy(params, s):
    """``H = qdot^2/2 + omega^2 q^2/2 - beta q^-2/2`` (not conserved)."""
    q = _q(s)
    v = float(s.qdot[0])
    return 0.5 * v * v + 0.5 * params.omega.sq(s.t) * q * q - 0.5 * params.beta / (q * q)


def osc_theta(params, s):
    """Angle ``Theta = dS/dC = q w / (2 C sigma)``."""
    q = _q(s)
    sg, dsg = _sig(params, s.t)
    w = sg * float(s.qdot[0]) - dsg * q
    C = 0.5 * (w * w - params.beta * sg * sg / (q * q))
    if C == 0 or sg == 0:
        raise DomainError("Theta needs C != 0 and sigma != 0")
    return q * w / (2.0 * C * sg)


def osc_upsilon0(params, s):
    """Smooth integral ``calB(t) - Theta``; equals ``kappa`` of the explicit solution."""
    return params.sol.calB(s.t) - osc_theta(params, s)


def osc_qdot_from_C(params, t, q, C, branch):
    """``qdot = (sigma' q +- sqrt(2C + beta sigma^2 q^-2)) / sigma`` with sign ``branch``."""
    if q == 0:
        raise Singularity("q = 0")
    sg, dsg = _sig(params, t)
    rad = 2.0 * C + params.beta * sg * sg / (q * q)
    if rad < 0:
        if rad > -1e-14 * max(1.0, abs(2.0 * C)):
            rad = 0.0
        else:
            raise DomainError("outside the classically allowed region")
    return (dsg * q + (1.0 if branch >= 0 else -1.0) * math.sqrt(rad)) / sg


def _A(params, C, sg, dsg):
    val = 1.0 + params.beta * (sg * dsg / C) ** 2
    if val < 0:
        raise NotApplicable("A is not real: C^2 < sigma^2 sigma'^2")
    return math.sqrt(val)


def osc_special_points(params, t, C, kind=None):
    """Turning and inertial radii at time t.

    Kinds: ``turning_outer`` (the ``+`` root, any beta), ``turning_inner``
    (the ``-`` root, beta = -1) and ``inertial`` (beta = -1).  With
    ``kind=None`` every applicable kind is returned.
    """
    sg, dsg = _sig(params, t)
    out = []
    tp_ok = abs(dsg) > 1e-12 * max(1.0, abs(sg)) and C != 0
    wanted = (kind,) if kind else ("turning_outer", "turning_inner", "inertial")
    for k in wanted:
        if k == "inertial":
            if params.beta != -1:
                if kind:
                    raise NotApplicable("inertial points require beta = -1")
                continue
            out.append(("inertial", 1.0 / math.sqrt(params.omega(t))))
            continue
        if k not in ("turning_outer", "turning_inner"):
            raise ValueError(f"unknown kind {k!r}")
        if not tp_ok:
            if kind:
                raise NotApplicable("turning radius degenerates where sigma' = 0")
            continue
        if k == "turning_inner" and params.beta != -1:
            if kind:
                raise NotApplicable("inner turning points require beta = -1")
            continue
        disc = C * C + params.beta * (dsg * sg) ** 2
        if disc < 0:
            if kind:
                raise NotApplicable("C^2 < sigma'^2 sigma^2")
            continue
        sgn = 1.0 if k == "turning_outer" else -1.0
        num = C + sgn * math.sqrt(disc)
        if num < 0:
            if kind:
                raise NotApplicable("negative squared radius")
            continue
        out.append((k, math.sqrt(num) / abs(dsg)))
    if not out:
        raise NotApplicable("no special points at this time")
    return out


# --------------------------------------------------------------------------
# explicit solution and anchored integrals
# --------------------------------------------------------------------------


def osc_explicit_state(params, t, kappa, C, sgnQ):
    """State at ``t`` on the explicit solution labelled by ``(kappa, C)``.

    ``sgnQ`` is the sign of ``q / sigma``.
    """
    sg, dsg, B = sigma(params, t)
    u = 2.0 * C * (B - kappa)
    Q2 = (u * u - params.beta) / (2.0 * C)
    if Q2 <= 0:
        raise Singularity(f"explicit solution reaches q = 0 near t={t}")
    Q = math.copysign(math.sqrt(Q2), sgnQ)
    w = u / Q
    return State(t, [sg * Q], [dsg * Q + w / sg])


def osc_explicit_q(params, t, T, C, case, sgnQ=1.0, sgn_anchor=1.0):
    """Solve the anchored integral for q(t) given anchor time T and C.

    ``sgn_anchor`` is the dot-q branch sign at the anchor; it only matters
    for the inertial case.
    """
    kappa = params.sol.calB(T) - osc_anchor_theta(params, T, C, case, sgn_anchor, sgnQ)
    return float(osc_explicit_state(params, t, kappa, C, sgnQ).q[0])


def osc_anchor_theta(params, T, C, case, sgn_anchor=1.0, sgnQ=1.0):
    """Anchor value of Theta at time T for the given case.

    Turning cases: ``-(1 +- A) / (2 sigma sigma')``.  Inertial case:
    ``sgn * sqrt(2C/omega - sigma^2) / (2 C |sigma|)`` where ``sgn`` is the
    sign of ``q w sigma`` at the anchor.
    """
    sg, dsg = _sig(params, T)
    if case in ("tp_beta_plus", "tp_beta_minus_outer", "tp_beta_minus_inner"):
        _check_case(params, case)
        A = _A(params, C, sg, dsg)
        pm = -1.0 if case == "tp_beta_minus_inner" else 1.0
        return -(1.0 + pm * A) / (2.0 * sg * dsg)
    if case == "ip":
        _check_case(params, case)
        rad = 2.0 * C / params.omega(T) - sg * sg
        if rad < 0:
            raise NotApplicable("no inertial point at this C")
        return sgn_anchor * sgnQ * math.sqrt(rad) / (2.0 * C * abs(sg))
    raise ValueError(f"unknown case {case!r}")


def _check_case(params, case):
    if case == "tp_beta_plus" and params.beta != 1:
        raise NotApplicable("tp_beta_plus requires beta = +1")
    if case != "tp_beta_plus" and params.beta != -1:
        raise NotApplicable(f"{case} requires beta = -1")


def _explicit_fn(params, kappa, C, sgnQ, case):
    """Function whose roots in t are the anchor times of ``case``."""
    if case == "ip":
        def g(t):
            st = osc_explicit_state(params, t, kappa, C, sgnQ)
            return float(st.q[0]) ** 2 * params.omega(t) - 1.0
    else:
        def g(t):
            return float(osc_explicit_state(params, t, kappa, C, sgnQ).qdot[0])
    return g


def _tp_kind(params, t, C, q):
    sg, dsg = _sig(params, t)
    if params.beta == 1:
        return "tp_beta_plus"
    disc = max(C * C - (dsg * sg) ** 2, 0.0)
    outer = (C + math.sqrt(disc)) / dsg ** 2
    inner = (C - math.sqrt(disc)) / dsg ** 2
    return "tp_beta_minus_outer" if abs(q * q - outer) <= abs(q * q - inner) else "tp_beta_minus_inner"


def osc_anchor_times(params, kappa, C, sgnQ, case, n_grid=2000):
    """All anchor times of ``case`` on the explicit solution in the calB window."""
    _check_case(params, case)
    lo, hi = params.sol.window
    g = _explicit_fn(params, kappa, C, sgnQ, case)
    grid = np.linspace(lo, hi, n_grid)
    vals = []
    for t in grid:
        try:
            vals.append(g(t))
        except Singularity:
            vals.append(np.nan)
    out = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if not (np.isfinite(fa) and np.isfinite(fb)):
            continue
        if fa == 0.0 or fa * fb < 0:
            T = a if fa == 0.0 else find_root(g, (a, b), 1e-14)
            if case != "ip":
                q = float(osc_explicit_state(params, T, kappa, C, sgnQ).q[0])
                if _tp_kind(params, T, C, q) != case:
                    continue
            out.append(T)
    return out


def _branch_data(params, s):
    kappa = osc_upsilon0(params, s)
    C = osc_C(params, s)
    sg = params.sol.sigma(s.t)
    sgnQ = 1.0 if float(s.q[0]) / sg > 0 else -1.0
    return kappa, C, sgnQ


def osc_upsilon(params, s, case, anchor=None):
    """Anchored integral ``calB(T)`` for the given case.

    ``T`` is the most recent anchor time (turning or inertial point of the
    requested kind) at or before ``s.t`` on the solution through ``s``; if
    there is none in the sigma-window the first later one is used.  An
    explicit ``anchor`` time may be passed instead.  The value is computed
    as ``calB(t) - Theta(s) + Theta*(T)`` with the closed-form anchor term
    of :func:`osc_anchor_theta`, so it equals ``calB(T)`` exactly when that
    closed form is right.
    """
    kappa, C, sgnQ = _branch_data(params, s)
    if anchor is None:
        times = osc_anchor_times(params, kappa, C, sgnQ, case)
        if not times:
            raise DomainError(f"no {case} anchor on this solution inside the sigma-window")
        before = [T for T in times if T <= s.t + 1e-12]
        anchor = before[-1] if before else times[0]
    T = float(anchor)
    st_T = osc_explicit_state(params, T, kappa, C, sgnQ)
    sgn_anchor = 1.0 if osc_w(params, st_T) >= 0 else -1.0
    theta_star = osc_anchor_theta(params, T, C, case, sgn_anchor, sgnQ)
    return params.sol.calB(s.t) - osc_theta(params, s) + theta_star


def osc_upsilon_displayed(params, s, case, sgn_rhs):
    """The anchored integral with its anchor term evaluated at the current t.

    Kept for comparison only: the anchor term then varies with t, so this
    expression is not conserved (see the decision log).  ``sgn_rhs`` is the
    dot-q branch sign.
    """
    q = _q(s)
    sg, dsg, B = sigma(params, s.t)
    C = osc_C(params, s)
    if case == "ip":
        r1 = math.sqrt(max(2.0 * C / (sg * sg * params.omega(s.t)) - 1.0, 0.0))
        r2 = math.sqrt(max(2.0 * C * q * q / (sg * sg) - 1.0, 0.0))
        return B + sgn_rhs * 0.5 / C * (r1 - r2)
    A = _A(params, C, sg, dsg)
    pm = -1.0 if case == "tp_beta_minus_inner" else 1.0
    rad = math.sqrt(max(2.0 * C * q * q / (sg * sg) + params.beta, 0.0))
    ssd = 1.0 if sg * dsg > 0 else -1.0
    return B + 0.5 * ssd * (rad / C - 0.5 * (1.0 + pm * A) / abs(sg * dsg))


# --------------------------------------------------------------------------
# transformation groups
# --------------------------------------------------------------------------


def osc_point_group(params, s, eps):
    """Point-symmetry group at fixed t, parameter ``eps``.

    ``q^2 -> q^2 (1 -+ 2|sigma| q^-2 sqrt(2C q^2 + beta sigma^2) eps
    + 2 C sigma^2 q^-2 eps^2)`` where the sign is minus the dot-q branch
    sign; the velocity follows from the invariance of C on the same
    explicit solution, which tracks the branch through turning points.
    """
    if eps == 0:
        return s
    q = _q(s)
    sg, dsg = _sig(params, s.t)
    C = osc_C(params, s)
    w = osc_w(params, s)
    sgn_rhs = 1.0 if w >= 0 else -1.0
    rad = math.sqrt(max(2.0 * C * q * q + params.beta * sg * sg, 0.0))
    fac = 1.0 - sgn_rhs * 2.0 * abs(sg) * rad / (q * q) * eps + 2.0 * C * sg * sg / (q * q) * eps ** 2
    if fac <= 0:
        raise DomainError("eps leaves the admissible region (q crosses 0)")
    qn = q * math.sqrt(fac)
    # in tau-time the map is a shift by e = -sgn(sigma q) eps along the solution
    e = -(1.0 if sg * q > 0 else -1.0) * eps
    Q, Qn = q / sg, qn / sg
    wn = (Q * w + 2.0 * C * e) / Qn
    return State(s.t, [qn], [(dsg * qn + wn) / sg])


def osc_point_group_implicit(params, s, eps):
    """Point transformation on (t, q): ``calB(t+) = calB(t) + eps``,
    ``q+ = |sigma(t+)| / |sigma(t)| q``, velocity by prolongation.

    This is the flow of ``sigma^2 d_t + sigma sigma' q d_q``.
    """
    sol = params.sol
    B = sol.calB(s.t)
    target = B + eps
    lo, hi = sol.window
    if not (sol.calB(lo) < target < sol.calB(hi)):
        raise SigmaBranch("calB(t) + eps leaves the sigma-window")
    tn = find_root(lambda t: sol.calB(t) - target, (lo, hi), 1e-14)
    sg, dsg = _sig(params, s.t)
    sgn_, dsgn = _sig(params, tn)
    q = _q(s)
    Q = q / sg
    w = osc_w(params, s)
    return State(tn, [sgn_ * Q], [dsgn * Q + w / sgn_])


def _monotone_piece(params, t):
    """Interval around t on which sigma is monotone (inside the range)."""
    sol = params.sol
    ts = sol._ts
    ds = np.array([sol.dsigma(x) for x in ts])
    i = int(np.searchsorted(ts, t))
    lo, hi = sol.t_range
    for j in range(min(i, len(ts) - 1), 0, -1):
        if ds[j] * ds[j - 1] <= 0:
            lo = find_root(sol.dsigma, (ts[j - 1], ts[j]), 1e-14) if ds[j] * ds[j - 1] < 0 else ts[j]
            if lo <= t:
                break
    for j in range(max(i - 1, 0), len(ts) - 1):
        if ds[j] * ds[j + 1] <= 0:
            hi = find_root(sol.dsigma, (ts[j], ts[j + 1]), 1e-14) if ds[j] * ds[j + 1] < 0 else ts[j + 1]
            if hi >= t:
                break
    return lo, hi


def osc_monotone_interval(params, t):
    """``(lo, hi)``: the interval around ``t`` on which sigma is monotone."""
    return _monotone_piece(params, t)


def osc_dyn_group(params, s, eps):
    """Dynamical-symmetry group in the gauge where ``sigma(t+) = (1-eps) sigma(t)``.

    ``t+`` is found on the monotone branch of sigma containing t and the
    integral becomes ``C+ = (1-eps) C``.  Then ``q+ = sgn(q) (1-eps)^(-3/2)
    C^(-3/2) sqrt((y+^2 - beta C+^2 sigma(t+)^2)/2)`` with ``y+ = C+
    sqrt(2 C+ q+^2 + beta sigma(t+)^2)`` evaluated on the solution that keeps
    ``kappa`` (:func:`osc_upsilon0`) fixed, i.e. ``y+ = C+ |sigma(t+)| |2 C+
    (calB(t+) - kappa)|``.  The velocity uses the dot-q formula with ``2(1-eps)C``.
    """
    if eps == 0:
        return s
    if eps >= 1:
        raise DomainError("eps must be < 1")
    sol = params.sol
    q = _q(s)
    sg, dsg = _sig(params, s.t)
    C = osc_C(params, s)
    kappa = osc_upsilon0(params, s)
    target = (1.0 - eps) * sg
    lo, hi = _monotone_piece(params, s.t)
    lo, hi = max(lo, sol.window[0]), min(hi, sol.window[1])
    flo, fhi = sol.sigma(lo) - target, sol.sigma(hi) - target
    if flo * fhi > 0:
        raise SigmaBranch("(1 - eps) sigma(t) is not attained on this monotone branch")
    tn = find_root(lambda t: sol.sigma(t) - target, (lo, hi), 1e-14)
    Cn = (1.0 - eps) * C
    sgn_, dsgn, Bn = sigma(params, tn)
    u = 2.0 * Cn * (Bn - kappa)
    y = Cn * abs(sgn_) * abs(u)
    rad = 0.5 * (y * y - params.beta * Cn * Cn * sgn_ * sgn_)
    if rad <= 0:
        raise DomainError("transformed state reaches q = 0")
    qn = math.copysign(math.sqrt(rad) / ((1.0 - eps) ** 1.5 * abs(C) ** 1.5), q)
    Qn = qn / sgn_
    branch = 1.0 if u / Qn >= 0 else -1.0
    qdn = osc_qdot_from_C(params, tn, qn, Cn, branch)
    return State(tn, [qn], [qdn])


# --------------------------------------------------------------------------
# system definition and catalog
# --------------------------------------------------------------------------


def turning_events():
    """Zeros of qdot (turning points of q)."""
    return (EventSpec("turning", lambda st: st.qdot[0], "any"),)


def inertial_events(params):
    """Zeros of ``q^2 omega(t) - 1`` (inertial points, beta = -1 only)."""
    if params.beta != -1:
        raise NotApplicable("inertial points require beta = -1")
    return (EventSpec("inertial", lambda st: float(st.q[0]) ** 2 * params.omega(st.t) - 1.0,
                      "any"),)


def make_system(params):
    """SystemDef for the oscillator with analytic Hessian and jitted rhs."""

    def force(s):
        return osc_rhs(params, s)

    def lag(s):
        q = float(s.q[0])
        v = float(s.qdot[0])
        return 0.5 * (v * v - params.omega.sq(s.t) * q * q + params.beta / (q * q))

    return SystemDef(
        n_dof=1,
        force=force,
        lagrangian=lag,
        name="oscillator",
        hessian_fn=lambda s: np.eye(1),
        mixed_fn=lambda s: np.zeros((1, 1)),
        momentum=lambda s: np.array(s.qdot, dtype=float),
        energy=lambda s: energy(params, s),
        rhs_kernel=_osc_kernel,
        kernel_params=np.concatenate([[float(params.beta)], params.omega.array]),
    )


def scalar_fields(params):
    return {
        "C": ScalarField(lambda s: osc_C(params, s), "temporal_integral", name="C"),
        "Upsilon": ScalarField(lambda s: osc_upsilon0(params, s), "temporal_integral",
                               name="Upsilon"),
        "H": ScalarField(lambda s: energy(params, s), "temporal_integral", name="H"),
    }


def symmetry_fields(params):
    """Analytic characteristics.

    ``X_C``: ``sigma w``, i.e. minus the point field ``(s3' q / 2 - s3 qdot)``
    with ``s3 = sigma^2``.  ``X_Upsilon``: ``dUpsilon0/dqdot``.
    """

    def p_c(s):
        sg, dsg = _sig(params, s.t)
        return np.array([sg * osc_w(params, s)])

    def p_u(s):
        q = _q(s)
        sg, _ = _sig(params, s.t)
        C = osc_C(params, s)
        return np.array([0.5 / C * (q + params.beta * sg * sg / (C * q))])

    def p_point(s):
        sg, dsg = _sig(params, s.t)
        s3, ds3 = sg * sg, 2.0 * sg * dsg
        return np.array([0.5 * ds3 * float(s.q[0]) - s3 * float(s.qdot[0])])

    return {
        "C": SymmetryField(p_c, name="X(C)"),
        "Upsilon": SymmetryField(p_u, name="X(Upsilon)"),
        "point": SymmetryField(p_point, tau=lambda s: _sig(params, s.t)[0] ** 2, name="X_point"),
    }
