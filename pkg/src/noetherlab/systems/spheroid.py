"""Geodesics on a spheroid with aspect ratio ``R = a/b``.

Coordinates are ordered ``q = (theta, phi)`` everywhere: states, forces,
Hessians and characteristics.  The metric is

    ds^2 = (cos^2 theta + R^2 sin^2 theta) dtheta^2 + sin^2 theta dphi^2

and the conserved quantities are the angular momentum ``L``, the energy
``E`` and ``C = 2E/L^2 >= 1``.  ``theta`` oscillates between
``theta_min = arcsin(C^-1/2)`` and ``pi - theta_min``.

``calA`` and ``calB`` are the angle and affine-time integrals measured from
``theta_min``.  Quadrature is the reference path; the elliptic closed forms
use ``x = cos(theta) / Cbar`` as sine-amplitude and the parameter
``m = Cbar^2 Rbar^2`` with ``Cbar^2 = 1 - 1/C`` and ``Rbar^2 = 1 - R^-2``.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as _spi

from .._jit import njit
from ..core import QuadratureFailure, ScalarField, State, SymmetryField, SystemDef
from ..ellint import (DomainError, ellip_e_m, ellip_ecomp_m, ellip_f_m, ellip_k_m,
                      ellip_pi_m, ellip_picomp_m)
from ..odeint import EventSpec

__all__ = [
    "SpheroidParams",
    "GeoBranchState",
    "GeoPeriods",
    "PoleSingularity",
    "ZeroAngularMomentum",
    "geo_rhs",
    "geo_invariants",
    "geo_turning",
    "calA",
    "calB",
    "calA_closed",
    "calB_closed",
    "calA_C",
    "calB_C",
    "geo_branch",
    "geo_Theta",
    "geo_T",
    "geo_Theta_unwrapped",
    "geo_T_unwrapped",
    "geo_periods",
    "geo_state",
    "geo_dyn_Theta",
    "geo_dyn_T",
    "geo_rotation_group",
    "geo_translation_group",
    "turning_events",
    "make_system",
    "scalar_fields",
    "symmetry_fields",
]

QUAD_TOL = 1e-13
_SNAP = 8 * np.finfo(float).eps


class PoleSingularity(ArithmeticError):
    """The state sits on the symmetry axis where ``sin(theta) = 0``."""


class ZeroAngularMomentum(ArithmeticError):
    """``L = 0``: meridian geodesic, ``C`` is undefined."""


@dataclass(frozen=True)
class SpheroidParams:
    R: float = 0.5
    method: str = "quad"

    def __post_init__(self):
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ValueError("aspect ratio R must be positive")
        if self.method not in ("quad", "closed"):
            raise ValueError("method must be 'quad' or 'closed'")


@dataclass(frozen=True)
class GeoBranchState:
    """``s = sgn(thetadot) sgn(L)`` and the number of theta-turning passages
    since the reference minimum.  ``n_halfcycles`` is even while theta
    increases."""

    s: int
    n_halfcycles: int = 0


@dataclass(frozen=True)
class GeoPeriods:
    dphi_closed: float
    dphi_quad: float
    dT_closed: float
    dT_quad: float


# --------------------------------------------------------------------------
# equations of motion
# --------------------------------------------------------------------------


@njit
def _geo_kernel(t, y, p):
    # y = [theta, phi, thetadot, phidot], p = [R]
    R2 = p[0] * p[0]
    th, thd, phd = y[0], y[2], y[3]
    sn = math.sin(th)
    cs = math.cos(th)
    out = np.empty(4)
    out[0] = thd
    out[1] = phd
    out[2] = sn * cs * (phd * phd + (1.0 - R2) * thd * thd) / (cs * cs + R2 * sn * sn)
    out[3] = -2.0 * cs / sn * phd * thd
    return out


def _metric(params, th):
    sn, cs = math.sin(th), math.cos(th)
    return cs * cs + params.R ** 2 * sn * sn, sn * sn


def _unpack(s):
    return float(s.q[0]), float(s.q[1]), float(s.qdot[0]), float(s.qdot[1])


def geo_rhs(params, s):
    """Accelerations ``(thetaddot, phiddot)``."""
    th, _, thd, phd = _unpack(s)
    if math.sin(th) == 0.0:
        raise PoleSingularity("sin(theta) = 0")
    d = _geo_kernel(s.t, np.array([th, 0.0, thd, phd]), np.array([float(params.R)]))
    return d[2:]


def geo_invariants(params, s):
    """``(L, E, C)``; raises ZeroAngularMomentum when ``L = 0``."""
    th, _, thd, phd = _unpack(s)
    g, sn2 = _metric(params, th)
    L = sn2 * phd
    E = 0.5 * (sn2 * phd * phd + g * thd * thd)
    if L == 0.0:
        raise ZeroAngularMomentum("C = 2E/L^2 needs L != 0")
    return L, E, 2.0 * E / (L * L)


def geo_turning(params, C):
    if not C >= 1.0:
        raise DomainError("C must be at least 1")
    a = math.asin(1.0 / math.sqrt(C))
    return a, math.pi - a


# --------------------------------------------------------------------------
# the integrals calA and calB
# --------------------------------------------------------------------------


def _clip_theta(th, C):
    lo, hi = geo_turning(None, C)
    slack = 1e-10 * max(1.0, hi - lo)
    if th < lo - slack or th > hi + slack:
        raise DomainError(f"theta={th} outside [{lo}, {hi}] for C={C}")
    # calA ~ sqrt(theta - theta_min): a few ulps there would cost ~1e-8
    snap = _SNAP * max(1.0, abs(hi))
    if th - lo <= snap:
        return lo, lo
    if hi - th <= snap:
        return hi, lo
    return th, lo


def _integrand(params, kind, th, C):
    sn, cs = math.sin(th), math.cos(th)
    if kind == "A":
        return math.sqrt(cs * cs / (sn * sn) + params.R ** 2)
    return math.sqrt(cs * cs + params.R ** 2 * sn * sn) * sn


def _half_quad(params, kind, th, C, lo):
    """Integral from ``lo = theta_min`` to ``th <= pi/2``."""
    if th - lo <= _SNAP * max(1.0, abs(lo)):
        return 0.0
    mid = 0.5 * (lo + 0.5 * math.pi)
    th1 = min(th, mid)
    u1 = math.sqrt(max(C * math.sin(th1) ** 2 - 1.0, 0.0))

    # u^2 = C sin^2 - 1 removes the inverse square root at theta_min
    def fu(u):
        sn2 = (1.0 + u * u) / C
        t = math.asin(math.sqrt(sn2))
        return _integrand(params, kind, t, C) / (C * math.sqrt(sn2) * math.cos(t))

    def ft(t):
        return _integrand(params, kind, t, C) / math.sqrt(C * math.sin(t) ** 2 - 1.0)

    val, err = _spi.quad(fu, 0.0, u1, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
    if th > mid:
        v2, e2 = _spi.quad(ft, mid, th, epsabs=QUAD_TOL, epsrel=QUAD_TOL, limit=200)
        val, err = val + v2, err + e2
    if not math.isfinite(val) or err > 1e-9 * max(1.0, abs(val)):
        raise QuadratureFailure(f"calA/calB quadrature error {err:.2e}")
    return val


def _quad_integral(params, kind, th, C):
    if C == 1.0:
        _clip_theta(th, C)
        return 0.0
    th, lo = _clip_theta(th, C)
    if th <= 0.5 * math.pi:
        return _half_quad(params, kind, th, C, lo)
    return 2.0 * _half_quad(params, kind, 0.5 * math.pi, C, lo) - \
        _half_quad(params, kind, math.pi - th, C, lo)


def _closed_args(params, th, C):
    cb2 = 1.0 - 1.0 / C
    cb = math.sqrt(cb2)
    rb2 = 1.0 - params.R ** -2
    x = max(-1.0, min(1.0, math.cos(th) / cb))
    return cb2, rb2, cb2 * rb2, x


def _snap_x(th, C, x):
    lo, hi = geo_turning(None, C)
    return 1.0 if th == lo else (-1.0 if th == hi else x)


def calA_closed(params, theta, C):
    """Elliptic closed form of ``calA``."""
    if C == 1.0:
        _clip_theta(theta, C)
        return 0.0
    th, _ = _clip_theta(theta, C)
    n, _, m, x = _closed_args(params, th, C)
    x = _snap_x(th, C, x)
    R = params.R
    pref = 1.0 / (R * math.sqrt(C))
    return pref * ((R * R - 1.0) * (ellip_k_m(m) - ellip_f_m(x, m))
                   + ellip_picomp_m(n, m) - ellip_pi_m(x, n, m))


def calB_closed(params, theta, C):
    """Elliptic closed form of ``calB``."""
    if C == 1.0:
        _clip_theta(theta, C)
        return 0.0
    th, _ = _clip_theta(theta, C)
    _, _, m, x = _closed_args(params, th, C)
    x = _snap_x(th, C, x)
    return params.R / math.sqrt(C) * (ellip_ecomp_m(m) - ellip_e_m(x, m))


def calA(params, theta, C, method=None):
    """``int_{theta_min}^{theta} sqrt((cot^2 + R^2) / (C sin^2 - 1))``."""
    if (method or params.method) == "closed":
        return calA_closed(params, theta, C)
    return _quad_integral(params, "A", float(theta), float(C))


def calB(params, theta, C, method=None):
    """``int_{theta_min}^{theta} sqrt((cos^2 + R^2 sin^2) / (C sin^2 - 1)) sin``."""
    if (method or params.method) == "closed":
        return calB_closed(params, theta, C)
    return _quad_integral(params, "B", float(theta), float(C))


def _dC(fn, params, theta, C):
    # stay inside the allowed band for C - h; csc^2(theta) is its lower edge
    room = C - 1.0 / math.sin(theta) ** 2
    if room <= 0:
        raise DomainError("C-derivative is singular at the turning point")
    h = min(1e-3 * C, 0.25 * room)
    f = [fn(params, theta, C + k * h) for k in (2, 1, -1, -2)]
    return (-f[0] + 8.0 * f[1] - 8.0 * f[2] + f[3]) / (12.0 * h)


def calA_C(params, theta, C):
    """``d calA / dC`` by a five-point stencil on the closed form."""
    return _dC(calA_closed, params, theta, C)


def calB_C(params, theta, C):
    return _dC(calB_closed, params, theta, C)


# --------------------------------------------------------------------------
# branch data, Theta and T
# --------------------------------------------------------------------------


def _sgn(x):
    return 1 if x >= 0 else -1


def geo_branch(params, s, n_halfcycles=None):
    """Branch state read off the velocity; ``n`` defaults to 0 going up, 1 down."""
    th, _, thd, phd = _unpack(s)
    L = math.sin(th) ** 2 * phd
    if n_halfcycles is None:
        n_halfcycles = 0 if thd >= 0 else 1
    return GeoBranchState(_sgn(thd) * _sgn(L), int(n_halfcycles))


def geo_Theta(params, s, branch=None):
    """``Theta = phi - s calA(theta; C)``, constant between turning points."""
    L, E, C = geo_invariants(params, s)
    br = branch or geo_branch(params, s)
    return float(s.q[1]) - br.s * calA(params, float(s.q[0]), C)


def geo_T(params, s, branch=None):
    """``T = t - s calB(theta; C) / L``."""
    L, E, C = geo_invariants(params, s)
    br = branch or geo_branch(params, s)
    return s.t - br.s * calB(params, float(s.q[0]), C) / L


def _phase(fn, params, theta, C, n):
    """Accumulated integral after ``n`` turning passages from a minimum."""
    lo, hi = geo_turning(params, C)
    full = fn(params, hi, C)
    a = fn(params, theta, C)
    return n * full + (a if n % 2 == 0 else full - a)


def geo_Theta_unwrapped(params, s, n_halfcycles):
    """Polar angle of the reference minimum, single-valued along a geodesic."""
    L, E, C = geo_invariants(params, s)
    return float(s.q[1]) - _sgn(L) * _phase(calA, params, float(s.q[0]), C, n_halfcycles)


def geo_T_unwrapped(params, s, n_halfcycles):
    """Affine time of the reference minimum."""
    L, E, C = geo_invariants(params, s)
    return s.t - _phase(calB, params, float(s.q[0]), C, n_halfcycles) / abs(L)


def geo_periods(params, C, L=1.0):
    """Precession angle and affine period per theta-cycle.

    ``dT_closed`` is the displayed expression ``4 E(m) / (R sqrt C)``, which
    carries no ``L`` dependence; ``dT_quad = 2 calB(theta_max) / |L|`` is the
    affine period.  ``dphi`` agrees between both paths.
    """
    if not C > 1.0:
        raise DomainError("periods need C > 1")
    _, hi = geo_turning(params, C)
    n, _, m, _ = _closed_args(params, 0.5 * math.pi, C)
    R = params.R
    pref = 4.0 / (R * math.sqrt(C))
    dphi_c = pref * ((R * R - 1.0) * ellip_k_m(m) + ellip_picomp_m(n, m))
    dT_c = pref * ellip_ecomp_m(m)
    return GeoPeriods(float(dphi_c), 2.0 * calA(params, hi, C, "quad"),
                      float(dT_c), 2.0 * calB(params, hi, C, "quad") / abs(L))


# --------------------------------------------------------------------------
# groups
# --------------------------------------------------------------------------


def geo_state(params, t, theta, phi, L, E, sgn_thetadot):
    """State with invariants ``(L, E)`` at the given position."""
    g, sn2 = _metric(params, theta)
    if sn2 == 0.0:
        raise PoleSingularity("sin(theta) = 0")
    rad = 2.0 * E - L * L / sn2
    if rad < 0:
        if rad > -1e-12 * max(1.0, 2.0 * E):
            rad = 0.0
        else:
            raise DomainError("theta is outside the band allowed by (L, E)")
    return State(t, [theta, phi], [sgn_thetadot * math.sqrt(rad / g), L / sn2])


def _dyn_map(params, s, L1, E1, branch):
    L, E, C = geo_invariants(params, s)
    if L1 == 0.0 or _sgn(L1) != _sgn(L):
        raise DomainError("transformed angular momentum changes sign")
    C1 = 2.0 * E1 / (L1 * L1)
    if not C1 > 1.0:
        raise DomainError("transformed C must exceed 1")
    th, ph, thd, _ = _unpack(s)
    n = (branch or geo_branch(params, s)).n_halfcycles
    ph1 = ph + _sgn(L) * (_phase(calA, params, th, C1, n) - _phase(calA, params, th, C, n))
    t1 = s.t + _phase(calB, params, th, C1, n) / abs(L1) - _phase(calB, params, th, C, n) / abs(L)
    sg = _sgn(thd) if thd != 0 else (1 if n % 2 == 0 else -1)
    return geo_state(params, t1, th, ph1, L1, E1, sg)


def geo_dyn_Theta(params, s, eps, branch=None):
    """Group generated by ``X_(Theta)``: ``L -> L - eps`` at fixed ``E`` and theta.

    ``phi`` and ``t`` shift so that the unwrapped Theta and T are unchanged.
    For ``L > 0`` this gives ``C+ = C / (1 - eps sqrt(C/2E))^2``.
    """
    if eps == 0:
        return s
    L, E, _ = geo_invariants(params, s)
    return _dyn_map(params, s, L - eps, E, branch)


def geo_dyn_T(params, s, eps, branch=None):
    """Group generated by ``X_(T)``: ``E -> E + eps``, ``C -> C + 2 eps / L^2``."""
    if eps == 0:
        return s
    L, E, _ = geo_invariants(params, s)
    return _dyn_map(params, s, L, E + eps, branch)


def geo_rotation_group(params, s, eps):
    return s.replace(q=[s.q[0], s.q[1] + eps])


def geo_translation_group(params, s, eps):
    return s.replace(t=s.t - eps)


def turning_events():
    """Event specs for theta minima (``thetadot`` rising) and maxima."""
    return (EventSpec("theta_min", lambda st: st.qdot[0], "rising"),
            EventSpec("theta_max", lambda st: st.qdot[0], "falling"))


# --------------------------------------------------------------------------
# system definition and catalog
# --------------------------------------------------------------------------


def make_system(params):
    R2 = params.R ** 2

    def lag(s):
        th, _, thd, phd = _unpack(s)
        g, sn2 = _metric(params, th)
        return 0.5 * (sn2 * phd * phd + g * thd * thd)

    def hess(s):
        g, sn2 = _metric(params, float(s.q[0]))
        return np.diag([g, sn2])

    def mixed(s):
        # h_ij = d2L / dq_i dqdot_j
        th, _, thd, phd = _unpack(s)
        sc = 2.0 * math.sin(th) * math.cos(th)
        return np.array([[sc * (R2 - 1.0) * thd, sc * phd], [0.0, 0.0]])

    return SystemDef(
        n_dof=2,
        force=lambda s: geo_rhs(params, s),
        lagrangian=lag,
        name="spheroid",
        hessian_fn=hess,
        mixed_fn=mixed,
        momentum=lambda s: hess(s) @ s.qdot,
        energy=lag,
        rhs_kernel=_geo_kernel,
        kernel_params=np.array([float(params.R)]),
    )


def scalar_fields(params):
    def inv(k):
        return lambda s: geo_invariants(params, s)[k]

    return {
        "L": ScalarField(inv(0), name="L"),
        "E": ScalarField(inv(1), name="E"),
        "C": ScalarField(inv(2), name="C"),
        "Theta": ScalarField(lambda s: geo_Theta(params, s), "local_integral",
                             branch="theta_turning", name="Theta"),
        "T": ScalarField(lambda s: geo_T(params, s), "local_integral",
                         branch="theta_turning", name="T"),
    }


def _x_theta(params):
    def p(s):
        L, E, C = geo_invariants(params, s)
        th = float(s.q[0])
        g, sn2 = _metric(params, th)
        br = geo_branch(params, s)
        w = math.sqrt(max(C - 1.0 / sn2, 0.0))
        a_c = calA_C(params, th, C)
        return np.array([-2.0 / L * a_c * w / math.sqrt(g), 2.0 / L * a_c * br.s * w * w])
    return p


def _x_t(params):
    def p(s):
        L, E, C = geo_invariants(params, s)
        th = float(s.q[0])
        g, sn2 = _metric(params, th)
        br = geo_branch(params, s)
        w2 = max(C - 1.0 / sn2, 0.0)
        b = calB(params, th, C)
        b_c = calB_C(params, th, C)
        return np.array([-2.0 * b_c * math.sqrt(w2) / math.sqrt(g) / L ** 2,
                         (br.s * b + 2.0 * br.s * b_c * w2) / L ** 2])
    return p


def symmetry_fields(params):
    """Analytic characteristics ``(P^theta, P^phi)``."""
    return {
        "L": SymmetryField(lambda s: np.array([0.0, 1.0]), name="X(L)"),
        "E": SymmetryField(lambda s: np.array(s.qdot, dtype=float), name="X(E)"),
        "Theta": SymmetryField(_x_theta(params), name="X(Theta)"),
        "T": SymmetryField(_x_t(params), name="X(T)"),
    }
