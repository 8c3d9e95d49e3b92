"""Three-particle Calogero-Moser-Sutherland system on a line.

    V = k ((x1 - x2)^-2 + (x2 - x3)^-2 + (x3 - x1)^-2),   k > 0

Relative motion uses ``y = x1 - (x2 + x3)/2``, ``z = x2 - x3`` and the
polar pair ``y = r cos(phi)``, ``(sqrt(3)/2) z = r sin(phi)``.  Collisions
sit on ``sin(3 phi) = 0`` so every trajectory stays inside one sector of
width pi/3; formulas below use the angle reduced to ``(0, pi/3)``.

Rest-frame quantities carry a tilde:  ``Et = 3E/2 - P^2/4`` and
``C3t = C3/8``, with ``kt = (9/2)^2 k``.  In these variables

    Et  = (rdot^2 + r^2 phidot^2)/2 + kt / (2 r^2 sin^2(3 phi))
    C3t = r^4 phidot^2 / 2 + kt / (2 sin^2(3 phi))
"""
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .._jit import njit
from ..core import ScalarField, State, SymmetryField, SystemDef
from ..ellint import DomainError

__all__ = [
    "CMSParams",
    "PolarState",
    "Collision",
    "DegenerateEnergy",
    "cms_rhs",
    "cms_integrals",
    "cms_identities",
    "cms_to_polar",
    "cms_from_polar",
    "cms_T",
    "cms_T_polar",
    "cms_Psi",
    "cms_Psi_polar",
    "cms_Psi_displayed",
    "cms_Psi_from_C4",
    "cms_sinPsi_from_C4",
    "cms_shape_residual",
    "cms_group_C3",
    "cms_group_T",
    "cms_group_Psi",
    "cms_group_Psi_displayed",
    "make_system",
    "scalar_fields",
    "symmetry_fields",
]

SQ3 = math.sqrt(3.0)
COLLISION_REL = 1e-6


class Collision(ArithmeticError):
    """Two particles (numerically) coincide."""


class DegenerateEnergy(ArithmeticError):
    """``6E = P^2``: no relative motion, T and Psi are undefined."""


@dataclass(frozen=True)
class CMSParams:
    k: float = 1.0

    def __post_init__(self):
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ValueError("interaction coefficient k must be positive")

    @property
    def kt(self):
        return 20.25 * self.k


@dataclass(frozen=True)
class PolarState:
    """Centre of mass, polar relative coordinates, branch signs and the
    invariants ``(P, E, C3)`` that fix the rates.  ``rdot``/``phidot`` are
    kept when known so that a round trip is exact."""

    t: float
    xbar: float
    r: float
    phi: float
    sgn_r: int
    sgn_phi: int
    P: float
    E: float
    C3: float
    rdot: Optional[float] = None
    phidot: Optional[float] = None


# --------------------------------------------------------------------------
# dynamics
# --------------------------------------------------------------------------


@njit
def _cms_kernel(t, y, p):
    k = p[0]
    out = np.empty(6)
    d12 = y[0] - y[1]
    d13 = y[0] - y[2]
    d23 = y[1] - y[2]
    f12 = 2.0 * k / (d12 * d12 * d12)
    f13 = 2.0 * k / (d13 * d13 * d13)
    f23 = 2.0 * k / (d23 * d23 * d23)
    out[0] = y[3]
    out[1] = y[4]
    out[2] = y[5]
    out[3] = f12 + f13
    out[4] = -f12 + f23
    out[5] = -f13 - f23
    return out


def _xv(s):
    return np.asarray(s.q, dtype=float), np.asarray(s.qdot, dtype=float)


def _disp(x):
    # y1 = x2 - x3, y2 = x3 - x1, y3 = x1 - x2
    return x[1] - x[2], x[2] - x[0], x[0] - x[1]


def _check(x):
    y1, y2, y3 = _disp(x)
    scale = math.sqrt(0.5 * (y1 * y1 + y2 * y2 + y3 * y3))
    if min(abs(y1), abs(y2), abs(y3)) <= COLLISION_REL * scale:
        raise Collision("particles coincide")


def _potential(k, x):
    y1, y2, y3 = _disp(x)
    return k / (y1 * y1), k / (y2 * y2), k / (y3 * y3)


def cms_rhs(params, s):
    x, v = _xv(s)
    _check(x)
    return _cms_kernel(s.t, np.concatenate([x, v]), np.array([params.k]))[3:]


def _A(x, v):
    y1, y2, y3 = _disp(x)
    return y1 * v[0] + y2 * v[1] + y3 * v[2]


def cms_integrals(params, s):
    """The nine conserved quantities at ``s`` (K, E_dil, E_conf depend on t)."""
    x, v = _xv(s)
    _check(x)
    k, t = params.k, s.t
    V1, V2, V3 = _potential(k, x)
    V = V1 + V2 + V3
    P = float(v.sum())
    E = 0.5 * float(v @ v) + V
    S = float(x @ v)
    X = float(x.sum())
    K = t * P - X
    Edil = t * E - 0.5 * S
    Econf = t * t * E - t * S + 0.5 * float(x @ x)
    y1, y2, y3 = _disp(x)
    A = _A(x, v)
    # |y1 y2 y3| keeps C3 independent of the particle ordering
    C3 = 3.0 * A * A + 12.0 * k * abs(y1 * y2 * y3) * (V / k) ** 1.5
    C4 = (float(np.sum(v ** 3)) / 3.0 + (v[0] + v[1]) * V3 + (v[1] + v[2]) * V1
          + (v[2] + v[0]) * V2)
    return {
        "P": P, "E": E, "K": K, "E_dil": Edil, "E_conf": Econf,
        "C1": P * Edil - K * E, "C2": E * Econf - Edil * Edil,
        "C3": C3, "C4": float(C4),
    }


def _tilde(P, E, C3):
    return 1.5 * E - 0.25 * P * P, C3 / 8.0


def cms_identities(params, s):
    """Residuals of the algebraic relations between the integrals.

    ``factorization`` uses the displayed coefficient 2/3, ``factorization_1_6``
    the coefficient 1/6 that the integrals as defined here satisfy.  Likewise
    ``extra`` uses ``PT - K = 3 C1/D`` and ``extra_6`` the coefficient 6.  The
    ``Et``/``C3t`` entries compare polar evaluations with the rescalings.
    """
    I = cms_integrals(params, s)
    P, E = I["P"], I["E"]
    D = 6.0 * E - P * P
    if D == 0:
        raise DegenerateEnergy("6E = P^2")
    lhs = D * I["C2"] - I["C1"] ** 2
    T = cms_T(params, s)
    p = cms_to_polar(params, s)
    Et, C3t = _tilde(P, E, I["C3"])
    Et_pol, C3t_pol = _polar_energies(params, p.r, p.phi, p.rdot, p.phidot)
    return {
        "factorization": lhs - 2.0 / 3.0 * E * I["C3"],
        "factorization_1_6": lhs - E * I["C3"] / 6.0,
        "extra": P * T - I["K"] - 3.0 * I["C1"] / D,
        "extra_6": P * T - I["K"] - 6.0 * I["C1"] / D,
        "Et": Et_pol - Et,
        "C3t": C3t_pol - C3t,
    }


# --------------------------------------------------------------------------
# polar variables
# --------------------------------------------------------------------------


def _sector(phi):
    """Index k with ``phi - k pi/3`` in ``(0, pi/3)``."""
    return math.floor(phi / (math.pi / 3.0))


def _reduced(phi):
    return phi - _sector(phi) * math.pi / 3.0


def _polar_energies(params, r, phi, rdot, phidot):
    csc2 = 1.0 / math.sin(3.0 * phi) ** 2
    kt = params.kt
    return (0.5 * (rdot * rdot + r * r * phidot * phidot) + 0.5 * kt * csc2 / (r * r),
            0.5 * r ** 4 * phidot * phidot + 0.5 * kt * csc2)


def _sgn(a):
    return 1 if a >= 0 else -1


def cms_to_polar(params, s):
    x, v = _xv(s)
    _check(x)
    I = cms_integrals(params, s)
    y = x[0] - 0.5 * (x[1] + x[2])
    z = x[1] - x[2]
    yd = v[0] - 0.5 * (v[1] + v[2])
    zd = v[1] - v[2]
    w, wd = 0.5 * SQ3 * z, 0.5 * SQ3 * zd
    r = math.hypot(y, w)
    phi = math.atan2(w, y) % (2.0 * math.pi)
    rdot = (y * yd + w * wd) / r
    phidot = (y * wd - w * yd) / (r * r)
    return PolarState(s.t, float(x.mean()), r, phi, _sgn(rdot), _sgn(phidot),
                      I["P"], I["E"], I["C3"], rdot, phidot)


def _rates(params, p):
    Et, C3t = _tilde(p.P, p.E, p.C3)
    rad_r = 2.0 * (Et - C3t / (p.r * p.r))
    rad_p = 2.0 * C3t - params.kt / math.sin(3.0 * p.phi) ** 2
    tol = 1e-12
    if rad_r < -tol * max(1.0, 2 * Et) or rad_p < -tol * max(1.0, 2 * C3t):
        raise DomainError("polar state is not admissible for the invariants")
    return (p.sgn_r * math.sqrt(max(rad_r, 0.0)),
            p.sgn_phi * math.sqrt(max(rad_p, 0.0)) / (p.r * p.r))


def cms_from_polar(params, p, invariants=None):
    """Cartesian State.  ``invariants = (P, E, C3)`` overrides the stored ones
    and forces the rates to be rebuilt from them."""
    if invariants is not None:
        P, E, C3 = invariants
        p = replace(p, P=P, E=E, C3=C3, rdot=None, phidot=None)
    if p.rdot is None or p.phidot is None:
        rdot, phidot = _rates(params, p)
    else:
        rdot, phidot = p.rdot, p.phidot
    c, sn = math.cos(p.phi), math.sin(p.phi)
    y, z = p.r * c, 2.0 / SQ3 * p.r * sn
    yd = rdot * c - p.r * phidot * sn
    zd = 2.0 / SQ3 * (rdot * sn + p.r * phidot * c)
    xb, vb = p.xbar, p.P / 3.0
    x = np.array([xb + 2.0 * y / 3.0, xb - y / 3.0 + 0.5 * z, xb - y / 3.0 - 0.5 * z])
    v = np.array([vb + 2.0 * yd / 3.0, vb - yd / 3.0 + 0.5 * zd, vb - yd / 3.0 - 0.5 * zd])
    _check(x)
    return State(p.t, x, v)


# --------------------------------------------------------------------------
# T and Psi
# --------------------------------------------------------------------------


def cms_T(params, s):
    """Time of closest approach ``t + ((x1+x2+x3) P - 3 x.xdot) / (6E - P^2)``."""
    x, v = _xv(s)
    I = cms_integrals(params, s)
    D = 6.0 * I["E"] - I["P"] ** 2
    if D <= 0:
        raise DegenerateEnergy("6E - P^2 must be positive")
    return s.t + (float(x.sum()) * I["P"] - 3.0 * float(x @ v)) / D


def _f_T(Et, C3t, r):
    return math.sqrt(max(0.5 * (Et * r * r - C3t), 0.0)) / Et


def cms_T_polar(params, p):
    Et, C3t = _tilde(p.P, p.E, p.C3)
    if Et <= 0:
        raise DegenerateEnergy("6E - P^2 must be positive")
    return p.t - p.sgn_r * _f_T(Et, C3t, p.r)


def _b(params, C3t):
    val = 1.0 - params.kt / (2.0 * C3t)
    if val < 0:
        raise DomainError("C3 below the angular barrier")
    return math.sqrt(val)


def _F(Et, C3t, r):
    return math.sqrt(max(Et * r * r / C3t - 1.0, 0.0))


def cms_Psi_polar(params, p):
    """``Psi = sgn(phidot) arccos(cos(3 phi)/b) - 3 sgn(rdot) arctan(F)``.

    ``phi`` is the sector-reduced angle, ``b^2 = 1 - kt/(2 C3t)`` and
    ``F^2 = (Et/C3t) r^2 - 1``.  arccos replaces the arctan-of-secant form so
    that the value stays continuous across ``cos(3 phi) = 0``; Psi is then
    defined modulo 2 pi (it jumps by 2 pi at the maximum of phi).
    """
    Et, C3t = _tilde(p.P, p.E, p.C3)
    if p.C3 <= 0:
        raise DomainError("Psi needs C3 > 0")
    b = _b(params, C3t)
    c = math.cos(3.0 * _reduced(p.phi))
    ang = math.acos(max(-1.0, min(1.0, c / b)))
    return _wrap(p.sgn_phi * ang - 3.0 * p.sgn_r * math.atan(_F(Et, C3t, p.r)))


def _wrap(a):
    return math.remainder(a, 2.0 * math.pi)


def cms_Psi(params, s):
    """Psi from Cartesian data, reduced to ``(-pi, pi]``.

    The angular term is ``-arctan(Q/3)`` with
    ``Q = y1 y2 y3 A / ((xbar-x1)(xbar-x2)(xbar-x3) sqrt(C3))``, shifted by
    ``sgn(phidot) pi`` when ``cos(3 phi) < 0`` in the reduced sector; the
    radial term is ``-3 arctan((3 x.xdot - (x1+x2+x3) P)/sqrt(C3))``.
    """
    x, v = _xv(s)
    I = cms_integrals(params, s)
    C3 = I["C3"]
    if C3 <= 0:
        raise DomainError("Psi needs C3 > 0")
    _b(params, C3 / 8.0)
    rt = math.sqrt(C3)
    xb = float(x.mean())
    y1, y2, y3 = _disp(x)
    A = _A(x, v)
    trip = y1 * y2 * y3
    cen = (xb - x[0]) * (xb - x[1]) * (xb - x[2])
    sgn_phi = -_sgn(A)
    if cen == 0.0:
        ang = sgn_phi * 0.5 * math.pi
    else:
        ang = -math.atan(trip * A / (cen * rt) / 3.0)
        if trip * cen < 0:
            ang += sgn_phi * math.pi
    rad = -3.0 * math.atan((3.0 * float(x @ v) - float(x.sum()) * I["P"]) / rt)
    return _wrap(ang + rad)


def cms_Psi_displayed(params, s):
    """The literal closed form with coefficient 3 and ``(x1 - x3) xdot3``,
    principal arctan branches.  Kept for comparison only."""
    x, v = _xv(s)
    I = cms_integrals(params, s)
    rt = math.sqrt(I["C3"])
    xb = float(x.mean())
    y1, y2, y3 = _disp(x)
    At = y1 * v[0] + y2 * v[1] + (x[0] - x[2]) * v[2]
    cen = (xb - x[0]) * (xb - x[1]) * (xb - x[2])
    return (-math.atan(3.0 * y3 * y1 * y2 * At / (cen * rt))
            - 3.0 * math.atan((3.0 * float(x @ v) - float(x.sum()) * I["P"]) / rt))


def cms_Psi_from_C4(params, s):
    """tan(Psi) from the cubic Lax invariant C4.

    ``tan(Psi) = sgn(phidot) sgn(rdot) C4t / sqrt(b^2 (2 Et)^3 - C4t^2)`` with
    ``C4t = 27 C4/2 - 9 P E + P^3``.
    """
    I = cms_integrals(params, s)
    p = cms_to_polar(params, s)
    Et, C3t = _tilde(I["P"], I["E"], I["C3"])
    b2 = _b(params, C3t) ** 2
    C4t = 13.5 * I["C4"] - 9.0 * I["P"] * I["E"] + I["P"] ** 3
    rad = b2 * (2.0 * Et) ** 3 - C4t * C4t
    return p.sgn_phi * p.sgn_r * C4t / math.sqrt(max(rad, 0.0))


def cms_sinPsi_from_C4(params, s):
    """sin(Psi) from C4: ``sgn(sin 3 phi) C4t / (b (2 Et)^(3/2))``.

    C4 fixes sin(Psi) only; the sign of cos(Psi) is not a function of the
    branch signs of rdot and phidot, so the tan form above holds on part of
    phase space.
    """
    I = cms_integrals(params, s)
    p = cms_to_polar(params, s)
    Et, C3t = _tilde(I["P"], I["E"], I["C3"])
    C4t = 13.5 * I["C4"] - 9.0 * I["P"] * I["E"] + I["P"] ** 3
    return _sgn(math.sin(3.0 * p.phi)) * C4t / (_b(params, C3t) * (2.0 * Et) ** 1.5)


def _alpha(F):
    # cot(alpha) = F (3 - F^2) / (1 - 3 F^2), principal alpha in (-pi/2, pi/2]
    num = F * (3.0 - F * F)
    if num == 0.0:
        return 0.5 * math.pi
    return math.atan((1.0 - 3.0 * F * F) / num)


def cms_shape_residual(params, s, psi=None, form="exact"):
    """Residual of the trajectory-shape relation at ``s``.

    ``form="exact"``: ``cos(3 phi) - b cos(Psi + 3 sgn(rdot) arctan F)``.
    ``form="displayed"``: ``sgn(alpha) cos(3 phi) - sgn(phidot) b
    sin(sgn(rdot) alpha - Psi)`` with the principal alpha.
    ``phi`` is the sector-reduced angle; ``psi`` defaults to Psi(s).
    """
    p = cms_to_polar(params, s)
    Et, C3t = _tilde(p.P, p.E, p.C3)
    if Et * p.r * p.r < C3t * (1.0 - 1e-12):
        raise DomainError("F is not real")
    b = _b(params, C3t)
    F = _F(Et, C3t, p.r)
    if psi is None:
        psi = cms_Psi_polar(params, p)
    c = math.cos(3.0 * _reduced(p.phi))
    if form == "exact":
        return c - b * math.cos(psi + 3.0 * p.sgn_r * math.atan(F))
    if form == "displayed":
        a = _alpha(F)
        return _sgn(a) * c - p.sgn_phi * b * math.sin(p.sgn_r * a - psi)
    raise ValueError("form must be 'exact' or 'displayed'")


# --------------------------------------------------------------------------
# dynamical groups, acting on PolarState
# --------------------------------------------------------------------------


def _phase(params, p):
    """``psi`` with ``cos(3 phi_red) = b cos(psi)`` and ``sgn(phidot) = sgn(sin psi)``."""
    _, C3t = _tilde(p.P, p.E, p.C3)
    b = _b(params, C3t)
    c = math.cos(3.0 * _reduced(p.phi))
    return b, p.sgn_phi * math.acos(max(-1.0, min(1.0, c / b)))


def _from_phase(p, b, psi, **kw):
    k = _sector(p.phi)
    red = math.acos(max(-1.0, min(1.0, b * math.cos(psi)))) / 3.0
    sn = math.sin(psi)
    sgn_phi = p.sgn_phi if sn == 0.0 else _sgn(sn)
    return replace(p, phi=k * math.pi / 3.0 + red, sgn_phi=sgn_phi,
                   rdot=None, phidot=None, **kw)


def cms_group_C3(params, p, eps):
    """Flow of X(C3') with ``C3' = exp(sqrt(C3)/3)``: the angular phase moves
    by ``3 C3' eps``; r, xbar, t and the invariants are unchanged."""
    if eps == 0:
        return p
    if p.C3 <= 0:
        raise DomainError("needs C3 > 0")
    b, psi = _phase(params, p)
    c3p = math.exp(math.sqrt(p.C3) / 3.0)
    return _from_phase(p, b, psi + 3.0 * c3p * eps)


def _R_displayed(p, Ed):
    D, Dd = 6.0 * p.E - p.P ** 2, 6.0 * Ed - p.P ** 2
    r2 = p.r * p.r

    def term(D):
        return math.sqrt(max(2.0 * D * r2 - p.C3, 0.0)) ** 3 * (3.0 * D * r2 + p.C3)

    return p.sgn_r * 2.0 / 45.0 / r2 ** 2 * (term(Dd) - term(D))


def cms_group_T(params, p, eps, form="derived"):
    """Flow of Y(T) in the gauge that keeps r fixed: ``E -> E + eps``.

    The gauge moves time by ``sgn(rdot) (f(E + eps) - f(E))`` with
    ``f = sqrt(2 D r^2 - C3)/D``, ``D = 6E - P^2``; the centre of mass
    follows with speed P/3 and the angular phase keeps Psi fixed.
    ``form="displayed"`` uses the R(r, eps) phase and leaves t unchanged.
    """
    if eps == 0:
        return p
    Et, C3t = _tilde(p.P, p.E, p.C3)
    Ed = p.E + eps
    Etd = Et + 1.5 * eps
    if Etd <= 0 or Etd * p.r * p.r < C3t:
        raise DomainError("E + eps leaves the admissible radial region")
    dt = p.sgn_r * (_f_T(Etd, C3t, p.r) - _f_T(Et, C3t, p.r))
    b, psi = _phase(params, p)
    if form == "derived":
        shift = 3.0 * p.sgn_r * (math.atan(_F(Etd, C3t, p.r)) - math.atan(_F(Et, C3t, p.r)))
        return _from_phase(p, b, psi + shift, E=Ed, t=p.t + dt,
                           xbar=p.xbar + p.P / 3.0 * dt)
    if form == "displayed":
        ang = _R_displayed(p, Ed) * math.sqrt(p.C3)
        c = math.cos(3.0 * _reduced(p.phi))
        w = math.sqrt(max(math.sin(3.0 * p.phi) ** 2 - 4.0 * params.kt / p.C3, 0.0))
        cd = p.sgn_phi * (math.cos(ang) * c - math.sin(ang) * w)
        if abs(cd) > 1.0:
            raise DomainError("cos(3 phi) out of range")
        k = _sector(p.phi)
        return replace(p, phi=k * math.pi / 3.0 + math.acos(cd) / 3.0, E=Ed,
                       xbar=p.xbar + p.P / 3.0 * dt, rdot=None, phidot=None)
    raise ValueError("form must be 'derived' or 'displayed'")


def cms_group_Psi(params, p, eps, form="derived"):
    """Flow of X(Psi): ``sqrt(C3) -> sqrt(C3) - 9 eps`` with E, P, Psi, T, t
    and xbar fixed.  Keeping T at the same t gives
    ``r^2 -> r^2 + (C3' - C3) / (2 (6E - P^2))``; ``form="displayed"`` uses
    ``r^2 + 9 (sqrt(C3) + 9 eps) eps / (6E - P^2)`` instead."""
    if eps == 0:
        return p
    rt = math.sqrt(p.C3) - 9.0 * eps
    if rt <= 0:
        raise DomainError("sqrt(C3) - 9 eps must stay positive")
    C3d = rt * rt
    D = 6.0 * p.E - p.P ** 2
    if D <= 0:
        raise DegenerateEnergy("6E - P^2 must be positive")
    if form == "derived":
        r2 = p.r * p.r + (C3d - p.C3) / (2.0 * D)
    elif form == "displayed":
        r2 = p.r * p.r + 9.0 / D * (math.sqrt(p.C3) + 9.0 * eps) * eps
    else:
        raise ValueError("form must be 'derived' or 'displayed'")
    Et, C3t = _tilde(p.P, p.E, p.C3)
    C3td = C3d / 8.0
    if r2 <= 0 or Et * r2 < C3td * (1.0 - 1e-12):
        raise DomainError("transformed radius is not admissible")
    psi_inv = cms_Psi_polar(params, p)
    bd = _b(params, C3td)
    rd = math.sqrt(r2)
    psi = psi_inv + 3.0 * p.sgn_r * math.atan(_F(Et, C3td, rd))
    return _from_phase(p, bd, psi, r=rd, C3=C3d)


# --------------------------------------------------------------------------
# catalog
# --------------------------------------------------------------------------


def make_system(params):
    k = params.k

    def lag(s):
        x, v = _xv(s)
        return 0.5 * float(v @ v) - sum(_potential(k, x))

    def energy(s):
        x, v = _xv(s)
        return 0.5 * float(v @ v) + sum(_potential(k, x))

    return SystemDef(
        n_dof=3,
        force=lambda s: cms_rhs(params, s),
        lagrangian=lag,
        name="cms",
        hessian_fn=lambda s: np.eye(3),
        mixed_fn=lambda s: np.zeros((3, 3)),
        momentum=lambda s: np.array(s.qdot, dtype=float),
        energy=energy,
        rhs_kernel=_cms_kernel,
        kernel_params=np.array([float(k)]),
    )


def _C3p(params, s):
    return math.exp(math.sqrt(cms_integrals(params, s)["C3"]) / 3.0)


def scalar_fields(params):
    def inv(name, kind="constant_of_motion"):
        return ScalarField(lambda s: cms_integrals(params, s)[name], kind, name=name)

    out = {n: inv(n) for n in ("P", "E", "C1", "C2", "C3", "C4")}
    for n in ("K", "E_dil", "E_conf"):
        out[n] = inv(n, "temporal_integral")
    out["C3p"] = ScalarField(lambda s: _C3p(params, s), name="C3p")
    out["T"] = ScalarField(lambda s: cms_T(params, s), "temporal_integral", name="T")
    out["Psi"] = ScalarField(lambda s: cms_Psi(params, s), "local_integral",
                             branch="mod_2pi", name="Psi")
    return out


def _x_c3(params):
    def p(s):
        x, v = _xv(s)
        return 6.0 * _A(x, v) * np.array(_disp(x))
    return p


def _x_c4(params):
    def p(s):
        x, v = _xv(s)
        V1, V2, V3 = _potential(params.k, x)
        return v * v + np.array([V2 + V3, V1 + V3, V1 + V2])
    return p


def _x_t(params):
    def p(s):
        x, v = _xv(s)
        I = cms_integrals(params, s)
        P, D = I["P"], 6.0 * I["E"] - I["P"] ** 2
        xb = float(x.mean())
        return (6.0 / D ** 2 * (xb * P - float(x @ v)) * (P - 3.0 * v)
                + 3.0 / D * (xb - x))
    return p


def _x_c3p(params):
    xc3 = _x_c3(params)

    def p(s):
        C3 = cms_integrals(params, s)["C3"]
        return math.exp(math.sqrt(C3) / 3.0) / (6.0 * math.sqrt(C3)) * xc3(s)
    return p


def symmetry_fields(params):
    """Analytic characteristics (the metric is the identity, so each is the
    velocity gradient of its integral)."""
    return {
        "P": SymmetryField(lambda s: np.ones(3), name="X(P)"),
        "E": SymmetryField(lambda s: np.array(s.qdot, dtype=float), name="X(E)"),
        "K": SymmetryField(lambda s: np.full(3, float(s.t)), name="X(K)"),
        "C3": SymmetryField(_x_c3(params), name="X(C3)"),
        "C3p": SymmetryField(_x_c3p(params), name="X(C3p)"),
        "C4": SymmetryField(_x_c4(params), name="X(C4)"),
        "T": SymmetryField(_x_t(params), name="X(T)"),
    }
