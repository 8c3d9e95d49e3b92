"""System-agnostic Noether machinery in Lagrangian variables (t, q, qdot).

Everything here works for an arbitrary non-degenerate second order system
``qddot = f(t, q, qdot)`` with Lagrangian ``L(t, q, qdot)``.  Derivatives are
central finite differences unless a system registers an analytic callback
(Hessian, mixed second derivative).  Directional derivatives are used where
possible: the prolonged symmetry ``X^E`` and the restricted time derivative
``D_t`` are both vector fields on (t, q, qdot), so acting with them costs two
function evaluations instead of a full gradient.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate as _spi

__all__ = [
    "State",
    "DiffScheme",
    "SystemDef",
    "ScalarField",
    "SymmetryField",
    "ExtendedField",
    "SingularHessian",
    "QuadratureFailure",
    "HessianData",
    "hessian",
    "hessian_data",
    "poisson_bracket",
    "symmetry_from_integral",
    "integral_from_symmetry",
    "prolong",
    "time_derivative",
    "symmetry_action",
    "commutator",
    "gauge_extend",
    "classify_symmetry",
    "energy_function",
    "euler_lagrange_residual",
    "partial_t",
    "grad_q",
    "grad_qdot",
]

EPS = np.finfo(float).eps


class SingularHessian(ArithmeticError):
    """The velocity Hessian of the Lagrangian is (numerically) singular."""


class QuadratureFailure(ArithmeticError):
    """Adaptive quadrature along a path did not converge."""


@dataclass(frozen=True)
class State:
    """A point (t, q, qdot) of extended phase space."""

    t: float
    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float)).copy()
        qd = np.atleast_1d(np.asarray(self.qdot, dtype=float)).copy()
        if q.ndim != 1 or q.shape != qd.shape:
            raise ValueError("q and qdot must be 1-d arrays of equal length")
        t = float(self.t)
        if not (np.isfinite(t) and np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ValueError("State entries must be finite")
        q.flags.writeable = False
        qd.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qd)

    @property
    def n(self):
        return self.q.shape[0]

    @property
    def y(self):
        """First-order state vector ``[q, qdot]``."""
        return np.concatenate([self.q, self.qdot])

    def flat(self):
        """Coordinates ``[t, q, qdot]`` as one array."""
        return np.concatenate([[self.t], self.q, self.qdot])

    @classmethod
    def from_flat(cls, z):
        z = np.asarray(z, dtype=float)
        n = (z.shape[0] - 1) // 2
        return cls(z[0], z[1:1 + n], z[1 + n:])

    @classmethod
    def from_y(cls, t, y):
        y = np.asarray(y, dtype=float)
        n = y.shape[0] // 2
        return cls(t, y[:n], y[n:])

    def replace(self, t=None, q=None, qdot=None):
        return State(self.t if t is None else t,
                     self.q if q is None else q,
                     self.qdot if qdot is None else qdot)

    def as_dict(self):
        return {"t": self.t, "q": self.q.tolist(), "qdot": self.qdot.tolist()}


@dataclass(frozen=True)
class DiffScheme:
    """Finite-difference configuration.

    First derivatives use ``h = max(1, |x|) * first``; second derivatives of
    the Lagrangian use ``h = max(1, |x|) * second``.
    """

    first: float = EPS ** (1.0 / 3.0)
    second: float = EPS ** (1.0 / 4.0)


@dataclass(frozen=True)
class SystemDef:
    """A second order system ``qddot = force(state)`` with a Lagrangian.

    ``hessian_fn`` and ``mixed_fn`` optionally return the analytic matrices
    ``d2L/dqdot_i dqdot_j`` and ``d2L/dq_i dqdot_j``.  ``rhs_kernel`` is an
    optional fast first-order right-hand side ``(t, y, params) -> dy`` used
    by the integrator, with ``kernel_params`` passed through.  ``momentum``
    optionally gives ``dL/dqdot`` in closed form.
    """

    n_dof: int
    force: Callable
    lagrangian: Callable
    name: str = "system"
    diff_scheme: DiffScheme = field(default_factory=DiffScheme)
    hessian_fn: Optional[Callable] = None
    mixed_fn: Optional[Callable] = None
    energy: Optional[Callable] = None
    rhs_kernel: Optional[Callable] = None
    kernel_params: Optional[np.ndarray] = None
    momentum: Optional[Callable] = None
    hessian_tol: float = 1e-12

    def __post_init__(self):
        if int(self.n_dof) != self.n_dof or self.n_dof < 1:
            raise ValueError("n_dof must be a positive integer")

    def check_state(self, s):
        if s.n != self.n_dof:
            raise ValueError(f"{self.name}: state has {s.n} dof, expected {self.n_dof}")


@dataclass(frozen=True)
class ScalarField:
    """A function of State with a little metadata.

    ``kind`` is one of ``constant_of_motion``, ``temporal_integral`` or
    ``local_integral``; ``branch`` describes how a local integral jumps
    (for instance the id of the event set where it is re-anchored).
    """

    eval: Callable
    kind: str = "constant_of_motion"
    branch: Optional[object] = None
    name: str = ""

    KINDS = ("constant_of_motion", "temporal_integral", "local_integral")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown ScalarField kind {self.kind!r}")

    def __call__(self, s):
        return float(self.eval(s))


@dataclass(frozen=True)
class SymmetryField:
    """Characteristic ``P^i(t, q, qdot)`` of an evolutionary vector field."""

    p: Callable
    tau: Optional[Callable] = None
    name: str = ""

    def __call__(self, s):
        return np.atleast_1d(np.asarray(self.p(s), dtype=float))


def _field(f):
    """Accept a ScalarField or a bare callable."""
    return f if callable(f) else ScalarField(f)


def _vec(fn, s):
    return np.atleast_1d(np.asarray(fn(s), dtype=float))


# --------------------------------------------------------------------------
# finite differences
# --------------------------------------------------------------------------


def _rel_step(x, base):
    h = base * max(1.0, abs(x))
    # make the step exactly representable relative to x
    return (x + h) - x


def _partial_flat(fn, s, idx, scheme):
    z = s.flat()
    h = _rel_step(z[idx], scheme.first)
    zp = z.copy()
    zm = z.copy()
    zp[idx] += h
    zm[idx] -= h
    fp = np.asarray(fn(State.from_flat(zp)), dtype=float)
    fm = np.asarray(fn(State.from_flat(zm)), dtype=float)
    return (fp - fm) / (2.0 * h)


def partial_t(fn, s, scheme=DiffScheme()):
    """Explicit time derivative of ``fn`` at ``s``."""
    return _partial_flat(fn, s, 0, scheme)


def grad_q(fn, s, scheme=DiffScheme()):
    """Gradient of a scalar function with respect to q (stacked rows for vectors)."""
    n = s.n
    return np.array([_partial_flat(fn, s, 1 + i, scheme) for i in range(n)])


def grad_qdot(fn, s, scheme=DiffScheme()):
    """Gradient of a scalar function with respect to qdot."""
    n = s.n
    return np.array([_partial_flat(fn, s, 1 + n + i, scheme) for i in range(n)])


def _directional(fn, s, v, scheme):
    """Derivative of ``fn`` along the flat direction ``v = (v_t, v_q, v_qdot)``."""
    z = s.flat()
    v = np.asarray(v, dtype=float)
    nz = np.abs(v) > 0
    if not np.any(nz):
        return np.zeros_like(np.asarray(fn(s), dtype=float))
    h = scheme.first * np.min(np.maximum(1.0, np.abs(z[nz])) / np.abs(v[nz]))
    fp = np.asarray(fn(State.from_flat(z + h * v)), dtype=float)
    fm = np.asarray(fn(State.from_flat(z - h * v)), dtype=float)
    return (fp - fm) / (2.0 * h)


# --------------------------------------------------------------------------
# Hessian and Poisson bracket
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HessianData:
    g: np.ndarray
    ginv: np.ndarray
    c: np.ndarray


def _fd_second(sys, s, i_off, j_off):
    """Nested central difference of L in flat coordinates i, j."""
    scheme = sys.diff_scheme
    z = s.flat()
    hi = _rel_step(z[i_off], scheme.second)
    hj = _rel_step(z[j_off], scheme.second)
    tot = 0.0
    for si, sj, w in ((1, 1, 1.0), (1, -1, -1.0), (-1, 1, -1.0), (-1, -1, 1.0)):
        zz = z.copy()
        zz[i_off] += si * hi
        zz[j_off] += sj * hj
        tot += w * float(sys.lagrangian(State.from_flat(zz)))
    return tot / (4.0 * hi * hj)


def hessian(sys, s):
    """Velocity Hessian ``g_ij = d2L / dqdot_i dqdot_j`` at ``s``.

    Raises SingularHessian when ``|det g|`` falls below ``sys.hessian_tol``
    relative to the scale of ``g``.
    """
    sys.check_state(s)
    n = sys.n_dof
    if sys.hessian_fn is not None:
        g = np.atleast_2d(np.asarray(sys.hessian_fn(s), dtype=float))
    else:
        g = np.empty((n, n))
        for i in range(n):
            for j in range(i, n):
                g[i, j] = g[j, i] = _fd_second(sys, s, 1 + n + i, 1 + n + j)
    scale = max(np.max(np.abs(g)), np.finfo(float).tiny) ** n
    if not np.all(np.isfinite(g)) or abs(np.linalg.det(g)) < sys.hessian_tol * scale:
        raise SingularHessian(f"{sys.name}: degenerate Lagrangian at t={s.t}")
    return g


def _mixed(sys, s):
    """``h_ij = d2L / dq_i dqdot_j``."""
    n = sys.n_dof
    if sys.mixed_fn is not None:
        return np.atleast_2d(np.asarray(sys.mixed_fn(s), dtype=float))
    h = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            h[i, j] = _fd_second(sys, s, 1 + i, 1 + n + j)
    return h


def hessian_data(sys, s):
    """Hessian, its inverse and the antisymmetric velocity block ``c^ij``."""
    g = hessian(sys, s)
    ginv = np.linalg.inv(g)
    h = _mixed(sys, s)
    c = ginv @ (h - h.T) @ ginv.T
    return HessianData(g, ginv, c)


def poisson_bracket(sys, f1, f2, s):
    """Lagrangian-variable Poisson bracket ``{f1, f2}`` at ``s``."""
    hd = hessian_data(sys, s)
    sc = sys.diff_scheme
    dq1, dv1 = grad_q(f1, s, sc), grad_qdot(f1, s, sc)
    dq2, dv2 = grad_q(f2, s, sc), grad_qdot(f2, s, sc)
    return float(dq1 @ hd.ginv @ dv2 - dq2 @ hd.ginv @ dv1 + dv1 @ hd.c @ dv2)


def energy_function(sys):
    """``H = qdot . dL/dqdot - L`` as a ScalarField (analytic one if registered)."""
    if sys.energy is not None:
        return ScalarField(sys.energy, "constant_of_motion", name="H")

    def _h(s):
        p = grad_qdot(sys.lagrangian, s, sys.diff_scheme)
        return float(s.qdot @ p - sys.lagrangian(s))

    return ScalarField(_h, "constant_of_motion", name="H")


def euler_lagrange_residual(sys, s):
    """Residual of ``d/dt(dL/dqdot) - dL/dq`` along ``qddot = force``.

    Vanishes when force and Lagrangian describe the same dynamics.
    """
    sc = sys.diff_scheme

    def p_of(st):
        if sys.momentum is not None:
            return _vec(sys.momentum, st)
        return grad_qdot(sys.lagrangian, st, sc)

    f = _vec(sys.force, s)
    v = np.concatenate([[1.0], s.qdot, f])
    dp = _directional(p_of, s, v, sc)
    return dp - grad_q(sys.lagrangian, s, sc)


# --------------------------------------------------------------------------
# Noether correspondence
# --------------------------------------------------------------------------


def symmetry_from_integral(sys, c):
    """Characteristic ``P = g^{-1} dC/dqdot`` of the symmetry paired with ``c``."""

    def p(s):
        return np.linalg.solve(hessian(sys, s), grad_qdot(c, s, sys.diff_scheme))

    name = getattr(c, "name", "")
    return SymmetryField(p, name=f"X({name})" if name else "")


def _one_form(sys, x, s):
    """Coefficients (a_t, a_q, a_qdot) of the 1-form whose integral is C."""
    sc = sys.diff_scheme

    def gp(st):
        return hessian(sys, st) @ x(st)

    def gfp(st):
        return float(_vec(sys.force, st) @ gp(st))

    gp0 = gp(s)
    w = grad_qdot(gfp, s, sc) + partial_t(gp, s, sc) + grad_q(gp, s, sc).T @ s.qdot
    a_t = -gfp(s) + s.qdot @ w
    return a_t, -w, gp0


def integral_from_symmetry(sys, x, base, s, path=None, tol=1e-10):
    """Reconstruct the integral paired with ``x`` by a line integral.

    The path runs from ``base`` to ``s`` through the optional list of
    intermediate States ``path`` along straight segments; ``C(base) = 0``.
    """
    sys.check_state(base)
    sys.check_state(s)
    nodes = [base] + list(path or []) + [s]
    total = 0.0
    for a, b in zip(nodes[:-1], nodes[1:]):
        za, zb = a.flat(), b.flat()
        dz = zb - za
        if not np.any(dz):
            continue
        n = sys.n_dof

        def integrand(lam):
            st = State.from_flat(za + lam * dz)
            a_t, a_q, a_v = _one_form(sys, x, st)
            return a_t * dz[0] + a_q @ dz[1:1 + n] + a_v @ dz[1 + n:]

        try:
            with np.errstate(all="raise"):
                val, err = _spi.quad(integrand, 0.0, 1.0, epsabs=tol, epsrel=tol,
                                     limit=200, full_output=0)
        except (FloatingPointError, ZeroDivisionError, ValueError, SingularHessian) as exc:
            raise QuadratureFailure(f"integrand singular on segment: {exc}") from exc
        if not np.isfinite(val) or err > 1e3 * max(tol, tol * abs(val)):
            raise QuadratureFailure(f"quadrature did not converge (err={err:.2e})")
        total += val
    return float(total)


# --------------------------------------------------------------------------
# prolongation, actions, commutators
# --------------------------------------------------------------------------


def time_derivative(sys, fn, s):
    """Restricted total derivative ``D_t fn = d_t + qdot d_q + f d_qdot``."""
    v = np.concatenate([[1.0], s.qdot, _vec(sys.force, s)])
    return _directional(fn, s, v, sys.diff_scheme)


def prolong(sys, x, s):
    """``(P, D_t P)`` of the prolonged field ``X^E`` at ``s``."""
    sys.check_state(s)
    return x(s), np.atleast_1d(time_derivative(sys, x, s))


def _prolonged_direction(sys, x, s):
    p, dp = prolong(sys, x, s)
    return np.concatenate([[0.0], p, dp])


def symmetry_action(sys, x, c, s):
    """``X^E(C) = P . dC/dq + (D_t P) . dC/dqdot`` at ``s``."""
    return float(_directional(c, s, _prolonged_direction(sys, x, s), sys.diff_scheme))


def commutator(sys, x1, x2, s):
    """Characteristic of ``[X2^E, X1^E]``, i.e. ``X2^E(P1) - X1^E(P2)``."""
    sc = sys.diff_scheme
    d2 = _directional(x1, s, _prolonged_direction(sys, x2, s), sc)
    d1 = _directional(x2, s, _prolonged_direction(sys, x1, s), sc)
    return np.atleast_1d(d2 - d1)


@dataclass(frozen=True)
class ExtendedField:
    """``Y = tau D_t + X^E`` acting on (t, q, qdot)."""

    sys: SystemDef
    x: SymmetryField
    tau: Callable

    def components(self, s):
        p, dp = prolong(self.sys, self.x, s)
        tau = float(self.tau(s))
        return tau, p + tau * s.qdot, dp + tau * _vec(self.sys.force, s)

    def act(self, c, s):
        tau, yq, yv = self.components(s)
        v = np.concatenate([[tau], yq, yv])
        return float(_directional(c, s, v, self.sys.diff_scheme))


def gauge_extend(sys, x, tau):
    """Extended field with time component ``tau`` (any function of State)."""
    return ExtendedField(sys, x, tau)


def classify_symmetry(sys, x, samples, n_perturb=20, rtol=1e-6, seed=0):
    """Return ``"point"`` or ``"dynamical"``.

    A field is point-like when ``dP^i/dqdot_j = -tau delta_ij`` with the same
    ``tau`` for every velocity at fixed (t, q).  The test perturbs the
    velocities ``n_perturb`` times per sample.
    """
    samples = list(samples)
    if not samples:
        raise ValueError("classify_symmetry needs at least one sample")
    rng = np.random.default_rng(seed)
    sc = sys.diff_scheme
    for s in samples:
        taus = []
        for k in range(n_perturb + 1):
            st = s if k == 0 else s.replace(
                qdot=s.qdot + rng.normal(scale=0.3 * max(1.0, np.max(np.abs(s.qdot))), size=s.n))
            jac = grad_qdot(x, st, sc)  # jac[j, i] = dP^i / dqdot_j
            scale = max(1.0, np.max(np.abs(jac)))
            off = jac - np.diag(np.diag(jac))
            d = np.diag(jac)
            if np.max(np.abs(off)) > rtol * scale or np.ptp(d) > rtol * scale:
                return "dynamical"
            taus.append(-float(np.mean(d)))
        if np.ptp(taus) > rtol * max(1.0, np.max(np.abs(taus))):
            return "dynamical"
    return "point"
