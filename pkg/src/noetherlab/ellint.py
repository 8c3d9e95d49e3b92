"""Carlson symmetric elliptic integrals and the Legendre forms built on them.

Legendre integrals use the *sine-of-amplitude* convention (the one used by
Maple), i.e. the first argument is ``z = sin(amplitude)``::

    F(z, k)    = int_0^z dt / (sqrt(1 - t^2) sqrt(1 - k^2 t^2))
    E(z, k)    = int_0^z sqrt(1 - k^2 t^2) / sqrt(1 - t^2) dt
    Pi(z, n, k) = int_0^z dt / ((1 - n t^2) sqrt(1 - t^2) sqrt(1 - k^2 t^2))

Every Legendre function has a ``*_m`` twin taking the parameter ``m = k^2``
directly.  ``m < 0`` is the imaginary-modulus case (``k = i|k|``); it needs
no special treatment because all Carlson arguments stay positive.  ``m > 1``
is accepted wherever ``1 - m z^2 >= 0``.
"""
import math

import numpy as np

from ._jit import njit

__all__ = [
    "DomainError",
    "carlson_rf",
    "carlson_rd",
    "carlson_rj",
    "carlson_rc",
    "ellip_f",
    "ellip_e",
    "ellip_pi",
    "ellip_f_m",
    "ellip_e_m",
    "ellip_pi_m",
    "ellip_k",
    "ellip_ecomp",
    "ellip_picomp",
    "ellip_k_m",
    "ellip_ecomp_m",
    "ellip_picomp_m",
]

_EPS = 2.220446049250313e-16


class DomainError(ValueError):
    """Arguments outside the real-valued domain of an elliptic integral."""


# --------------------------------------------------------------------------
# kernels (numba-compatible)
# --------------------------------------------------------------------------


@njit
def _rc_kernel(x, y):
    a0 = (x + 2.0 * y) / 3.0
    y0 = y
    q = (3.0 * _EPS) ** (-1.0 / 8.0) * abs(a0 - x)
    a = a0
    p4 = 1.0
    while p4 * q > abs(a):
        lam = 2.0 * math.sqrt(x) * math.sqrt(y) + y
        a = 0.25 * (a + lam)
        x = 0.25 * (x + lam)
        y = 0.25 * (y + lam)
        p4 *= 0.25
    s = (y0 - a0) * p4 / a
    s2 = s * s
    poly = 1.0 + s2 * (3.0 / 10.0 + s * (1.0 / 7.0 + s * (3.0 / 8.0 + s * (
        9.0 / 22.0 + s * (159.0 / 208.0 + s * (9.0 / 8.0))))))
    return poly / math.sqrt(a)


@njit
def _rf_kernel(x, y, z):
    a0 = (x + y + z) / 3.0
    x0 = x
    y0 = y
    q = (3.0 * _EPS) ** (-1.0 / 6.0) * max(abs(a0 - x), abs(a0 - y), abs(a0 - z))
    a = a0
    p4 = 1.0
    while p4 * q > abs(a):
        sx = math.sqrt(x)
        sy = math.sqrt(y)
        sz = math.sqrt(z)
        lam = sx * sy + sx * sz + sy * sz
        a = 0.25 * (a + lam)
        x = 0.25 * (x + lam)
        y = 0.25 * (y + lam)
        z = 0.25 * (z + lam)
        p4 *= 0.25
    xx = (a0 - x0) * p4 / a
    yy = (a0 - y0) * p4 / a
    zz = -xx - yy
    e2 = xx * yy - zz * zz
    e3 = xx * yy * zz
    poly = 1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0
    return poly / math.sqrt(a)


@njit
def _rd_kernel(x, y, z):
    a0 = (x + y + 3.0 * z) / 5.0
    x0 = x
    y0 = y
    q = (0.25 * _EPS) ** (-1.0 / 6.0) * max(abs(a0 - x), abs(a0 - y), abs(a0 - z))
    a = a0
    p4 = 1.0
    acc = 0.0
    while p4 * q > abs(a):
        sx = math.sqrt(x)
        sy = math.sqrt(y)
        sz = math.sqrt(z)
        lam = sx * sy + sx * sz + sy * sz
        acc += p4 / (sz * (z + lam))
        a = 0.25 * (a + lam)
        x = 0.25 * (x + lam)
        y = 0.25 * (y + lam)
        z = 0.25 * (z + lam)
        p4 *= 0.25
    xx = (a0 - x0) * p4 / a
    yy = (a0 - y0) * p4 / a
    zz = -(xx + yy) / 3.0
    xy = xx * yy
    z2 = zz * zz
    e2 = xy - 6.0 * z2
    e3 = (3.0 * xy - 8.0 * z2) * zz
    e4 = 3.0 * (xy - z2) * z2
    e5 = xy * z2 * zz
    poly = (1.0 - 3.0 * e2 / 14.0 + e3 / 6.0 + 9.0 * e2 * e2 / 88.0
            - 3.0 * e4 / 22.0 - 9.0 * e2 * e3 / 52.0 + 3.0 * e5 / 26.0)
    return p4 * poly / (a * math.sqrt(a)) + 3.0 * acc


@njit
def _rj_kernel(x, y, z, p):
    a0 = (x + y + z + 2.0 * p) / 5.0
    x0 = x
    y0 = y
    z0 = z
    delta = (p - x) * (p - y) * (p - z)
    q = (0.25 * _EPS) ** (-1.0 / 6.0) * max(
        max(abs(a0 - x), abs(a0 - y)), max(abs(a0 - z), abs(a0 - p)))
    a = a0
    p4 = 1.0
    p64 = 1.0
    acc = 0.0
    while p4 * q > abs(a):
        sx = math.sqrt(x)
        sy = math.sqrt(y)
        sz = math.sqrt(z)
        sp = math.sqrt(p)
        lam = sx * sy + sx * sz + sy * sz
        d = (sp + sx) * (sp + sy) * (sp + sz)
        e = p64 * delta / (d * d)
        acc += p4 / d * _rc_kernel(1.0, 1.0 + e)
        a = 0.25 * (a + lam)
        x = 0.25 * (x + lam)
        y = 0.25 * (y + lam)
        z = 0.25 * (z + lam)
        p = 0.25 * (p + lam)
        p4 *= 0.25
        p64 *= 1.0 / 64.0
    xx = (a0 - x0) * p4 / a
    yy = (a0 - y0) * p4 / a
    zz = (a0 - z0) * p4 / a
    pp = -(xx + yy + zz) / 2.0
    p2 = pp * pp
    e2 = xx * yy + xx * zz + yy * zz - 3.0 * p2
    e3 = xx * yy * zz + 2.0 * e2 * pp + 4.0 * p2 * pp
    e4 = (2.0 * xx * yy * zz + e2 * pp + 3.0 * p2 * pp) * pp
    e5 = xx * yy * zz * p2
    poly = (1.0 - 3.0 * e2 / 14.0 + e3 / 6.0 + 9.0 * e2 * e2 / 88.0
            - 3.0 * e4 / 22.0 - 9.0 * e2 * e3 / 52.0 + 3.0 * e5 / 26.0)
    return p4 * poly / (a * math.sqrt(a)) + 6.0 * acc


@njit
def _legendre_kernel(z, m, n, kind):
    # kind 0: F, 1: E, 2: Pi.  Assumes the domain has been validated.
    if z == 0.0:
        return 0.0
    z2 = z * z
    x = 1.0 - z2
    y = 1.0 - m * z2
    if kind == 1 and x == 0.0 and y == 0.0:
        return 1.0 if z > 0 else -1.0
    rf = _rf_kernel(x, y, 1.0)
    if kind == 0:
        return z * rf
    if kind == 1:
        if m == 0.0:
            return z * rf
        return z * rf - m * z * z2 * _rd_kernel(x, y, 1.0) / 3.0
    if n == 0.0:
        return z * rf
    return z * rf + n * z * z2 * _rj_kernel(x, y, 1.0, 1.0 - n * z2) / 3.0


@njit
def _legendre_vec(z, m, n, kind):
    out = np.empty(z.shape[0])
    for i in range(z.shape[0]):
        out[i] = _legendre_kernel(z[i], m[i], n[i], kind)
    return out


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def _is_scalar(*args):
    return all(np.ndim(a) == 0 for a in args)


def _check_nonneg(name, *vals):
    for v in vals:
        if not np.all(np.isfinite(v)) or np.any(np.asarray(v) < 0):
            raise DomainError(f"{name}: arguments must be finite and nonnegative")


def _vectorize(kernel, *args):
    if _is_scalar(*args):
        return kernel(*(float(a) for a in args))
    arrs = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in args))
    flat = [a.ravel() for a in arrs]
    out = np.array([kernel(*vals) for vals in zip(*flat)])
    return out.reshape(arrs[0].shape)


def carlson_rf(x, y, z):
    """R_F(x, y, z) = 1/2 int_0^inf dt / sqrt((t+x)(t+y)(t+z)).

    At most one argument may be zero.
    """
    _check_nonneg("carlson_rf", x, y, z)
    zeros = (np.asarray(x) == 0).astype(int) + (np.asarray(y) == 0) + (np.asarray(z) == 0)
    if np.any(zeros > 1):
        raise DomainError("carlson_rf: at most one argument may be zero")
    return _vectorize(_rf_kernel, x, y, z)


def carlson_rd(x, y, z):
    """R_D(x, y, z) = 3/2 int_0^inf dt / ((t+z) sqrt((t+x)(t+y)(t+z))), z > 0."""
    _check_nonneg("carlson_rd", x, y, z)
    if np.any(np.asarray(z) <= 0):
        raise DomainError("carlson_rd: z must be positive")
    if np.any((np.asarray(x) == 0) & (np.asarray(y) == 0)):
        raise DomainError("carlson_rd: x and y cannot both be zero")
    return _vectorize(_rd_kernel, x, y, z)


def carlson_rj(x, y, z, p):
    """R_J(x, y, z, p) = 3/2 int_0^inf dt / ((t+p) sqrt((t+x)(t+y)(t+z))), p > 0."""
    _check_nonneg("carlson_rj", x, y, z)
    if np.any(~np.isfinite(p)) or np.any(np.asarray(p) <= 0):
        raise DomainError("carlson_rj: p must be positive")
    zeros = (np.asarray(x) == 0).astype(int) + (np.asarray(y) == 0) + (np.asarray(z) == 0)
    if np.any(zeros > 1):
        raise DomainError("carlson_rj: at most one of x, y, z may be zero")
    return _vectorize(_rj_kernel, x, y, z, p)


def carlson_rc(x, y):
    """R_C(x, y) = R_F(x, y, y), with y > 0."""
    _check_nonneg("carlson_rc", x)
    if np.any(~np.isfinite(y)) or np.any(np.asarray(y) <= 0):
        raise DomainError("carlson_rc: y must be positive")
    return _vectorize(_rc_kernel, x, y)


def _legendre(z, m, n, kind, name):
    z_a, m_a, n_a = (np.asarray(v, dtype=float) for v in (z, m, n))
    if not (np.all(np.isfinite(z_a)) and np.all(np.isfinite(m_a)) and np.all(np.isfinite(n_a))):
        raise DomainError(f"{name}: non-finite argument")
    if np.any(np.abs(z_a) > 1.0):
        raise DomainError(f"{name}: |z| must not exceed 1")
    z2 = z_a * z_a
    y = 1.0 - m_a * z2
    if np.any(y < 0):
        raise DomainError(f"{name}: 1 - k^2 z^2 < 0 gives a complex value")
    if kind != 1 and np.any((y == 0) & (z2 == 1.0)):
        raise DomainError(f"{name}: logarithmic singularity at z = 1, k^2 = 1")
    if kind == 2 and np.any(1.0 - n_a * z2 <= 0):
        raise DomainError(f"{name}: 1 - n z^2 must be positive")
    if _is_scalar(z, m, n):
        return _legendre_kernel(float(z), float(m), float(n), kind)
    arrs = np.broadcast_arrays(z_a, m_a, n_a)
    flat = [np.ascontiguousarray(a.ravel()) for a in arrs]
    return _legendre_vec(flat[0], flat[1], flat[2], kind).reshape(arrs[0].shape)


def ellip_f_m(z, m):
    """Incomplete first kind F(z | m) with parameter m = k^2."""
    return _legendre(z, m, 0.0, 0, "ellip_f")


def ellip_e_m(z, m):
    """Incomplete second kind E(z | m) with parameter m = k^2."""
    return _legendre(z, m, 0.0, 1, "ellip_e")


def ellip_pi_m(z, n, m):
    """Incomplete third kind Pi(z, n | m) with parameter m = k^2."""
    return _legendre(z, m, n, 2, "ellip_pi")


def ellip_f(z, k):
    """Incomplete first kind, sine-of-amplitude convention ``F(z, k)``."""
    return ellip_f_m(z, np.square(k))


def ellip_e(z, k):
    """Incomplete second kind ``E(z, k)``."""
    return ellip_e_m(z, np.square(k))


def ellip_pi(z, n, k):
    """Incomplete third kind ``Pi(z, n, k)``; ``Pi(z, 0, k)`` is ``F(z, k)``."""
    return ellip_pi_m(z, n, np.square(k))


def ellip_k_m(m):
    """Complete first kind K(m), m < 1."""
    if np.any(np.asarray(m) >= 1):
        raise DomainError("ellip_k: parameter must be below 1")
    return _legendre(1.0, m, 0.0, 0, "ellip_k")


def ellip_ecomp_m(m):
    """Complete second kind E(m), m <= 1."""
    if np.any(np.asarray(m) > 1):
        raise DomainError("ellip_ecomp: parameter must not exceed 1")
    return _legendre(1.0, m, 0.0, 1, "ellip_ecomp")


def ellip_picomp_m(n, m):
    """Complete third kind Pi(n | m), m < 1, n < 1."""
    if np.any(np.asarray(m) >= 1):
        raise DomainError("ellip_picomp: parameter must be below 1")
    return _legendre(1.0, m, n, 2, "ellip_picomp")


def ellip_k(k):
    """Complete first kind ``K(k) = F(1, k)``."""
    return ellip_k_m(np.square(k))


def ellip_ecomp(k):
    """Complete second kind ``E(k) = E(1, k)``."""
    return ellip_ecomp_m(np.square(k))


def ellip_picomp(n, k):
    """Complete third kind ``Pi(n, k) = Pi(1, n, k)``."""
    return ellip_picomp_m(n, np.square(k))
