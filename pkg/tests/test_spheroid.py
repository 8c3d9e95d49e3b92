"""Geodesics on a spheroid: invariants, calA/calB, Theta and T, groups."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noetherlab import core, ellint
from noetherlab.core import State
from noetherlab.odeint import integrate
from noetherlab.systems import spheroid as geo

# mpmath quadrature of the defining integrands (25 digits)
A_3_7_13 = 2.714804055736319143884
B_3_7_13 = 1.035879410890794429843
A_07_25_20 = 1.565439550190001873798
B_07_25_20 = 1.052542922625837299116
DPHI_07_25 = 5.155027259620188036028
DT_07_25_L1 = 3.175080981964738635681


def test_params_validation():
    with pytest.raises(ValueError):
        geo.SpheroidParams(R=0.0)
    with pytest.raises(ValueError):
        geo.SpheroidParams(R=1.0, method="series")


def test_equator_is_a_geodesic():
    P = geo.SpheroidParams(R=0.7)
    np.testing.assert_allclose(geo.geo_rhs(P, State(0, [math.pi / 2, 1.0], [0.0, 1.3])), 0.0,
                               atol=1e-15)
    with pytest.raises(geo.PoleSingularity):
        geo.geo_rhs(P, State(0, [0.0, 1.0], [0.1, 1.0]))


def test_invariants_on_equator():
    for R in (0.5, 1.0, 2.0):
        L, E, C = geo.geo_invariants(geo.SpheroidParams(R=R), State(0, [math.pi / 2, 0], [0, 1]))
        assert (L, E, C) == pytest.approx((1.0, 0.5, 1.0))
    with pytest.raises(geo.ZeroAngularMomentum):
        geo.geo_invariants(geo.SpheroidParams(R=0.7), State(0, [1.0, 0], [0.3, 0.0]))


def test_turning_band():
    P = geo.SpheroidParams(R=0.7)
    assert geo.geo_turning(P, 1.0) == pytest.approx((math.pi / 2, math.pi / 2))
    assert geo.geo_turning(P, 4.0) == pytest.approx((math.pi / 6, 5 * math.pi / 6))
    with pytest.raises(geo.DomainError):
        geo.geo_turning(P, 0.5)


@pytest.mark.parametrize("method", ["quad", "closed"])
def test_integrals_vanish_at_the_minimum(method):
    P = geo.SpheroidParams(R=0.7)
    lo, _ = geo.geo_turning(P, 3.0)
    assert geo.calA(P, lo, 3.0, method) == pytest.approx(0.0, abs=1e-14)
    assert geo.calB(P, lo, 3.0, method) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("R,C,th,A,B", [(3.0, 7.0, 1.3, A_3_7_13, B_3_7_13),
                                        (0.7, 2.5, 2.0, A_07_25_20, B_07_25_20)])
@pytest.mark.parametrize("method", ["quad", "closed"])
def test_integrals_against_mpmath(R, C, th, A, B, method):
    P = geo.SpheroidParams(R=R)
    assert geo.calA(P, th, C, method) == pytest.approx(A, rel=1e-11)
    assert geo.calB(P, th, C, method) == pytest.approx(B, rel=1e-11)


def _literal_calA(R, th, C):
    # argument cbar*cos(theta) in the third-kind term, as printed
    cb = math.sqrt(1 - 1 / C)
    m = cb * cb * (1 - R ** -2)
    x, xl = math.cos(th) / cb, cb * math.cos(th)
    return 1 / (R * math.sqrt(C)) * ((R * R - 1) * (ellint.ellip_k_m(m) - ellint.ellip_f_m(x, m))
                                     + ellint.ellip_picomp_m(cb * cb, m)
                                     - ellint.ellip_pi_m(xl, cb * cb, m))


@pytest.mark.xfail(strict=True, reason="the printed third-kind argument disagrees with "
                                       "quadrature; cos(theta)/cbar is used")
def test_literal_closed_form_matches_quadrature():
    assert _literal_calA(3.0, 1.3, 7.0) == pytest.approx(A_3_7_13, rel=1e-8)


@given(R=st.floats(0.3, 3.0), C=st.floats(1.2, 20.0), u=st.floats(0.02, 0.98))
@settings(max_examples=40, deadline=None)
def test_closed_forms_match_quadrature(R, C, u):
    P = geo.SpheroidParams(R=R)
    lo, hi = geo.geo_turning(P, C)
    th = lo + u * (hi - lo)
    assert geo.calA(P, th, C, "closed") == pytest.approx(geo.calA(P, th, C, "quad"), rel=1e-9,
                                                         abs=1e-10)
    assert geo.calB(P, th, C, "closed") == pytest.approx(geo.calB(P, th, C, "quad"), rel=1e-9,
                                                         abs=1e-10)


@given(R=st.floats(0.3, 3.0), C=st.floats(1.5, 20.0), u=st.floats(0.15, 0.85))
@settings(max_examples=30, deadline=None)
def test_A_B_derivative_relation(R, C, u):
    # calA_C = C calB_C + calB / 2
    P = geo.SpheroidParams(R=R)
    lo, hi = geo.geo_turning(P, C)
    th = lo + u * (hi - lo)
    lhs = geo.calA_C(P, th, C)
    rhs = C * geo.calB_C(P, th, C) + 0.5 * geo.calB(P, th, C)
    assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-9)


def test_periods():
    P = geo.SpheroidParams(R=0.7)
    per = geo.geo_periods(P, 2.5, L=1.0)
    assert per.dphi_closed == pytest.approx(DPHI_07_25, rel=1e-11)
    assert per.dphi_quad == pytest.approx(DPHI_07_25, rel=1e-11)
    assert per.dT_quad == pytest.approx(DT_07_25_L1, rel=1e-11)
    assert geo.geo_periods(P, 2.5, L=-2.0).dT_quad == pytest.approx(DT_07_25_L1 / 2, rel=1e-11)
    # affine period 4 R E(m) / (|L| sqrt C)
    m = (1 - 1 / 2.5) * (1 - 0.7 ** -2)
    assert per.dT_quad == pytest.approx(4 * 0.7 * ellint.ellip_ecomp_m(m) / math.sqrt(2.5),
                                        rel=1e-11)


def test_sphere_periods():
    P = geo.SpheroidParams(R=1.0)
    for C in (1.5, 4.0, 30.0):
        per = geo.geo_periods(P, C, L=1.0)
        assert per.dphi_quad == pytest.approx(2 * math.pi, abs=1e-9)
        assert per.dT_quad == pytest.approx(2 * math.pi / math.sqrt(C), rel=1e-10)


def test_displayed_period_misses_L():
    # the displayed expression has no L dependence; the affine period scales as 1/|L|
    P = geo.SpheroidParams(R=0.7)
    a, b = geo.geo_periods(P, 2.5, L=1.0), geo.geo_periods(P, 2.5, L=3.0)
    assert a.dT_closed == b.dT_closed
    assert b.dT_quad == pytest.approx(a.dT_quad / 3)


def test_theta_and_T_are_piecewise_constant(geo_ctx):
    P, tr = geo_ctx.params, geo_ctx.traj
    ev = [e.t for e in tr.events]
    bounds = [tr.ts[0]] + ev + [tr.ts[-1]]
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b - a < 0.2:
            continue
        ts = np.linspace(a + 0.05, b - 0.05, 12)
        th = [geo.geo_Theta(P, tr.state_at(t)) for t in ts]
        tt = [geo.geo_T(P, tr.state_at(t)) for t in ts]
        assert np.ptp(th) < 1e-7 and np.ptp(tt) < 1e-7


def test_theta_jumps_by_precession_at_maxima(geo_ctx):
    P, tr = geo_ctx.params, geo_ctx.traj
    L, E, C = geo.geo_invariants(P, geo_ctx.init)
    per = geo.geo_periods(P, C, L)
    maxima = [e.t for e in tr.events_with_id("theta_max")]
    assert maxima
    for t in maxima:
        before, after = tr.state_at(t - 0.1), tr.state_at(t + 0.1)
        jump = geo.geo_Theta(P, after) - geo.geo_Theta(P, before)
        assert abs(jump) == pytest.approx(per.dphi_quad, abs=1e-6)
        tjump = geo.geo_T(P, after) - geo.geo_T(P, before)
        assert abs(tjump) == pytest.approx(per.dT_quad, abs=1e-6)


def test_unwrapped_theta_is_continuous(geo_ctx):
    P, tr = geo_ctx.params, geo_ctx.traj
    turns = [e.t for e in tr.events]
    n0 = geo.geo_branch(P, geo_ctx.init).n_halfcycles
    vals = []
    for t in np.linspace(tr.ts[0] + 0.01, tr.ts[-1] - 0.01, 80):
        if min(abs(t - x) for x in turns) < 1e-3:
            continue
        n = n0 + sum(x < t for x in turns)
        vals.append(geo.geo_Theta_unwrapped(P, tr.state_at(t), n))
    assert np.ptp(vals) < 1e-7


def test_brackets_at_a_state(geo_state):
    P = geo.SpheroidParams(R=0.7)
    sys_, F = geo.make_system(P), geo.scalar_fields(P)
    assert core.poisson_bracket(sys_, F["E"], F["T"], geo_state) == pytest.approx(1, abs=1e-6)
    assert core.poisson_bracket(sys_, F["Theta"], F["T"], geo_state) == pytest.approx(0, abs=1e-6)


def test_characteristics_match_noether_map(geo_state):
    P = geo.SpheroidParams(R=0.7)
    sys_, F, X = geo.make_system(P), geo.scalar_fields(P), geo.symmetry_fields(P)
    for name in ("L", "E", "Theta", "T"):
        np.testing.assert_allclose(core.symmetry_from_integral(sys_, F[name])(geo_state),
                                   X[name](geo_state), atol=1e-6)


@pytest.mark.parametrize("group", [geo.geo_dyn_Theta, geo.geo_dyn_T])
def test_groups_identity(group, geo_state):
    P = geo.SpheroidParams(R=0.7)
    assert group(P, geo_state, 0.0) is geo_state


def test_group_invariants(geo_state):
    P = geo.SpheroidParams(R=0.7)
    L, E, _ = geo.geo_invariants(P, geo_state)
    L1, E1, _ = geo.geo_invariants(P, geo.geo_dyn_Theta(P, geo_state, 0.05))
    assert (L1, E1) == pytest.approx((L - 0.05, E), rel=1e-12)
    L1, E1, _ = geo.geo_invariants(P, geo.geo_dyn_T(P, geo_state, 0.05))
    assert (L1, E1) == pytest.approx((L, E + 0.05), rel=1e-12)
    with pytest.raises(geo.DomainError):
        geo.geo_dyn_Theta(P, geo_state, 2 * L)


def test_group_maps_solutions_to_solutions(geo_state):
    P = geo.SpheroidParams(R=0.7)
    sys_ = geo.make_system(P)
    tr = integrate(sys_, geo_state, 1.0, rtol=1e-12, atol=1e-13)
    a, b = geo_state, tr.state_at(0.4)
    br = geo.geo_branch(P, a)
    ia, ib = geo.geo_dyn_T(P, a, 0.03, br), geo.geo_dyn_T(P, b, 0.03, br)
    img = integrate(sys_, ia, ib.t, rtol=1e-12, atol=1e-13)
    np.testing.assert_allclose(img.y_at(ib.t), ib.y, atol=1e-8)
