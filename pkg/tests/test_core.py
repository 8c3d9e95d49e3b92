"""Noether machinery on the model systems and on small hand-built ones."""
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noetherlab import core
from noetherlab.core import ScalarField, State, SymmetryField, SystemDef
from noetherlab.systems import cms, oscillator, spheroid


def free_particle(n=2):
    return SystemDef(n, force=lambda s: np.zeros(s.n),
                     lagrangian=lambda s: 0.5 * float(s.qdot @ s.qdot), name="free")


def fd_only(sys):
    """Same system with every analytic callback stripped."""
    return replace(sys, hessian_fn=None, mixed_fn=None, momentum=None, energy=None,
                   rhs_kernel=None, kernel_params=None)


# --------------------------------------------------------------------------
# State / SystemDef
# --------------------------------------------------------------------------

def test_state_roundtrip_and_immutability():
    s = State(1.5, [1.0, 2.0], [3.0, 4.0])
    np.testing.assert_array_equal(State.from_flat(s.flat()).flat(), s.flat())
    np.testing.assert_array_equal(State.from_y(1.5, s.y).flat(), s.flat())
    with pytest.raises(ValueError):
        s.q[0] = 7.0


@pytest.mark.parametrize("args", [(0.0, [1.0], [1.0, 2.0]), (float("nan"), [1.0], [1.0]),
                                  (0.0, [np.inf], [0.0])])
def test_state_rejects_bad_input(args):
    with pytest.raises(ValueError):
        State(*args)


def test_systemdef_validation():
    with pytest.raises(ValueError):
        SystemDef(0, force=None, lagrangian=None)
    with pytest.raises(ValueError):
        free_particle(2).check_state(State(0.0, [1.0], [1.0]))


def test_scalar_field_kind_is_checked():
    with pytest.raises(ValueError):
        ScalarField(lambda s: 0.0, kind="sometimes")


# --------------------------------------------------------------------------
# Hessian
# --------------------------------------------------------------------------

def test_hessian_cms_is_identity(cms_state):
    sys = fd_only(cms.make_system(cms.CMSParams(1.0)))
    np.testing.assert_allclose(core.hessian(sys, cms_state), np.eye(3), atol=1e-7)


def test_hessian_oscillator_is_one():
    P = oscillator.OscillatorParams(beta=1)
    sys = fd_only(oscillator.make_system(P))
    g = core.hessian(sys, State(0.4, [1.2], [0.3]))
    assert g.shape == (1, 1)
    assert g[0, 0] == pytest.approx(1.0, abs=1e-7)


def test_hessian_spheroid_fd_matches_analytic(geo_state):
    P = spheroid.SpheroidParams(R=0.7)
    sys = spheroid.make_system(P)
    fd = fd_only(sys)
    np.testing.assert_allclose(core.hessian(fd, geo_state), core.hessian(sys, geo_state),
                               atol=1e-7)
    np.testing.assert_allclose(core.hessian_data(fd, geo_state).c,
                               core.hessian_data(sys, geo_state).c, atol=1e-6)


def test_singular_hessian():
    sys = SystemDef(1, force=lambda s: np.zeros(1),
                    lagrangian=lambda s: float(s.qdot[0] * s.q[0]), name="linear")
    with pytest.raises(core.SingularHessian):
        core.hessian(sys, State(0.0, [1.0], [1.0]))


# --------------------------------------------------------------------------
# brackets
# --------------------------------------------------------------------------

def test_bracket_of_field_with_itself(cms_state):
    P = cms.CMSParams(1.0)
    sys = cms.make_system(P)
    F = cms.scalar_fields(P)
    for name in ("E", "C3", "T"):
        assert core.poisson_bracket(sys, F[name], F[name], cms_state) == pytest.approx(0, abs=1e-9)


def test_spheroid_sample_brackets(geo_state):
    P = spheroid.SpheroidParams(R=0.7)
    sys = spheroid.make_system(P)
    F = spheroid.scalar_fields(P)
    assert core.poisson_bracket(sys, F["E"], F["L"], geo_state) == pytest.approx(0, abs=1e-8)
    assert core.poisson_bracket(sys, F["L"], F["Theta"], geo_state) == pytest.approx(-1, abs=1e-6)


def test_bracket_is_antisymmetric(cms_state):
    P = cms.CMSParams(1.0)
    sys = cms.make_system(P)
    F = cms.scalar_fields(P)
    ab = core.poisson_bracket(sys, F["E"], F["K"], cms_state)
    ba = core.poisson_bracket(sys, F["K"], F["E"], cms_state)
    assert ab == pytest.approx(-ba, abs=1e-9)


def test_energy_function_fd_matches_analytic(geo_state):
    P = spheroid.SpheroidParams(R=0.7)
    H = core.energy_function(fd_only(spheroid.make_system(P)))
    assert H(geo_state) == pytest.approx(spheroid.geo_invariants(P, geo_state)[1], rel=1e-9)


@pytest.mark.parametrize("name", ["oscillator", "spheroid", "cms"])
def test_euler_lagrange_residual(name, cms_state, geo_state):
    if name == "oscillator":
        P = oscillator.OscillatorParams(beta=-1)
        sys, s = oscillator.make_system(P), State(0.3, [1.1], [0.4])
    elif name == "spheroid":
        sys, s = spheroid.make_system(spheroid.SpheroidParams(R=0.7)), geo_state
    else:
        sys, s = cms.make_system(cms.CMSParams(1.0)), cms_state
    assert np.max(np.abs(core.euler_lagrange_residual(sys, s))) < 1e-9
    # nested finite differences of L only
    assert np.max(np.abs(core.euler_lagrange_residual(fd_only(sys), s))) < 1e-5


def test_euler_lagrange_detects_wrong_force():
    sys = replace(free_particle(1), force=lambda s: np.array([1.0]))
    assert abs(core.euler_lagrange_residual(sys, State(0.0, [0.0], [1.0]))[0]) > 0.5


# --------------------------------------------------------------------------
# Noether correspondence
# --------------------------------------------------------------------------

def test_noether_map_momentum_translation(cms_state):
    P = cms.CMSParams(1.0)
    X = core.symmetry_from_integral(cms.make_system(P), cms.scalar_fields(P)["P"])
    np.testing.assert_allclose(X(cms_state), np.ones(3), atol=1e-9)


def test_noether_map_angular_momentum(geo_state):
    P = spheroid.SpheroidParams(R=0.7)
    X = core.symmetry_from_integral(spheroid.make_system(P), spheroid.scalar_fields(P)["L"])
    np.testing.assert_allclose(X(geo_state), [0.0, 1.0], atol=1e-9)


def test_noether_map_oscillator_C():
    # dC/dqdot = sigma (sigma qdot - sigma' q) with sigma = sin t
    P = oscillator.OscillatorParams(beta=1, omega=1.0, sigma0=(0.0, 1.0), t_range=(-1, 5))
    s = State(1.1, [0.8], [-0.3])
    X = core.symmetry_from_integral(oscillator.make_system(P), oscillator.scalar_fields(P)["C"])
    expected = math.sin(1.1) * (math.sin(1.1) * -0.3 - math.cos(1.1) * 0.8)
    assert X(s)[0] == pytest.approx(expected, abs=1e-8)


def test_integral_from_zero_field():
    sys = free_particle(2)
    zero = SymmetryField(lambda s: np.zeros(2))
    base = State(0.0, [0.0, 0.0], [0.0, 0.0])
    assert core.integral_from_symmetry(sys, zero, base, State(1.0, [1.0, 2.0], [3.0, 4.0])) == 0.0


def test_integral_from_translation_gives_momentum():
    P = cms.CMSParams(1.0)
    sys = cms.make_system(P)
    X = SymmetryField(lambda s: np.ones(3))
    base = State(0.0, [1.0, 2.0, 4.0], [0.0, 0.0, 0.0])
    v = np.array([0.3, -1.1, 2.0])
    val = core.integral_from_symmetry(sys, X, base, State(0.0, [1.0, 2.0, 4.0], v))
    assert val == pytest.approx(v.sum(), abs=1e-9)


def test_integral_from_rotation_is_path_independent():
    P = spheroid.SpheroidParams(R=0.7)
    sys = spheroid.make_system(P)
    X = SymmetryField(lambda s: np.array([0.0, 1.0]))
    rng = np.random.default_rng(3)
    base = State(0.0, [1.2, 0.0], [0.1, 0.5])
    L0 = spheroid.geo_invariants(P, base)[0]
    for _ in range(10):
        s = State(rng.uniform(0, 1), [rng.uniform(0.6, 2.4), rng.uniform(0, 3)],
                  [rng.uniform(-1, 1), rng.uniform(0.2, 1.2)])
        mid = State(0.5, [1.5, 2.0], [0.0, -0.4])
        L = spheroid.geo_invariants(P, s)[0]
        straight = core.integral_from_symmetry(sys, X, base, s)
        bent = core.integral_from_symmetry(sys, X, base, s, path=[mid])
        assert straight == pytest.approx(L - L0, abs=1e-6)
        assert bent == pytest.approx(straight, abs=1e-6)


# --------------------------------------------------------------------------
# prolongation, actions, commutators
# --------------------------------------------------------------------------

def test_prolong_constant_field(cms_state):
    sys = cms.make_system(cms.CMSParams(1.0))
    p, dp = core.prolong(sys, SymmetryField(lambda s: np.array([1.0, -2.0, 0.5])), cms_state)
    np.testing.assert_allclose(p, [1.0, -2.0, 0.5])
    np.testing.assert_allclose(dp, 0.0, atol=1e-12)


def test_prolong_galilean_boost(cms_state):
    sys = cms.make_system(cms.CMSParams(1.0))
    p, dp = core.prolong(sys, SymmetryField(lambda s: np.full(3, s.t)), cms_state)
    np.testing.assert_allclose(p, [0.3] * 3)
    np.testing.assert_allclose(dp, [1.0] * 3, atol=1e-9)


def test_prolong_oscillator_point_field():
    P = oscillator.OscillatorParams(beta=1, omega=1.0, sigma0=(0.0, 1.0), t_range=(-1, 5))
    sys = oscillator.make_system(P)
    t, q, v = 0.9, 1.3, -0.2
    X = SymmetryField(lambda s: np.array([0.5 * math.cos(s.t) * s.q[0] - math.sin(s.t) * s.qdot[0]]))
    _, dp = core.prolong(sys, X, State(t, [q], [v]))
    a = -q - q ** -3
    expected = -0.5 * math.sin(t) * q + 0.5 * math.cos(t) * v - math.cos(t) * v - math.sin(t) * a
    assert dp[0] == pytest.approx(expected, abs=1e-8)


def test_symmetry_actions_on_local_integrals(geo_state, cms_state):
    P = spheroid.SpheroidParams(R=0.7)
    sys, F, X = spheroid.make_system(P), spheroid.scalar_fields(P), spheroid.symmetry_fields(P)
    assert core.symmetry_action(sys, X["L"], F["Theta"], geo_state) == pytest.approx(1, abs=1e-7)
    assert core.symmetry_action(sys, X["E"], F["T"], geo_state) == pytest.approx(-1, abs=1e-6)
    Q = cms.CMSParams(1.0)
    sys, F, X = cms.make_system(Q), cms.scalar_fields(Q), cms.symmetry_fields(Q)
    C3 = F["C3"](cms_state)
    assert core.symmetry_action(sys, X["C3"], F["Psi"], cms_state) == pytest.approx(
        18 * math.sqrt(C3), rel=1e-6)


def test_commutator_with_itself_vanishes(cms_state):
    Q = cms.CMSParams(1.0)
    sys, X = cms.make_system(Q), cms.symmetry_fields(Q)
    np.testing.assert_allclose(core.commutator(sys, X["T"], X["T"], cms_state), 0.0, atol=1e-12)


def test_commutator_orientation(cms_state):
    # commutator(x1, x2) is the characteristic of [X2, X1]; [X_E, X_K] = -X_P
    Q = cms.CMSParams(1.0)
    sys, X = cms.make_system(Q), cms.symmetry_fields(Q)
    np.testing.assert_allclose(core.commutator(sys, X["K"], X["E"], cms_state), -np.ones(3),
                               atol=1e-6)
    np.testing.assert_allclose(core.commutator(sys, X["E"], X["K"], cms_state), np.ones(3),
                               atol=1e-6)


def test_oscillator_commutator_vanishes():
    P = oscillator.OscillatorParams(beta=-1, omega=1.0, sigma0=(0.0, 1.0), t_range=(-1, 5))
    sys, X = oscillator.make_system(P), oscillator.symmetry_fields(P)
    for s in (State(0.7, [1.3], [0.2]), State(1.4, [-0.9], [0.5])):
        np.testing.assert_allclose(core.commutator(sys, X["Upsilon"], X["C"], s), 0.0, atol=1e-6)


def test_gauge_extend_zero_tau(geo_state):
    P = spheroid.SpheroidParams(R=0.7)
    sys, X = spheroid.make_system(P), spheroid.symmetry_fields(P)
    Y = core.gauge_extend(sys, X["Theta"], lambda s: 0.0)
    tau, yq, yv = Y.components(geo_state)
    p, dp = core.prolong(sys, X["Theta"], geo_state)
    assert tau == 0.0
    np.testing.assert_allclose(yq, p)
    np.testing.assert_allclose(yv, dp)


def test_gauge_extend_theta_field_fixes_theta(geo_state):
    # tau = 2 L^-2 calA_C removes the theta component of Y(Theta)
    P = spheroid.SpheroidParams(R=0.7)
    sys, X = spheroid.make_system(P), spheroid.symmetry_fields(P)

    def tau(s):
        L, _, C = spheroid.geo_invariants(P, s)
        return 2.0 / L ** 2 * spheroid.calA_C(P, float(s.q[0]), C)

    _, yq, _ = core.gauge_extend(sys, X["Theta"], tau).components(geo_state)
    assert yq[0] == pytest.approx(0.0, abs=1e-9)


def test_gauge_extension_acts_like_the_field_on_integrals(geo_state):
    # D_t kills conserved quantities, so tau does not change the action on them
    P = spheroid.SpheroidParams(R=0.7)
    sys, X, F = spheroid.make_system(P), spheroid.symmetry_fields(P), spheroid.scalar_fields(P)
    Y = core.gauge_extend(sys, X["T"], lambda s: 3.0 * s.qdot[0])
    for name in ("L", "E", "Theta"):
        assert Y.act(F[name], geo_state) == pytest.approx(
            core.symmetry_action(sys, X["T"], F[name], geo_state), abs=1e-6)


def test_classify_symmetry(cms_state, geo_state):
    Q = cms.CMSParams(1.0)
    sys = cms.make_system(Q)
    samples = [cms_state, State(1.0, [-2.0, 0.1, 1.0], [0.2, 0.4, -0.5])]
    assert core.classify_symmetry(sys, SymmetryField(lambda s: np.ones(3)), samples) == "point"
    dil = SymmetryField(lambda s: 2.0 * s.t * s.qdot - s.q)
    assert core.classify_symmetry(sys, dil, samples) == "point"
    assert core.classify_symmetry(sys, cms.symmetry_fields(Q)["C3"], samples) == "dynamical"
    P = spheroid.SpheroidParams(R=0.7)
    assert core.classify_symmetry(spheroid.make_system(P), spheroid.symmetry_fields(P)["Theta"],
                                  [geo_state]) == "dynamical"
    with pytest.raises(ValueError):
        core.classify_symmetry(sys, dil, [])


@given(v=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
       w=st.lists(st.floats(-3, 3), min_size=2, max_size=2))
@settings(max_examples=40, deadline=None)
def test_free_particle_bracket_is_canonical(v, w):
    # {q_i, qdot_j} = delta_ij for L = |qdot|^2 / 2
    sys = free_particle(2)
    s = State(0.0, v, w)
    for i in range(2):
        for j in range(2):
            b = core.poisson_bracket(sys, lambda st, i=i: st.q[i], lambda st, j=j: st.qdot[j], s)
            assert b == pytest.approx(float(i == j), abs=1e-7)
