"""Integrator, dense output, events, root finding and CSV export."""
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from noetherlab import _jit
from noetherlab.core import State, SystemDef
from noetherlab.odeint import (EventSpec, NonFiniteState, NoSignChange, OutOfRange,
                               StepSizeUnderflow, dense_eval, export_csv, find_root, integrate,
                               integrate_first_order)
from noetherlab.systems import oscillator, spheroid


def free(n=2):
    return SystemDef(n, force=lambda s: np.zeros(s.n),
                     lagrangian=lambda s: 0.5 * float(s.qdot @ s.qdot), name="free")


def test_free_motion_is_exact():
    tr = integrate(free(), State(0.0, [1.0, -2.0], [0.5, 3.0]), 7.0)
    np.testing.assert_allclose(tr.y_at(7.0)[:2], [4.5, 19.0], rtol=1e-13)
    # the interpolant is exact on linear motion, also between nodes
    tm = 0.5 * (tr.ts[0] + tr.ts[1])
    np.testing.assert_allclose(tr.y_at(tm)[:2], [1.0 + 0.5 * tm, -2.0 + 3.0 * tm], rtol=1e-13)


def test_sigma_equation_gives_sine():
    tr = integrate_first_order(oscillator._sigma_only_kernel, 0.0, np.array([0.0, 1.0]), 20.0,
                               params=np.array([1.0]), rtol=1e-13, atol=1e-14)
    for t in np.linspace(0, 20, 41):
        assert tr.y_at(t)[0] == pytest.approx(math.sin(t), abs=1e-9)


def test_sphere_great_circle_closes():
    P = spheroid.SpheroidParams(R=1.0)
    s0 = State(0.0, [math.pi / 2, 0.3], [0.6, 0.8])
    E = spheroid.geo_invariants(P, s0)[1]
    period = 2 * math.pi / math.sqrt(2 * E)
    tr = integrate(spheroid.make_system(P), s0, period, rtol=1e-12, atol=1e-13)
    y = tr.y_at(period)
    y[1] = math.remainder(y[1] - 0.3, 2 * math.pi) + 0.3
    np.testing.assert_allclose(y, s0.y, atol=1e-7)


def test_dense_eval_at_nodes_is_exact():
    P = oscillator.OscillatorParams(beta=-1)
    tr = integrate(oscillator.make_system(P), State(0.0, [1.3], [0.4]), 5.0)
    for i in (0, 3, len(tr.ts) - 1):
        np.testing.assert_array_equal(dense_eval(tr, tr.ts[i]).y, tr.ys[i])


def test_dense_output_satisfies_equation_of_motion():
    P = oscillator.OscillatorParams(beta=-1)
    tr = integrate(oscillator.make_system(P), State(0.0, [1.3], [0.4]), 5.0, rtol=1e-12,
                   atol=1e-13)
    h = 1e-3
    for i in range(2, 12):
        t = 0.37 * (tr.ts[i] + tr.ts[i + 1]) + 0.26 * tr.ts[i]
        t = min(max(t, tr.ts[0] + h), tr.ts[-1] - h)
        acc = (tr.y_at(t + h)[1] - tr.y_at(t - h)[1]) / (2 * h)
        f = oscillator.osc_rhs(P, tr.state_at(t))[0]
        assert abs(acc - f) < 1e-6


def test_out_of_range():
    tr = integrate(free(1), State(0.0, [0.0], [1.0]), 1.0)
    with pytest.raises(OutOfRange):
        tr.y_at(1.5)


def test_backward_integration():
    tr = integrate(free(1), State(2.0, [0.0], [1.0]), -1.0)
    assert tr.y_at(-1.0)[0] == pytest.approx(-3.0, abs=1e-12)
    assert tr.y_at(0.5)[0] == pytest.approx(-1.5, abs=1e-12)


def test_collapse_truncates_or_raises():
    P = oscillator.OscillatorParams(beta=1, t_range=(-1, 10))
    sys_ = oscillator.make_system(P)
    init = State(0.0, [1.0], [0.0])
    tr = integrate(sys_, init, 5.0)
    assert tr.truncated and tr.ts[-1] < 5.0
    with pytest.raises(StepSizeUnderflow):
        integrate(sys_, init, 5.0, strict=True)


def test_non_finite_force():
    bad = SystemDef(1, force=lambda s: np.array([np.nan]), lagrangian=lambda s: 0.0)
    with pytest.raises(NonFiniteState):
        integrate(bad, State(0.0, [0.0], [0.0]), 1.0)


def test_events_are_located_and_filtered():
    # harmonic motion q = sin t: qdot = cos t vanishes at pi/2, 3pi/2, 5pi/2
    sho = SystemDef(1, force=lambda s: -s.q, lagrangian=lambda s: 0.5 * (s.qdot[0] ** 2 - s.q[0] ** 2))
    evs = (EventSpec("turning", lambda s: s.qdot[0], "any"),
           EventSpec("top", lambda s: s.qdot[0], "falling"))
    tr = integrate(sho, State(0.0, [0.0], [1.0]), 8.5, rtol=1e-12, atol=1e-13, events=evs)
    turning = [e.t for e in tr.events_with_id("turning")]
    np.testing.assert_allclose(turning, [math.pi / 2, 3 * math.pi / 2, 5 * math.pi / 2], atol=1e-10)
    tops = [e.t for e in tr.events_with_id("top")]
    np.testing.assert_allclose(tops, [math.pi / 2, 5 * math.pi / 2], atol=1e-10)
    with pytest.raises(ValueError):
        EventSpec("x", lambda s: 0.0, "sideways")


def test_find_root():
    assert find_root(lambda x: x - 1, (0, 2)) == pytest.approx(1.0, abs=1e-14)
    assert find_root(math.sin, (3, 4)) == pytest.approx(math.pi, abs=1e-12)
    with pytest.raises(NoSignChange):
        find_root(lambda x: x * x + 1, (-1, 1))


def test_find_root_sigma_inversion():
    P = oscillator.OscillatorParams(beta=1, omega=1.0, sigma0=(0.0, 1.0), t_range=(-1, 4))
    target = 0.9 * P.sol.sigma(1.0)
    t_new = find_root(lambda t: P.sol.sigma(t) - target, (0.0, math.pi / 2), 1e-14)
    assert t_new == pytest.approx(math.asin(0.9 * math.sin(1.0)), abs=1e-9)


def test_export_csv(tmp_path):
    tr = integrate(free(1), State(0.0, [0.0], [1.0]), 1.0)
    path, side = export_csv(tr, tmp_path / "free.csv")
    head = (tmp_path / "free.csv").read_text().splitlines()[0]
    assert head == "t,q_1,qdot_1"
    assert json.loads(open(side).read()) == {"events": [], "status": "ok"}

    sho = SystemDef(1, force=lambda s: -s.q, lagrangian=lambda s: 0.0)
    tr = integrate(sho, State(0.0, [0.0], [1.0]), 8.5,
                   events=(EventSpec("turning", lambda s: s.qdot[0]),))
    _, side = export_csv(tr, tmp_path / "sho.csv")
    evs = json.loads(open(side).read())["events"]
    assert [e["id"] for e in evs] == ["turning"] * 3


_SNIPPET = """
import json
from noetherlab import _jit
from noetherlab.core import State
from noetherlab.odeint import integrate
from noetherlab.systems import cms
P = cms.CMSParams(0.5)
tr = integrate(cms.make_system(P), State(0.0, [-2.0, 0.3, 2.5], [1.5, -2.0, 0.4]), 10.0,
               rtol=1e-12, atol=1e-13)
print(json.dumps({"backend": tr.meta["backend"], "jit": _jit.backend(),
                  "y": tr.y_at(10.0).tolist(), "n": len(tr.ts)}))
"""


def _run(flag, cache):
    env = dict(os.environ, NOETHERLAB_DISABLE_JIT=flag, NOETHERLAB_CACHE_DIR=str(cache))
    r = subprocess.run([sys.executable, "-c", _SNIPPET], env=env, capture_output=True, text=True,
                       check=True)
    return json.loads(r.stdout)


def test_jit_and_python_backends_agree(tmp_path):
    fast = _run("0", tmp_path)
    slow = _run("1", tmp_path)
    assert fast["jit"] == "numba" and fast["backend"] == "numba"
    assert slow["jit"] == "python" and slow["backend"] == "python"
    assert fast["n"] == slow["n"]
    np.testing.assert_allclose(fast["y"], slow["y"], rtol=1e-11, atol=1e-12)
    # the kernel-specific loop is generated once into the cache directory
    generated = list(tmp_path.glob("_nl_loop_*.py"))
    assert len(generated) == 1
    assert "cms" in generated[0].read_text().splitlines()[0]


@pytest.mark.skipif(not _jit.JIT_ENABLED, reason="numba disabled")
def test_python_callback_path_runs_under_jit():
    # systems without a kernel use the plain loop even when numba is active
    tr = integrate(free(1), State(0.0, [0.0], [1.0]), 2.0)
    assert tr.meta["backend"] == "python"
