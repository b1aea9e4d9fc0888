import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bvpwalk.geometry import BallOracle, BoxOracle, GridField, HalfSpaceSplit, all_absorbing, all_reflecting
from bvpwalk.integrators import (
    Method,
    NonTerminatingError,
    StepParams,
    TrajectoryError,
    WalkerState,
    hop_radius,
    run_batch,
    run_trajectory,
    run_trajectory_ref,
    step_interior,
    step_reflect,
    step_ref,
)
from bvpwalk.linalg import cholesky_lower
from bvpwalk.presets import example1, example2, example3
from bvpwalk.problem import BvpProblem, constant
from bvpwalk.sampling import CounterStreams

STREAMS = CounterStreams(11)
EX3_SIGMA = cholesky_lower(np.array([[8.0, -2.71], [-2.71, 1.0]]))


def plain(dim=2, sigma=None, T=math.inf, **kw):
    s = np.eye(dim) if sigma is None else sigma
    return BvpProblem(dim=dim, sigma=constant(s), constant_sigma=s, horizon_T=T, **kw)


def state_at(oracle, x, n=1):
    return WalkerState.start(oracle, np.asarray(x, dtype=float), np.arange(n))


def test_step_params():
    p = StepParams(0.01, 3)
    assert abs(p.r**2 - 0.03) < 1e-14
    assert p.step_cap == int(1e9 / 3)
    with pytest.raises(ValueError):
        StepParams(0.0, 2)
    with pytest.raises(ValueError):
        StepParams(0.01, 2, Method.MMPLUS)
    assert StepParams(0.01, 2, "ref").method is Method.REF


def test_interior_step_far_from_boundary():
    oracle = BallOracle(np.zeros(3), 10.0)
    params = StepParams(0.01, 3)
    s = state_at(oracle, [0.1, 0.2, 0.3], n=50)
    x0 = s.x.copy()
    s = step_interior(s, plain(3), oracle, params, STREAMS)
    np.testing.assert_allclose(np.linalg.norm(s.x - x0, axis=1), params.r, atol=1e-14)
    np.testing.assert_array_equal(s.y, 1.0)
    np.testing.assert_array_equal(s.z, 0.0)
    np.testing.assert_allclose(s.t, 0.01, atol=1e-16)
    np.testing.assert_array_equal(s.xi, 0.0)


def test_tangent_radius_identity():
    oracle = BallOracle(np.zeros(2), 1.0)
    params = StepParams(0.005, 2)  # r = 0.1
    s = state_at(oracle, [0.95, 0.0])
    prob = plain(2)
    rk = hop_radius(s, prob, params, prob.eval_sigma(s.x, s.t), s.t)
    assert rk[0] == pytest.approx(0.05)


def test_tangent_radius_anisotropic():
    oracle = BoxOracle(-np.ones(2), np.ones(2))
    s = state_at(oracle, [0.0, 0.98])
    prob = plain(2, EX3_SIGMA)
    rk = hop_radius(s, prob, StepParams(0.0016, 2), prob.eval_sigma(s.x, s.t), s.t)
    assert rk[0] == pytest.approx(0.02, rel=1e-12)


def test_mmplus_radius_reads_field():
    oracle = BoxOracle(-np.ones(2), np.ones(2))
    field = GridField(np.array([-1.0, -1.0]), np.array([1.0, 1.0]), np.full((3, 3), 0.007))
    s = state_at(oracle, [0.0, 0.98])
    prob = plain(2, EX3_SIGMA)
    rk = hop_radius(s, prob, StepParams(0.0016, 2, Method.MMPLUS, psi=field), prob.eval_sigma(s.x, s.t), s.t)
    assert rk[0] == pytest.approx(0.007)


def test_reflection_step_unit_case():
    # d = 0, sigma = I, b = 0, phi = 0: chi_1 = r, |chi_i| = r
    oracle = BoxOracle(-np.ones(3), np.ones(3), all_reflecting)
    params = StepParams(0.01, 3)
    s = state_at(oracle, [0.999, 0.0, 0.0], n=8)
    s.x[:, 0] = 1.0
    s.query = oracle.query(s.x)
    x0 = s.x.copy()
    s = step_reflect(s, plain(3, T=1.0), oracle, params, STREAMS)
    disp = s.x - x0
    np.testing.assert_allclose(disp[:, 0], -params.r, atol=1e-14)
    np.testing.assert_allclose(np.abs(disp[:, 1:]), params.r, atol=1e-14)
    np.testing.assert_allclose(np.linalg.norm(disp, axis=1), params.r * math.sqrt(3), atol=1e-14)
    np.testing.assert_allclose(s.xi, params.r**2, rtol=1e-15)
    np.testing.assert_allclose(s.t, params.r**2, rtol=1e-15)
    np.testing.assert_array_equal(s.y, 1.0)
    np.testing.assert_array_equal(s.z, 0.0)


def test_reflection_moves_inward_on_ball():
    p = example1("ball", "reflecting")
    params = StepParams(0.0032, 3)
    s = state_at(p.oracle, [0.0, 0.0, 0.97], n=200)
    s = step_reflect(s, p.problem, p.oracle, params, STREAMS)
    assert np.all(s.query.distance <= 0)
    assert np.all(s.reflections == 1)
    assert np.all(np.isfinite(s.y)) and np.all(np.isfinite(s.z))


def test_ref_step_free_segment():
    oracle = BallOracle(np.zeros(4), 100.0)
    s = state_at(oracle, np.zeros(4), n=20)
    s = step_ref(s, plain(4), oracle, StepParams(0.04, 4, Method.REF), STREAMS)
    np.testing.assert_allclose(np.abs(s.x), 0.2, atol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(s.x, axis=1), 0.2 * 2, atol=1e-14)


def test_ref_mirror_and_local_time():
    oracle = BoxOracle(-np.ones(2), np.ones(2), all_reflecting)
    prob = plain(2, T=5.0, robin_phi=constant(-0.5), robin_psi=constant(2.0))
    s = state_at(oracle, [0.95, 0.0], n=64)
    s = step_ref(s, prob, oracle, StepParams(0.01, 2, Method.REF), STREAMS)
    out = s.xi > 0
    assert out.any() and (~out).any()
    # overshoot 0.05 mirrored back to x = 1 - 0.05, a push of 0.1 along the inward normal
    np.testing.assert_allclose(s.x[out, 0], 0.95, atol=1e-12)
    np.testing.assert_allclose(s.xi[out], 0.1, atol=1e-12)
    np.testing.assert_allclose(s.z[out], 2.0 * 0.1, atol=1e-12)
    np.testing.assert_allclose(s.y[out], 1 - 0.5 * 0.1, atol=1e-12)


CONFIGS = [("absorbing", all_absorbing, math.inf), ("mixed", HalfSpaceSplit(1), math.inf),
           ("mixed-finite", HalfSpaceSplit(1), 0.7), ("reflecting", all_reflecting, 0.7)]


@pytest.mark.parametrize("method", ["mm", "ref"])
@pytest.mark.parametrize("name, cls, T", CONFIGS, ids=[c[0] for c in CONFIGS])
@pytest.mark.parametrize("domain", ["ball", "box"])
def test_unit_payoff_identity(method, name, cls, T, domain):
    oracle = BallOracle(np.zeros(2), 1.0, cls) if domain == "ball" else BoxOracle(-np.ones(2), np.ones(2), cls)
    prob = plain(2, EX3_SIGMA, T=T, dirichlet_g=constant(1.0), initial_p=lambda x: np.ones(x.shape[0]))
    res = run_batch(prob, oracle, StepParams(0.01, 2, method), [0.3, 0.2], STREAMS, np.arange(300))
    np.testing.assert_array_equal(res.values, 1.0)


@pytest.mark.parametrize("method", ["mm", "ref"])
@pytest.mark.parametrize("name, cls, T", CONFIGS, ids=[c[0] for c in CONFIGS])
def test_timer_payoff_is_elapsed_time(method, name, cls, T):
    oracle = BallOracle(np.zeros(3), 1.0, cls)
    prob = plain(3, T=T, source_f=constant(1.0))
    res = run_batch(prob, oracle, StepParams(0.01, 3, method), [0.1, -0.2, 0.3], STREAMS, np.arange(300))
    np.testing.assert_array_equal(res.values, res.exit_times)


def test_unit_payoff_with_state_dependent_sigma():
    p = example1("ball", "mixed")
    prob = BvpProblem(dim=3, sigma=p.problem.sigma, dirichlet_g=constant(1.0))
    res = run_batch(prob, p.oracle, StepParams(0.0128, 3), p.x0, STREAMS, np.arange(500))
    np.testing.assert_array_equal(res.values, 1.0)
    assert res.reflections.sum() > 0


def test_payoff_linearity():
    p = example1("ball", "mixed").problem
    k = 3.0

    def scaled(fn):
        return lambda *a: k * fn(*a)

    q = BvpProblem(dim=3, sigma=p.sigma, drift_b=p.drift_b, source_f=scaled(p.source_f),
                   dirichlet_g=scaled(p.dirichlet_g), initial_p=scaled(p.initial_p), robin_phi=p.robin_phi,
                   robin_psi=scaled(p.robin_psi), grad_phi=p.grad_phi, grad_psi=scaled(p.grad_psi))
    oracle = example1("ball", "mixed").oracle
    x0 = example1().x0
    a = run_batch(p, oracle, StepParams(0.0128, 3), x0, STREAMS, np.arange(200)).values
    b = run_batch(q, oracle, StepParams(0.0128, 3), x0, STREAMS, np.arange(200)).values
    np.testing.assert_allclose(b, k * a, rtol=1e-12, atol=1e-15)


def test_outcomes_are_consistent():
    p = example1("ball", "mixed", T=0.05)
    res = run_batch(p.problem, p.oracle, StepParams(0.0032, 3), p.x0, STREAMS, np.arange(400))
    assert res.absorbed.any() and (~res.absorbed).any()
    assert np.all(p.oracle.classifier(res.exit_points[res.absorbed]))
    assert np.all(res.exit_times[~res.absorbed] >= 0.05)
    np.testing.assert_allclose(np.linalg.norm(res.exit_points[res.absorbed], axis=1), 1.0, atol=1e-12)


def test_batch_independence():
    p = example1("ball", "mixed")
    params = StepParams(0.0128, 3)
    whole = run_batch(p.problem, p.oracle, params, p.x0, STREAMS, np.arange(40))
    part = run_batch(p.problem, p.oracle, params, p.x0, STREAMS, np.arange(17, 23))
    np.testing.assert_array_equal(part.values, whole.values[17:23])
    one = run_trajectory(p.problem, p.oracle, params, p.x0, STREAMS, index=5)
    assert one.value == whole.values[5]
    assert one.steps == whole.steps[5] and one.outcome in ("absorbed", "horizon")


def test_no_overshoot_after_safeguard():
    p = example1("ball", "absorbing")
    for h in (0.0128, 0.0032):
        s = state_at(p.oracle, [0.0, 0.0, 0.9], n=100_000)
        s.x = np.random.default_rng(0).normal(size=(100_000, 3))
        s.x *= (1 - np.random.default_rng(1).uniform(0, 0.2, size=100_000))[:, None] / np.linalg.norm(s.x, axis=1, keepdims=True)
        s.query = p.oracle.query(s.x)
        s = step_interior(s, p.problem, p.oracle, StepParams(h, 3), STREAMS)
        assert np.all(s.query.distance <= 0)
        assert np.all(np.linalg.norm(s.x, axis=1) <= 1 + 1e-12)


def test_mean_steps_scale_inversely_with_h():
    p = example1("ball", "absorbing")
    steps = [run_batch(p.problem, p.oracle, StepParams(h, 3), p.x0, STREAMS, np.arange(4000)).steps.mean()
             for h in (0.0064, 0.0032)]
    assert steps[1] / steps[0] == pytest.approx(2.0, rel=0.25)


def test_step_cap_raises():
    prob = plain(2, T=100.0)
    oracle = BallOracle(np.zeros(2), 1.0, all_reflecting)
    with pytest.raises(NonTerminatingError):
        run_batch(prob, oracle, StepParams(0.01, 2, step_cap=20), [0.0, 0.0], STREAMS, np.arange(3))


def test_non_finite_coefficients_raise():
    prob = plain(2, source_f=lambda x, t: np.full(x.shape[0], np.nan))
    with pytest.raises(TrajectoryError):
        run_batch(prob, BallOracle(np.zeros(2), 1.0), StepParams(0.01, 2), [0.0, 0.0], STREAMS, np.arange(3))


def test_precondition_errors():
    oracle = BallOracle(np.zeros(2), 1.0, all_reflecting)
    with pytest.raises(ValueError, match="absorbing"):
        run_batch(plain(2), oracle, StepParams(0.01, 2), [0.0, 0.0], STREAMS, np.arange(2))
    with pytest.raises(ValueError, match="inside"):
        run_batch(plain(2, T=1.0), oracle, StepParams(0.01, 2), [1.0, 0.0], STREAMS, np.arange(2))
    with pytest.raises(ValueError):
        run_batch(plain(2, T=1.0), oracle, StepParams(0.01, 3), [0.0, 0.0], STREAMS, np.arange(2))


def test_ref_wrapper_and_example1_estimate():
    p = example1("ball", "absorbing")
    s = run_trajectory_ref(p.problem, p.oracle, 0.0128, p.x0, STREAMS, 3)
    assert s.absorbed
    res = run_batch(p.problem, p.oracle, StepParams(0.0032, 3), p.x0, STREAMS, np.arange(20000))
    se = res.values.std() / math.sqrt(res.values.size)
    # biased at finite h by about 2 percent
    assert abs(res.values.mean() - p.u_exact * 1.02) <= 4 * se


def test_mmplus_runs_on_example3():
    # coarse steps are strongly biased on this anisotropic square; check the bias shrinks with h
    p = example3(2.1)
    field = p.psi_builder(0.02)
    errs = []
    for h in (0.0064, 0.0016):
        res = run_batch(p.problem, p.oracle, StepParams(h, 2, Method.MMPLUS, psi=field), p.x0, STREAMS,
                        np.arange(2000))
        assert np.all(res.absorbed) and np.all(np.isfinite(res.values))
        errs.append(abs(res.values.mean() / p.u_exact - 1))
    assert errs[1] < 0.8 * errs[0]


@settings(max_examples=20, deadline=None)
@given(st.floats(0.001, 0.05), st.integers(2, 5))
def test_unit_payoff_property(h, dim):
    sigma = np.tril(np.full((dim, dim), 0.3)) + np.eye(dim)
    prob = plain(dim, sigma, T=0.3, dirichlet_g=constant(1.0), initial_p=lambda x: np.ones(x.shape[0]))
    oracle = BallOracle(np.zeros(dim), 1.0, HalfSpaceSplit(0))
    res = run_batch(prob, oracle, StepParams(h, dim), np.full(dim, 0.1), STREAMS, np.arange(50))
    np.testing.assert_array_equal(res.values, 1.0)


class _AllSigns:
    """Stand-in stream that hands every row its own sign vector, so a batch enumerates all of them."""

    def __init__(self, dim):
        self.table = np.array(list(itertools.product([-1.0, 1.0], repeat=dim - 1)))

    def signs(self, index, step, k):
        return self.table


def reflection_defect(preset, normal, h, depth, curvature):
    """E[Y' u(X') + Z'] - u(X) for one reflection step, computed exactly over all sign vectors."""
    dim = preset.problem.dim
    streams = _AllSigns(dim)
    params = StepParams(h, dim, curvature=curvature)
    x = np.tile(normal * (1 - depth * params.r), (len(streams.table), 1))
    st = WalkerState.start(preset.oracle, np.zeros(dim), np.arange(len(x)))
    st.x, st.query = x.copy(), preset.oracle.query(x)
    u0 = preset.solution(x[:1])[0]
    st = step_reflect(st, preset.problem, preset.oracle, params, streams)
    return (st.y * preset.solution(st.x) + st.z).mean() - u0, params.r


@pytest.mark.parametrize("depth", [0.0, 0.5])
def test_reflection_step_is_third_order_on_a_sphere(depth):
    pre = example2(5, "reflecting", T=1.0)
    rng = np.random.default_rng(0)
    for _ in range(3):
        n = rng.normal(size=5)
        n /= np.linalg.norm(n)
        ratios = []
        for h in (1e-4, 1e-5):
            defect, r = reflection_defect(pre, n, h, depth, curvature=True)
            ratios.append(defect / r**3)
        assert abs(ratios[0] - ratios[1]) <= 0.35 * abs(ratios[1]) + 2.0


def test_uncorrected_reflection_leaves_second_order_defect():
    # with coupled A the printed step misses a curvature term of size r^2
    pre = example2(5, "reflecting", T=1.0)
    n = np.random.default_rng(0).normal(size=(3, 5))[2]
    n /= np.linalg.norm(n)
    plain, r = reflection_defect(pre, n, 1e-5, 0.0, curvature=False)
    fixed, _ = reflection_defect(pre, n, 1e-5, 0.0, curvature=True)
    assert abs(plain) / r**2 > 5.0
    assert abs(fixed) / r**2 < 0.5
