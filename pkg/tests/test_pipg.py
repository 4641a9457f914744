import numpy as np
import pytest

from pipg.mpc import build_benchmark, lift
from pipg.pipg import (
    NonFiniteIterateError,
    StepSchedule,
    StoppingRule,
    init_state,
    initial_lyapunov,
    pipg_step,
    solve,
    theorem_bounds,
)
from pipg.problem import QpProblem, SpectralBounds, kkt_residual
from pipg.sets import Ball, Box
from pipg.spectral import estimate_bounds

from oracles import equality_qp_solution, pipg_reference_run


def toy():
    return QpProblem(np.eye(2), np.zeros(2), [[1.0, 1.0]], [1.0])


def toy_bounds():
    return SpectralBounds(mu=1.0, lam=1.0, sigma=2.0)


# -- schedules ----------------------------------------------------------------


@pytest.mark.parametrize("make", [StepSchedule.constant, StepSchedule.varying])
def test_schedule_satisfies_step_condition(make):
    b = SpectralBounds(0.5, 1.0, 5.3)
    s = make(b)
    for k in range(1, 200):
        alpha, beta = s.steps(k)
        assert b.lam + b.sigma * beta == pytest.approx(1 / alpha, rel=1e-14)


def test_constant_default_beta():
    s = StepSchedule.constant(SpectralBounds(0.0, 4.0, 1.0))
    assert s.beta == 2.0
    assert s.steps(1) == s.steps(100) == (1 / 6, 2.0)


def test_varying_formula():
    s = StepSchedule.varying(SpectralBounds(0.5, 1.0, 2.0))
    assert s.steps(3) == (2 / (4 * 0.5 + 2), 4 * 0.5 / 4)


def test_varying_requires_strong_convexity():
    with pytest.raises(ValueError):
        StepSchedule.varying(SpectralBounds(0.0, 1.0, 1.0))


def test_constant_requires_positive_beta():
    with pytest.raises(ValueError):
        StepSchedule.constant(toy_bounds(), beta=0.0)


# -- single steps ----------------------------------------------------------------


@pytest.mark.parametrize("variant", ["constant", "varying"])
def test_toy_fixed_point(variant):
    P = toy()
    s = StepSchedule.constant(toy_bounds()) if variant == "constant" else StepSchedule.varying(toy_bounds())
    sol, _ = solve(P, s, stop=StoppingRule(max_iterations=2000))
    np.testing.assert_allclose(sol.z, [0.5, 0.5], atol=1e-9)


def test_kkt_point_is_fixed(rng):
    H = np.diag([1.0, 2.0, 3.0])
    h, G, g = rng.standard_normal(3), rng.standard_normal((1, 3)), rng.standard_normal(1)
    z, w = equality_qp_solution(H, h, G, g)
    P = QpProblem(H, h, G, g)
    s = StepSchedule.varying(estimate_bounds(P))
    new = pipg_step(P, s, init_state(P, z, w))
    np.testing.assert_allclose(new.z, z, atol=1e-14)
    np.testing.assert_allclose(new.w, w, atol=1e-14)


def test_step_order_against_hand_computation():
    P = QpProblem(np.eye(2), [1.0, 0.0], [[1.0, 1.0]], [1.0], Box([-0.2, -0.2], [0.2, 0.2]))
    s = StepSchedule.constant(SpectralBounds(1.0, 1.0, 2.0), beta=0.5)  # alpha = 1/2
    z0, w0 = np.array([0.1, -0.1]), np.array([0.3])
    # v = w + beta (Gz - g) = 0.3 + 0.5 * (0 - 1) = -0.2
    # z - alpha (Hz + h + G'v) = (0.1, -0.1) - 0.5 * (0.9, -0.3) = (-0.35, 0.05) -> box -> (-0.2, 0.05)
    # w = 0.3 + 0.5 * (-0.15 - 1) = -0.275
    st = pipg_step(P, s, init_state(P, z0, w0))
    np.testing.assert_allclose(st.v, [-0.2])
    np.testing.assert_allclose(st.z, [-0.2, 0.05])
    np.testing.assert_allclose(st.w, [-0.275])
    assert st.k == 2 and st.projections == 1


def test_step_is_pure():
    P = toy()
    s = StepSchedule.varying(toy_bounds())
    st = init_state(P, [1.0, 2.0], [0.5])
    before = (st.z.copy(), st.w.copy(), st.k)
    pipg_step(P, s, st)
    np.testing.assert_array_equal(st.z, before[0])
    np.testing.assert_array_equal(st.w, before[1])
    assert st.k == before[2]


def test_non_finite_iterate_raises_with_index():
    P = QpProblem(np.eye(2), [1.0, 1.0], [[1.0, 0.0]], [0.0])
    s = StepSchedule.constant(SpectralBounds(0.0, 1e-200, 1e-200), beta=1.0)
    with pytest.raises(NonFiniteIterateError) as info:
        solve(P, s, stop=StoppingRule(max_iterations=100))
    assert info.value.iteration >= 1


# -- averages ------------------------------------------------------------------------


@pytest.mark.parametrize("variant", ["constant", "varying"])
def test_incremental_averages_match_history(variant, rng):
    P = lift(build_benchmark(3))
    b = estimate_bounds(P)
    s = StepSchedule.constant(b) if variant == "constant" else StepSchedule.varying(b)
    z0, w0 = rng.standard_normal(P.n), rng.standard_normal(P.m)
    K = 50
    zs, _ = pipg_reference_run(
        P.H, P.h, P.G, P.g, P.project, lambda k: s.steps(k)[0], lambda k: s.steps(k)[1], z0, w0, K
    )
    st = init_state(P, z0, w0)
    for _ in range(K):
        st = pipg_step(P, s, st)
    j = np.arange(1, K + 1)
    if variant == "constant":
        a, c = np.ones(K), np.ones(K)
    else:
        a, c = (j + 1.0) * (j + 2.0), j + 2.0
    z_hat = sum(a[i] * zs[i] for i in range(K)) / a.sum()
    z_tilde = sum(c[i] * zs[i + 1] for i in range(K)) / c.sum()
    np.testing.assert_allclose(st.z_hat, z_hat, atol=1e-12)
    np.testing.assert_allclose(st.z_tilde, z_tilde, atol=1e-12)
    np.testing.assert_allclose(st.z, zs[-1], atol=1e-12)
    if variant == "varying":
        assert st.hat_total == K * (K**2 + 6 * K + 11) / 3
        assert st.tilde_total == K * (K + 5) / 2


# -- solve --------------------------------------------------------------------------


def test_stop_after_one_iteration_matches_single_step(rng):
    P = lift(build_benchmark(4))
    s = StepSchedule.varying(estimate_bounds(P))
    z0, w0 = rng.standard_normal(P.n), rng.standard_normal(P.m)
    sol, trace = solve(P, s, (z0, w0), StoppingRule(max_iterations=1))
    st = pipg_step(P, s, init_state(P, z0, w0))
    np.testing.assert_array_equal(sol.z, st.z)
    np.testing.assert_array_equal(sol.w, st.w)
    assert sol.iterations == 1 and sol.projections == 1 and sol.reason == "max_iterations"
    assert list(trace["k"]) == [1]


def test_one_projection_per_iteration():
    P = lift(build_benchmark(3))
    calls = []
    real = P.feasible_set._project
    P.feasible_set._project = lambda x: calls.append(1) or real(x)
    try:
        sol, trace = solve(P, StepSchedule.varying(estimate_bounds(P)), stop=StoppingRule(max_iterations=37))
    finally:
        del P.feasible_set._project
    assert len(calls) == 37 == sol.projections
    np.testing.assert_array_equal(trace["projections"], np.arange(1, 38))


def test_infeasible_problem_exhausts_iterations():
    P = QpProblem(np.eye(2), np.zeros(2), [[1.0, 1.0]], [5.0], Ball(0.1, 2))
    sol, _ = solve(P, StepSchedule.varying(SpectralBounds(1.0, 1.0, 2.0)), stop=StoppingRule(max_iterations=500, tolerance=1e-6))
    assert sol.reason == "max_iterations" and not sol.converged
    assert np.max(np.abs(P.G @ sol.z_hat - P.g)) > 4


@pytest.mark.parametrize("iterate", ["hat", "raw", "tilde"])
def test_tolerance_stop_on_benchmark(iterate, rng):
    P = lift(build_benchmark(25))
    s = StepSchedule.varying(estimate_bounds(P))
    sol, _ = solve(P, s, (rng.standard_normal(P.n), None), StoppingRule(max_iterations=20_000, tolerance=1e-3, iterate=iterate))
    point = {"hat": sol.z_hat, "raw": sol.z, "tilde": sol.z_tilde}[iterate]
    assert sol.converged
    assert np.max(np.abs(P.G @ point - P.g)) <= 1e-3
    assert sol.projections == sol.iterations


def test_warm_start_from_state_continues_exactly():
    P = lift(build_benchmark(4))
    s = StepSchedule.varying(estimate_bounds(P))
    full, _ = solve(P, s, stop=StoppingRule(max_iterations=40))
    half, _ = solve(P, s, stop=StoppingRule(max_iterations=20))
    rest, _ = solve(P, s, half.info["state"], StoppingRule(max_iterations=20))
    np.testing.assert_array_equal(rest.z, full.z)
    np.testing.assert_array_equal(rest.z_hat, full.z_hat)
    assert rest.projections == 40


def test_callback_sees_every_state():
    P = toy()
    seen = []
    solve(P, StepSchedule.varying(toy_bounds()), stop=StoppingRule(max_iterations=5), callback=lambda st: seen.append(st.k))
    assert seen == [2, 3, 4, 5, 6]


def test_inflated_bounds_still_converge():
    P = lift(build_benchmark(5))
    b = estimate_bounds(P)
    stop = StoppingRule(max_iterations=4000)
    # valid but loose bounds keep the guarantees; the raw residual is not
    # monotone in the bound quality at a fixed k, so only convergence is checked
    loose, _ = solve(P, StepSchedule.varying(b.scaled(2.0)), stop=stop, record=False)
    assert kkt_residual(P, loose.z, loose.w).max() < 1e-4


def test_stopping_rule_validation():
    with pytest.raises(ValueError):
        StoppingRule(iterate="mean")
    with pytest.raises(ValueError):
        StoppingRule(max_iterations=0)
    with pytest.raises(ValueError):
        StoppingRule(tolerance=-1.0)


def test_projection_budget():
    sol, _ = solve(toy(), StepSchedule.varying(toy_bounds()), stop=StoppingRule(max_iterations=100, max_projections=7))
    assert sol.reason == "max_projections" and sol.projections == 7


# -- Lyapunov value and bounds -----------------------------------------------------


def test_initial_lyapunov_formulas():
    b = SpectralBounds(0.5, 1.0, 2.0)
    z1, w1 = np.array([1.0, 0.0]), np.array([2.0])
    zs, ws = np.zeros(2), np.zeros(1)
    c = StepSchedule.constant(b, beta=1.0)  # alpha = 1/3
    assert initial_lyapunov(c, z1, w1, zs, ws) == pytest.approx(1.5 + 2.0)
    v = StepSchedule.varying(b)
    assert initial_lyapunov(v, z1, w1, zs, ws) == pytest.approx(1 / 3 + 2.0 * 4 / 1.0)


def test_varying_schedule_bound_at_k1000_on_t25(bench25):
    P, b, ref = bench25
    s = StepSchedule.varying(b)
    sol, _ = solve(P, s, stop=StoppingRule(max_iterations=1000), record=False)
    v1 = initial_lyapunov(s, np.zeros(P.n), np.zeros(P.m), ref.z_star, ref.w_star)
    feas_bound, _ = theorem_bounds(s, 1000, v1)
    r = P.G @ sol.z_hat - P.g
    assert 0.5 * r @ r <= feas_bound
