import numpy as np
import pytest

from pipg.mpc import build_benchmark, lift
from pipg.problem import QpProblem
from pipg.spectral import PowerIterationError, estimate_bounds, power_iteration

from oracles import dense_lambda_max


def test_benchmark_diagonal_fast_path_is_exact():
    b = estimate_bounds(lift(build_benchmark(5)))
    assert (b.mu, b.lam) == (0.5, 1.0)


def test_identity():
    b = estimate_bounds(QpProblem(np.eye(4), np.zeros(4), np.ones((1, 4)), [1.0]))
    assert (b.mu, b.lam) == (1.0, 1.0)
    assert b.sigma == pytest.approx(4.0, rel=2e-3)
    assert b.sigma >= 4.0


def test_benchmark_sigma_within_tenth_of_percent():
    P = lift(build_benchmark(25))
    G = P.G.toarray() if hasattr(P.G, "toarray") else P.G
    exact = dense_lambda_max(G.T @ G)
    b = estimate_bounds(P)
    assert exact <= b.sigma <= exact * 1.001 + 1e-12


def test_randomized_rayleigh_check(rng):
    M = rng.standard_normal((8, 8))
    H = M @ M.T + 0.3 * np.eye(8)
    G = rng.standard_normal((3, 8))
    b = estimate_bounds(QpProblem(H, np.zeros(8), G, np.zeros(3)))
    for _ in range(1000):
        v = rng.standard_normal(8)
        v /= np.linalg.norm(v)
        assert b.mu - 1e-9 <= v @ H @ v <= b.lam + 1e-9
        assert np.sum((G @ v) ** 2) <= b.sigma + 1e-9


def test_nondiagonal_mu_lower_bound(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    eig = np.array([0.2, 0.5, 1.0, 2.0, 3.0, 4.0])
    H = Q @ np.diag(eig) @ Q.T
    b = estimate_bounds(QpProblem(H, np.zeros(6), np.zeros((0, 6)), []))
    assert 0 < b.mu <= 0.2
    assert b.mu == pytest.approx(0.2, abs=0.02)
    assert 4.0 <= b.lam <= 4.0 * 1.0011


def test_singular_hessian_reports_zero_mu(rng):
    v = rng.standard_normal((5, 1))
    H = v @ v.T  # rank one
    b = estimate_bounds(QpProblem(H, np.zeros(5), np.zeros((0, 5)), []))
    assert b.mu == 0.0


def test_no_constraints_gives_unit_sigma():
    assert estimate_bounds(QpProblem(np.eye(2), np.zeros(2), np.zeros((0, 2)), [])).sigma == 1.0


def test_power_iteration_failure_reports_rayleigh():
    # a rotation-like operator has no dominant real eigenvector
    R = np.array([[0.0, -1.0], [1.0, 0.0]])
    with pytest.raises(PowerIterationError) as info:
        power_iteration(lambda v: R @ v, 2, max_iter=50)
    assert np.isfinite(info.value.rayleigh)


def test_bad_tolerance():
    with pytest.raises(ValueError):
        estimate_bounds(QpProblem(np.eye(2), np.zeros(2), np.zeros((0, 2)), []), tolerance=0.0)


def test_deterministic():
    P = lift(build_benchmark(5))
    assert estimate_bounds(P) == estimate_bounds(P)
