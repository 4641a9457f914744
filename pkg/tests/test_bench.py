import csv
import io
import logging

import numpy as np
import pytest

from pipg.bench import (
    DEFAULT_FINE_OMIT,
    SOLVERS,
    CertificationError,
    ExperimentConfig,
    ReferenceSolution,
    compute_reference,
    log_log_slope,
    run_solver,
    run_sweep,
    run_trace,
    standard_normal,
    sweep_csv,
    trace_csv,
)
from pipg.mpc import build_benchmark, lift
from pipg.pipg import StoppingRule
from pipg.problem import QpProblem, SpectralBounds
from pipg.spectral import estimate_bounds

from oracles import equality_qp_solution


def test_standard_normal_is_reproducible_and_normal():
    a = standard_normal(7, 100_001)
    np.testing.assert_array_equal(a, standard_normal(7, 100_001))
    assert len(a) == 100_001
    assert abs(a.mean()) < 0.01 and abs(a.std() - 1) < 0.01
    assert not np.array_equal(a[:10], standard_normal(8, 10))
    # prefix property: a shorter draw is the head of a longer one
    np.testing.assert_array_equal(standard_normal(7, 10), a[:10])


def test_standard_normal_matches_scalar_box_muller():
    import math

    raw = [int(v) for v in np.random.PCG64(0).random_raw(4)]
    u = [((r >> 11) + 1) / 2.0**53 for r in raw]
    expected = []
    for u1, u2 in ((u[0], u[1]), (u[2], u[3])):
        rad = math.sqrt(-2 * math.log(u1))
        expected += [rad * math.cos(2 * math.pi * u2), rad * math.sin(2 * math.pi * u2)]
    np.testing.assert_allclose(standard_normal(0, 4), expected, rtol=1e-15)


def test_reference_on_toy_matches_analytic():
    P = QpProblem(np.diag([1.0, 2.0, 3.0]), [1.0, 0.0, -1.0], [[1.0, 1.0, 1.0]], [1.0])
    z, w = equality_qp_solution(P.H, P.h, P.G, P.g)
    ref = compute_reference(P)
    np.testing.assert_allclose(ref.z_star, z, atol=1e-9)
    np.testing.assert_allclose(ref.w_star, w, atol=1e-9)
    assert ref.producing_solvers == ["pipg-var", "cp-accel"]


def test_reference_on_benchmark_is_certified(bench5):
    _, _, ref = bench5
    assert ref.certified_residuals.max() <= 1e-9
    assert ref.agreement <= 1e-7
    assert len(set(ref.producing_solvers)) >= 2


def test_reference_with_tiny_budget_fails_with_candidates():
    P = lift(build_benchmark(5))
    with pytest.raises(CertificationError) as info:
        compute_reference(P, max_iterations=10)
    assert set(info.value.candidates) == {"pipg-var", "cp-accel"}
    z, w, res = info.value.candidates["pipg-var"]
    assert len(z) == P.n and res.max() > 1e-10


def test_reference_round_trip(tmp_path, bench5):
    _, _, ref = bench5
    path = tmp_path / "ref.json"
    ref.save(path)
    back = ReferenceSolution.load(path)
    np.testing.assert_array_equal(back.z_star, ref.z_star)
    np.testing.assert_array_equal(back.w_star, ref.w_star)
    assert back.certified_residuals == ref.certified_residuals


def test_run_trace_columns_and_indexing(bench5):
    P, b, ref = bench5
    trace = run_trace(P, "pipg-var", max_k=20, reference=ref, bounds=b)
    text = trace_csv(trace)
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == ["k", "solver", "dist_sq", "feas_sq", "dist_sq_avg", "feas_sq_avg", "projections"]
    assert rows[0]["k"] == "1" and rows[-1]["k"] == "20"
    assert all(r["solver"] == "pipg-var" for r in rows)
    assert float(rows[0]["dist_sq"]) == pytest.approx(trace["dist_sq"][0], rel=0)


def test_run_trace_without_reference_warns(caplog):
    P = lift(build_benchmark(3))
    with caplog.at_level(logging.WARNING, logger="pipg.bench"):
        trace = run_trace(P, "admm", max_k=5)
    assert "no reference" in caplog.text
    header = trace_csv(trace).splitlines()[0]
    assert header == "k,solver,feas_sq,feas_sq_avg,projections"


@pytest.mark.parametrize("solver", SOLVERS)
def test_projection_counts_per_solver(solver):
    P = lift(build_benchmark(3))
    b = SpectralBounds(0.5, 1.0, 5.0)
    sol, trace = run_solver(solver, P, b, stop=StoppingRule(max_iterations=10))
    if solver == "dfg":
        assert sol.projections == sum(sol.info["inner_iterations"])
    else:
        assert sol.projections == 10
    assert trace["projections"][-1] == sol.projections


def test_unknown_solver():
    with pytest.raises(ValueError):
        run_solver("newton", lift(build_benchmark(2)), SpectralBounds(0.5, 1, 5))


def test_log_log_slope_recovers_power():
    k = np.arange(1, 20_001)
    assert log_log_slope(k, 3.0 / k**2.5) == pytest.approx(-2.5, abs=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(horizons=[])
    with pytest.raises(ValueError):
        ExperimentConfig(tolerances=[1e-3, 0.0])
    with pytest.raises(ValueError):
        ExperimentConfig(solvers=["pipg-var", "bogus"])
    with pytest.raises(ValueError):
        ExperimentConfig(init_distribution="uniform")
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"horizons": [5], "seeds": 3})


def test_config_defaults_and_full_scale():
    c = ExperimentConfig()
    assert c.horizons == [5, 15, 25] and c.num_seeds == 20
    p = ExperimentConfig.full_scale()
    assert p.horizons == [5, 15, 25, 35, 45] and p.num_seeds == 200


def test_fine_tolerance_omits_slow_solvers_unless_listed():
    c = ExperimentConfig()
    assert set(c.solvers_for(1e-3)) == set(SOLVERS)
    assert not set(c.solvers_for(1e-5)) & set(DEFAULT_FINE_OMIT)
    explicit = ExperimentConfig(solvers=["pipg-const", "cp-const"])
    assert explicit.solvers_for(1e-5) == ["pipg-const", "cp-const"]


def test_initial_points_shared_across_solvers_and_seeded():
    c = ExperimentConfig(seed_base=100)
    P = lift(build_benchmark(3))
    z, w = c.initial_point(P, 2)
    np.testing.assert_array_equal(np.concatenate([z, w]), standard_normal(102, P.n + P.m))
    z0, _ = ExperimentConfig(init_distribution="zeros").initial_point(P, 5)
    assert not z0.any()


def test_sweep_records_failures_without_aborting():
    c = ExperimentConfig(horizons=[3], solvers=["pipg-const", "pipg-var"], tolerances=[1e-3, 1e-8], num_seeds=2, max_iterations={"pipg-const": 50, "pipg-var": 5000})
    rows = run_sweep(c)
    by = {(r["solver"], r["epsilon"]): r for r in rows}
    assert by[("pipg-const", 1e-8)]["failures"] == 2
    assert np.isnan(by[("pipg-const", 1e-8)]["mean_projections"])
    assert by[("pipg-var", 1e-3)]["failures"] == 0
    assert by[("pipg-var", 1e-3)]["mean_projections"] > 0


def test_sweep_rows_sorted_and_serial_equals_parallel():
    c = ExperimentConfig(horizons=[4, 2], solvers=["pipg-var", "cp-accel", "admm"], tolerances=[1e-3, 1e-4], num_seeds=3)
    rows = run_sweep(c, workers=1)
    keys = [(r["T"], r["solver"], -r["epsilon"]) for r in rows]
    assert keys == sorted(keys)
    assert sweep_csv(rows) == sweep_csv(run_sweep(c, workers=3))


def test_sweep_first_hit_equals_independent_run():
    c = ExperimentConfig(horizons=[3], solvers=["pipg-var"], tolerances=[1e-2, 1e-4], num_seeds=1)
    rows = run_sweep(c)
    P = lift(build_benchmark(3))
    for r in rows:
        sol, _ = run_solver(
            "pipg-var", P, estimate_bounds(P), c.initial_point(P, 0),
            StoppingRule(max_iterations=100_000, tolerance=r["epsilon"], iterate="raw"), record=False,
        )
        assert sol.projections == r["mean_projections"]
