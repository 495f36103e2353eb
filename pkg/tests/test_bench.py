import math

import numpy as np
import pytest

from drbqo.acquisition import CandidatePolicy, RunConfig
from drbqo.bench import (
    CI96_Z,
    ExperimentConfig,
    branin,
    build_regret_oracle,
    ci96,
    final_metrics,
    logistic_f,
    logistic_problem,
    make_problem,
    run_experiment,
    shifted_problem,
    summarize,
)
from drbqo.errors import ConfigurationError, ContractViolation
from drbqo.robust_weights import ChiSquareBall, solve

TINY_RUN = RunConfig(T=3, learn=False, candidates=CandidatePolicy(count=20))


def test_logistic_values():
    rng = np.random.default_rng(0)
    W = rng.normal(size=(5, 3))
    assert np.allclose(logistic_f(np.zeros((5, 3)), W), -math.log(2), atol=1e-15)
    big = logistic_f(np.array([[40.0]]), np.array([[1.0]]))[0]
    small = logistic_f(np.array([[-40.0]]), np.array([[1.0]]))[0]
    assert big == pytest.approx(-40.0, abs=1e-12)
    assert small == pytest.approx(-math.exp(-40), rel=1e-12)
    assert np.isfinite(logistic_f(np.array([[1e4]]), np.array([[1e4]]))).all()


def test_logistic_problem_contexts_fixed_by_seed():
    p1, c1 = logistic_problem(d=2, n=10, seed=3)
    _, c2 = logistic_problem(d=2, n=10, seed=3)
    _, c3 = logistic_problem(d=2, n=10, seed=4)
    assert np.array_equal(c1.values, c2.values) and not np.array_equal(c1.values, c3.values)
    assert c1.values.shape == (10, 2)
    assert np.array_equal(p1.domain[0], [-3, -3]) and np.array_equal(p1.domain[1], [3, 3])


def test_branin_minimum_by_grid_scan():
    problem, _ = shifted_problem("branin", n=3, seed=0)
    axis = np.linspace(0, 1, 601)
    grid = np.stack(np.meshgrid(axis, axis, indexing="ij"), -1).reshape(-1, 2)
    best = problem.true_f(grid, np.zeros_like(grid)).max()
    assert -best == pytest.approx(0.397887, abs=1e-3)
    assert branin(np.array([[np.pi, 2.275]]))[0] == pytest.approx(0.397887, abs=1e-6)


@pytest.mark.parametrize("name", ["branin", "levy", "hartmann3"])
def test_shifted_problem_zero_context_and_clamping(name):
    problem, contexts = make_problem(name, d=2, n=4, seed=1)
    X = np.random.default_rng(2).uniform(size=(7, problem.d))
    W = np.zeros_like(X)
    base = problem.true_f(X, W)
    assert np.all(np.isfinite(base))
    far = problem.true_f(X, W + 5.0)
    corner = problem.true_f(np.ones_like(X), W)
    assert np.allclose(far, corner)
    assert contexts.values.shape == (4, problem.d)


def test_unknown_problem():
    with pytest.raises(ConfigurationError):
        make_problem("rosenbrock")
    with pytest.raises(ConfigurationError):
        shifted_problem("ackley")


def test_regret_oracle_properties():
    problem, contexts = logistic_problem(seed=0)
    ball = ChiSquareBall(10, 1.0)
    oracle = build_regret_oracle(problem, contexts, ball, grid_resolution=41)
    assert oracle.g_star == oracle.robust_values.max()
    assert oracle.regret(oracle.x_star[None, :])[0] == 0.0
    assert np.all(oracle.g_star - oracle.robust_values >= 0)
    rng = np.random.default_rng(1)
    X = rng.uniform(-3, 3, (50, 2))
    assert np.all(oracle.regret(X) >= -1e-12)
    # grid points map to themselves
    i = rng.integers(0, len(oracle.eval_grid), 20)
    assert np.array_equal(oracle.nearest_index(oracle.eval_grid[i]), i)
    x = oracle.eval_grid[i[0]]
    assert oracle.robust_value(x[None, :])[0] == pytest.approx(
        solve(problem.table(x[None, :], contexts)[0], ball).value, abs=1e-12)


def test_regret_oracle_zero_radius_is_empirical_mean():
    problem, contexts = logistic_problem(seed=5)
    oracle = build_regret_oracle(problem, contexts, ChiSquareBall(10, 0.0), grid_resolution=21)
    means = problem.empirical_values(oracle.eval_grid, contexts)
    assert oracle.g_star == pytest.approx(means.max(), abs=1e-12)


def test_optimal_robust_value_non_increasing_in_radius():
    problem, contexts = logistic_problem(seed=6)
    g = [build_regret_oracle(problem, contexts, ChiSquareBall(10, r), grid_resolution=31).g_star
         for r in (0.0, 0.25, 0.5, 1.0, 2.0, 5.0)]
    assert all(b <= a + 1e-12 for a, b in zip(g, g[1:]))


def test_regret_oracle_refuses_high_dimension():
    problem, contexts = logistic_problem(d=4, seed=0)
    with pytest.raises(ContractViolation):
        build_regret_oracle(problem, contexts, ChiSquareBall(10, 1.0))


def test_ci96():
    assert ci96([3.0]) == 0.0
    v = np.array([1.0, 2.0, 4.0, 7.0])
    assert ci96(v) == pytest.approx(CI96_Z * v.std(ddof=1) / 2.0)


def small_experiment(**kw):
    base = dict(algorithms=("DRBQO", "BQO_TS"), rhos=(0.5, 1.0), repetitions=2,
                master_seed=7, run=TINY_RUN, regret_grid=21)
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_experiment_shapes_and_sharing():
    results, summary, oracles = run_experiment(small_experiment())
    assert len(results) == 2 * 2 * 2 and all(r.ok for r in results)
    assert len(summary) == 2 * 2 * 3
    # the rho-independent baseline is run once and scored at every radius
    ts = [r for r in results if r.algorithm == "BQO_TS" and r.repetition == 0]
    assert ts[0].trace is ts[1].trace
    for r in results:
        assert np.all(r.regret >= -1e-12) and len(r.empirical) == 3
    reg, emp = final_metrics(results, "DRBQO", 1.0)
    assert reg.shape == (2,) and emp.shape == (2,)


def test_summary_recomputed_from_results():
    results, summary, _ = run_experiment(small_experiment(repetitions=3))
    again = summarize(results)
    assert again == summary
    row = next(r for r in summary if r["algorithm"] == "DRBQO" and r["rho"] == 0.5
               and r["iteration"] == 2)
    regs = [r.regret[1] for r in results if r.algorithm == "DRBQO" and r.rho == 0.5]
    assert row["mean_regret"] == pytest.approx(np.mean(regs), abs=1e-15)
    assert row["ci96_regret"] == pytest.approx(ci96(regs), abs=1e-15)
    assert row["log10_mean_regret"] == pytest.approx(math.log10(max(np.mean(regs), 1e-12)))


def test_single_repetition_has_zero_half_width():
    _, summary, _ = run_experiment(small_experiment(repetitions=1, rhos=(1.0,)))
    assert all(r["ci96_regret"] == 0.0 and r["ci96_empirical"] == 0.0 for r in summary)


def test_parallel_matches_serial():
    cfg = small_experiment(rhos=(1.0,))
    serial, s_summary, _ = run_experiment(cfg, jobs=1)
    parallel, p_summary, _ = run_experiment(cfg, jobs=2)
    assert s_summary == p_summary
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.regret, b.regret)


def test_failed_repetition_is_recorded(monkeypatch):
    import drbqo.bench as bench

    real = bench.baseline_run

    def flaky(algorithm, problem, contexts, config, seed):
        if algorithm == "BQO_TS":
            raise FloatingPointError("boom")
        return real(algorithm, problem, contexts, config, seed)

    monkeypatch.setattr(bench, "baseline_run", flaky)
    results, summary, _ = run_experiment(small_experiment(rhos=(1.0,)), jobs=1)
    failed = [r for r in results if not r.ok]
    assert len(failed) == 2 and "boom" in failed[0].error
    assert {r["algorithm"] for r in summary} == {"DRBQO"}
