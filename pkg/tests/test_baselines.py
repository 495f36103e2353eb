from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from drbqo.acquisition import CandidatePolicy, RunConfig, drbqo_run, drbqo_select_x
from drbqo.baselines import (
    AlgorithmId,
    baseline_run,
    bqo_ts_select_x,
    expected_improvement,
    quadrature_ei,
)
from drbqo.bench import logistic_problem
from drbqo.errors import ConfigurationError
from drbqo.gp import fit, quadrature_mean, quadrature_variance
from drbqo.kernel import KernelSpec, LengthScales
from drbqo.robust_weights import ChiSquareBall

FAST = RunConfig(T=5, rho=1.0, learn=False, candidates=CandidatePolicy(count=40))


def test_algorithm_ids():
    assert AlgorithmId.parse("BQO_EI") is AlgorithmId.BQO_EI
    with pytest.raises(ConfigurationError, match="NOPE"):
        AlgorithmId.parse("NOPE")
    robust = {a for a in AlgorithmId if a.report_mode == "robust"}
    assert robust == {AlgorithmId.DRBQO, AlgorithmId.MaximinBQO_TS, AlgorithmId.MaximinBQO_EI}


def test_bqo_ts_select_examples():
    cands = np.zeros((2, 1))
    assert bqo_ts_select_x(np.array([[0.0, 1.0], [0.4, 0.5]]), np.zeros((2, 1)), cands) == 0
    assert bqo_ts_select_x(np.array([[0.2], [0.9], [0.1]]), np.zeros((1, 1)),
                           np.zeros((3, 1))) == 1


def test_bqo_ts_select_equals_zero_radius_drbqo():
    rng = np.random.default_rng(0)
    for _ in range(50):
        S = rng.normal(size=(30, 8))
        assert bqo_ts_select_x(S, np.zeros((8, 1)), np.zeros((30, 1))) == \
            drbqo_select_x(S, np.zeros((8, 1)), ChiSquareBall(8, 0.0), np.zeros((30, 1)))


def test_expected_improvement_examples():
    assert expected_improvement(0.0, 1.0, 0.0) == pytest.approx(0.398942, abs=1e-6)
    assert expected_improvement(0.5, 0.0, 1.0) == 0.0
    assert expected_improvement(1.5, 0.0, 1.0) == 0.5


@given(st.floats(-5, 5), st.floats(0, 3), st.floats(-5, 5))
def test_expected_improvement_lower_bound(mu, s, inc):
    ei = float(expected_improvement(mu, s, inc))
    assert ei >= max(mu - inc, 0.0) - 1e-12
    assert ei >= 0


def test_quadrature_ei_matches_closed_form():
    rng = np.random.default_rng(1)
    spec = KernelSpec(LengthScales((0.4,), (0.4,)))
    X = rng.uniform(size=(6, 2))
    gp = fit(spec, 1e-3, X, np.cos(3 * X[:, 0]) + X[:, 1])
    ctx = np.linspace(0, 1, 4)[:, None]
    w = np.full(4, 0.25)
    for x in rng.uniform(size=(10, 1)):
        mu = quadrature_mean(gp, x, w, ctx)
        s = np.sqrt(quadrature_variance(gp, x, w, ctx))
        inc = 0.8
        z = (mu - inc) / s
        assert quadrature_ei(gp, x, ctx, inc) == pytest.approx(
            (mu - inc) * norm.cdf(z) + s * norm.pdf(z), rel=1e-10)


@pytest.mark.parametrize("seed", [0, 1])
def test_report_only_variants_share_query_traces(seed):
    problem, contexts = logistic_problem(seed=3)
    pairs = [(AlgorithmId.BQO_TS, AlgorithmId.MaximinBQO_TS),
             (AlgorithmId.BQO_EI, AlgorithmId.MaximinBQO_EI),
             (AlgorithmId.DRBQO, AlgorithmId.EmpDRBQO)]
    for base, variant in pairs:
        a = baseline_run(base, problem, contexts, FAST, seed)
        b = baseline_run(variant, problem, contexts, FAST, seed)
        for ra, rb in zip(a.records, b.records):
            assert np.array_equal(ra.x, rb.x) and ra.w_index == rb.w_index and ra.y == rb.y


def test_zero_radius_drbqo_reduces_to_bqo_ts():
    problem, contexts = logistic_problem(seed=0)
    cfg = replace(FAST, rho=0.0)
    a = drbqo_run(problem, contexts, cfg, 11)
    b = baseline_run("BQO_TS", problem, contexts, cfg, 11)
    assert [(r.x.tolist(), r.w_index) for r in a.records] == \
        [(r.x.tolist(), r.w_index) for r in b.records]


def test_string_and_enum_ids_agree():
    problem, contexts = logistic_problem(seed=0)
    a = baseline_run("BQO_EI", problem, contexts, FAST, 2)
    b = baseline_run(AlgorithmId.BQO_EI, problem, contexts, FAST, 2)
    assert all(np.array_equal(ra.x, rb.x) for ra, rb in zip(a.records, b.records))
