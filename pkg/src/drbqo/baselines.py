"""Non-robust comparison algorithms sharing the GP loop of :mod:`drbqo.acquisition`."""

from __future__ import annotations

from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular
from scipy.stats import norm

from .acquisition import (
    EMPIRICAL,
    ROBUST,
    joint_grid,
    posterior_mean_table,
    robust_ts_rule,
    run_loop,
)
from .errors import ConfigurationError
from .gp import quadrature_mean, quadrature_variance, sample_on_grid
from .kernel import cross_kernel


class AlgorithmId(str, Enum):
    DRBQO = "DRBQO"
    EmpDRBQO = "EmpDRBQO"
    BQO_TS = "BQO_TS"
    MaximinBQO_TS = "MaximinBQO_TS"
    BQO_EI = "BQO_EI"
    MaximinBQO_EI = "MaximinBQO_EI"

    @classmethod
    def parse(cls, name):
        try:
            return cls(name)
        except ValueError:
            raise ConfigurationError(f"unknown algorithm id {name!r}") from None

    @property
    def report_mode(self):
        if self in (AlgorithmId.DRBQO, AlgorithmId.MaximinBQO_TS, AlgorithmId.MaximinBQO_EI):
            return ROBUST
        return EMPIRICAL

    @property
    def uses_rho(self):
        """Whether the query trace or report point depends on the ball radius."""
        return self not in (AlgorithmId.BQO_TS, AlgorithmId.BQO_EI)


def bqo_ts_select_x(sample, contexts, candidates):
    """Index of the candidate with the largest sampled average over contexts."""
    L = np.asarray(sample, dtype=float).reshape(len(candidates), len(contexts))
    return int(np.argmax(L.mean(axis=1)))


def expected_improvement(mu, s, incumbent):
    """Closed-form EI for a Gaussian with mean ``mu`` and sd ``s`` (vectorised)."""
    mu = np.asarray(mu, dtype=float)
    s = np.asarray(s, dtype=float)
    gain = mu - incumbent
    flat = s <= 1e-12
    safe = np.where(flat, 1.0, s)
    z = gain / safe
    ei = gain * norm.cdf(z) + safe * norm.pdf(z)
    return np.where(flat, np.maximum(gain, 0.0), np.maximum(ei, 0.0))


def quadrature_ei(gp, x, contexts, incumbent):
    """EI of the uniform-weight quadrature of ``f(x, .)`` over the contexts."""
    n = len(contexts)
    w = np.full(n, 1.0 / n)
    mu = quadrature_mean(gp, x, w, contexts)
    s = np.sqrt(quadrature_variance(gp, x, w, contexts))
    return float(expected_improvement(mu, s, incumbent))


def _quadrature_moments(gp, candidates, contexts):
    """Uniform-quadrature posterior mean and variance for many candidates at once."""
    candidates = np.atleast_2d(candidates)
    N, n = len(candidates), len(contexts)
    Z = joint_grid(candidates, contexts)
    mu = gp.mean(Z).reshape(N, n).mean(axis=1)
    # the prior block over contexts is the same for every candidate (stationary kernel)
    block = cross_kernel(gp.spec, Z[:n], Z[:n])
    prior = block.sum() / n**2
    if gp.n_obs == 0:
        return mu, np.full(N, gp.y_scale**2 * prior)
    Ks = cross_kernel(gp.spec, gp.X, Z)
    V = solve_triangular(gp.chol, Ks, lower=True).reshape(len(gp.X), N, n).mean(axis=2)
    var = prior - np.einsum("ij,ij->j", V, V)
    return mu, gp.y_scale**2 * np.maximum(var, 0.0)


def ei_rule(state):
    mu, var = _quadrature_moments(state.gp, state.candidates, state.contexts)
    M = posterior_mean_table(state.gp, state.visited, state.contexts)
    incumbent = float(M.mean(axis=1).max())
    ei = expected_improvement(mu, np.sqrt(var), incumbent)
    return int(np.argmax(ei))


def empirical_ts_rule(state):
    sample = sample_on_grid(state.gp, joint_grid(state.candidates, state.contexts),
                            state.rng, cap=state.grid_cap)
    return bqo_ts_select_x(sample, state.contexts, state.candidates)


_RULES = {
    AlgorithmId.DRBQO: robust_ts_rule,
    AlgorithmId.EmpDRBQO: robust_ts_rule,
    AlgorithmId.BQO_TS: empirical_ts_rule,
    AlgorithmId.MaximinBQO_TS: empirical_ts_rule,
    AlgorithmId.BQO_EI: ei_rule,
    AlgorithmId.MaximinBQO_EI: ei_rule,
}


def baseline_run(algorithm, problem, contexts, config, seed):
    """Run any algorithm id through the shared loop; see :class:`AlgorithmId`."""
    algorithm = AlgorithmId.parse(algorithm) if isinstance(algorithm, str) else algorithm
    return run_loop(problem, contexts, config, seed, _RULES[algorithm], algorithm.report_mode)
