"""Exact Gaussian-process regression on joint (decision, context) points.

The posterior is refit from scratch with a Cholesky factorisation of
``K + noise_var * I``.  A small jitter ladder is tried before giving up.
Optionally the targets are standardised inside :func:`fit`; predictions are
always returned on the original scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import ContractViolation, NumericalError
from .kernel import LengthScales, cross_kernel, kernel_matrix

JITTER_LADDER = (1e-10, 1e-8, 1e-6)
# fits try the exact matrix first; jitter would bias the likelihood by ~|K^-1 y|^2 * jitter
FIT_LADDER = (0.0,) + JITTER_LADDER
GRID_CAP = 2048


def cholesky_with_jitter(A, ladder=JITTER_LADDER):
    """Lower Cholesky factor of ``A + jitter * I`` for the first jitter that works."""
    eye = np.eye(len(A))
    for jitter in ladder:
        try:
            return np.linalg.cholesky(A + jitter * eye if jitter else A), jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(f"Cholesky failed with jitter levels {[j for j in ladder if j]}")


@dataclass(frozen=True)
class GPPosterior:
    spec: object
    noise_var: float
    X: np.ndarray
    y: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    y_mean: float = 0.0
    y_scale: float = 1.0
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_obs(self):
        return len(self.y)

    def _cross(self, Z):
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[None, :]
        return Z, cross_kernel(self.spec, self.X, Z)

    def mean(self, Z):
        """Posterior mean at the rows of ``Z``."""
        Z, Ks = self._cross(Z)
        if self.n_obs == 0:
            return np.full(len(Z), self.y_mean)
        return self.y_mean + self.y_scale * (Ks.T @ self.alpha)

    def mean_cov(self, Z):
        """Posterior mean vector and full covariance matrix at the rows of ``Z``."""
        Z, Ks = self._cross(Z)
        prior = kernel_matrix(self.spec, Z)
        if self.n_obs == 0:
            return np.full(len(Z), self.y_mean), self.y_scale**2 * prior
        V = solve_triangular(self.chol, Ks, lower=True)
        mu = self.y_mean + self.y_scale * (Ks.T @ self.alpha)
        C = prior - V.T @ V
        C = 0.5 * (C + C.T)
        return mu, self.y_scale**2 * C

    def variance(self, Z):
        """Pointwise posterior variance (clamped at zero)."""
        Z, Ks = self._cross(Z)
        if self.n_obs == 0:
            return np.full(len(Z), self.y_scale**2)
        V = solve_triangular(self.chol, Ks, lower=True)
        var = 1.0 - np.einsum("ij,ij->j", V, V)
        return self.y_scale**2 * np.maximum(var, 0.0)


def fit(spec, noise_var, X, y, normalize=False):
    """Condition a zero-mean, unit-variance GP on observations ``(X, y)``.

    Parameters
    ----------
    spec : KernelSpec
    noise_var : float
        Observation noise variance, on the standardised scale when
        ``normalize`` is true.  Zero is accepted; the jitter ladder then
        provides the only regularisation.
    X : array, shape (t, d + m)
        Joint input points.
    y : array, shape (t,)
    normalize : bool
        Standardise ``y`` to zero mean and unit variance before fitting.
    """
    if noise_var < 0 or not np.isfinite(noise_var):
        raise ContractViolation(f"noise_var must be >= 0, got {noise_var}")
    X = np.asarray(X, dtype=float).reshape(-1, spec.dim)
    y = np.asarray(y, dtype=float).ravel()
    if len(X) != len(y):
        raise ContractViolation(f"{len(X)} inputs but {len(y)} targets")
    if not np.all(np.isfinite(y)):
        raise ContractViolation("targets must be finite")
    y_mean, y_scale = 0.0, 1.0
    if normalize and len(y):
        y_mean = float(y.mean())
        sd = float(y.std())
        y_scale = sd if sd > 0 else 1.0
    if len(y) == 0:
        return GPPosterior(spec, float(noise_var), X, y, np.zeros((0, 0)), np.zeros(0),
                           y_mean=y_mean, y_scale=y_scale)
    z = (y - y_mean) / y_scale
    K = kernel_matrix(spec, X) + noise_var * np.eye(len(y))
    L, jitter = cholesky_with_jitter(K, FIT_LADDER)
    alpha = cho_solve((L, True), z)
    return GPPosterior(spec, float(noise_var), X, y, L, alpha, jitter, y_mean, y_scale)


def posterior_mean_cov(gp, a, b):
    """Posterior mean at ``a`` and posterior covariance between ``a`` and ``b``."""
    mu, C = gp.mean_cov(np.vstack([a, b]))
    return float(mu[0]), float(C[0, 1])


def sample_on_grid(gp, grid, rng, size=None, cap=GRID_CAP):
    """Draw joint posterior samples on a finite grid of points.

    ``rng`` is a seed or :class:`numpy.random.Generator`.  Returns shape
    ``(G,)`` for a single draw or ``(size, G)``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim == 1:
        grid = grid[None, :]
    if len(grid) == 0:
        raise ContractViolation("sample_on_grid needs a nonempty grid")
    if len(grid) > cap:
        raise ContractViolation(f"grid of {len(grid)} points exceeds the cap of {cap}")
    rng = np.random.default_rng(rng)
    mu, C = gp.mean_cov(grid)
    scale2 = gp.y_scale**2
    L, _ = cholesky_with_jitter(C / scale2)
    shape = (len(grid),) if size is None else (len(grid), size)
    eps = rng.standard_normal(shape)
    draw = math.sqrt(scale2) * (L @ eps)
    return (mu + draw) if size is None else (mu[:, None] + draw).T


def _check_weights(weights, n):
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ContractViolation(f"expected {n} weights, got shape {w.shape}")
    if np.any(w < -1e-6) or abs(w.sum() - 1.0) > 1e-6:
        raise ContractViolation("weights are not on the probability simplex")
    return w


def context_points(x, contexts):
    """Joint points ``(x, w_i)`` for every context ``w_i``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    contexts = np.asarray(contexts, dtype=float)
    if contexts.ndim == 1:
        contexts = contexts[:, None]
    return np.hstack([np.tile(x, (len(contexts), 1)), contexts])


def quadrature_mean(gp, x, weights, contexts):
    """Posterior mean of the weighted average of ``f(x, .)`` over the contexts."""
    Z = context_points(x, contexts)
    w = _check_weights(weights, len(Z))
    return float(w @ gp.mean(Z))


def quadrature_variance(gp, x, weights, contexts):
    """Posterior variance of the weighted average of ``f(x, .)`` over the contexts."""
    Z = context_points(x, contexts)
    w = _check_weights(weights, len(Z))
    _, C = gp.mean_cov(Z)
    return max(float(w @ C @ w), 0.0)


def log_marginal_likelihood(gp):
    """Gaussian log evidence of the (standardised) targets."""
    if gp.n_obs == 0:
        raise ContractViolation("log marginal likelihood needs at least one observation")
    z = (gp.y - gp.y_mean) / gp.y_scale
    t = len(z)
    return float(
        -0.5 * z @ gp.alpha
        - np.log(np.diag(gp.chol)).sum()
        - 0.5 * t * math.log(2 * math.pi)
    )


def default_scale_grid():
    return np.geomspace(0.05, 2.0, 7)


def fit_with_grid_search(spec, noise_var, X, y, normalize=True,
                         scale_grid=None, noise_grid=None):
    """Fit after picking isotropic length scales by log marginal likelihood.

    The decision and context parts each get one shared length scale, chosen
    from ``scale_grid``; ``noise_grid`` optionally searches the noise too.
    Ties keep the first grid entry, so the choice is deterministic.
    """
    scale_grid = default_scale_grid() if scale_grid is None else scale_grid
    noise_grid = (noise_var,) if noise_grid is None else noise_grid
    d, m = spec.scales.d, spec.scales.m
    best, best_lml = None, -np.inf
    for theta in scale_grid:
        for psi in scale_grid:
            cand = spec.with_scales(LengthScales.isotropic(d, m, theta, psi))
            for nv in noise_grid:
                try:
                    gp = fit(cand, nv, X, y, normalize=normalize)
                except NumericalError:
                    continue
                lml = log_marginal_likelihood(gp)
                if lml > best_lml:
                    best, best_lml = gp, lml
    if best is None:
        raise NumericalError("no hyperparameter setting could be fitted")
    return best
