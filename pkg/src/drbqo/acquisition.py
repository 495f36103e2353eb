"""Posterior-sampling loop for distributionally robust quadrature optimisation.

Each iteration draws one joint posterior sample on ``candidates x contexts``,
picks the candidate whose worst-case weighted average (over the chi-square
ball) is largest, queries the context with the highest posterior variance at
that candidate, and refits.  The same loop drives the baselines in
:mod:`drbqo.baselines`; only the decision rule and the report rule differ.

Inputs are rescaled to the unit cube before they reach the GP: decisions by
the problem's box, contexts by the bounding box of the context set.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, ContractViolation, NumericalError
from .gp import GRID_CAP, fit, fit_with_grid_search, sample_on_grid
from .kernel import KernelSpec, LengthScales
from .robust_weights import ChiSquareBall, robust_values

ROBUST = "robust"
EMPIRICAL = "empirical"


@dataclass(frozen=True)
class ContextSet:
    """The fixed context samples ``w_1..w_n`` as an ``(n, m)`` array."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or len(v) < 2:
            raise ContractViolation("a context set needs at least two context vectors")
        if not np.all(np.isfinite(v)):
            raise ContractViolation("contexts must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    @property
    def m(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class CandidatePolicy:
    """How decision candidates are generated each iteration.

    ``"fresh"`` draws ``count`` new uniform points per iteration, ``"fixed"``
    draws them once per run.  Previously visited decisions are always added.
    """

    mode: str = "fresh"
    count: int = 200
    cap: int = GRID_CAP

    def __post_init__(self):
        if self.mode not in ("fresh", "fixed"):
            raise ConfigurationError(f"unknown candidate mode {self.mode!r}")
        if self.count < 1:
            raise ConfigurationError("candidate count must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    T: int = 60
    rho: float = 1.0
    init_size: Optional[int] = None
    kernel: str = "se"
    nu: float = 2.5
    theta: float = 0.2
    psi: float = 0.2
    learn: bool = True
    noise_var: float = 1e-3
    candidates: CandidatePolicy = field(default_factory=CandidatePolicy)
    w_selection: str = "variance"

    def __post_init__(self):
        if self.T < 0:
            raise ConfigurationError("T must be >= 0")
        if self.w_selection not in ("variance", "random"):
            raise ConfigurationError(f"unknown w selection {self.w_selection!r}")


@dataclass(frozen=True)
class IterationRecord:
    t: int
    x: np.ndarray
    w_index: int
    y: float
    report_x: np.ndarray
    robust_value_at_report: float


@dataclass
class RunTrace:
    """Everything a run produced: the initial design, per-iteration records
    and the final report point."""

    initial_x: np.ndarray
    initial_w: np.ndarray
    initial_y: np.ndarray
    records: list
    report_x: np.ndarray
    wall_time: float = 0.0

    @property
    def queries(self):
        return [(r.x, r.w_index) for r in self.records]


def _argmax_first(values):
    return int(np.argmax(values))


def drbqo_select_x(sample, contexts, ball, candidates):
    """Index of the candidate whose sampled worst-case average is largest.

    ``sample`` holds the sampled function on ``candidates x contexts`` as an
    array of shape ``(len(candidates), n)`` (or flat, candidate-major).
    """
    L = np.asarray(sample, dtype=float).reshape(len(candidates), len(contexts))
    return _argmax_first(robust_values(L, ball))


def select_w_max_variance(gp, x, contexts):
    """Index of the context with the largest posterior variance at ``x``."""
    Z = np.hstack([np.tile(np.atleast_1d(x), (len(contexts), 1)), np.asarray(contexts)])
    return _argmax_first(gp.variance(Z))


def report_point(gp, visited, contexts, ball, mode=ROBUST):
    """Index into ``visited`` of the report point.

    ``ROBUST`` maximises the worst-case average of the posterior mean over the
    ball; ``EMPIRICAL`` maximises its plain average over the contexts.
    """
    visited = np.atleast_2d(np.asarray(visited, dtype=float))
    if len(visited) == 0:
        raise ContractViolation("report_point needs at least one visited decision")
    M = posterior_mean_table(gp, visited, contexts)
    if mode == ROBUST:
        scores = robust_values(M, ball)
    elif mode == EMPIRICAL:
        scores = M.mean(axis=1)
    else:
        raise ConfigurationError(f"unknown report mode {mode!r}")
    return _argmax_first(scores)


def joint_grid(candidates, contexts):
    """Candidate-major Cartesian product of decisions and contexts."""
    candidates = np.atleast_2d(candidates)
    contexts = np.asarray(contexts)
    N, n = len(candidates), len(contexts)
    return np.hstack([np.repeat(candidates, n, axis=0), np.tile(contexts, (N, 1))])


def posterior_mean_table(gp, candidates, contexts):
    """Posterior mean at every (candidate, context) pair, shape ``(N, n)``."""
    candidates = np.atleast_2d(candidates)
    return gp.mean(joint_grid(candidates, contexts)).reshape(len(candidates), len(contexts))


class _Scaler:
    """Affine maps from problem coordinates to the unit cube."""

    def __init__(self, domain, contexts):
        lo, hi = (np.asarray(b, dtype=float) for b in domain)
        self.lo, self.width = lo, hi - lo
        c = np.asarray(contexts)
        self.wlo = c.min(axis=0)
        wspan = c.max(axis=0) - self.wlo
        self.wspan = np.where(wspan > 0, wspan, 1.0)

    def x(self, x):
        return (np.asarray(x) - self.lo) / self.width

    def w(self, w):
        return (np.asarray(w) - self.wlo) / self.wspan


@dataclass
class LoopState:
    """What a decision rule sees at iteration ``t``."""

    t: int
    gp: object
    candidates: np.ndarray  # unit-cube coordinates
    contexts: np.ndarray  # unit-cube coordinates
    ball: ChiSquareBall
    visited: np.ndarray  # unit-cube coordinates
    rng: np.random.Generator
    grid_cap: int


def robust_ts_rule(state):
    sample = sample_on_grid(state.gp, joint_grid(state.candidates, state.contexts),
                            state.rng, cap=state.grid_cap)
    return drbqo_select_x(sample, state.contexts, state.ball, state.candidates)


def default_init_size(d):
    return 12 if d == 2 else 6 * d


def run_loop(problem, contexts, config, seed, select_rule: Callable, report_mode):
    """Shared optimisation loop.

    ``problem`` needs ``d``, ``domain`` (pair of bound vectors), ``noise_sd``
    and ``true_f(X, W)``.  Random streams for the initial design, candidate
    generation, posterior samples, observation noise and random context
    selection are spawned from ``seed``; none of them depends on the
    decision rule, so two rules that pick the same points see identical
    randomness.
    """
    start = time.perf_counter()
    contexts = ContextSet(np.asarray(contexts))
    C = contexts.values
    n = len(C)
    ball = ChiSquareBall(n, config.rho)
    d = problem.d
    lo, hi = (np.asarray(b, dtype=float) for b in problem.domain)
    scaler = _Scaler(problem.domain, C)
    Cn = scaler.w(C)

    init_rng, cand_rng, sample_rng, noise_rng, w_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)
    )
    base_spec = KernelSpec(LengthScales.isotropic(d, contexts.m, config.theta, config.psi),
                           config.kernel, config.nu)
    policy = config.candidates
    if policy.count * n > policy.cap:
        raise ConfigurationError(
            f"{policy.count} candidates x {n} contexts exceeds the grid cap {policy.cap}")

    def observe(x, wi):
        f = float(problem.true_f(x[None, :], C[wi][None, :])[0])
        y = f + problem.noise_sd * float(noise_rng.standard_normal())
        if not np.isfinite(y):
            raise NumericalError(f"non-finite observation at x={x}, w index {wi}")
        return y

    def refit(Xs, Ws, ys):
        Z = np.hstack([scaler.x(np.array(Xs)), Cn[np.array(Ws)]])
        if config.learn:
            return fit_with_grid_search(base_spec, config.noise_var, Z, ys, normalize=True)
        return fit(base_spec, config.noise_var, Z, ys, normalize=True)

    def report(gp, Xs):
        idx = report_point(gp, scaler.x(np.array(Xs)), Cn, ball, report_mode)
        x_rep = np.array(Xs[idx])
        M = posterior_mean_table(gp, scaler.x(x_rep)[None, :], Cn)
        return x_rep, float(robust_values(M, ball)[0])

    k0 = config.init_size if config.init_size is not None else default_init_size(d)
    init_x = lo + (hi - lo) * init_rng.random((k0, d))
    init_w = init_rng.integers(0, n, size=k0)
    Xs = [x for x in init_x]
    Ws = [int(w) for w in init_w]
    ys = [observe(x, w) for x, w in zip(Xs, Ws)]
    gp = refit(Xs, Ws, ys)
    report_x, _ = report(gp, Xs) if Xs else (None, None)

    fixed_cands = None
    if policy.mode == "fixed":
        fixed_cands = lo + (hi - lo) * cand_rng.random((policy.count, d))

    records = []
    for t in range(1, config.T + 1):
        visited = np.unique(np.array(Xs), axis=0) if Xs else np.zeros((0, d))
        room = max(policy.cap // n - len(visited), 1)
        if fixed_cands is None:
            fresh = lo + (hi - lo) * cand_rng.random((policy.count, d))
        else:
            fresh = fixed_cands
        fresh = fresh[:room]
        cands = np.vstack([fresh, visited]) if len(visited) else fresh
        state = LoopState(t, gp, scaler.x(cands), Cn, ball, scaler.x(visited),
                          sample_rng, policy.cap)
        xt = np.array(cands[select_rule(state)])
        if config.w_selection == "variance":
            wt = select_w_max_variance(gp, scaler.x(xt), Cn)
        else:
            wt = int(w_rng.integers(0, n))
        yt = observe(xt, wt)
        Xs.append(xt)
        Ws.append(wt)
        ys.append(yt)
        gp = refit(Xs, Ws, ys)
        report_x, rv = report(gp, Xs)
        records.append(IterationRecord(t, xt, wt, yt, report_x, rv))

    return RunTrace(init_x, init_w, np.array(ys[:k0]), records, report_x,
                    time.perf_counter() - start)


def drbqo_run(problem, contexts, config, seed):
    """Distributionally robust posterior-sampling optimisation.

    Returns a :class:`RunTrace`; deterministic for a given ``seed``.
    """
    return run_loop(problem, contexts, config, seed, robust_ts_rule, ROBUST)
