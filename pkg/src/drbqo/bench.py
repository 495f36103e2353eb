"""Synthetic problems, true-function regret oracles and the repetition runner."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .acquisition import ContextSet, RunConfig
from .baselines import AlgorithmId, baseline_run
from .errors import ConfigurationError, ContractViolation
from .robust_weights import ChiSquareBall, robust_values

CI96_Z = 1.7507  # two-sided 96% normal quantile
LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class SyntheticProblem:
    """Black-box ``f(x, w)`` to maximise; ``true_f`` is vectorised over rows."""

    name: str
    d: int
    m: int
    true_f: Callable
    domain: tuple
    noise_sd: float = 0.01

    def empirical_values(self, X, contexts):
        """Uniform average of ``f(x, .)`` over ``contexts`` for each row of ``X``."""
        return self.table(X, contexts).mean(axis=1)

    def table(self, X, contexts):
        X = np.atleast_2d(X)
        C = np.asarray(contexts)
        N, n = len(X), len(C)
        vals = self.true_f(np.repeat(X, n, axis=0), np.tile(C, (N, 1)))
        return np.asarray(vals).reshape(N, n)


def logistic_f(X, W):
    """``-log(1 + exp(x @ w))`` row-wise, without overflow."""
    s = np.einsum("ij,ij->i", np.atleast_2d(X), np.atleast_2d(W))
    return -(np.maximum(s, 0.0) + np.log1p(np.exp(-np.abs(s))))


def logistic_problem(d=2, n=10, seed=0, domain=(-3.0, 3.0), noise_sd=0.01):
    """Logistic test problem with ``n`` standard-normal contexts drawn from ``seed``."""
    if d < 1:
        raise ContractViolation("d must be >= 1")
    lo, hi = domain
    problem = SyntheticProblem("logistic", d, d, logistic_f,
                               (np.full(d, float(lo)), np.full(d, float(hi))), noise_sd)
    contexts = ContextSet(np.random.default_rng(seed).standard_normal((n, d)))
    return problem, contexts


def branin(Z):
    x1, x2 = Z[:, 0], Z[:, 1]
    b = 5.1 / (4 * math.pi**2)
    c = 5 / math.pi
    t = 1 / (8 * math.pi)
    return (x2 - b * x1**2 + c * x1 - 6) ** 2 + 10 * (1 - t) * np.cos(x1) + 10


def levy(Z):
    w = 1 + (Z - 1) / 4
    head = np.sin(math.pi * w[:, 0]) ** 2
    mid = ((w[:, :-1] - 1) ** 2 * (1 + 10 * np.sin(math.pi * w[:, :-1] + 1) ** 2)).sum(axis=1)
    tail = (w[:, -1] - 1) ** 2 * (1 + np.sin(2 * math.pi * w[:, -1]) ** 2)
    return head + mid + tail


_H3_A = np.array([[3.0, 10, 30], [0.1, 10, 35], [3.0, 10, 30], [0.1, 10, 35]])
_H3_P = 1e-4 * np.array([[3689, 1170, 2673], [4699, 4387, 7470],
                         [1091, 8732, 5547], [381, 5743, 8828]])
_H3_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])


def hartmann3(Z):
    inner = (_H3_A[None] * (Z[:, None, :] - _H3_P[None]) ** 2).sum(axis=2)
    return -(_H3_ALPHA * np.exp(-inner)).sum(axis=1)


# name -> (function, box builder given d, fixed dimension or None)
BASE_FUNCTIONS = {
    "branin": (branin, lambda d: (np.array([-5.0, 0.0]), np.array([10.0, 15.0])), 2),
    "levy": (levy, lambda d: (np.full(d, -10.0), np.full(d, 10.0)), None),
    "hartmann3": (hartmann3, lambda d: (np.zeros(3), np.ones(3)), 3),
}


def shifted_problem(base, d=None, n=10, seed=0, context_sd=0.1, noise_sd=0.01):
    """Shifted benchmark ``f(x, w) = -base(x + w)`` on the unit cube.

    ``x + w`` is clamped to the unit cube and mapped affinely onto the base
    function's usual box; the sign flip turns the usual minimisation
    benchmark into a maximisation problem.
    """
    if base not in BASE_FUNCTIONS:
        raise ConfigurationError(f"unknown base function {base!r}")
    func, box, fixed_d = BASE_FUNCTIONS[base]
    d = fixed_d if d is None else d
    if fixed_d is not None and d != fixed_d:
        raise ConfigurationError(f"{base} is defined for d = {fixed_d}")
    blo, bhi = box(d)

    def true_f(X, W):
        U = np.clip(np.atleast_2d(X) + np.atleast_2d(W), 0.0, 1.0)
        return -func(blo + (bhi - blo) * U)

    problem = SyntheticProblem(base, d, d, true_f, (np.zeros(d), np.ones(d)), noise_sd)
    contexts = ContextSet(context_sd * np.random.default_rng(seed).standard_normal((n, d)))
    return problem, contexts


def make_problem(name, d=2, n=10, seed=0, domain=(-3.0, 3.0), noise_sd=0.01, context_sd=0.1):
    if name == "logistic":
        return logistic_problem(d, n, seed, domain, noise_sd)
    if name in BASE_FUNCTIONS:
        fixed_d = BASE_FUNCTIONS[name][2]
        return shifted_problem(name, fixed_d or d, n, seed, context_sd, noise_sd)
    raise ConfigurationError(f"unknown problem {name!r}")


@dataclass
class RegretOracle:
    eval_grid: np.ndarray
    axes: list
    contexts: np.ndarray
    ball: ChiSquareBall
    robust_values: np.ndarray
    x_star: np.ndarray
    g_star: float

    def nearest_index(self, X):
        X = np.atleast_2d(X)
        idx = np.zeros(len(X), dtype=int)
        stride = 1
        for j in reversed(range(len(self.axes))):
            ax = self.axes[j]
            k = np.clip(np.rint((X[:, j] - ax[0]) / (ax[1] - ax[0])), 0, len(ax) - 1)
            idx += stride * k.astype(int)
            stride *= len(ax)
        return idx

    def regret(self, X):
        """Robust-value regret of each row of ``X`` (snapped to the grid)."""
        return self.g_star - self.robust_values[self.nearest_index(X)]

    def robust_value(self, X):
        return self.robust_values[self.nearest_index(X)]


def build_regret_oracle(problem, contexts, ball, grid_resolution=None, chunk=20000):
    """Tabulate the true robust value on a dense grid over the decision box."""
    d = problem.d
    if d > 3:
        raise ContractViolation("dense regret grids are limited to d <= 3")
    if grid_resolution is None:
        grid_resolution = {1: 1001, 2: 101, 3: 41}[d]
    lo, hi = problem.domain
    axes = [np.linspace(lo[j], hi[j], grid_resolution) for j in range(d)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    C = np.asarray(contexts)
    values = np.concatenate([
        robust_values(problem.table(grid[i:i + chunk], C), ball)
        for i in range(0, len(grid), chunk)
    ])
    best = int(np.argmax(values))
    return RegretOracle(grid, axes, C, ball, values, grid[best], float(values[best]))


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "logistic"
    d: int = 2
    n: int = 10
    noise_sd: float = 0.01
    domain: tuple = (-3.0, 3.0)
    context_sd: float = 0.1
    problem_seed: int = None
    algorithms: tuple = ("DRBQO", "BQO_TS", "BQO_EI")
    rhos: tuple = (1.0,)
    repetitions: int = 10
    master_seed: int = 0
    run: RunConfig = field(default_factory=RunConfig)
    regret_grid: int = None
    jobs: int = 1

    def problem_and_contexts(self):
        seed = self.master_seed if self.problem_seed is None else self.problem_seed
        return make_problem(self.problem, self.d, self.n, seed, self.domain,
                            self.noise_sd, self.context_sd)


@dataclass
class RunResult:
    algorithm: str
    rho: float
    repetition: int
    seed: int
    trace: object = None
    regret: np.ndarray = None
    empirical: np.ndarray = None
    error: str = None

    @property
    def ok(self):
        return self.error is None


def repetition_seed(master_seed, repetition):
    """Seed shared by every algorithm within one repetition."""
    return int(np.random.SeedSequence([master_seed, repetition]).generate_state(1)[0])


def _job(args):
    algorithm, rho, repetition, cfg = args
    problem, contexts = cfg.problem_and_contexts()
    seed = repetition_seed(cfg.master_seed, repetition)
    run_cfg = replace(cfg.run, rho=rho)
    try:
        trace = baseline_run(algorithm, problem, contexts, run_cfg, seed)
        return algorithm, rho, repetition, seed, trace, None
    except Exception as exc:  # a failed repetition is reported, not fatal
        return algorithm, rho, repetition, seed, None, f"{type(exc).__name__}: {exc}"


def run_experiment(cfg, jobs=None):
    """Run every (algorithm, rho, repetition) cell and score it.

    Algorithms whose behaviour does not depend on ``rho`` are run once per
    repetition and scored against every ``rho``.  Returns ``(results,
    summary)`` where ``summary`` is a list of dicts, one per (algorithm,
    rho, iteration).
    """
    for a in cfg.algorithms:
        AlgorithmId.parse(a)
    problem, contexts = cfg.problem_and_contexts()
    oracles = {rho: build_regret_oracle(problem, contexts, ChiSquareBall(len(contexts), rho),
                                        cfg.regret_grid)
               for rho in cfg.rhos}
    tasks = []
    for a in cfg.algorithms:
        rhos = cfg.rhos if AlgorithmId(a).uses_rho else (cfg.rhos[0],)
        for rho in rhos:
            for r in range(cfg.repetitions):
                tasks.append((a, rho, r, cfg))
    jobs = cfg.jobs if jobs is None else jobs
    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_job, tasks))
    else:
        outputs = [_job(t) for t in tasks]

    done = {(a, rho, r): (seed, trace, err) for a, rho, r, seed, trace, err in outputs}
    results = []
    C = np.asarray(contexts)
    for a in cfg.algorithms:
        for rho in cfg.rhos:
            key_rho = rho if AlgorithmId(a).uses_rho else cfg.rhos[0]
            for r in range(cfg.repetitions):
                seed, trace, err = done[(a, key_rho, r)]
                res = RunResult(a, rho, r, seed, trace, error=err)
                if trace is not None:
                    reports = np.array([rec.report_x for rec in trace.records]).reshape(-1, problem.d)
                    res.regret = oracles[rho].regret(reports) if len(reports) else np.zeros(0)
                    res.empirical = (problem.empirical_values(reports, C)
                                     if len(reports) else np.zeros(0))
                results.append(res)
    return results, summarize(results), oracles


def ci96(values):
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return 0.0
    return float(CI96_Z * values.std(ddof=1) / math.sqrt(len(values)))


def summarize(results):
    """Per-iteration mean and 96% half-widths of both metrics, over successful runs."""
    cells = {}
    for res in results:
        if res.ok:
            cells.setdefault((res.algorithm, res.rho), []).append(res)
    rows = []
    for (a, rho), runs in cells.items():
        T = min(len(r.regret) for r in runs)
        for t in range(T):
            reg = [r.regret[t] for r in runs]
            emp = [r.empirical[t] for r in runs]
            mean_reg = float(np.mean(reg))
            rows.append({
                "algorithm": a,
                "rho": rho,
                "iteration": t + 1,
                "mean_regret": mean_reg,
                "ci96_regret": ci96(reg),
                "mean_empirical": float(np.mean(emp)),
                "ci96_empirical": ci96(emp),
                "log10_mean_regret": math.log10(max(mean_reg, LOG_FLOOR)),
            })
    return rows


def final_metrics(results, algorithm, rho):
    """Per-repetition final regret and empirical value for one cell, ordered by repetition."""
    runs = sorted((r for r in results if r.algorithm == algorithm and r.rho == rho and r.ok),
                  key=lambda r: r.repetition)
    return (np.array([r.regret[-1] for r in runs]),
            np.array([r.empirical[-1] for r in runs]))
