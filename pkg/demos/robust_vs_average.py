"""Robust versus plain-average optimisation on the logistic problem.

``f(x, w) = -log(1 + exp(x @ w))`` with ten Gaussian contexts.  The robust
run optimises the worst case over a chi-square ball, the baseline the plain
average.  Run with ``python demos/robust_vs_average.py`` (about a minute).
"""

# %%
import numpy as np

from drbqo import ChiSquareBall, RunConfig, baseline_run, build_regret_oracle, logistic_problem

problem, contexts = logistic_problem(d=2, n=10, seed=0)
rho = 1.0
oracle = build_regret_oracle(problem, contexts, ChiSquareBall(10, rho))
print("best robust point on the grid", oracle.x_star, "value", round(oracle.g_star, 4))

# %%
cfg = RunConfig(T=30, rho=rho)
for name in ("DRBQO", "BQO_TS"):
    trace = baseline_run(name, problem, contexts, cfg, seed=1)
    x = trace.report_x
    print(f"{name:7s} report {np.round(x, 3)}  regret {oracle.regret(x)[0]:.4f}  "
          f"average value {problem.empirical_values(x, contexts)[0]:+.4f}")
