"""GP posterior over (decision, context) pairs and its quadrature moments.

Run with ``python demos/gp_quadrature.py``.
"""

# %%
import numpy as np

from drbqo import KernelSpec, LengthScales, fit, quadrature_mean, quadrature_variance, sample_on_grid

rng = np.random.default_rng(0)
spec = KernelSpec(LengthScales((0.3,), (0.3,)))  # one decision dim, one context dim

# A handful of noisy observations of f(x, w) = sin(6 x) * (1 - w)
X = rng.uniform(0, 1, (15, 2))
y = np.sin(6 * X[:, 0]) * (1 - X[:, 1]) + 0.01 * rng.standard_normal(15)
gp = fit(spec, 1e-4, X, y)

# %%
contexts = np.linspace(0, 1, 6)[:, None]
uniform = np.full(6, 1 / 6)
tilted = np.array([0.0, 0.0, 0.1, 0.2, 0.3, 0.4])
for x in (0.1, 0.25, 0.6):
    xv = np.array([x])
    print(f"x={x}: mean(uniform)={quadrature_mean(gp, xv, uniform, contexts):+.3f} "
          f"mean(tilted)={quadrature_mean(gp, xv, tilted, contexts):+.3f} "
          f"sd={np.sqrt(quadrature_variance(gp, xv, uniform, contexts)):.3f}")

# %%
# Joint posterior draws on a small grid
grid = np.column_stack([np.full(6, 0.25), contexts[:, 0]])
draws = sample_on_grid(gp, grid, rng, size=3)
print(np.round(draws, 3))
