"""Worst-case weights over a chi-square ball.

Run with ``python demos/worst_case_weights.py``.
"""

# %%
import numpy as np

from drbqo import ChiSquareBall, solve

# Five losses, one per context.  A radius of 0 pins the weights to uniform.
l = np.array([0.2, -0.4, 1.1, 0.0, 0.6])
for rho in (0.0, 0.1, 0.5, 1.0, 2.0):
    sol = solve(l, ChiSquareBall(len(l), rho))
    print(f"rho={rho:<4} value={sol.value:+.4f}  p={np.round(sol.p, 3)}")

# %%
# The value slides from mean(l) down to min(l); past (n - 1) / 2 the ball is
# the whole simplex and all mass sits on the smallest loss.
print("mean", l.mean(), "min", l.min())

# %%
# Two contexts at radius 0.25: the boundary solution has a closed form.
sol = solve(np.array([0.0, 1.0]), ChiSquareBall(2, 0.25))
print(sol.p, (2 + np.sqrt(2)) / 4, sol.kkt_residuals([0.0, 1.0], ChiSquareBall(2, 0.25)))
