"""Worst-case weights over a chi-square ball around the uniform distribution.

The inner problem is ``min_p p @ l`` over

    {p in simplex : n * ||p||^2 <= 2 * rho + 1}

which is the set of reweightings of ``n`` fixed contexts whose chi-square
divergence from the empirical (uniform) distribution is at most ``rho``.

For a multiplier ``lam > 0`` on the ball constraint the stationarity
conditions give ``lam * n * p_i = max(-l_i - eta, 0)`` where ``eta`` fixes
the total mass.  ``n * ||p(lam)||^2`` is decreasing in ``lam``, so the
optimal multiplier is found by bisection; once the active set is known the
multiplier also has a closed form, which is used to polish the bisection
result.

Everything here operates row-wise on 2-D arrays as well, so a whole batch of
loss vectors (one per decision candidate) is solved in one vectorised pass.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, NumericalError

MAX_BISECTION_ITERS = 200


@dataclass(frozen=True)
class ChiSquareBall:
    """Chi-square ball of radius ``rho`` around the uniform weights on ``n`` points."""

    n: int
    rho: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ContractViolation(f"n must be a positive integer, got {self.n}")
        if not (np.isfinite(self.rho) and self.rho >= 0):
            raise ContractViolation(f"rho must be finite and >= 0, got {self.rho}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def capacity(self):
        """Upper bound on ``n * ||p||^2``."""
        return 2.0 * self.rho + 1.0

    @property
    def is_singleton(self):
        # a radius below the rounding of the capacity leaves only the uniform point
        return self.rho == 0 or self.capacity == 1.0 or self.n == 1

    @property
    def is_full_simplex(self):
        return self.rho >= (self.n - 1) / 2.0

    def contains(self, p, tol=1e-9):
        p = np.asarray(p, dtype=float)
        return bool(
            p.shape == (self.n,)
            and np.all(p >= -tol)
            and abs(p.sum() - 1.0) <= tol
            and self.n * (p @ p) <= self.capacity + tol
        )


@dataclass(frozen=True)
class RobustSolution:
    p: np.ndarray
    lam: float
    eta: float
    active: tuple
    value: float

    def kkt_residuals(self, l, ball):
        """Residuals of the optimality system; all should be ~0 at a solution."""
        l = np.asarray(l, dtype=float)
        p = self.p
        sq = ball.n * float(p @ p)
        support = p > 1e-9
        stationarity = np.abs(ball.n * self.lam * p - (-l - self.eta))[support]
        return {
            "normalization": abs(p.sum() - 1.0),
            "feasibility": max(sq - ball.capacity, 0.0),
            "complementary_slackness": abs(self.lam * (ball.capacity - sq)),
            "stationarity": float(stationarity.max()) if stationarity.size else 0.0,
            "negativity": max(-float(p.min()), 0.0),
        }


def _check_losses(l):
    l = np.asarray(l, dtype=float)
    if l.ndim != 1 or l.size == 0:
        raise ContractViolation(f"losses must be a nonempty vector, got shape {l.shape}")
    if not np.all(np.isfinite(l)):
        raise ContractViolation("losses must be finite")
    return l


def _eta_rows(L, lam):
    """Sorted-prefix search for ``eta`` given ``lam > 0`` (row-wise)."""
    N, n = L.shape
    s = np.sort(L, axis=1)
    k = np.arange(1, n + 1)
    eta_k = (-np.cumsum(s, axis=1) - n * lam[:, None]) / k
    ok = s + eta_k <= 0.0
    # the admissible prefixes are 1..K; K = 1 always qualifies for lam > 0
    K = n - np.argmax(ok[:, ::-1], axis=1)
    if not np.all(ok[np.arange(N), K - 1]):
        raise NumericalError("no consistent active set; lam must be positive")
    return eta_k[np.arange(N), K - 1]


def _weights_rows(L, lam):
    n = L.shape[1]
    eta = _eta_rows(L, lam)
    p = np.maximum(-L - eta[:, None], 0.0) / (n * lam[:, None])
    return p, eta


def weights_given_lambda(l, ball, lam):
    """Weights, ``eta`` and active set for a fixed multiplier ``lam > 0``.

    The active set is ``{i : l_i <= -eta}``; indices with ``l_i == -eta``
    are included (they carry zero weight).
    """
    l = _check_losses(l)
    if len(l) != ball.n:
        raise ContractViolation(f"expected {ball.n} losses, got {len(l)}")
    if not lam > 0:
        raise ContractViolation(f"lam must be positive, got {lam}")
    p, eta = _weights_rows(l[None, :], np.array([float(lam)]))
    eta = float(eta[0])
    active = tuple(int(i) for i in np.flatnonzero(l <= -eta))
    return p[0], eta, active


def lambda_upper_bound(l, ball):
    """Closed-form upper bound on the optimal multiplier.

    The bound is stated for the raw losses; it is guaranteed only when
    ``min(l) >= 0``.  :func:`solve` applies it to ``l - min(l)``, which
    leaves the optimal multiplier unchanged.
    """
    if ball.rho <= 0:
        raise ContractViolation("the multiplier bound needs rho > 0")
    l = np.asarray(l, dtype=float)
    lmin, lmax = l.min(axis=-1), l.max(axis=-1)
    root = math.sqrt(1.0 + 2.0 * ball.rho)
    # root - 1 written without cancellation for small rho
    first = (-lmin + l.sum(axis=-1)) * (root + 1.0) / (2.0 * ball.rho)
    second = (-lmin + lmax) / root
    return np.maximum(first, second) if np.ndim(first) else float(max(first, second))


def _polish(L, lam, ball):
    """Exact multiplier for the active set found at ``lam``.

    On a fixed active set A the weights are ``1/|A| + (mean_A - l_i)/(n lam)``
    so ``n ||p||^2 = n/|A| + S_A / (n lam^2)`` with ``S_A`` the centred sum of
    squares over A; solving for the capacity gives ``lam`` directly.
    """
    n = ball.n
    eta = _eta_rows(L, lam)
    A = L <= -eta[:, None]
    size = A.sum(axis=1)
    mean_A = np.where(A, L, 0.0).sum(axis=1) / size
    S = np.where(A, (L - mean_A[:, None]) ** 2, 0.0).sum(axis=1)
    room = ball.capacity - n / size
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = np.sqrt(S / (n * room))
    good = (room > 0) & (S > 0) & np.isfinite(exact) & (exact > 0)
    return np.where(good, exact, lam), good


def _solve_rows(L, ball, eps=None):
    """Row-wise solver; returns ``(p, lam, eta)`` arrays."""
    N, n = L.shape
    uniform = np.full((N, n), 1.0 / n)
    if ball.is_singleton:
        return uniform, np.zeros(N), -L.mean(axis=1)

    lmin = L.min(axis=1)
    if ball.is_full_simplex:
        p = np.zeros((N, n))
        p[np.arange(N), np.argmin(L, axis=1)] = 1.0
        return p, np.zeros(N), -lmin

    p = uniform.copy()
    lam = np.zeros(N)
    eta = -L.mean(axis=1)
    spread = L.max(axis=1) - lmin
    rows = np.flatnonzero(spread >= 1e-12)
    if rows.size == 0:
        return p, lam, eta

    Ls = L[rows] - lmin[rows, None]
    bound = lambda_upper_bound(Ls, ball)
    if eps is None:
        eps = 1e-10 * (1.0 + bound)
    else:
        eps = np.broadcast_to(np.asarray(eps, dtype=float), bound.shape)
    lo = 1e-12 * (1.0 + bound)
    hi = bound.copy()

    def excess(lam_):
        q, _ = _weights_rows(Ls, lam_)
        return n * np.einsum("ij,ij->i", q, q) - ball.capacity

    # safety net: the bound should already be feasible for shifted losses
    grow = excess(hi) > 0
    for _ in range(MAX_BISECTION_ITERS):
        if not np.any(grow):
            break
        hi[grow] *= 2.0
        grow = excess(hi) > 1e-12
    else:
        raise NumericalError("could not bracket the multiplier")

    # a feasible lower end means the multiplier sits at (numerically) zero
    at_floor = excess(lo) <= 0
    hi[at_floor] = lo[at_floor]
    for _ in range(MAX_BISECTION_ITERS):
        open_ = (hi - lo) > eps
        if not np.any(open_):
            break
        mid = 0.5 * (lo + hi)
        over = excess(mid) > 0
        lo = np.where(open_ & over, mid, lo)
        hi = np.where(open_ & ~over, mid, hi)
    else:
        raise NumericalError(f"bisection did not converge in {MAX_BISECTION_ITERS} iterations")

    lam_rows, polished = _polish(Ls, hi, ball)
    # keep the polished multiplier only if it is feasible
    polished &= excess(np.where(polished, lam_rows, hi)) <= 1e-12
    lam_rows = np.where(polished, lam_rows, hi)

    q, eta_shift = _weights_rows(Ls, lam_rows)
    lam_rows[at_floor] = 0.0
    q = np.maximum(q, 0.0)
    q /= q.sum(axis=1, keepdims=True)
    p[rows] = q
    lam[rows] = lam_rows
    eta[rows] = eta_shift - lmin[rows]
    return p, lam, eta


def solve(l, ball, eps=None):
    """Worst-case weights and value of ``p @ l`` over the ball.

    Special cases: ``rho == 0`` gives uniform weights and ``mean(l)``; a
    ball covering the whole simplex (``rho >= (n-1)/2``) puts all mass on
    the lowest-index minimiser of ``l``; constant ``l`` gives uniform
    weights with ``lam = 0``.
    """
    l = _check_losses(l)
    if len(l) != ball.n:
        raise ContractViolation(f"expected {ball.n} losses, got {len(l)}")
    p, lam, eta = _solve_rows(l[None, :], ball, eps)
    p, lam, eta = p[0], float(lam[0]), float(eta[0])
    if ball.is_singleton:
        value = float(l.mean())
    else:
        value = float(p @ l)
    if lam > 0:
        active = tuple(int(i) for i in np.flatnonzero(l <= -eta))
    else:
        active = tuple(int(i) for i in np.flatnonzero(p > 0))
    return RobustSolution(p=p, lam=lam, eta=eta, active=active, value=value)


def robust_values(L, ball, return_weights=False):
    """Robust value of every row of ``L`` (shape ``(N, n)``).

    With ``rho == 0`` the values are exactly ``L.mean(axis=1)``.
    """
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[1] != ball.n:
        raise ContractViolation(f"expected shape (N, {ball.n}), got {L.shape}")
    if not np.all(np.isfinite(L)):
        raise ContractViolation("losses must be finite")
    p, _, _ = _solve_rows(L, ball)
    if ball.is_singleton:
        values = L.mean(axis=1)
    else:
        values = np.einsum("ij,ij->i", p, L)
    return (values, p) if return_weights else values


def robust_value_gradient(l, dl_dx, ball):
    """Gradient of the robust value with respect to parameters of ``l``.

    By Danskin's theorem the derivative of ``min_p p @ l(x)`` is
    ``p* @ dl/dx`` whenever the minimiser ``p*`` is unique.  Returns
    ``(gradient, unique)``; when ``unique`` is False the gradient is a valid
    supergradient of the concave value function rather than a gradient.
    """
    l = _check_losses(l)
    J = np.asarray(dl_dx, dtype=float)
    if J.ndim == 1:
        J = J[:, None]
    if J.shape[0] != len(l):
        raise ContractViolation(f"dl_dx needs {len(l)} rows, got {J.shape[0]}")
    sol = solve(l, ball)
    if ball.is_singleton:
        unique = True
    elif sol.lam > 0:
        unique = True
    else:
        s = np.sort(l)
        unique = bool(s[1] - s[0] > 1e-9)
    return sol.p @ J, unique


def robust_gap_bounds(z, bounds, ball, tol=0.0):
    """Variance sandwich for the robust gap ``mean(z) - robust value``.

    Returns ``(lower, upper, gap)`` with ``upper = sqrt(2 rho s^2)`` and
    ``lower = max(upper - 2 M rho, 0)``, where ``s^2`` is the (1/n)
    empirical variance of ``z`` and ``M`` the width of the range of ``z``.
    """
    z = _check_losses(z)
    m0, m1 = bounds
    if np.any(z < m0 - tol) or np.any(z > m1 + tol):
        raise ContractViolation(f"samples must lie in [{m0}, {m1}]")
    s2 = float(np.var(z))
    upper = math.sqrt(2.0 * ball.rho * s2)
    lower = max(upper - 2.0 * (m1 - m0) * ball.rho, 0.0)
    gap = float(z.mean()) - solve(z, ball).value
    return lower, upper, gap


def _segment_min(fixed, la, lb, ball):
    """Minimise over the last two weights exactly, the rest fixed.

    With ``p_a + p_b = r`` the ball is an interval in ``p_a``; a linear
    objective is minimised at one of its ends.
    """
    r = 1.0 - fixed.sum(axis=1)
    q = np.einsum("ij,ij->i", fixed, fixed)
    c = ball.capacity / ball.n
    disc = 8.0 * (c - q) - 4.0 * r * r
    ok = (r >= -1e-12) & (disc >= 0)
    root = np.sqrt(np.maximum(disc, 0.0)) / 4.0
    lo = np.clip(r / 2.0 - root, 0.0, None)
    hi = np.minimum(r / 2.0 + root, r)
    ok &= lo <= hi
    va = lo * la + (r - lo) * lb
    vb = hi * la + (r - hi) * lb
    return np.where(ok, np.minimum(va, vb), np.inf), q, r


@functools.lru_cache(maxsize=8)
def _simplex_head_grid(k, step):
    """Grid points of spacing ``step`` for ``k`` weights with sum <= 1."""
    if k == 0:
        return np.zeros((1, 0))
    ticks = np.arange(0.0, 1.0 + step / 2, step)
    pts = np.stack(np.meshgrid(*([ticks] * k), indexing="ij"), axis=-1).reshape(-1, k)
    pts = pts[pts.sum(axis=1) <= 1.0 + 1e-12]
    pts.setflags(write=False)
    return pts


def brute_force_oracle(l, ball, step=1e-3):
    """Reference minimum of ``p @ l`` over the ball for ``n <= 4``.

    The first ``n - 2`` weights are enumerated on a grid of spacing ``step``
    and the remaining pair is handled exactly (a one-dimensional problem).
    If no grid point admits a feasible completion, the value at the grid
    point closest to the ball is returned.
    """
    l = _check_losses(l)
    n = len(l)
    if n != ball.n:
        raise ContractViolation(f"expected {ball.n} losses, got {n}")
    if n > 4:
        raise ContractViolation("brute_force_oracle enumerates at most n = 4")
    if n == 1:
        return float(l[0])
    fixed = _simplex_head_grid(n - 2, float(step))
    vals, q, r = _segment_min(fixed, l[-2], l[-1], ball)
    head = fixed @ l[:-2]
    if np.isfinite(vals).any():
        return float((vals + head).min())
    # nothing feasible on the grid: split the rest evenly at the point closest to the ball
    i = int(np.argmin(q + r * r / 2.0))
    return float(head[i] + r[i] / 2.0 * (l[-2] + l[-1]))
