"""Covariance functions on the joint (decision, context) space.

Points are stored as flat vectors ``z = (x_1..x_d, w_1..w_m)``; a
:class:`KernelSpec` knows how many leading entries belong to the decision
part through the lengths of its two length-scale vectors.

All kernels have unit signal variance, so ``k(z, z) == 1`` and every value
lies in ``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, ContractViolation

FAMILIES = ("se", "matern")
MATERN_NUS = (0.5, 1.5, 2.5)


@dataclass(frozen=True)
class LengthScales:
    """Per-dimension length scales: ``theta`` for ``x`` and ``psi`` for ``w``."""

    theta: tuple
    psi: tuple

    def __post_init__(self):
        theta = tuple(float(v) for v in np.atleast_1d(self.theta))
        psi = tuple(float(v) for v in np.atleast_1d(self.psi))
        if not theta or not psi:
            raise ContractViolation("need at least one decision and one context dimension")
        for v in theta + psi:
            if not (np.isfinite(v) and v > 0):
                raise ContractViolation(f"length scales must be positive and finite, got {v}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "psi", psi)

    @classmethod
    def isotropic(cls, d, m, theta=0.2, psi=None):
        psi = theta if psi is None else psi
        return cls((theta,) * d, (psi,) * m)

    @property
    def d(self):
        return len(self.theta)

    @property
    def m(self):
        return len(self.psi)

    @property
    def vector(self):
        return np.array(self.theta + self.psi)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus length scales.

    ``family`` is ``"se"`` or ``"matern"``; ``nu`` is only read for Matérn
    and must be one of 1/2, 3/2, 5/2.
    """

    scales: LengthScales
    family: str = "se"
    nu: float = 2.5

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown kernel family {self.family!r}")
        if self.family == "matern" and float(self.nu) not in MATERN_NUS:
            raise ConfigurationError(
                f"Matern nu must be one of {MATERN_NUS}, got {self.nu}"
            )

    @property
    def dim(self):
        return self.scales.d + self.scales.m

    def with_scales(self, scales):
        return KernelSpec(scales, self.family, self.nu)


def joint_point(x, w):
    """Concatenate a decision vector and a context vector."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    return np.concatenate([x, w])


def _as_points(a, dim):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != dim:
        raise ContractViolation(f"expected points of dimension {dim}, got shape {a.shape}")
    return a


def scaled_sq_dist(a, b, scales):
    """Squared distance between two joint points, each axis divided by its length scale."""
    dim = scales.d + scales.m
    a = _as_points(a, dim)[0]
    b = _as_points(b, dim)[0]
    diff = (a - b) / scales.vector
    return float(diff @ diff)


def pairwise_sq_dist(A, B, scales):
    """Matrix of scaled squared distances between rows of ``A`` and ``B``."""
    dim = scales.d + scales.m
    ls = scales.vector
    A = _as_points(A, dim) / ls
    B = _as_points(B, dim) / ls
    return cdist(A, B, "sqeuclidean")


def _from_sq_dist(spec, d2):
    if spec.family == "se":
        return np.exp(-d2)
    r = np.sqrt(2.0 * spec.nu * np.maximum(d2, 0.0))
    if spec.nu == 0.5:
        return np.exp(-r)
    if spec.nu == 1.5:
        return (1.0 + r) * np.exp(-r)
    return (1.0 + r + r * r / 3.0) * np.exp(-r)


def kernel_eval(spec, a, b):
    """Kernel value between two joint points."""
    return float(_from_sq_dist(spec, scaled_sq_dist(a, b, spec.scales)))


def cross_kernel(spec, A, B):
    """Kernel matrix ``[k(a_i, b_j)]`` between two point sets."""
    return _from_sq_dist(spec, pairwise_sq_dist(A, B, spec.scales))


def kernel_matrix(spec, points):
    """Symmetric Gram matrix of a nonempty point set, with an exact unit diagonal."""
    points = _as_points(points, spec.dim)
    if len(points) == 0:
        raise ContractViolation("kernel_matrix needs at least one point")
    K = cross_kernel(spec, points, points)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)
    return K
