"""Weighted Bayesian linear regression surrogate.

Conjugate Normal / scaled-inverse-chi-squared model with prior precision
``lambda * I``.  With data ``Z`` (N x d), locality weights ``W`` and
responses ``y``::

    V     = (Z' W Z + lambda I)^{-1}
    phi   = V Z' W y
    s2    = (y - Z phi)' W (y - Z phi) + lambda phi' phi
    nu    = n0 + N

The predictive at a new ``z`` is Student-t with ``nu`` degrees of freedom,
location ``phi' z`` and scale ``(1 + z' V z) s2``.  Marginally ``phi`` is
multivariate Student-t with scale ``(n0 sigma0^2 + s2) / nu * V``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .linalg import SpdMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Prior:
    n0: float = 1.0
    sigma0_sq: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        for name in ("n0", "sigma0_sq", "lam"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"prior parameter {name} must be positive, got {v}")


@dataclass(frozen=True)
class LabeledPerturbation:
    """One queried perturbation.

    ``y`` is normally a probability; raw synthetic-linear responses used by
    the bound checks may leave [0, 1], so only the weight is range-checked.
    """

    z: np.ndarray
    weight: float
    y: float

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError(f"locality weight must lie in [0, 1], got {self.weight}")
        if not np.isfinite(self.y):
            raise ValueError("response is not finite")


@dataclass(frozen=True)
class SurrogatePosterior:
    """Fitted posterior state.  ``precision`` is kept alongside ``V``."""

    phi_hat: np.ndarray
    V: SpdMatrix
    precision: SpdMatrix
    s2: float
    n0: float
    sigma0_sq: float
    lam: float
    n_obs: int

    @property
    def dim(self) -> int:
        return self.phi_hat.shape[0]

    @property
    def nu(self) -> float:
        return self.n0 + self.n_obs

    @property
    def nu1(self) -> float:
        """``n0 sigma0^2 + s2``: posterior sum-of-squares for the noise scale."""
        return self.n0 * self.sigma0_sq + self.s2

    @property
    def prior(self) -> Prior:
        return Prior(self.n0, self.sigma0_sq, self.lam)


def fit_arrays(Z, weights, y, prior: Prior, dim: int | None = None) -> SurrogatePosterior:
    """Dense refit from ``Z`` (N x d), weights (N,) and responses (N,)."""
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        if dim is None:
            raise ValueError("cannot infer dimension from empty data")
        Z = Z.reshape(0, dim)
    d = Z.shape[1] if dim is None else dim
    if d <= 0:
        raise ValueError("surrogate dimension must be positive")
    if Z.shape[1] != d:
        raise ValueError(f"perturbations have dimension {Z.shape[1]}, expected {d}")
    w = np.asarray(weights, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if not (len(w) == len(y) == Z.shape[0]):
        raise ValueError("Z, weights and y have inconsistent lengths")
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(w)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in surrogate training data")
    if np.any(w < 0):
        raise ValueError("locality weights must be nonnegative")

    Zw = Z * w[:, None]
    precision = Zw.T @ Z + prior.lam * np.eye(d)
    precision = 0.5 * (precision + precision.T)
    P = SpdMatrix(precision, check_symmetry=False)
    L = P.factor
    linv = np.linalg.inv(L)
    V = SpdMatrix(linv.T @ linv, check_symmetry=False)
    rhs = Zw.T @ y
    # two triangular solves against the precision factor
    phi = linv.T @ (linv @ rhs)
    resid = y - Z @ phi
    s2 = float(resid @ (w * resid) + prior.lam * phi @ phi)
    return SurrogatePosterior(
        phi_hat=phi,
        V=V,
        precision=P,
        s2=max(s2, 0.0),
        n0=prior.n0,
        sigma0_sq=prior.sigma0_sq,
        lam=prior.lam,
        n_obs=int(Z.shape[0]),
    )


def fit_blr(data: Sequence[LabeledPerturbation], prior: Prior, dim: int | None = None) -> SurrogatePosterior:
    """Fit the surrogate from scratch on ``data``."""
    if len(data) == 0:
        if dim is None:
            raise ValueError("dimension is required when fitting on empty data")
        return fit_arrays(np.zeros((0, dim)), [], [], prior, dim)
    Z = np.stack([np.asarray(p.z, dtype=float) for p in data])
    return fit_arrays(Z, [p.weight for p in data], [p.y for p in data], prior, dim)


def predictive_variance(post: SurrogatePosterior, z) -> float:
    """Variance of the Student-t predictive at ``z``; needs ``nu > 2``."""
    if post.nu <= 2:
        raise ValueError(f"predictive variance undefined for nu={post.nu} <= 2")
    q = post.V.quad(z)
    return (q + 1.0) * post.s2 * post.nu / (post.nu - 2.0)


def credible_interval(post: SurrogatePosterior, feature: int, level: float = 0.9) -> tuple[float, float]:
    """Equal-tailed marginal credible interval for one coefficient."""
    if not 0 <= feature < post.dim:
        raise IndexError(f"feature index {feature} out of range for d={post.dim}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    half = credible_half_widths(post, level)[feature]
    c = float(post.phi_hat[feature])
    return c - half, c + half


def credible_half_widths(post: SurrogatePosterior, level: float = 0.9) -> np.ndarray:
    q = stats.t.ppf(0.5 * (1.0 + level), df=post.nu)
    scale = post.nu1 / post.nu * np.diag(post.V.entries)
    return q * np.sqrt(scale)


def mean_interval_width(post: SurrogatePosterior, level: float = 0.9) -> float:
    return float(2.0 * np.mean(credible_half_widths(post, level)))
