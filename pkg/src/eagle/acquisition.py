"""Acquisition scores and top-B batch selection.

The EAGLE score ``pi(z) z' V z`` is a strictly increasing transform of the
single-step expected information gain ``0.5 log(1 + pi(z) z' V z)``, so
ranking by either gives the same batch.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .blackbox import BlackBox
from .linalg import quad_forms, rank1_downdate_covariance
from .sampling import LocalityKernel
from .surrogate import SurrogatePosterior

logger = logging.getLogger(__name__)


class Strategy(str, enum.Enum):
    EAGLE = "eagle"
    PREDICTIVE_VARIANCE = "predictive_variance"
    UNIFORM_RANDOM = "uniform_random"
    KERNEL_PROPORTIONAL = "kernel_proportional"
    BOUNDARY_UNCERTAINTY = "boundary_uncertainty"

    @property
    def needs_blackbox(self) -> bool:
        return self is Strategy.BOUNDARY_UNCERTAINTY

    @property
    def kernel_pool(self) -> bool:
        """Candidates come from the kernel-shaped sampler instead of the LIME pool."""
        return self is Strategy.KERNEL_PROPORTIONAL


@dataclass(frozen=True)
class AcquisitionStrategy:
    kind: Strategy
    params: dict = field(default_factory=dict)
    # rescore after each pick inside a batch (off: literal top-B)
    sequential: bool = False

    @classmethod
    def of(cls, kind, **params) -> "AcquisitionStrategy":
        return cls(Strategy(kind), dict(params))


@dataclass(frozen=True)
class ScoredCandidate:
    z: np.ndarray
    score: float
    pool_index: int


def _check_dim(post: SurrogatePosterior, k: LocalityKernel, z: np.ndarray):
    if z.shape[-1] != post.dim or k.dim != post.dim:
        raise ValueError(f"dimension mismatch: z has {z.shape[-1]}, posterior {post.dim}, kernel {k.dim}")


def eagle_score(post: SurrogatePosterior, k: LocalityKernel, z) -> float:
    z = np.asarray(z, dtype=float)
    _check_dim(post, k, z)
    return float(k(z)[0] * post.V.quad(z))


def eagle_scores(V: np.ndarray, k: LocalityKernel, Z: np.ndarray) -> np.ndarray:
    return k(Z) * quad_forms(Z, V)


def step_information_gain(post: SurrogatePosterior, k: LocalityKernel, z) -> float:
    """``0.5 log(1 + pi(z) z' V z)``."""
    return 0.5 * float(np.log1p(eagle_score(post, k, z)))


def predictive_variance_scores(post: SurrogatePosterior, V: np.ndarray, Z: np.ndarray) -> np.ndarray:
    q = quad_forms(Z, V)
    if post.nu <= 2:
        logger.warning("nu=%s <= 2: predictive variance undefined, ranking by (z'Vz + 1) s2", post.nu)
        return (q + 1.0) * post.s2
    return (q + 1.0) * post.s2 * post.nu / (post.nu - 2.0)


def boundary_scores(k: LocalityKernel, Z: np.ndarray, blackbox: BlackBox) -> np.ndarray:
    """Locality-damped closeness to the 0.5 decision boundary, in [0, 0.5]."""
    y = blackbox.batch_predict(Z)
    dist = np.linalg.norm(Z - k.x0, axis=1)
    return (0.5 - np.abs(y - 0.5)) * np.exp(-dist)


def _top(scores: np.ndarray, B: int) -> np.ndarray:
    # stable sort on -score keeps ascending pool index among ties
    return np.argsort(-scores, kind="stable")[:B]


def score_pool(
    post: SurrogatePosterior,
    strategy: AcquisitionStrategy,
    pool: np.ndarray,
    k: LocalityKernel,
    blackbox: BlackBox | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    kind = strategy.kind
    V = post.V.entries
    if kind is Strategy.EAGLE:
        return eagle_scores(V, k, pool)
    if kind is Strategy.PREDICTIVE_VARIANCE:
        return predictive_variance_scores(post, V, pool)
    if kind in (Strategy.UNIFORM_RANDOM, Strategy.KERNEL_PROPORTIONAL):
        if rng is None:
            raise ValueError(f"{kind.value} selection needs an rng")
        # top-B of iid uniforms is a uniform B-subset
        return rng.random(pool.shape[0])
    if kind is Strategy.BOUNDARY_UNCERTAINTY:
        if blackbox is None:
            raise ValueError("boundary_uncertainty needs a black box to score candidates")
        return boundary_scores(k, pool, blackbox)
    raise ValueError(f"unknown strategy {kind!r}")


def select_batch(
    post: SurrogatePosterior,
    strategy: AcquisitionStrategy,
    pool,
    B: int,
    k: LocalityKernel,
    blackbox: BlackBox | None = None,
    rng: np.random.Generator | None = None,
) -> list[ScoredCandidate]:
    """Pick the ``B`` best candidates, ties going to the lower pool index."""
    pool = np.atleast_2d(np.asarray(pool, dtype=float))
    if pool.shape[0] == 0:
        raise ValueError("candidate pool is empty")
    if B > pool.shape[0]:
        raise ValueError(f"batch size {B} exceeds pool size {pool.shape[0]}")
    if pool.shape[1] != post.dim:
        raise ValueError(f"pool dimension {pool.shape[1]} != posterior dimension {post.dim}")
    if strategy.kind.needs_blackbox and blackbox is None:
        raise ValueError("boundary_uncertainty needs a black box to score candidates")

    if strategy.sequential and strategy.kind in (Strategy.EAGLE, Strategy.PREDICTIVE_VARIANCE):
        return _select_sequential(post, strategy, pool, B, k)

    scores = score_pool(post, strategy, pool, k, blackbox, rng)
    idx = _top(scores, B)
    return [ScoredCandidate(pool[i].copy(), float(scores[i]), int(i)) for i in idx]


def _select_sequential(post, strategy, pool, B, k) -> list[ScoredCandidate]:
    """Greedy picks with a rank-1 covariance downdate after each one."""
    V = post.V
    weights = k(pool)
    taken = np.zeros(pool.shape[0], dtype=bool)
    out = []
    for _ in range(B):
        scores = score_pool(replace(post, V=V), strategy, pool, k)
        scores = np.where(taken, -np.inf, scores)
        i = int(_top(scores, 1)[0])
        taken[i] = True
        out.append(ScoredCandidate(pool[i].copy(), float(scores[i]), i))
        V = rank1_downdate_covariance(V, pool[i], float(weights[i]))
    return out


def exact_eig_batch_oracle(post: SurrogatePosterior, k: LocalityKernel, subset: Sequence) -> float:
    """Set-level gain ``0.5 (log|V| - log|V_subset|)`` by sequential rank-1 updates.

    Meant as a test oracle for small subsets.
    """
    total = 0.0
    V = post.V
    for z in subset:
        z = np.asarray(z, dtype=float)
        w = float(k(z)[0])
        total += 0.5 * float(np.log1p(w * V.quad(z)))
        V = rank1_downdate_covariance(V, z, w)
    return total
