"""Locality kernel and perturbation samplers around an instance ``x0``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LocalityKernel:
    """Exponential kernel ``exp(-||z - x0||^2 / width^2)``."""

    x0: np.ndarray
    width: float

    def __init__(self, x0, width: float | None = None):
        x0 = np.array(x0, dtype=float).reshape(-1)
        x0.setflags(write=False)
        if width is None:
            width = default_width(x0.shape[0])
        if not (np.isfinite(width) and width > 0):
            raise ValueError(f"kernel width must be positive, got {width}")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "width", float(width))

    @property
    def dim(self) -> int:
        return self.x0.shape[0]

    def __call__(self, Z) -> np.ndarray:
        """Vectorized weights for rows of ``Z``."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[1] != self.dim:
            raise ValueError(f"perturbation dimension {Z.shape[1]} != kernel dimension {self.dim}")
        sq = np.sum((Z - self.x0) ** 2, axis=1)
        return np.clip(np.exp(-sq / self.width**2), 0.0, 1.0)


def default_width(d: int) -> float:
    return 0.75 * float(np.sqrt(d))


def kernel_weight(k: LocalityKernel, z) -> float:
    z = np.asarray(z, dtype=float)
    if z.shape != (k.dim,):
        raise ValueError(f"perturbation shape {z.shape} != ({k.dim},)")
    return float(k(z[None, :])[0])


@dataclass(frozen=True)
class PoolConfig:
    pool_size: int = 1000
    seed_count: int = 10
    batch_size: int = 10
    budget: int = 500
    perturb_scale: float | tuple = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("pool_size", "seed_count", "batch_size", "budget"):
            if int(getattr(self, name)) <= 0:
                raise ValueError(f"{name} must be a positive integer")
        if self.seed_count > self.budget:
            raise ValueError("seed_count S must not exceed budget N")
        if self.batch_size > self.pool_size:
            raise ValueError("batch_size B must not exceed pool_size A")
        if np.any(np.asarray(self.perturb_scale, dtype=float) < 0):
            raise ValueError("perturb_scale must be nonnegative")

    def scale_vector(self, d: int) -> np.ndarray:
        s = np.asarray(self.perturb_scale, dtype=float)
        if s.ndim == 0:
            return np.full(d, float(s))
        if s.shape != (d,):
            raise ValueError(f"perturb_scale has length {s.shape[0]}, expected {d}")
        return s


def gaussian_perturbations(x0, scale, n: int, rng: np.random.Generator) -> np.ndarray:
    return np.asarray(x0, dtype=float) + np.asarray(scale, dtype=float) * rng.standard_normal((n, len(x0)))


def draw_pool(k: LocalityKernel, cfg: PoolConfig, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """LIME-style tabular pool: independent Gaussians around ``x0``.

    Returns an array of shape (size, d); ``size`` defaults to the pool size.
    """
    n = cfg.pool_size if size is None else size
    return gaussian_perturbations(k.x0, cfg.scale_vector(k.dim), n, rng)


def glime_pool(k: LocalityKernel, cfg: PoolConfig, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Samples with density proportional to the kernel: ``N(x0, width^2/2 I)``."""
    n = cfg.pool_size if size is None else size
    return gaussian_perturbations(k.x0, np.full(k.dim, k.width / np.sqrt(2.0)), n, rng)


def scale_to_unit_ball(Z: np.ndarray) -> np.ndarray:
    """Divide a pool by its largest row norm when that norm exceeds one."""
    Z = np.asarray(Z, dtype=float)
    if Z.size == 0:
        return Z
    m = float(np.max(np.linalg.norm(Z, axis=1)))
    return Z / m if m > 1.0 else Z
