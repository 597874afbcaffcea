"""Symmetric positive-definite helpers for rank-1 covariance updates.

The acquisition loop keeps the posterior covariance ``V`` (not the
precision) because every score reads ``z' V z``.  Adding one weighted
observation ``w z z'`` to the precision maps to a Sherman-Morrison
downdate of ``V``; the matrix determinant lemma gives the matching
log-determinant drop in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SYMMETRY_ATOL = 1e-12
_DENOM_FLOOR = 1e-14


class NotPositiveDefiniteError(ValueError):
    """Raised when a matrix fails the Cholesky test."""


@dataclass(frozen=True)
class SpdMatrix:
    """Immutable SPD matrix with its lower Cholesky factor.

    ``entries`` is symmetrized on construction; asymmetry larger than
    ``SYMMETRY_ATOL`` in any entry is rejected rather than silently fixed.
    """

    entries: np.ndarray
    factor: np.ndarray = field(repr=False)

    def __init__(self, entries, *, check_symmetry: bool = True):
        a = np.array(entries, dtype=float, copy=True)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix has non-finite entries")
        if check_symmetry and np.max(np.abs(a - a.T)) > SYMMETRY_ATOL * max(1.0, np.max(np.abs(a))):
            raise ValueError("matrix is not symmetric")
        a = 0.5 * (a + a.T)
        try:
            chol = np.linalg.cholesky(a)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("matrix is not positive definite") from exc
        a.setflags(write=False)
        chol.setflags(write=False)
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "factor", chol)

    @classmethod
    def identity(cls, d: int, scale: float = 1.0) -> "SpdMatrix":
        return cls(scale * np.eye(d))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.factor))))

    def quad(self, z) -> float:
        """``z' M z``."""
        z = np.asarray(z, dtype=float)
        return float(z @ self.entries @ z)

    def inverse(self) -> "SpdMatrix":
        linv = np.linalg.inv(self.factor)
        return SpdMatrix(linv.T @ linv, check_symmetry=False)

    def trace(self) -> float:
        return float(np.trace(self.entries))


def _as_spd(m) -> SpdMatrix:
    return m if isinstance(m, SpdMatrix) else SpdMatrix(m)


def _check_update_args(V: SpdMatrix, z, w: float) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (V.dim,):
        raise ValueError(f"vector of length {z.shape} does not match dimension {V.dim}")
    if w < 0 or not np.isfinite(w):
        raise ValueError(f"weight must be finite and nonnegative, got {w}")
    return z


def rank1_downdate_covariance(V, z, w: float) -> SpdMatrix:
    """Covariance after adding ``w * z z'`` to the precision.

    Returns ``V - w V z z' V / (1 + w z' V z)``, the inverse of
    ``V^{-1} + w z z'``.  ``V`` itself is left untouched.
    """
    V = _as_spd(V)
    z = _check_update_args(V, z, w)
    vz = V.entries @ z
    denom = 1.0 + w * float(z @ vz)
    if denom <= _DENOM_FLOOR:
        raise NotPositiveDefiniteError(f"update denominator {denom:g} is not positive; V is corrupted")
    out = V.entries - (w / denom) * np.outer(vz, vz)
    return SpdMatrix(0.5 * (out + out.T), check_symmetry=False)


def logdet_ratio_after_update(V, z, w: float) -> float:
    """``log|V| - log|V'|`` for the downdate above, i.e. ``log(1 + w z' V z)``."""
    V = _as_spd(V)
    z = _check_update_args(V, z, w)
    x = w * V.quad(z)
    if 1.0 + x <= _DENOM_FLOOR:
        raise NotPositiveDefiniteError(f"update denominator {1.0 + x:g} is not positive; V is corrupted")
    return float(np.log1p(x))


def min_eigenvalue(M) -> float:
    """Smallest eigenvalue of a symmetric positive semidefinite matrix."""
    a = np.asarray(M.entries if isinstance(M, SpdMatrix) else M, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_ATOL * max(1.0, np.max(np.abs(a), initial=0.0)):
        raise ValueError("matrix is not symmetric")
    return float(np.linalg.eigvalsh(a)[0])


def quad_forms(Z: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Row-wise ``z_i' V z_i`` for a pool ``Z`` of shape (A, d)."""
    return np.einsum("ij,jk,ik->i", Z, V, Z)
