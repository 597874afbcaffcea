"""Executable checks for the information-gain and estimation-error bounds.

Also carries the multivariate Student-t entropy used to express the
prior-to-posterior information gain of the surrogate in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import special

from .linalg import SpdMatrix, min_eigenvalue, rank1_downdate_covariance
from .metrics import RunTrace

BOUND_TOL = 1e-9
NORM_TOL = 1e-12


class HypothesisViolation(ValueError):
    """Trace does not satisfy the assumptions a bound is stated under."""


class DegenerateDesignError(ValueError):
    """Estimated design richness is not positive; the sample bound is unbounded."""


@dataclass(frozen=True)
class BoundCheckResult:
    lhs: float
    rhs: float
    context: dict = field(default_factory=dict)
    lhs_curve: np.ndarray | None = field(default=None, repr=False)
    rhs_curve: np.ndarray | None = field(default=None, repr=False)

    @property
    def satisfied(self) -> bool:
        return self.lhs <= self.rhs + BOUND_TOL

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs


@dataclass(frozen=True)
class TheoryParams:
    sigma: float
    delta: float
    dim: int
    nu_acc: float = 0.1
    kappa_hat: float = 0.0
    phi_star_norm: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


def info_gain_rhs(t, d: int):
    """``2 d log(1 + t/d)``."""
    return 2.0 * d * np.log1p(np.asarray(t, dtype=float) / d)


def check_info_gain_bound(trace: RunTrace, d: int | None = None) -> BoundCheckResult:
    """Cumulative ``sum_s pi_s z_s' V_{s-1} z_s`` against ``2 d log(1 + t/d)``.

    The covariance path is rebuilt from the prior by one rank-1 update per
    stored step; nothing cached in the trace's own covariance bookkeeping
    is reused.
    """
    d = trace.dim if d is None else d
    Z, w = trace.Z, trace.weights
    norms = np.linalg.norm(Z, axis=1) if Z.size else np.zeros(0)
    if np.any(norms > 1.0 + NORM_TOL):
        raise HypothesisViolation(f"max ||z|| = {norms.max():.6g} exceeds 1; run in theory mode")
    if np.any(w < 0) or np.any(w > 1):
        raise HypothesisViolation("locality weights outside [0, 1]")
    V = SpdMatrix.identity(d, 1.0 / trace.prior.lam)
    terms = np.empty(Z.shape[0])
    for s, (z, ws) in enumerate(zip(Z, w)):
        terms[s] = ws * V.quad(z)
        V = rank1_downdate_covariance(V, z, float(ws))
    lhs_curve = np.cumsum(terms)
    t = np.arange(1, Z.shape[0] + 1)
    rhs_curve = info_gain_rhs(t, d)
    lhs = float(lhs_curve[-1]) if len(lhs_curve) else 0.0
    rhs = float(rhs_curve[-1]) if len(rhs_curve) else 0.0
    # every prefix must satisfy the bound, report the tightest one
    if len(lhs_curve):
        worst = int(np.argmin(rhs_curve - lhs_curve))
        if lhs_curve[worst] > rhs_curve[worst] + BOUND_TOL:
            lhs, rhs = float(lhs_curve[worst]), float(rhs_curve[worst])
    return BoundCheckResult(lhs, rhs, {"t": int(Z.shape[0]), "d": d, "delta": None}, lhs_curve, rhs_curve)


def beta_delta(sigma: float, d: int, delta: float) -> float:
    """``sigma sqrt(d + 2 sqrt(d log(1/delta)) + 2 log(1/delta))``."""
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if sigma < 0 or d <= 0:
        raise ValueError("need sigma >= 0 and d > 0")
    L = math.log(1.0 / delta)
    return sigma * math.sqrt(d + 2.0 * math.sqrt(d * L) + 2.0 * L)


def mahalanobis(x, M) -> float:
    x = np.asarray(x, dtype=float)
    M = M.entries if isinstance(M, SpdMatrix) else np.asarray(M, dtype=float)
    return math.sqrt(max(float(x @ M @ x), 0.0))


def check_estimation_bound(trace: RunTrace, phi_star, params: TheoryParams) -> BoundCheckResult:
    """``||phi_hat - phi*||_{V^-1} <= beta_delta + ||phi*||_{V^-1}`` at the end of the trace."""
    if phi_star is None:
        raise ValueError("ground-truth importances are required")
    if trace.final is None:
        raise ValueError("trace has no fitted posterior")
    if not math.isclose(trace.prior.lam, 1.0):
        raise HypothesisViolation(f"estimation bound assumes prior precision 1, got {trace.prior.lam}")
    phi_star = np.asarray(phi_star, dtype=float)
    P = trace.final.precision
    lhs = mahalanobis(trace.final.phi_hat - phi_star, P)
    rhs = beta_delta(params.sigma, trace.dim, params.delta) + mahalanobis(phi_star, P)
    return BoundCheckResult(lhs, rhs, {"t": trace.n_steps, "d": trace.dim, "delta": params.delta})


def design_matrix(trace: RunTrace, t: int) -> np.ndarray:
    """``S_t = sum_{s<=t} pi_s z_s z_s'``."""
    Z, w = trace.Z[:t], trace.weights[:t]
    return (Z * w[:, None]).T @ Z


def estimate_kappa(trace: RunTrace, every: int = 50) -> float:
    """``min_t lambda_min(S_t) / t`` over checkpoints ``every, 2*every, ..., N``."""
    N = trace.n_steps
    if N == 0:
        return 0.0
    ts = list(range(every, N + 1, every)) or [N]
    S = [design_matrix(trace, t) for t in ts]
    return min(min_eigenvalue(0.5 * (s + s.T)) / t for s, t in zip(S, ts))


def sample_complexity_estimate(params: TheoryParams) -> int:
    """Smallest integer ``t >= (1/kappa)((beta + ||phi*||)^2 / nu^2 - 1)``, floored at 0."""
    if params.kappa_hat <= 0:
        raise DegenerateDesignError("kappa_hat <= 0: no finite sample-complexity bound")
    if params.nu_acc <= 0:
        raise ValueError("target accuracy must be positive")
    beta = beta_delta(params.sigma, params.dim, params.delta)
    bound = ((beta + params.phi_star_norm) ** 2 / params.nu_acc**2 - 1.0) / params.kappa_hat
    # guard against 2.9999999 -> 3 style round-off before the ceiling
    return max(0, math.ceil(bound - 1e-9))


def _t_entropy_constant(nu: float, d: int) -> float:
    """Entropy of a d-variate Student-t with identity scale, in nats."""
    a, b = 0.5 * d, 0.5 * nu
    return (
        a * math.log(nu * math.pi)
        - special.gammaln(a)
        + special.betaln(a, b)
        + (b + a) * (special.digamma(b + a) - special.digamma(b))
    )


def student_t_entropy(nu: float, d: int, scale) -> float:
    """Differential entropy of ``T_nu(mu, scale)``; location does not matter."""
    if not (nu > 0 and d > 0):
        raise ValueError(f"need nu > 0 and d > 0, got nu={nu}, d={d}")
    S = scale if isinstance(scale, SpdMatrix) else SpdMatrix(np.atleast_2d(scale))
    if S.dim != d:
        raise ValueError(f"scale has dimension {S.dim}, expected {d}")
    h = 0.5 * S.logdet() + _t_entropy_constant(float(nu), int(d))
    if not math.isfinite(h):
        raise ValueError("entropy evaluation overflowed")
    return float(h)


class EntropyGainConstants(NamedTuple):
    """Log-space constants; the gain is ``log_c2 - 0.5 log|V| - log_c1``."""

    log_c1: float
    log_c2: float

    @property
    def c1(self) -> float:
        return math.exp(self.log_c1)

    @property
    def c2(self) -> float:
        return math.exp(self.log_c2)

    def entropy_reduction(self, logdet_V: float) -> float:
        return self.log_c2 - 0.5 * logdet_V - self.log_c1


def entropy_gain_constants(n0: float, sigma0_sq: float, N: int, s2: float, d: int) -> EntropyGainConstants:
    """Constants splitting prior-minus-posterior entropy of the coefficients.

    The prior is ``T_{n0}(0, sigma0^2 I)`` and the posterior
    ``T_{n0+N}(phi_hat, nu1/(n0+N) V)`` with ``nu1 = n0 sigma0^2 + s2``.
    ``log_c2`` is the whole prior entropy; ``log_c1`` is the posterior
    entropy without its ``0.5 log|V|`` term.
    """
    if n0 <= 0 or sigma0_sq <= 0 or N < 0 or s2 < 0 or d <= 0:
        raise ValueError("entropy_gain_constants needs n0, sigma0_sq, d > 0 and N, s2 >= 0")
    nu_post = n0 + N
    nu1 = n0 * sigma0_sq + s2
    log_c2 = 0.5 * d * math.log(sigma0_sq) + _t_entropy_constant(n0, d)
    log_c1 = 0.5 * d * math.log(nu1 / nu_post) + _t_entropy_constant(nu_post, d)
    return EntropyGainConstants(float(log_c1), float(log_c2))


def posterior_entropy(post) -> float:
    """Entropy of the marginal Student-t posterior over the coefficients."""
    scale = SpdMatrix(post.nu1 / post.nu * post.V.entries, check_symmetry=False)
    return student_t_entropy(post.nu, post.dim, scale)


def prior_entropy(n0: float, sigma0_sq: float, d: int) -> float:
    return student_t_entropy(n0, d, SpdMatrix.identity(d, sigma0_sq))
