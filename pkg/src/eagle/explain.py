"""Active explanation loop: seed, then score / select / query / refit per batch."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .acquisition import AcquisitionStrategy, select_batch
from .blackbox import BlackBox, BlackBoxError
from .linalg import rank1_downdate_covariance
from .metrics import RunTrace
from .sampling import LocalityKernel, PoolConfig, draw_pool, glime_pool, scale_to_unit_ball
from .surrogate import Prior, SurrogatePosterior, credible_half_widths, fit_arrays


class ExplainError(RuntimeError):
    """Run aborted; ``trace`` holds everything recorded before the failure."""

    def __init__(self, message: str, trace: RunTrace):
        super().__init__(message)
        self.trace = trace


@dataclass
class Explanation:
    phi_hat: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    posterior: SurrogatePosterior
    trace: RunTrace


class _TraceBuilder:
    """Accumulates per-step quantities while the loop runs."""

    def __init__(self, d: int, prior: Prior):
        self.d = d
        self.prior = prior
        self.precision = prior.lam * np.eye(d)
        self._V = None
        self.rows: dict[str, list] = {k: [] for k in ("Z", "w", "y", "score", "quad", "logdet", "trace", "eig")}

    def reset_covariance(self, post: SurrogatePosterior):
        # carried covariance is re-synced to the dense refit at each batch boundary
        self._V = post.V

    def add(self, z: np.ndarray, w: float, y: float, score: float):
        V = self._V
        q = V.quad(z)
        self._V = rank1_downdate_covariance(V, z, w)
        self.precision = self.precision + w * np.outer(z, z)
        L = np.linalg.cholesky(self.precision)
        linv = np.linalg.inv(L)
        r = self.rows
        r["Z"].append(np.array(z, dtype=float))
        r["w"].append(w)
        r["y"].append(y)
        r["score"].append(score)
        r["quad"].append(q)
        r["logdet"].append(-2.0 * float(np.sum(np.log(np.diag(L)))))
        r["trace"].append(float(np.sum(linv * linv)))
        r["eig"].append(0.5 * float(np.log1p(w * q)))

    def build(self, strategy: str, rng_seed: int, theory_mode: bool) -> RunTrace:
        r = self.rows
        Z = np.array(r["Z"]).reshape(-1, self.d)
        return RunTrace(
            strategy=strategy,
            rng_seed=rng_seed,
            dim=self.d,
            prior=self.prior,
            logdet_v0=-self.d * float(np.log(self.prior.lam)),
            trace_v0=self.d / self.prior.lam,
            Z=Z,
            weights=np.array(r["w"], dtype=float),
            y=np.array(r["y"], dtype=float),
            scores=np.array(r["score"], dtype=float),
            quad=np.array(r["quad"], dtype=float),
            logdet_v=np.array(r["logdet"], dtype=float),
            trace_v=np.array(r["trace"], dtype=float),
            step_eig=np.array(r["eig"], dtype=float),
            theory_mode=theory_mode,
        )


def explain_instance(
    blackbox: BlackBox,
    x0,
    strategy: AcquisitionStrategy | str,
    pool_cfg: PoolConfig,
    prior: Prior,
    rng: np.random.Generator | int,
    *,
    kernel_width: float | None = None,
    theory_mode: bool = False,
    level: float = 0.9,
) -> Explanation:
    """Explain ``blackbox`` around ``x0`` with exactly ``pool_cfg.budget`` labelled queries.

    In theory mode every seed set and candidate pool is divided by its
    largest row norm (when above one) so that all queried ``z`` lie in the
    unit ball.
    """
    if not isinstance(strategy, AcquisitionStrategy):
        strategy = AcquisitionStrategy.of(strategy)
    seed_value = int(rng) if isinstance(rng, (int, np.integer)) else -1
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    kernel = LocalityKernel(x0, kernel_width)
    d = kernel.dim
    sampler = glime_pool if strategy.kind.kernel_pool else draw_pool
    S, B, N = pool_cfg.seed_count, pool_cfg.batch_size, pool_cfg.budget
    prep = scale_to_unit_ball if theory_mode else np.asarray

    builder = _TraceBuilder(d, prior)
    Z_all = np.zeros((0, d))
    w_all = np.zeros(0)
    y_all = np.zeros(0)
    queries_before = blackbox.query_count
    labelled = 0
    checkpoints_t, checkpoints_phi = [], []
    started = time.perf_counter()

    def finish(post, failure=None) -> RunTrace:
        tr = builder.build(strategy.kind.value, seed_value, theory_mode)
        tr.checkpoint_t = checkpoints_t
        tr.checkpoint_phi = checkpoints_phi
        tr.final = post
        tr.duration_s = time.perf_counter() - started
        tr.scoring_queries = blackbox.query_count - queries_before - labelled
        tr.failure = failure
        return tr

    post = fit_arrays(Z_all, w_all, y_all, prior, d)
    builder.reset_covariance(post)
    try:
        seeds = prep(sampler(kernel, pool_cfg, rng, size=S))
        y_seed = blackbox.batch_predict(seeds)
        labelled += S
        w_seed = kernel(seeds)
        for z, w, y in zip(seeds, w_seed, y_seed):
            builder.add(z, float(w), float(y), float("nan"))
        Z_all, w_all, y_all = seeds, w_seed, y_seed
        post = fit_arrays(Z_all, w_all, y_all, prior, d)
        checkpoints_t.append(labelled)
        checkpoints_phi.append(post.phi_hat.copy())

        while labelled < N:
            b = min(B, N - labelled)
            pool = prep(sampler(kernel, pool_cfg, rng))
            batch = select_batch(post, strategy, pool, b, kernel, blackbox=blackbox, rng=rng)
            Zb = np.array([c.z for c in batch])
            yb = blackbox.batch_predict(Zb)
            labelled += b
            wb = kernel(Zb)
            builder.reset_covariance(post)
            for c, w, y in zip(batch, wb, yb):
                builder.add(c.z, float(w), float(y), c.score)
            Z_all = np.vstack([Z_all, Zb])
            w_all = np.concatenate([w_all, wb])
            y_all = np.concatenate([y_all, yb])
            post = fit_arrays(Z_all, w_all, y_all, prior, d)
            checkpoints_t.append(labelled)
            checkpoints_phi.append(post.phi_hat.copy())
    except BlackBoxError as exc:
        raise ExplainError(f"black box failed after {labelled} labelled queries: {exc}", finish(post, str(exc))) from exc

    trace = finish(post)
    half = credible_half_widths(post, level)
    return Explanation(post.phi_hat, post.phi_hat - half, post.phi_hat + half, post, trace)


def refit_prefix(trace: RunTrace, t: int) -> SurrogatePosterior:
    """Posterior from the first ``t`` labelled queries of a trace."""
    return fit_arrays(trace.Z[:t], trace.weights[:t], trace.y[:t], trace.prior, trace.dim)
