"""Run traces and the evaluation metrics computed from them."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .linalg import SpdMatrix
from .surrogate import Prior, SurrogatePosterior, mean_interval_width


@dataclass
class RunTrace:
    """Per-step record of one explanation run, stored column-wise.

    Row ``t-1`` describes the t-th labelled query.  ``quad[t-1]`` is
    ``z_t' V_{t-1} z_t`` under the covariance carried through the run;
    ``logdet_v`` and ``trace_v`` come from a dense factorization of the
    precision after step t, so the telescoping identity
    ``cumulative_eig == 0.5 (logdet_v0 - logdet_v)`` is a real check.
    """

    strategy: str
    rng_seed: int
    dim: int
    prior: Prior
    logdet_v0: float
    trace_v0: float
    Z: np.ndarray
    weights: np.ndarray
    y: np.ndarray
    scores: np.ndarray
    quad: np.ndarray
    logdet_v: np.ndarray
    trace_v: np.ndarray
    step_eig: np.ndarray
    checkpoint_t: list = field(default_factory=list)
    checkpoint_phi: list = field(default_factory=list)
    final: SurrogatePosterior | None = None
    duration_s: float = 0.0
    theory_mode: bool = False
    scoring_queries: int = 0
    failure: str | None = None

    @property
    def n_steps(self) -> int:
        return int(self.Z.shape[0])

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, self.n_steps + 1)

    @property
    def cumulative_eig(self) -> np.ndarray:
        return np.cumsum(self.step_eig)

    def d_efficiency(self) -> np.ndarray:
        return np.exp((self.logdet_v0 - self.logdet_v) / self.dim)

    def a_efficiency(self) -> np.ndarray:
        return self.trace_v0 / self.trace_v

    def series(self, metric: "Metric | str") -> np.ndarray:
        metric = Metric(metric)
        if metric is Metric.D_EFFICIENCY:
            return self.d_efficiency()
        if metric is Metric.A_EFFICIENCY:
            return self.a_efficiency()
        if metric is Metric.CIG:
            return self.cumulative_eig
        raise ValueError(f"{metric.value} is not a per-trace series")

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "rng_seed": self.rng_seed,
            "dim": self.dim,
            "prior": {"n0": self.prior.n0, "sigma0_sq": self.prior.sigma0_sq, "lam": self.prior.lam},
            "logdet_v0": self.logdet_v0,
            "trace_v0": self.trace_v0,
            "Z": self.Z.tolist(),
            "weights": self.weights.tolist(),
            "y": self.y.tolist(),
            "scores": [None if math.isnan(s) else s for s in self.scores.tolist()],
            "quad": self.quad.tolist(),
            "logdet_v": self.logdet_v.tolist(),
            "trace_v": self.trace_v.tolist(),
            "step_eig": self.step_eig.tolist(),
            "checkpoint_t": list(self.checkpoint_t),
            "checkpoint_phi": [np.asarray(p).tolist() for p in self.checkpoint_phi],
            "phi_hat": None if self.final is None else self.final.phi_hat.tolist(),
            "theory_mode": self.theory_mode,
            "scoring_queries": self.scoring_queries,
            "failure": self.failure,
        }


class Metric(str, enum.Enum):
    D_EFFICIENCY = "d_efficiency"
    A_EFFICIENCY = "a_efficiency"
    CIG = "cig"
    CCM = "ccm"


def _spd_pair(V0, Vt) -> tuple[SpdMatrix, SpdMatrix]:
    V0 = V0 if isinstance(V0, SpdMatrix) else SpdMatrix(V0)
    Vt = Vt if isinstance(Vt, SpdMatrix) else SpdMatrix(Vt)
    if V0.dim != Vt.dim:
        raise ValueError(f"dimension mismatch: {V0.dim} vs {Vt.dim}")
    return V0, Vt


def d_efficiency(V0, Vt) -> float:
    """``(|V0| / |Vt|)^(1/d)``."""
    V0, Vt = _spd_pair(V0, Vt)
    return float(np.exp((V0.logdet() - Vt.logdet()) / V0.dim))


def a_efficiency(V0, Vt) -> float:
    """``tr(V0) / tr(Vt)``."""
    V0, Vt = _spd_pair(V0, Vt)
    return V0.trace() / Vt.trace()


def top_k_set(phi, k: int) -> frozenset:
    """Indices of the ``k`` largest ``|phi|``; ties go to the lower index."""
    a = np.abs(np.asarray(phi, dtype=float))
    order = np.lexsort((np.arange(a.shape[0]), -a))
    return frozenset(int(i) for i in order[:k])


def jaccard_topk(runs: Sequence, k: int = 5) -> float:
    """Mean pairwise Jaccard overlap of top-k feature sets."""
    mean, _ = jaccard_topk_stats(runs, k)
    return mean


def jaccard_topk_stats(runs: Sequence, k: int = 5) -> tuple[float, float]:
    runs = [np.asarray(r, dtype=float) for r in runs]
    if len(runs) < 2:
        raise ValueError("need at least two runs")
    d = runs[0].shape[0]
    if k > d or k <= 0:
        raise ValueError(f"k={k} must lie in [1, d={d}]")
    sets = [top_k_set(r, k) for r in runs]
    vals = [len(a & b) / len(a | b) for a, b in itertools.combinations(sets, 2)]
    return float(np.mean(vals)), float(np.std(vals))


def _binary_entropy(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    return np.nan_to_num(h, nan=0.0)


def _spearman(a: np.ndarray, b: np.ndarray) -> float:
    ra, rb = stats.rankdata(a), stats.rankdata(b)
    sa, sb = np.std(ra), np.std(rb)
    if sa == 0 or sb == 0:
        return 1.0 if np.array_equal(ra, rb) else 0.0
    return float(np.mean((ra - ra.mean()) * (rb - rb.mean())) / (sa * sb))


def ccm(runs: Sequence) -> tuple[float, float, float]:
    """Consistency metric ``(1 - ASFE) * ARS`` over repeated explanations.

    ASFE is the mean (over features) base-2 entropy of the empirical sign
    distribution; ARS the mean pairwise Spearman correlation of absolute
    importances, mapped from [-1, 1] onto [0, 1].  Returns ``(ccm, asfe, ars)``.
    """
    R = np.asarray([np.asarray(r, dtype=float) for r in runs])
    if R.ndim != 2 or R.shape[0] < 2:
        raise ValueError("need at least two runs")
    p_pos = np.mean(R > 0, axis=0)
    asfe = float(np.mean(_binary_entropy(p_pos)))
    absR = np.abs(R)
    pairs = [(_spearman(absR[i], absR[j]) + 1.0) / 2.0 for i, j in itertools.combinations(range(R.shape[0]), 2)]
    ars = float(np.mean(pairs))
    return (1.0 - asfe) * ars, asfe, ars


def first_crossing(t: Iterable, values: Iterable, reference_value: float) -> int | None:
    for ti, v in zip(t, values):
        if v >= reference_value:
            return int(ti)
    return None


def crossover_budget(trace_a, reference_value: float, metric="d_efficiency") -> int | None:
    """First query count at which ``trace_a`` reaches ``reference_value``.

    ``trace_a`` is a RunTrace for the per-step metrics; for ``ccm`` pass a
    list of repeated RunTraces, which are compared at shared checkpoints.
    """
    metric = Metric(metric)
    if metric is Metric.CCM:
        ts, vals = ccm_series(trace_a)
        return first_crossing(ts, vals, reference_value)
    return first_crossing(trace_a.t, trace_a.series(metric), reference_value)


def ccm_series(traces: Sequence[RunTrace]) -> tuple[list[int], list[float]]:
    if len(traces) < 2:
        raise ValueError("ccm needs at least two repeated traces")
    common = set(traces[0].checkpoint_t)
    for tr in traces[1:]:
        common &= set(tr.checkpoint_t)
    ts = sorted(common)
    vals = []
    for t in ts:
        runs = [tr.checkpoint_phi[tr.checkpoint_t.index(t)] for tr in traces]
        vals.append(ccm(runs)[0])
    return ts, vals


@dataclass(frozen=True)
class StabilityReport:
    jaccard_mean: float
    jaccard_std: float
    ccm: float
    asfe: float
    ars: float
    ci_width_90: float
    repeats: int

    @classmethod
    def not_applicable(cls, ci_width_90: float) -> "StabilityReport":
        nan = float("nan")
        return cls(nan, nan, nan, nan, nan, ci_width_90, 1)


def stability_report(posteriors: Sequence[SurrogatePosterior], k: int = 5) -> StabilityReport:
    width = float(np.mean([mean_interval_width(p, 0.9) for p in posteriors]))
    if len(posteriors) < 2:
        return StabilityReport.not_applicable(width)
    runs = [p.phi_hat for p in posteriors]
    k = min(k, runs[0].shape[0])
    jm, js = jaccard_topk_stats(runs, k)
    c, asfe, ars = ccm(runs)
    return StabilityReport(jm, js, c, asfe, ars, width, len(posteriors))
