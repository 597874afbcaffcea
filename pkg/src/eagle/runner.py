"""Experiment drivers behind the CLI, plus result-file writers."""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .acquisition import AcquisitionStrategy, Strategy
from .config import ConfigError, ExperimentConfig, stream_seed
from .explain import ExplainError, Explanation, explain_instance, refit_prefix
from .metrics import RunTrace, ccm_series, first_crossing, stability_report
from .theory import (
    DegenerateDesignError,
    HypothesisViolation,
    TheoryParams,
    beta_delta,
    check_estimation_bound,
    check_info_gain_bound,
    estimate_kappa,
    sample_complexity_estimate,
)

logger = logging.getLogger(__name__)

STEP_METRICS = ("d_efficiency", "a_efficiency", "cig", "step_eig")
STEPS_HEADER = ("instance", "strategy", "seed", "t", "metric", "value")
TELESCOPE_TOL = 1e-7
NA = "NA"


@dataclass(frozen=True)
class Unit:
    instance: int
    strategy: str
    repeat: int
    seed: int


@dataclass
class UnitResult:
    unit: Unit
    explanation: Explanation | None
    trace: RunTrace
    error: str | None = None


@dataclass
class RunOutcome:
    results: list
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def fmt(x) -> str:
    """Lossless text form of a float (``float(fmt(x)) == x``)."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return NA
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def units_for(cfg: ExperimentConfig, n_instances: int) -> list[Unit]:
    out = []
    for i in range(n_instances):
        for s in cfg.strategies:
            for r in range(cfg.repeats):
                out.append(Unit(i, s, r, stream_seed(cfg.rng_seed, i, s, r)))
    return out


def _run_unit(cfg: ExperimentConfig, x0: np.ndarray, unit: Unit, blackbox=None) -> UnitResult:
    own = blackbox is None
    bb = cfg.make_blackbox(stream_seed(unit.seed, "noise")) if own else blackbox
    strategy = AcquisitionStrategy(Strategy(unit.strategy), sequential=bool(cfg.sequential_batch))
    try:
        exp = explain_instance(
            bb,
            x0,
            strategy,
            cfg.pool_config(),
            cfg.prior_obj(),
            unit.seed,
            kernel_width=cfg.width(),
            theory_mode=bool(cfg.theory_mode),
            level=float(cfg.credible_level),
        )
        return UnitResult(unit, exp, exp.trace)
    except ExplainError as exc:
        return UnitResult(unit, None, exc.trace, str(exc))
    finally:
        if own:
            bb.close()


def _run_unit_star(args):
    return _run_unit(*args)


def run_units(cfg: ExperimentConfig, instances: list[np.ndarray]) -> list[UnitResult]:
    """Fan out every (instance, strategy, repeat); results come back in unit order."""
    units = units_for(cfg, len(instances))
    jobs = max(1, int(cfg.jobs))
    if cfg.blackbox["kind"] == "external":
        # one served process, one in-flight batch at a time
        bb = cfg.make_blackbox(0)
        try:
            return [_run_unit(cfg, instances[u.instance], u, bb) for u in units]
        finally:
            bb.close()
    if jobs == 1:
        return [_run_unit(cfg, instances[u.instance], u) for u in units]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_unit_star, [(cfg, instances[u.instance], u) for u in units]))


# -- invariants -------------------------------------------------------------
def trace_invariant_failures(res: UnitResult, budget: int) -> list[str]:
    tr, u = res.trace, res.unit
    tag = f"instance={u.instance} strategy={u.strategy} repeat={u.repeat}"
    out = []
    if res.error:
        out.append(f"{tag}: run failed: {res.error}")
        return out
    if tr.n_steps != budget:
        out.append(f"{tag}: {tr.n_steps} labelled queries, expected {budget}")
    if tr.n_steps:
        tele = 0.5 * (tr.logdet_v0 - tr.logdet_v)
        err = float(np.max(np.abs(tr.cumulative_eig - tele)))
        if err > TELESCOPE_TOL:
            out.append(f"{tag}: telescoping identity off by {err:.3g}")
        deff = tr.d_efficiency()
        if np.any(np.diff(deff) < -1e-9 * deff[1:]):
            out.append(f"{tag}: D-efficiency decreased")
    if tr.theory_mode:
        try:
            res_b = check_info_gain_bound(tr)
            if not res_b.satisfied:
                out.append(f"{tag}: information-gain bound violated ({res_b.lhs:.6g} > {res_b.rhs:.6g})")
        except HypothesisViolation as exc:
            out.append(f"{tag}: {exc}")
    return out


# -- writers ----------------------------------------------------------------
def step_rows(results: list[UnitResult]):
    for res in results:
        tr, u = res.trace, res.unit
        series = {
            "d_efficiency": tr.d_efficiency(),
            "a_efficiency": tr.a_efficiency(),
            "cig": tr.cumulative_eig,
            "step_eig": tr.step_eig,
        }
        for j, t in enumerate(tr.t):
            for m in STEP_METRICS:
                yield (u.instance, u.strategy, u.seed, int(t), m, series[m][j])


def write_steps_csv(path: Path, results: list[UnitResult]) -> int:
    rows = sorted(step_rows(results), key=lambda r: r[:5])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STEPS_HEADER)
        for r in rows:
            w.writerow([r[0], r[1], r[2], r[3], r[4], fmt(r[5])])
    return len(rows)


def read_steps_csv(path: Path) -> list[tuple]:
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != STEPS_HEADER:
            raise ValueError(f"unexpected header {header}")
        return [(int(a), b, int(c), int(d), e, float(f)) for a, b, c, d, e, f in rd]


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) or v is None else v for v in r])


def _group(results: list[UnitResult]) -> dict[tuple[int, str], list[UnitResult]]:
    groups: dict[tuple[int, str], list[UnitResult]] = {}
    for res in results:
        groups.setdefault((res.unit.instance, res.unit.strategy), []).append(res)
    return groups


def stability_rows(cfg: ExperimentConfig, results: list[UnitResult]) -> list[tuple]:
    rows = []
    for (inst, strat), group in sorted(_group(results).items()):
        posts = [g.trace.final for g in group if g.error is None]
        if not posts:
            continue
        rep = stability_report(posts, k=cfg.top_k)
        rows.append((inst, strat, rep.repeats, rep.jaccard_mean, rep.jaccard_std, rep.ccm, rep.asfe, rep.ars, rep.ci_width_90))
    return rows


def crossover_rows(cfg: ExperimentConfig, results: list[UnitResult]) -> list[tuple]:
    """Budget at which EAGLE's seed-averaged curve first reaches the reference's final value."""
    target, ref = Strategy.EAGLE.value, cfg.reference_strategy
    if target not in cfg.strategies or ref not in cfg.strategies or target == ref:
        return []
    groups = _group(results)
    N = cfg.pool["budget"]
    rows = []
    for inst in sorted({k[0] for k in groups}):
        a = [g.trace for g in groups.get((inst, target), []) if g.error is None]
        b = [g.trace for g in groups.get((inst, ref), []) if g.error is None]
        if not a or not b:
            continue
        curve_a = np.mean([tr.d_efficiency() for tr in a], axis=0)
        ref_val = float(np.mean([tr.d_efficiency()[-1] for tr in b]))
        t_cross = first_crossing(a[0].t, curve_a, ref_val)
        rows.append((inst, target, ref, "d_efficiency", ref_val, t_cross, N))
        if len(a) >= 2 and len(b) >= 2:
            ts_b, vals_b = ccm_series(b)
            ts_a, vals_a = ccm_series(a)
            rows.append((inst, target, ref, "ccm", float(vals_b[-1]), first_crossing(ts_a, vals_a, vals_b[-1]), N))
        else:
            rows.append((inst, target, ref, "ccm", None, NA, N))
    return rows


def runtime_rows(cfg: ExperimentConfig, results: list[UnitResult]) -> list[tuple]:
    rows = []
    for strat in cfg.strategies:
        ds = [r.trace.duration_s for r in results if r.unit.strategy == strat and r.error is None]
        if ds:
            rows.append((strat, cfg.pool["budget"], float(np.mean(ds)), float(np.std(ds)), len(ds)))
    return rows


def versions() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def write_manifest(out: Path, cfg: ExperimentConfig, command: str, extra: dict | None = None):
    doc = {"command": command, "config": cfg.resolved(), "versions": versions()}
    doc.update(extra or {})
    (out / "run_manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _prepare_out(out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ---------------------------------------------------------------
def benchmark(cfg: ExperimentConfig, out) -> RunOutcome:
    out = _prepare_out(out)
    instances = cfg.instance_points()
    results = run_units(cfg, instances)
    failures = [f for r in results for f in trace_invariant_failures(r, cfg.pool["budget"])]
    n_rows = write_steps_csv(out / "steps.csv", results)
    _write_csv(
        out / "stability.csv",
        ("instance", "strategy", "repeats", "jaccard_mean", "jaccard_std", "ccm", "asfe", "ars", "ci_width_90"),
        stability_rows(cfg, results),
    )
    _write_csv(
        out / "crossover.csv",
        ("instance", "target", "reference", "metric", "reference_value", "crossover_t", "budget"),
        crossover_rows(cfg, results),
    )
    _write_csv(out / "runtime.csv", ("strategy", "budget", "mean_s", "std_s", "runs"), runtime_rows(cfg, results))
    write_manifest(out, cfg, "benchmark", {"step_rows": n_rows, "units": len(results), "failures": failures})
    return RunOutcome(results, failures)


def explain(cfg: ExperimentConfig, out, x0=None) -> RunOutcome:
    """One explanation per listed strategy (repeat 0) for a single instance."""
    out = _prepare_out(out)
    x0 = cfg.instance_points()[0] if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (cfg.dimension,):
        raise ConfigError(f"instance has shape {x0.shape}, expected ({cfg.dimension},)")
    results = []
    bb = cfg.make_blackbox(stream_seed(cfg.rng_seed, "noise")) if cfg.blackbox["kind"] == "external" else None
    try:
        for s in cfg.strategies:
            results.append(_run_unit(cfg, x0, Unit(0, s, 0, stream_seed(cfg.rng_seed, 0, s, 0)), bb))
    finally:
        if bb is not None:
            bb.close()
    failures = [f for r in results for f in trace_invariant_failures(r, cfg.pool["budget"])]
    explanations = {}
    for res in results:
        entry = {"seed": res.unit.seed, "failure": res.error}
        if res.explanation is not None:
            e = res.explanation
            entry.update(
                phi_hat=e.phi_hat.tolist(),
                lower=e.lower.tolist(),
                upper=e.upper.tolist(),
                credible_level=cfg.credible_level,
                covariance=e.posterior.V.entries.tolist(),
                s2=e.posterior.s2,
                nu=e.posterior.nu,
            )
        explanations[res.unit.strategy] = entry
        (out / f"trace_{res.unit.strategy}.json").write_text(json.dumps(res.trace.to_dict()) + "\n", encoding="utf-8")
    doc = {"x0": x0.tolist(), "explanations": explanations}
    (out / "explanation.json").write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    n_rows = write_steps_csv(out / "steps.csv", results)
    write_manifest(out, cfg, "explain", {"step_rows": n_rows, "failures": failures, "x0": x0.tolist()})
    return RunOutcome(results, failures)


def validate_theory(cfg: ExperimentConfig, out) -> RunOutcome:
    """Run synthetic traces in theory mode and check every bound on them.

    Instances are fixed at the origin so the perturbations are the
    regression inputs the bounds are stated for; the prior precision is
    forced to one because the estimation bound assumes it.
    """
    if not cfg.theory_mode:
        raise ConfigError("validate-theory requires theory_mode (pass --theory-mode)")
    if cfg.blackbox["kind"] != "linear":
        raise ConfigError("validate-theory requires the synthetic linear black box")
    out = _prepare_out(out)
    th = cfg.theory
    trials = int(th.get("trials", 200))
    deltas = [float(x) for x in th.get("deltas", [0.05, 0.1])]
    nu_acc = float(th.get("nu_acc", 0.5))
    every = int(th.get("kappa_every", 50))
    d = cfg.dimension
    sigma = float(cfg.blackbox.get("sigma", 0.0))
    phi_star = cfg.phi_star()
    N = cfg.pool["budget"]

    tcfg = ExperimentConfig.from_dict(
        {
            **{k: v for k, v in cfg.resolved().items() if k in _OVERRIDABLE},
            "prior": {"n0": cfg.prior["n0"], "sigma0_sq": cfg.prior["sigma0_sq"], "lam": 1.0},
            "instances": [[0.0] * d],
            "repeats": trials,
        }
    )
    results = run_units(tcfg, tcfg.instance_points())
    failures = [f for r in results for f in trace_invariant_failures(r, N)]
    n_rows = write_steps_csv(out / "steps.csv", results)
    good = [r for r in results if r.error is None]

    info_gain = {"satisfied": 0, "total": 0, "min_slack": None, "max_ratio": None, "by_strategy": {}}
    ratios, slacks = [], []
    for r in good:
        res = check_info_gain_bound(r.trace)
        info_gain["total"] += 1
        info_gain["satisfied"] += int(res.satisfied)
        by = info_gain["by_strategy"].setdefault(r.unit.strategy, {"satisfied": 0, "total": 0})
        by["total"] += 1
        by["satisfied"] += int(res.satisfied)
        slacks.append(res.slack)
        ratios.append(res.lhs / res.rhs if res.rhs > 0 else 0.0)
    if good:
        info_gain["min_slack"], info_gain["max_ratio"] = float(min(slacks)), float(max(ratios))

    est_rows = []
    for delta in deltas:
        params = TheoryParams(sigma=sigma, delta=delta, dim=d)
        viol = 0
        min_slack = math.inf
        for r in good:
            res = check_estimation_bound(r.trace, phi_star, params)
            viol += int(not res.satisfied)
            min_slack = min(min_slack, res.slack)
        n = len(good)
        allowed = delta + 3.0 * math.sqrt(delta * (1 - delta) / n) if n else delta
        rate = viol / n if n else 0.0
        ok = rate <= allowed
        if not ok:
            failures.append(f"estimation bound violated in {viol}/{n} traces at delta={delta}")
        est_rows.append(
            {"delta": delta, "trials": n, "violations": viol, "rate": rate, "allowed_rate": allowed,
             "min_slack": min_slack if n else None, "ok": ok, "beta": beta_delta(sigma, d, delta)}
        )

    eagle = [r for r in good if r.unit.strategy == Strategy.EAGLE.value] or good
    kappas = [estimate_kappa(r.trace, every) for r in eagle]
    kappa_hat = float(np.median(kappas)) if kappas else 0.0
    complexity = {"kappa_hat": kappa_hat, "kappa_min": float(min(kappas)) if kappas else None,
                 "nu_acc": nu_acc, "phi_star_norm": float(np.linalg.norm(phi_star)), "per_delta": []}
    errors_at = {r.unit: r for r in eagle}
    curve_t = list(range(every, N + 1, every))
    complexity["accuracy_curve"] = {
        "t": curve_t,
        "fraction_within_nu": [
            float(np.mean([np.linalg.norm(refit_prefix(r.trace, t).phi_hat - phi_star) <= nu_acc for r in eagle]))
            for t in curve_t
        ] if eagle else [],
    }
    for delta in deltas:
        entry = {"delta": delta, "target_fraction": 1.0 - delta}
        try:
            t_req = sample_complexity_estimate(
                TheoryParams(sigma, delta, d, nu_acc, kappa_hat, float(np.linalg.norm(phi_star)))
            )
        except DegenerateDesignError as exc:
            entry.update(t_required=None, note=str(exc))
            complexity["per_delta"].append(entry)
            continue
        entry["t_required"] = t_req
        if t_req <= N:
            t_eval = max(t_req, 1)
            within = [np.linalg.norm(refit_prefix(r.trace, t_eval).phi_hat - phi_star) <= nu_acc for r in errors_at.values()]
            entry["observed_fraction_within_nu"] = float(np.mean(within))
        else:
            entry["observed_fraction_within_nu"] = None
            entry["note"] = f"required budget exceeds N={N}"
        complexity["per_delta"].append(entry)

    report = {
        "settings": {"dimension": d, "sigma": sigma, "budget": N, "trials_per_strategy": trials,
                     "strategies": list(cfg.strategies), "prior": {"n0": cfg.prior["n0"], "sigma0_sq": cfg.prior["sigma0_sq"], "lam": 1.0},
                     "unspecified_defaults": ["prior.n0", "prior.sigma0_sq"]},
        "traces": len(results),
        "failed_traces": len(results) - len(good),
        "step_count": int(sum(r.trace.n_steps for r in results)),
        "steps_csv_rows": n_rows,
        "metrics_per_step": len(STEP_METRICS),
        "info_gain_bound": info_gain,
        "estimation_bound": est_rows,
        "sample_complexity": complexity,
        "failures": failures,
        "ok": not failures,
    }
    (out / "theory_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_manifest(out, tcfg, "validate-theory", {"failures": failures})
    return RunOutcome(results, failures)


_OVERRIDABLE = ("dimension", "blackbox", "strategies", "pool", "kernel_width", "rng_seed", "theory_mode",
                "sequential_batch", "top_k", "credible_level", "reference_strategy", "jobs", "theory", "output_dir")


def compare(dir_a, dir_b, stream=None) -> int:
    """Print final-budget metric means side by side; return the number of differing files."""
    stream = stream or sys.stdout
    a, b = Path(dir_a), Path(dir_b)
    names = sorted({p.name for p in a.iterdir() if p.is_file()} & {p.name for p in b.iterdir() if p.is_file()})
    differing = 0
    for name in names:
        same = (a / name).read_bytes() == (b / name).read_bytes()
        differing += int(not same and name != "run_manifest.json")
        print(f"{name}: {'identical' if same else 'differs'}", file=stream)
    if "steps.csv" in names:
        fa, fb = _final_means(a / "steps.csv"), _final_means(b / "steps.csv")
        print("strategy,metric,a,b,b_minus_a", file=stream)
        for key in sorted(set(fa) | set(fb)):
            va, vb = fa.get(key, math.nan), fb.get(key, math.nan)
            print(f"{key[0]},{key[1]},{fmt(va)},{fmt(vb)},{fmt(vb - va)}", file=stream)
    return differing


def _final_means(path: Path) -> dict:
    last: dict = {}
    for inst, strat, seed, t, metric, value in read_steps_csv(path):
        key = (inst, strat, seed, metric)
        if key not in last or t > last[key][0]:
            last[key] = (t, value)
    agg: dict = {}
    for (inst, strat, seed, metric), (_, v) in last.items():
        agg.setdefault((strat, metric), []).append(v)
    return {k: float(np.mean(v)) for k, v in agg.items()}
