"""Experiment configuration: one JSON document, every default embedded."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from .acquisition import Strategy
from .blackbox import BlackBox, MoonsModel, SyntheticLinearModel, make_external
from .sampling import PoolConfig, default_width
from .surrogate import Prior


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    "dimension": 2,
    "blackbox": {"kind": "moons", "sharpness": 2.0},
    "strategies": ["eagle", "predictive_variance", "uniform_random", "kernel_proportional"],
    "pool": {"pool_size": 1000, "seed_count": 10, "batch_size": 10, "budget": 500, "perturb_scale": 1.0},
    # lam null means lam = d; n0 and sigma0_sq are not given by the method and are flagged in reports
    "prior": {"n0": 1.0, "sigma0_sq": 1.0, "lam": None},
    "kernel_width": None,
    "repeats": 5,
    "rng_seed": 0,
    "theory_mode": False,
    "sequential_batch": False,
    "instances": None,
    "instance_sampler": {"kind": "gaussian", "count": 5, "scale": 1.0},
    "top_k": 5,
    "credible_level": 0.9,
    "reference_strategy": "predictive_variance",
    "jobs": 1,
    "theory": {"deltas": [0.05, 0.1], "trials": 200, "nu_acc": 0.5, "kappa_every": 50},
    "output_dir": "results",
}

# choices not pinned down by the method itself; echoed in every report
UNSPECIFIED_DEFAULTS = ("prior.n0", "prior.sigma0_sq", "pool.perturb_scale", "blackbox.sharpness")


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if k not in out:
            raise ConfigError(f"unknown config key {k!r}")
        if isinstance(out[k], dict) and isinstance(v, dict) and k != "blackbox":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    dimension: int
    blackbox: dict
    strategies: list
    pool: dict
    prior: dict
    kernel_width: float | None
    repeats: int
    rng_seed: int
    theory_mode: bool
    sequential_batch: bool
    instances: list | None
    instance_sampler: dict
    top_k: int
    credible_level: float
    reference_strategy: str
    jobs: int
    theory: dict
    output_dir: str
    _phi_star: Any = field(default=None, repr=False)

    @classmethod
    def from_dict(cls, override: dict | None = None) -> "ExperimentConfig":
        raw = _merge(DEFAULTS, override or {})
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | None, **cli_overrides) -> "ExperimentConfig":
        data = {}
        if path:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        data = _merge(DEFAULTS, data)
        for key, value in cli_overrides.items():
            if value is None:
                continue
            if key == "budget":
                data["pool"]["budget"] = value
            else:
                data[key] = value
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        if int(self.dimension) <= 0:
            raise ConfigError("dimension must be positive")
        for s in self.strategies:
            try:
                Strategy(s)
            except ValueError as exc:
                raise ConfigError(f"unknown strategy {s!r}") from exc
        if not self.strategies:
            raise ConfigError("at least one strategy is required")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigError("strategies must be distinct; rows are keyed by strategy name")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        kind = self.blackbox.get("kind")
        if kind not in ("moons", "linear", "external"):
            raise ConfigError(f"unknown black box kind {kind!r}")
        if kind == "moons" and self.dimension < 2:
            raise ConfigError("moons black box needs dimension >= 2")
        if kind == "linear" and self.blackbox.get("phi_star") is not None:
            if len(self.blackbox["phi_star"]) != self.dimension:
                raise ConfigError("phi_star length must equal dimension")
        if self.instances is not None:
            for x in self.instances:
                if len(x) != self.dimension:
                    raise ConfigError("every instance must have length dimension")
        try:
            self.pool_config()
            self.prior_obj()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    # -- resolved pieces -------------------------------------------------
    def pool_config(self) -> PoolConfig:
        p = dict(self.pool)
        if isinstance(p.get("perturb_scale"), list):
            p["perturb_scale"] = tuple(p["perturb_scale"])
        return PoolConfig(**p, rng_seed=self.rng_seed)

    def prior_obj(self) -> Prior:
        lam = self.prior.get("lam")
        return Prior(
            n0=float(self.prior["n0"]),
            sigma0_sq=float(self.prior["sigma0_sq"]),
            lam=float(self.dimension if lam is None else lam),
        )

    def width(self) -> float:
        return default_width(self.dimension) if self.kernel_width is None else float(self.kernel_width)

    def phi_star(self) -> np.ndarray | None:
        if self.blackbox.get("kind") != "linear":
            return None
        if self.blackbox.get("phi_star") is not None:
            return np.asarray(self.blackbox["phi_star"], dtype=float)
        rng = np.random.default_rng(int(self.blackbox.get("phi_seed", 0)))
        phi = rng.standard_normal(self.dimension)
        norm = self.blackbox.get("phi_norm")
        return phi if norm is None else phi * (float(norm) / np.linalg.norm(phi))

    def instance_points(self) -> list[np.ndarray]:
        if self.instances is not None:
            return [np.asarray(x, dtype=float) for x in self.instances]
        spec = self.instance_sampler
        rng = np.random.default_rng(stream_seed(self.rng_seed, "instances"))
        count, scale = int(spec.get("count", 5)), float(spec.get("scale", 1.0))
        d = self.dimension
        pts = []
        for _ in range(count):
            if spec.get("kind", "gaussian") == "moons":
                head = np.array([rng.uniform(-1.0, 2.0), rng.uniform(-0.5, 1.0)])
                pts.append(np.concatenate([head, scale * rng.standard_normal(d - 2)]))
            elif spec.get("kind", "gaussian") == "zeros":
                pts.append(np.zeros(d))
            else:
                pts.append(scale * rng.standard_normal(d))
        return pts

    def make_blackbox(self, noise_seed: int) -> BlackBox:
        spec = self.blackbox
        kind = spec["kind"]
        if kind == "moons":
            return MoonsModel(float(spec.get("sharpness", 2.0)), self.dimension)
        if kind == "linear":
            return SyntheticLinearModel(self.phi_star(), float(spec.get("sigma", 0.0)), noise_seed)
        return make_external(spec)

    def resolved(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if not k.startswith("_")}
        out["prior"] = asdict(self.prior_obj())
        out["kernel_width"] = self.width()
        out["instances"] = [x.tolist() for x in self.instance_points()]
        if self.blackbox.get("kind") == "linear":
            out["blackbox"] = dict(self.blackbox, phi_star=self.phi_star().tolist())
        out["unspecified_defaults"] = list(UNSPECIFIED_DEFAULTS)
        return out


def stream_seed(base: int, *parts) -> int:
    """Stable 63-bit seed from ``(base, *parts)``; independent of PYTHONHASHSEED."""
    key = ":".join(str(p) for p in (base, *parts)).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") >> 1


def is_float_equal(a: float, b: float) -> bool:
    return (math.isnan(a) and math.isnan(b)) or a == b
