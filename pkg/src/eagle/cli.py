"""Command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, ExperimentConfig
from .runner import benchmark, compare, explain, validate_theory


def _strategies(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _vector(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eagle", description="Active perturbation selection for local explanations.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config; omitted keys take the built-in defaults")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        p.add_argument("--seed", type=int, help="base rng seed")
        p.add_argument("--strategies", type=_strategies, help="comma-separated strategy names")
        p.add_argument("--budget", type=int, help="labelled queries per explanation")
        p.add_argument("--repeats", type=int, help="repeated explanations per instance and strategy")
        p.add_argument("--theory-mode", action="store_true", default=None, help="scale perturbations into the unit ball")

    p = sub.add_parser("explain", help="explain one instance with each listed strategy")
    common(p)
    p.add_argument("--instance", type=_vector, help="comma-separated x0 (default: first configured instance)")
    common(sub.add_parser("benchmark", help="run all instances, strategies and repeats"))
    common(sub.add_parser("validate-theory", help="check the bounds on synthetic traces"))
    p = sub.add_parser("compare", help="diff two result directories")
    p.add_argument("dir_a")
    p.add_argument("dir_b")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "compare":
        compare(args.dir_a, args.dir_b)
        return 0
    try:
        cfg = ExperimentConfig.load(
            args.config,
            rng_seed=args.seed,
            strategies=args.strategies,
            budget=args.budget,
            repeats=args.repeats,
            theory_mode=args.theory_mode,
        )
        out = args.out or cfg.output_dir
        if args.command == "explain":
            outcome = explain(cfg, out, args.instance)
        elif args.command == "benchmark":
            outcome = benchmark(cfg, out)
        else:
            outcome = validate_theory(cfg, out)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for f in outcome.failures:
        print(f"check failed: {f}", file=sys.stderr)
    return 0 if outcome.ok else 1


if __name__ == "__main__":
    sys.exit(main())
