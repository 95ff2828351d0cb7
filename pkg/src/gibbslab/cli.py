"""Command-line entry point: one subcommand per harness task."""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .algebra import IdentityViolation
from .harness import TASKS, ConfigError, ExperimentConfig, ResourceError, default_config, emit, load_config, run


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gibbslab", description="Dense experiments on 1D Gibbs samplers.")
    sub = p.add_subparsers(dest="task", required=True)
    for name in TASKS:
        s = sub.add_parser(name, help=f"run the {name} task")
        s.add_argument("--config", help="YAML experiment config")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--out", help="output directory")
        s.add_argument("--budget-bytes", type=int, help="memory budget for dense superoperators")
        s.add_argument("--jobs", type=int, help="worker processes")
    return p


def resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else default_config(args.task)
    if cfg.task(args.task) is None:
        cfg = replace(cfg, tasks=cfg.tasks + ({"name": args.task},))
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["out"] = args.out
    if args.budget_bytes is not None:
        over["budget_bytes"] = args.budget_bytes
    if args.jobs is not None:
        over["jobs"] = args.jobs
    return replace(cfg, **over)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = resolve(args)
        bundle = run(cfg, only=args.task)
    except (ConfigError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IdentityViolation as exc:
        print(f"identity failed: {exc}", file=sys.stderr)
        return 3
    for path in emit(bundle, cfg.out):
        print(path)
    for t in bundle.tasks:
        print(f"{t.name}: {'PASS' if t.ok else 'FAIL'}")
    return 0 if bundle.ok else 1


if __name__ == "__main__":
    sys.exit(main())
