"""Command-line entry point: ``besovinv <subcommand> --config run.yaml``.

Exit status: 0 on success, 2 for configuration errors, 3 for numerical
failures (solver divergence, degenerate estimates, invalid numerics).
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
import warnings
from typing import Optional, Sequence

from .config import ConfigError, Experiment, load_config
from .experiments import run_experiment
from .forward import ForwardSolveError

log = logging.getLogger("besovinv")

SUBCOMMANDS = {
    "sample-prior": Experiment.SAMPLE_PRIOR,
    "solve-forward": Experiment.SOLVE_FORWARD,
    "make-data": None,
    "run-chain": Experiment.RUN_CHAIN,
    "conv-n": Experiment.TRUNCATION_CONVERGENCE,
    "lipschitz-y": Experiment.DATA_LIPSCHITZ,
    "fernique": Experiment.FERNIQUE_CHECK,
    "prop22": Experiment.PROP22_CHECK,
    "weak-errors": Experiment.WEAK_ERRORS,
    "run": None,
}


def _log_warning(message, category, filename, lineno, file=None, line=None):
    log.warning("%s: %s", category.__name__, message)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="besovinv", description="Besov-prior Bayesian inversion experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, exp in SUBCOMMANDS.items():
        if name == "run":
            helptext = "run the experiment named in the config"
        elif name == "make-data":
            helptext = "generate synthetic observations and the truth record"
        else:
            helptext = f"run {exp.value} (overrides the config's experiment field)"
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, metavar="PATH", help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, metavar="DIR", help="override output_dir")
        p.add_argument("--threads", type=int, default=1, help="worker threads for row-level work")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    with warnings.catch_warnings():
        warnings.simplefilter("default")
        warnings.showwarning = _log_warning
        return _run(args)


def _run(args: argparse.Namespace) -> int:
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config, validate=False)
        exp = SUBCOMMANDS[args.command]
        if exp is not None:
            cfg = dataclasses.replace(cfg, experiment=exp)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = dataclasses.replace(cfg, output_dir=args.out)
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        summary = run_experiment(cfg, cfg.output_dir, args.threads, make_data_only=args.command == "make-data")
    except (ForwardSolveError, ArithmeticError, ValueError, NotImplementedError) as exc:
        mod = type(exc).__module__
        print(f"numerical failure [{mod}.{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 3
    print(f"{args.command}: wrote artifacts to {cfg.output_dir}")
    for key, val in summary.items():
        if isinstance(val, (int, float, bool, str)):
            print(f"  {key} = {val}")
        elif isinstance(val, dict):
            for sub, v in val.items():
                print(f"  {key}[{sub}] = {v}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
