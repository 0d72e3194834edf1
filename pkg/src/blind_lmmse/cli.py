"""Command-line entry point.

Usage::

    blind-lmmse <demo|sweep-alpha|sweep-cv|sweep-n|verify|bounds|datagen>
                [--config FILE] [--out DIR] [--seed S] [--plot]
                [--lambda L] [--n-train N] [--replicates R]

The configuration file holds flat ``key = value`` lines (unknown keys are
rejected); command-line flags override it.  ``verify`` exits nonzero when
any check fails.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ExperimentConfig, load_config
from . import experiments

_COMMANDS = {
    "demo": experiments.run_demo,
    "sweep-alpha": experiments.run_sweep_alpha,
    "sweep-cv": experiments.run_sweep_cv,
    "sweep-n": experiments.run_sweep_n,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blind-lmmse",
        description="LMMSE estimation experiments for blind 1D deconvolution",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("demo", "reconstruct one held-out signal with the exact estimator"),
        ("sweep-alpha", "error vs. approximation bound across exponents"),
        ("sweep-cv", "error vs. bound across kernel-width variability"),
        ("sweep-n", "convergence of the empirical estimator in N"),
        ("verify", "run the cross-route verification suite"),
        ("bounds", "evaluate all bounds for the configured instance"),
        ("datagen", "generate and persist one dataset"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="flat key = value configuration file")
        cmd.add_argument("--out", default="out", help="output directory")
        cmd.add_argument("--seed", type=int, help="override the seed")
        cmd.add_argument("--plot", action="store_true",
                         help="also render SVG figures")
        cmd.add_argument("--lambda", dest="lam",
                         help="regularization level or 'auto'")
        cmd.add_argument("--n-train", dest="n_train", type=int,
                         help="training sample count")
        cmd.add_argument("--replicates", type=int,
                         help="training replicates per sweep cell")
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.lam is not None:
        updates["lam"] = args.lam if args.lam == "auto" else float(args.lam)
    if args.n_train is not None:
        updates["n_train"] = args.n_train
    if args.replicates is not None:
        updates["replicates"] = args.replicates
    return replace(cfg, **updates) if updates else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = _apply_overrides(cfg, args)
    if args.command == "verify":
        path, ok = experiments.run_verify(cfg, args.out)
        sys.stdout.write(path.read_text(encoding="utf-8"))
        return 0 if ok else 1
    if args.command == "bounds":
        paths = experiments.run_bounds(cfg, args.out)
    elif args.command == "datagen":
        paths = experiments.run_datagen(cfg, args.out)
    else:
        paths = _COMMANDS[args.command](cfg, args.out, plot=args.plot)
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
