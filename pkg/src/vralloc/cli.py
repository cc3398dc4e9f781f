"""Command-line entry point: ``vralloc {sweep,converge,ne-check,run,validate-config}``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import LEARNERS, ConfigError, ExperimentConfig, load_config
from .sim import (convergence_experiment, export_metrics, ne_check, run_replication,
                  sweep_sbs_count)


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _learner_list(text: str) -> list[str]:
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in LEARNERS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown learner(s) {bad}; choose from {', '.join(LEARNERS)}")
    return names


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file (defaults if omitted)")
    common.add_argument("--seed", type=_seed, help="master seed")
    common.add_argument("--replications", type=int, help="replications per setting")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--learner", type=_learner_list, help="comma-separated learner names")
    common.add_argument("--sbs", type=_int_list, help="SBS counts, e.g. 2,3,4 or 2-7")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for replications")

    parser = argparse.ArgumentParser(prog="vralloc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("sweep", parents=[common], help="average user delay versus number of SBSs")
    sub.add_parser("converge", parents=[common], help="convergence after a content change")
    sub.add_parser("ne-check", parents=[common], help="learned strategies versus exact equilibria")
    sub.add_parser("run", parents=[common], help="per-slot metrics of single replications")
    sub.add_parser("validate-config", parents=[common], help="parse and validate a config file")
    return parser


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.replications is not None:
        changes["replications"] = args.replications
    if args.out is not None:
        changes["output_dir"] = str(args.out)
    if args.learner:
        changes["learner"] = args.learner[0]
    if args.sbs and len(args.sbs) == 1:
        changes["network.num_sbs"] = args.sbs[0]
    config = config.replace(**changes)
    config.validate()
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    return config


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"vralloc: error: {exc}", file=sys.stderr)
        return 2

    out = Path(config.output_dir)
    if args.command == "validate-config":
        print(f"ok: config_sha256={config.config_hash()}")
        return 0
    if args.command == "sweep":
        sbs = args.sbs or list(range(2, 8))
        learners = args.learner or ["esn-transfer", "q-corr", "q-nocorr"]
        res = sweep_sbs_count(config, sbs, learners, jobs=args.jobs, out_dir=out)
        for b, lrn, mean, std, reps in res.rows:
            if reps:
                print(f"B={b} {lrn}: {mean:.6f} +/- {std:.6f} s ({reps} runs)")
            else:
                print(f"B={b} {lrn}: no user served in any run")
    elif args.command == "converge":
        learners = args.learner or ["esn-transfer", "esn-plain", "q-corr"]
        res = convergence_experiment(config, learners, jobs=args.jobs, out_dir=out)
        for lrn, its in res.iterations.items():
            print(f"{lrn}: median iterations to converge {float(np.median(its)):.1f}")
    elif args.command == "ne-check":
        report = ne_check(config)
        print("\n".join(report.lines()))
        return 0 if report.is_ne else 1
    elif args.command == "run":
        records = [run_replication(config, replication=r) for r in range(config.replications)]
        export_metrics(records, out, config)
        for rec in records:
            print(f"replication {rec.replication}: avg user delay "
                  f"{rec.summary['avgUserDelay_s']:.6f} s")
    print(f"wrote results to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
