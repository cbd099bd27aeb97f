"""Command-line entry point: ``osiris-ope {bench,consistency,relevance-map,diagnostics}``.

Exit codes: 0 on success, 1 on invalid input, 2 when a diagnostic check fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .experiments import (ExperimentConfig, run_benchmark, run_consistency_sweep,
                          run_diagnostics, run_relevance_map)
from .mdp import ValidationError

EXIT_OK, EXIT_INVALID, EXIT_CHECK_FAILED = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="osiris-ope",
                                description="Seeded off-policy evaluation experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int, help="number of trials")
    common.add_argument("--batch-size", type=int, help="trajectories per batch")
    common.add_argument("--alpha", type=float, action="append",
                        help="significance level; repeat for several")
    common.add_argument("--env", help="dilly_dallying, express or file:<path>")
    common.add_argument("--out", help="output directory")
    sub.add_parser("bench", parents=[common], help="estimator benchmark table")
    sub.add_parser("consistency", parents=[common], help="OSIRWIS bias against batch size")
    sub.add_parser("relevance-map", parents=[common], help="per-state mean estimated relevance")
    d = sub.add_parser("diagnostics", parents=[common], help="Monte Carlo identity checks")
    d.add_argument("--smoke", action="store_true", help="fast trivial checks only")
    return p


def build_config(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.trials is not None:
        overrides["n_trials"] = args.trials
    if args.batch_size is not None:
        overrides["batch_size"] = args.batch_size
    if args.alpha:
        overrides["alpha_list"] = tuple(args.alpha)
    if args.env is not None:
        overrides["env"] = args.env
    if args.out is not None:
        overrides["output_dir"] = args.out
    if getattr(args, "smoke", False):
        overrides["smoke"] = True
    return replace(config, **overrides) if overrides else config


def _fmt(v):
    return "-" if v is None else f"{v:.4g}" if isinstance(v, float) else str(v)


def _table(rows, cols) -> str:
    cells = [[_fmt(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = build_config(args)
        if args.command == "bench":
            res = run_benchmark(config)
            print(_table(res.summary, ["estimator", "alpha", "n_ok", "mean", "std", "rmse"]))
            print(f"truth {res.truth:.6g}")
        elif args.command == "consistency":
            res = run_consistency_sweep(config)
            print(_table(res.summary, ["batch_size", "estimator", "alpha", "n", "mean", "std", "bias"]))
        elif args.command == "relevance-map":
            res = run_relevance_map(config)
            print(_table(res.rows, ["alpha", "state", "row", "col", "mean_theta", "mean_visits"]))
        else:
            res = run_diagnostics(config)
            for c in res.checks:
                status = "PASS" if c.passed else "FAIL"
                print(f"{status} {c.name}: lhs={c.lhs:.6g} rhs={c.rhs:.6g}")
            print(json.dumps({"all_passed": res.all_passed}))
            if not res.all_passed:
                return EXIT_CHECK_FAILED
        for path in res.paths.values():
            print(f"wrote {path}")
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
