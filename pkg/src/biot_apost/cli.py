"""Command-line entry point.

    biot-apost run --study {coupled-sim|coupled-fixed|heat} --kmin INT
                   --kmax INT (--tau-ratio FLOAT | --tau FLOAT) --T FLOAT
                   --out DIR [--include-data-osc] [--wnorm-unsquared]
                   [--e2-no-alpha]
    biot-apost run --config FILE

Exit code 0 on success; on a solver failure the failing (k, n) goes to
standard error and the exit code is nonzero. Partial results are written.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Optional, Sequence

from .harness import StudyConfig, StudyError, parse_config_file, run_study

_STUDY_NAMES = {
    "coupled-sim": "coupled-simultaneous",
    "coupled-fixed": "coupled-fixed-tau",
    "heat": "heat",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="biot-apost")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a refinement study")
    run.add_argument("--config", help="key = value config file; flags override it")
    run.add_argument("--study", choices=sorted(_STUDY_NAMES))
    run.add_argument("--kmin", type=int)
    run.add_argument("--kmax", type=int)
    run.add_argument("--tau-ratio", type=float, dest="tau_ratio")
    run.add_argument("--tau", type=float)
    run.add_argument("--T", type=float, dest="T")
    run.add_argument("--out", dest="out")
    run.add_argument("--include-data-osc", action="store_true", default=None)
    run.add_argument("--wnorm-unsquared", action="store_true", default=None)
    run.add_argument("--e2-no-alpha", action="store_true", default=None)
    run.add_argument("--mu", type=float)
    run.add_argument("--lam", type=float)
    run.add_argument("--alpha", type=float)
    run.add_argument("--beta", type=float)
    return parser


def _config_from_args(args: argparse.Namespace) -> StudyConfig:
    if args.config:
        config = parse_config_file(args.config)
    else:
        config = StudyConfig()
    updates: dict = {}
    if args.study is not None:
        updates["study"] = _STUDY_NAMES[args.study]
    if args.kmin is not None:
        updates["k_min"] = args.kmin
    if args.kmax is not None:
        updates["k_max"] = args.kmax
    if args.tau_ratio is not None:
        updates["tau_ratio"] = args.tau_ratio
    if args.tau is not None:
        updates["tau"] = args.tau
    if args.T is not None:
        updates["T"] = args.T
    if args.out is not None:
        updates["out_dir"] = args.out
    if args.include_data_osc is not None:
        updates["include_data_osc"] = True
    if args.wnorm_unsquared is not None:
        updates["wnorm_squared"] = False
    if args.e2_no_alpha is not None:
        updates["e2_alpha"] = False
    for name in ("mu", "lam", "alpha", "beta"):
        val = getattr(args, name)
        if val is not None:
            updates[name] = val
    return replace(config, **updates)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _config_from_args(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if config.out_dir is None:
        print("error: an output directory is required (--out or config 'out')", file=sys.stderr)
        return 2
    try:
        result = run_study(config)
    except StudyError as exc:
        print(f"solver failure at level k={exc.k}, step n={exc.n}", file=sys.stderr)
        return 1
    for row in result.table_rows():
        ratio = f"{row['Est_over_E']:.3f}" if row["E"] else "nan"
        print(f"k={row['k']}: E={row['E']:.6g} Est={row['Est']:.6g} Est/E={ratio}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
