"""
Command line entry point.

    python -m app.cli simulate --config scenarios/seamless_run.json
    python -m app.cli run      --config scenarios/seamless_run.json --backend eskf,pf
    python -m app.cli evaluate --config scenarios/seamless_run.json
    python -m app.cli compare  runs/*/summary.csv --with-reference

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from .config import RunConfig, load_run_config
from .errors import ConfigurationError, PositioningError
from .logging_config import get_logger
from .metrics import render_table
from .pipeline import cmd_compare, cmd_evaluate, cmd_run, cmd_simulate

logger = get_logger(__name__)


def _add_run_options(p: argparse.ArgumentParser, with_backend: bool = True) -> None:
    p.add_argument("--config", required=True, help="run configuration JSON")
    p.add_argument("--seed", type=int, default=None, help="override the scenario/run seed")
    p.add_argument("--out", default=None, help="override the output directory")
    if with_backend:
        p.add_argument("--backend", default=None, help="comma-separated subset of eskf,fgo,pf,pdr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="positioning",
        description="Seamless outdoor-indoor pedestrian positioning: simulate, run, evaluate, compare.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize observation logs and ground truth")
    _add_run_options(p, with_backend=False)
    p.add_argument("--imu", action="store_true", help="also write a synthetic imu.csv")

    p = sub.add_parser("run", help="replay observation logs through the selected back-ends")
    _add_run_options(p)
    p.add_argument("--from-imu", action="store_true", help="derive steps from imu.csv instead of steps.jsonl")

    p = sub.add_parser("evaluate", help="error metrics, CDFs and the comparison table")
    _add_run_options(p)

    p = sub.add_parser("compare", help="combine summary.csv files from several evaluations")
    p.add_argument("summaries", nargs="+", help="summary.csv files")
    p.add_argument("--out", default=None, help="write the table as CSV")
    p.add_argument("--with-reference", action="store_true", help="append field-trial reference rows")
    return parser


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    doc = cfg.model_dump()
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.out is not None:
        doc["out_dir"] = str(Path(args.out).resolve())
    if getattr(args, "backend", None):
        doc["backends"] = [b.strip() for b in args.backend.split(",") if b.strip()]
    if getattr(args, "from_imu", False) or getattr(args, "imu", False):
        doc["from_imu"] = True
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as e:
        raise ConfigurationError(f"invalid command line overrides: {e}")


def _dispatch(args: argparse.Namespace) -> None:
    if args.command == "compare":
        table = cmd_compare(args.summaries, Path(args.out) if args.out else None, args.with_reference)
        print(render_table(table))
        return

    cfg = _apply_overrides(load_run_config(args.config), args)
    logger.info(f"Starting {args.command} with output directory {cfg.out_dir}")
    if args.command == "simulate":
        paths = cmd_simulate(cfg)
        logger.info(f"simulate finished: {sorted(str(p) for p in paths.values())}")
    elif args.command == "run":
        runs = cmd_run(cfg)
        logger.info(f"run finished: {sorted(runs)}")
    elif args.command == "evaluate":
        results = cmd_evaluate(cfg)
        print((Path(cfg.out_dir) / "comparison.txt").read_text(encoding="utf-8"), end="")
        logger.info(f"evaluate finished: {sorted(results)}")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _dispatch(args)
    except PositioningError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
