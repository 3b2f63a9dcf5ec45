import argparse
import sys
from typing import List, Optional

from dotenv import load_dotenv
from tabulate import tabulate

from controller.scenario_config import load_config
from controller.workflow_manager import SUBCOMMANDS, run_workflow
from utils.file_parser import ConfigParsingError
from utils.logger import logger

load_dotenv()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfclab",
        description="Stochastic Fourier coefficient lab: noncausal integrals, SFCs and identification of dY = a dB + b dt",
    )
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", required=True, help="Path to a JSON scenario")
        sub.add_argument("--replicates", type=int, default=None, help="Override replication.count")
        sub.add_argument("--seed", type=int, default=None, help="Override replication.base_seed")
        sub.add_argument("--out", default=None, help="Output directory (default: outputs.directory)")
        sub.add_argument("--threads", type=int, default=None, help="Worker processes")
        sub.add_argument("--quiet", action="store_true", help="Hide the progress bar")
    return parser


def _summary_table(summary: dict) -> str:
    rows = []
    for name, stats in sorted(summary.get("metrics", {}).items()):
        rows.append([name, stats.get("mean"), stats.get("rms"), stats.get("q05"), stats.get("q50"),
                     stats.get("q95"), stats.get("pass")])
    return tabulate(rows, headers=["metric", "mean", "rms", "q05", "q50", "q95", "pass"], floatfmt=".4g")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        overrides = {}
        if args.replicates is not None:
            overrides["count"] = args.replicates
        if args.seed is not None:
            overrides["base_seed"] = args.seed
        if overrides:
            config = config.model_copy(update={"replication": config.replication.model_copy(update=overrides)})
    except ConfigParsingError as e:
        logger.error(f"[CLI] {e}")
        return 2

    result = run_workflow(args.subcommand, config, args.out, args.threads, show_progress=not args.quiet)
    if result["status"] != "success":
        logger.error(f"[CLI] {args.subcommand} failed: {result.get('error')}")
        return 1

    if args.subcommand != "basis-diagnose":
        print(_summary_table(result["summary"]))
    for path in result["files"]:
        print(f"wrote {path}")
    return 0 if result["summary"].get("passed") is not False else 1


if __name__ == "__main__":
    sys.exit(main())
