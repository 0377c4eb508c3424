"""Command-line interface: solve, table, diagnose and dump-basis."""
import argparse
from dataclasses import replace
import logging
from pathlib import Path
from typing import List, Optional

from spectral_lod.config import ExperimentConfig
from spectral_lod.experiment import cmd_diagnose, cmd_dump_basis, cmd_solve, cmd_table

__all__ = ["build_parser", "load_config", "main"]

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per pipeline entry point."""
    parser = argparse.ArgumentParser(
        prog="spectral-lod",
        description="Spectral LOD multiscale solver for high-contrast diffusion problems.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    helps = {
        "solve": "Offline and online stage for every (H, beta) cell; write result tables.",
        "table": "Convergence table and least-squares order fit.",
        "diagnose": "Eigenvalue bounds, L_i histogram and K^T A K structure.",
        "dump-basis": "Build and dump the offline stage of every cell.",
    }
    for name, text in helps.items():
        sub = commands.add_parser(name, help=text, description=text)
        sub.add_argument("--config", type=Path, default=None, help="YAML configuration file.")
        sub.add_argument("--out", type=str, default=None, help="Output directory.")
        sub.add_argument("--threads", type=int, default=None, help="Worker thread budget.")
        sub.add_argument("--fine", type=int, default=None, help="Fine cells per side.")
        sub.add_argument("--seed", type=int, default=None, help="Dual-node seed.")
        verbosity = sub.add_mutually_exclusive_group()
        verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging.")
        verbosity.add_argument("--quiet", "-q", action="store_true", help="Warnings only.")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file values overridden by command-line flags."""
    config = ExperimentConfig.from_yaml(args.config) if args.config else ExperimentConfig()
    overrides = {
        "out_dir": args.out,
        "threads": args.threads,
        "fine_divisions": args.fine,
        "dual_seed": args.seed,
    }
    overrides = {key: value for key, value in overrides.items() if value is not None}
    return replace(config, **overrides) if overrides else config


def _setup_logging(args: argparse.Namespace, out_dir: str) -> logging.Handler:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(Path(out_dir) / "run.log", mode="w")
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.setLevel(level)
    logging.getLogger().addHandler(handler)
    return handler


def main(argv: Optional[List[str]] = None) -> int:
    """Run a subcommand; exit status 0 iff it succeeded (for solve: all cells pass)."""
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args)
    except (FileNotFoundError, ValueError) as err:
        logging.basicConfig(level=logging.ERROR, format=LOG_FORMAT)
        logger.error("%s", err)
        return 2
    handler = _setup_logging(args, config.out_dir)
    logger.info("command %s, output in %s", args.command, config.out_dir)
    try:
        if args.command == "solve":
            return 0 if cmd_solve(config) else 1
        if args.command == "table":
            cmd_table(config)
        elif args.command == "diagnose":
            cmd_diagnose(config)
        elif args.command == "dump-basis":
            cmd_dump_basis(config)
        return 0
    except (ValueError, RuntimeError) as err:
        logger.error("%s failed: %s", args.command, err)
        return 2
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
