import argparse
import logging
import sys
from typing import List, Optional

from .cli_commands import setup_cli_commands
from .controllers.scenario_controller import ScenarioController
from .errors import ConfigError
from . import worker_manager

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_EXIT_CODES = {"config": EXIT_CONFIG, "numeric": EXIT_NUMERIC, "io": EXIT_FAILURE}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="leo_coverage",
        description="Coverage probability and rate of LEO satellite downlinks, analytic and simulated")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    verbosity.add_argument("--verbose", action="store_true", help="log debug detail")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True
    setup_cli_commands(subparsers)
    return parser


def exit_code(result: dict) -> int:
    """Map a command's status dictionary to the process exit code."""
    if result.get("status") == "success":
        return EXIT_OK
    error_type = (result.get("details") or {}).get("error_type")
    return _EXIT_CODES.get(error_type, EXIT_FAILURE)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one subcommand. Returns (and exits with) 0, 2 on config errors, 3 on numerical failures."""
    parser = build_parser()
    args = parser.parse_args(argv)

    level = logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stderr
    )
    logger = logging.getLogger(__name__)

    scenarios = ScenarioController()
    try:
        scenario = scenarios.load(args.config, seed=args.seed, workers=args.workers)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    logger.debug(f"Scenario: {scenarios.describe(scenario)}")

    try:
        result = args.handler(args, scenario)
    finally:
        worker_manager.shutdown_worker_pool()

    code = exit_code(result)
    if code == EXIT_OK:
        logger.info(result["message"])
    else:
        logger.error(result["message"])
    return code


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
