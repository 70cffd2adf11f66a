"""
Experiment command line: one subcommand per scenario
"""

import argparse
import sys
from typing import Any, Dict, List, Optional

import sentry_sdk

from ..core.config import config, load_config_document, parse_config
from ..core.engine import run_experiment
from ..core.exceptions import ConfigurationError, TLCEngineError
from ..core.models import ScenarioName, SimulationMode
from ..utils.logging import bind_run_context, configure_logging, get_logger

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

_HELP = {
    ScenarioName.SIMULATE: "Simulate replications at fixed parameters",
    ScenarioName.OPTIMIZE: "Batch gradient descent on replication-averaged IPA gradients",
    ScenarioName.ONLINE: "Windowed online adaptation along one sample path",
    ScenarioName.VALIDATE_GRADIENT: "Compare the IPA gradient with central finite differences",
    ScenarioName.SWEEP: "Optimise every row of an interarrival sweep",
    ScenarioName.COMPARE_BASELINE: "Baseline vs unoptimised vs optimised control across load scalings",
}


def _seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tlc_engine",
        description="Adaptive traffic light control: simulation, IPA gradients and optimisation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {config.version}")
    subparsers = parser.add_subparsers(dest="scenario", required=True, metavar="SCENARIO")
    for scenario in ScenarioName:
        sub = subparsers.add_parser(scenario.value, help=_HELP[scenario])
        sub.add_argument("--config", metavar="PATH", help="YAML experiment configuration")
        sub.add_argument("--seed", type=_seed, metavar="U64", help="Master seed")
        sub.add_argument("--out", metavar="DIR", help="Output directory")
        sub.add_argument("--mode", choices=[m.value for m in SimulationMode], help="Simulation mode")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "scenario": args.scenario,
        "seed": args.seed,
        "output_dir": args.out,
        "mode": args.mode,
    }


def _init_sentry() -> None:
    if config.sentry_dsn:
        sentry_sdk.init(dsn=config.sentry_dsn, environment=config.environment, release=config.version)


def main(argv: Optional[List[str]] = None) -> int:
    """Run one scenario and return the process exit code

    0 on success, 1 for configuration errors, 2 for anything that fails
    while running.
    """
    args = build_parser().parse_args(argv)
    configure_logging()
    _init_sentry()

    overrides = _overrides(args)
    try:
        if args.config:
            experiment = parse_config(args.config, overrides)
        else:
            experiment = load_config_document(
                {k: v for k, v in overrides.items() if v is not None}, source="<command line>"
            )
    except ConfigurationError as e:
        print(f"configuration error: {e.message}", file=sys.stderr)
        return EXIT_CONFIG

    bind_run_context(scenario=experiment.scenario.value, seed=experiment.seed, mode=experiment.mode.value)
    try:
        result = run_experiment(experiment)
    except ConfigurationError as e:
        print(f"configuration error: {e.message}", file=sys.stderr)
        return EXIT_CONFIG
    except TLCEngineError as e:
        logger.error("Scenario failed", error_code=e.error_code, error=e.message)
        print(f"error [{e.error_code}]: {e.message}", file=sys.stderr)
        sentry_sdk.capture_exception(e)
        return EXIT_RUNTIME
    except Exception as e:
        logger.exception("Unexpected failure")
        print(f"unexpected error: {e}", file=sys.stderr)
        sentry_sdk.capture_exception(e)
        return EXIT_RUNTIME

    logger.info("Scenario complete", output_dir=str(result.output_dir), artifacts=len(result.artifacts))
    return EXIT_OK
