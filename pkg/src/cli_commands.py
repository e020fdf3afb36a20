import argparse
import logging
import sys
from dataclasses import replace
from typing import Any, Callable, Dict

from .controllers.scenario_controller import Scenario, ScenarioController, SweepOutput, emit_config, fingerprint
from .controllers.simulation_controller import SimulationController
from .controllers.sweep_controller import SweepController

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace, Scenario], Dict[str, Any]]

# outputs forced by the single-purpose subcommands; `sweep` keeps the file's list
_COMMAND_OUTPUTS = {
    "coverage": (SweepOutput.ANALYTIC_COVERAGE,),
    "rate": (SweepOutput.ANALYTIC_RATE,),
    "simulate": (SweepOutput.MC_COVERAGE, SweepOutput.MC_RATE),
}


def _add_common_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="scenario file (defaults apply when omitted)")
    parser.add_argument("--seed", type=int, metavar="U64", help="override [mc] seed")
    parser.add_argument("--out", metavar="PATH", help="output file (default: standard output)")
    parser.add_argument("--workers", type=int, metavar="INT", help="worker processes (overrides [mc] n_workers)")


def _sweep_handler(outputs=None) -> Handler:
    def handler(args: argparse.Namespace, scenario: Scenario) -> Dict[str, Any]:
        if outputs is not None:
            scenario = replace(scenario, sweep=replace(scenario.sweep, outputs=outputs))
        controller = SweepController(workers=args.workers)
        return controller.run_sweep(scenario, output_file=args.out, stream=sys.stdout)
    return handler


def _fit_neff(args: argparse.Namespace, scenario: Scenario) -> Dict[str, Any]:
    controller = SimulationController(workers=args.workers)
    return controller.fit_neff(scenario, output_file=args.out, curve_file=args.curve_out, stream=sys.stdout)


def _emit_config(args: argparse.Namespace, scenario: Scenario) -> Dict[str, Any]:
    controller = ScenarioController()
    if args.out:
        return controller.write_config(scenario, args.out)
    sys.stdout.write(emit_config(scenario))
    return {"status": "success", "message": "Config written to standard output",
            "details": {"fingerprint": fingerprint(scenario)}}


def setup_cli_commands(subparsers) -> None:
    """Register the subcommands; each parser gets a ``handler`` default returning a status dict."""
    descriptions = {
        "coverage": "Analytic coverage probability over the sweep values",
        "rate": "Analytic average achievable rate over the sweep values",
        "simulate": "Monte Carlo coverage and rate over the sweep values",
        "sweep": "Sweep with the outputs listed in the scenario file",
    }
    for name, help_text in descriptions.items():
        parser = subparsers.add_parser(name, help=help_text, description=help_text)
        _add_common_options(parser)
        parser.set_defaults(handler=_sweep_handler(_COMMAND_OUTPUTS.get(name)))

    fit = subparsers.add_parser("fit-neff", help="Fit the effective number of satellites",
                                description="Fit the effective number of satellites to a target curve")
    _add_common_options(fit)
    fit.add_argument("--curve-out", metavar="PATH", help="also write the fitted-versus-target curve as CSV")
    fit.set_defaults(handler=_fit_neff)

    emit = subparsers.add_parser("emit-config", help="Write the canonical form of a scenario file")
    _add_common_options(emit)
    emit.set_defaults(handler=_emit_config)

    logger.debug("CLI commands registered")
