"""Command-line interface: `design-late estimate|simulate|diagnose|presets`."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Union

import yaml

from design_late.config import Config
from design_late.errors import (
    IoError,
    LateError,
    NumericalError,
    TooLarge,
    UsageError,
)
from design_late.estimators.blocked import analyze_blocked
from design_late.estimators.clustered import (
    aggregate,
    analyze_clustered,
    estimate_blocked_clustered,
)
from design_late.estimators.core import analyze
from design_late.estimators.diagnostics import diagnose
from design_late.models.dataset import Dataset
from design_late.models.results import LateResult, PooledResult
from design_late.models.run_config import Design, RunConfig
from design_late.models.simulation_config import SimulationConfig
from design_late.simulation.monte_carlo import run_monte_carlo
from design_late.utils import get_copy_name

from .io import load_dataset
from .reports import ReportFormat, write_report

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def run_estimate(data: Dataset, config: RunConfig) -> Union[LateResult, PooledResult]:
    """Dispatches to the estimator of the configured design."""
    methods = config.methods()
    if config.design == Design.SIMPLE:
        return analyze(data, methods, config.alpha, config.inference)
    if config.design == Design.BLOCKED:
        return analyze_blocked(
            data,
            methods,
            config.alpha,
            config.inference,
            scheme=config.block_weight_scheme,
            policy=config.block_policy,
            with_fixed_effects_iv=config.fixed_effects_iv,
        )
    if config.design == Design.CLUSTERED:
        return analyze_clustered(
            aggregate(data, config.weight_scheme),
            methods,
            config.alpha,
            config.inference,
        )
    return estimate_blocked_clustered(
        data,
        weight_scheme=config.weight_scheme,
        scheme=config.block_weight_scheme,
        policy=config.block_policy,
        methods=methods,
        alpha=config.alpha,
        reference=config.inference,
    )


def find_preset(name: str) -> tuple[SimulationConfig, Path]:
    """Looks a simulation preset up by name, then by file name.

    Raises
    ------
    UsageError
        If no preset matches.
    """
    presets = SimulationConfig.load_all_from(list(Config.SIMULATION_DIRS))
    for preset, path in presets:
        if preset.name == name:
            return preset, path
    for preset, path in presets:
        if path.stem == name:
            return preset, path
    raise UsageError(f"no simulation preset named '{name}'")


def _format(args: argparse.Namespace) -> Optional[ReportFormat]:
    return None if args.format is None else ReportFormat(args.format)


def _estimate(args: argparse.Namespace) -> None:
    config = RunConfig.load_from(args.config)
    data = load_dataset(args.data, config)
    result = run_estimate(data, config)
    write_report(result, args.out or config.output_path, _format(args))


def _diagnose(args: argparse.Namespace) -> None:
    config = RunConfig.load_from(args.config)
    data = load_dataset(args.data, config)
    write_report(diagnose(data, config.design, config.weight_scheme), args.out)


def _simulate(args: argparse.Namespace) -> None:
    if args.config is not None:
        cfg = SimulationConfig.load_from(args.config)
    else:
        cfg, _ = find_preset(args.preset)
    cfg = cfg.with_overrides(reps=args.reps, seed=args.seed, threads=args.threads)
    logging.info(
        f"Simulating '{cfg.name}': {cfg.num_datasets} datasets x {cfg.reps} "
        f"replications on {cfg.threads} threads"
    )
    write_report(run_monte_carlo(cfg), args.out, _format(args))


def _presets_list(args: argparse.Namespace) -> None:
    for preset, path in SimulationConfig.load_all_from(list(Config.SIMULATION_DIRS)):
        origin = "user" if path.parent == Config.SIMULATIONS_USER_DIR else "built-in"
        print(f"{preset.name}\t{origin}\t{preset.description}")


def _presets_copy(args: argparse.Namespace) -> None:
    preset, path = find_preset(args.name)
    copy = preset.model_copy(update={"name": get_copy_name(preset.name)})
    try:
        new_path = copy.save_copy_to(path, Config.SIMULATIONS_USER_DIR)
    except OSError as e:
        raise IoError(f"cannot copy preset '{args.name}': {e}") from e
    print(new_path)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="design-late",
        description="Design-based LATE estimation for randomized trials.",
    )
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log progress messages"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def add_output(command, formats=True):
        command.add_argument("--out", type=Path, help="report file, stdout if absent")
        if formats:
            command.add_argument(
                "--format",
                choices=[f.value for f in ReportFormat],
                help="report format, by default from the --out suffix",
            )

    estimate = commands.add_parser("estimate", help="estimate the LATE of a trial")
    estimate.add_argument("--data", type=Path, required=True, help="CSV data file")
    estimate.add_argument("--config", type=Path, required=True, help="run config")
    add_output(estimate)
    estimate.set_defaults(handler=_estimate)

    diagnose_parser = commands.add_parser(
        "diagnose", help="first-stage diagnostics of a trial"
    )
    diagnose_parser.add_argument("--data", type=Path, required=True)
    diagnose_parser.add_argument("--config", type=Path, required=True)
    add_output(diagnose_parser, formats=False)
    diagnose_parser.set_defaults(handler=_diagnose)

    simulate = commands.add_parser("simulate", help="run a Monte Carlo study")
    source = simulate.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", type=Path, help="simulation config file")
    source.add_argument("--preset", help="name of a simulation preset")
    simulate.add_argument("--reps", type=int, help="replications per dataset")
    simulate.add_argument("--seed", type=int, help="master seed")
    simulate.add_argument("--threads", type=int, help="worker threads")
    add_output(simulate)
    simulate.set_defaults(handler=_simulate)

    presets = commands.add_parser("presets", help="manage simulation presets")
    preset_commands = presets.add_subparsers(dest="preset_command", required=True)
    preset_commands.add_parser("list", help="list presets").set_defaults(
        handler=_presets_list
    )
    copy = preset_commands.add_parser("copy", help="copy a preset for editing")
    copy.add_argument("name")
    copy.set_defaults(handler=_presets_copy)

    return parser


def exit_code(error: Exception) -> int:
    """Exit status of a failed run."""
    if isinstance(error, UsageError):
        return EXIT_USAGE
    if isinstance(error, (NumericalError, TooLarge)):
        return EXIT_NUMERICAL
    return EXIT_DATA


def main(argv: Optional[list[str]] = None) -> int:
    """Runs the command line and returns its exit status.

    0 on success, 1 on a usage error, 2 on a data, configuration or file
    error and 3 when the data do not allow the requested estimate.
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s: %(message)s",
        force=True,
    )
    try:
        args.handler(args)
    except (LateError, ValueError, yaml.YAMLError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code(e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
