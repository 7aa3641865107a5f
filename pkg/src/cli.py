"""Command-line interface: simulate, analyze, run, sweep, presets, calibrate."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import yaml

from .calibration import calibrate, write_calibration
from .config import (
    DEFAULT_PRESET,
    AnalysisConfig,
    Scenario,
    get_preset,
    load_presets,
    parse_scenario_file,
    set_parameter,
    update_model,
)
from .errors import ConfigError, DlczSimError
from .models.events import EventStream
from .persistence import REPORT_FORMATS, export_report, export_singles, read_events, write_events, write_table
from .simulation import Simulation, sweep
from .tia_analyzer import analyze_run
from .utils import rate_to_gate_mean

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 2
EXIT_MISSING_INPUT = 3


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors on one line."""

    def error(self, message: str) -> None:  # type: ignore[override]
        """Print a one-line usage error and exit with status 2."""
        self.exit(EXIT_ERROR, f"error: UsageError: {message}\n")


def _add_scenario_options(parser: argparse.ArgumentParser) -> None:
    """Options shared by every command that builds a scenario."""
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--preset", default=None, help=f"Built-in scenario (default {DEFAULT_PRESET})")
    source.add_argument("--config", type=Path, default=None, help="Scenario YAML file")
    parser.add_argument("--scenario", default=None, help="Scenario name inside a multi-scenario file")
    parser.add_argument("--seed", type=int, default=None, help="Override the master seed")
    parser.add_argument("--trials", type=int, default=None, help="Override trials per run")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE",
        help="Override one parameter, e.g. source.p=0.02 (repeatable)",
    )
    parser.add_argument(
        "--bg-rates", default=None, metavar="D1,D2",
        help="Background count rates in counts/s, converted to mean counts per gate",
    )
    parser.add_argument("--workers", type=int, default=1, help="Worker processes")


def _add_output_options(parser: argparse.ArgumentParser) -> None:
    """--out and --formats for commands that export a report."""
    parser.add_argument("--out", type=Path, default=Path("results"), help="Output directory")
    parser.add_argument(
        "--formats", default=",".join(REPORT_FORMATS), help="Comma-separated report formats (json,csv)"
    )


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one sub-command per operation."""
    parser = _Parser(prog="dlcz-sim", description="DLCZ photon-pair Monte Carlo and coincidence analysis")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    simulate = commands.add_parser("simulate", help="Simulate a scenario into event files")
    _add_scenario_options(simulate)
    simulate.add_argument("--out", type=Path, default=Path("events"), help="Output directory")

    analyze = commands.add_parser("analyze", help="Analyze event files into a report")
    analyze.add_argument("events", nargs="+", type=Path, help="Event files, one per splitter mode")
    analyze.add_argument("--preset", default=None, help="Take analyzer settings from a preset")
    analyze.add_argument("--config", type=Path, default=None, help="Take analyzer settings from a scenario file")
    analyze.add_argument("--scenario", default=None, help="Scenario name inside a multi-scenario file")
    analyze.add_argument("--workers", type=int, default=1, help="Histogram threads")
    _add_output_options(analyze)

    run = commands.add_parser("run", help="Simulate and analyze a scenario")
    _add_scenario_options(run)
    _add_output_options(run)
    run.add_argument("--save-events", action="store_true", help="Also write the event files")

    sweeper = commands.add_parser("sweep", help="Vary one parameter over a grid")
    _add_scenario_options(sweeper)
    sweeper.add_argument("--param", required=True, help="Dotted parameter path, e.g. source.p")
    sweeper.add_argument("--from", dest="start", type=float, help="First grid value")
    sweeper.add_argument("--to", dest="stop", type=float, help="Last grid value")
    sweeper.add_argument("--steps", type=int, default=10, help="Number of grid points")
    sweeper.add_argument("--values", default=None, help="Explicit comma-separated grid")
    sweeper.add_argument("--out", type=Path, default=None, help="CSV output file (default stdout)")

    commands.add_parser("presets", help="List built-in scenarios")

    calibrator = commands.add_parser("calibrate", help="Fit the noise constants to measured g values")
    calibrator.add_argument("--targets", default="1.739,1.710,2.335", help="g11,g22,g12")
    calibrator.add_argument("--gate-width", type=float, default=None, help="Gate width T in ns")
    calibrator.add_argument("--leak-share", type=float, default=0.25, help="Share of field-2 noise from leakage")
    calibrator.add_argument("--out", type=Path, default=None, help="Constants YAML file (default stdout)")
    return parser


def _parse_value(text: str):
    """YAML scalar for a --set value; unparsable text stays a string."""
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _load_scenario(args: argparse.Namespace, required: bool = True) -> Optional[Scenario]:
    """Scenario selected by the arguments, with every override applied.

    Args:
        args: Parsed command line
        required: Fall back to the default preset when neither --preset nor --config is given

    Returns:
        The scenario, or None when nothing was selected and `required` is False

    Raises:
        FileNotFoundError: the --config file does not exist
        ConfigError: an unknown scenario name or an invalid override
    """
    if args.config is not None:
        if not args.config.exists():
            raise FileNotFoundError(f"Configuration file not found: {args.config}")
        scenarios = parse_scenario_file(args.config.read_text(encoding="utf-8"))
        if args.scenario is not None:
            if args.scenario not in scenarios:
                raise ConfigError(f"no scenario named '{args.scenario}' in {args.config}")
            scenario = scenarios[args.scenario]
        elif len(scenarios) == 1:
            scenario = next(iter(scenarios.values()))
        else:
            raise ConfigError(f"{args.config} holds {len(scenarios)} scenarios; choose one with --scenario")
    elif args.preset is not None or required:
        scenario = get_preset(args.preset or DEFAULT_PRESET)
    else:
        return None

    for override in getattr(args, "overrides", []):
        path, sep, value = override.partition("=")
        if not sep:
            raise ConfigError(f"expected PATH=VALUE, got '{override}'")
        scenario = set_parameter(scenario, path.strip(), _parse_value(value))
    if getattr(args, "bg_rates", None) is not None:
        scenario = _apply_bg_rates(scenario, args.bg_rates)
    if getattr(args, "seed", None) is not None:
        scenario = set_parameter(scenario, "seed", args.seed)
    if getattr(args, "trials", None) is not None:
        scenario = set_parameter(scenario, "timing.trials_per_run", args.trials)
    return scenario


def _apply_bg_rates(scenario: Scenario, text: str) -> Scenario:
    """Set bg1 and bg2 from detector count rates given as "D1,D2" in counts/s."""
    try:
        rates = [float(value) for value in _formats(text)]
        if len(rates) != 2:
            raise ValueError
        trial_period = scenario.run.timing.trial_period
        bg1, bg2 = (rate_to_gate_mean(rate, trial_period) for rate in rates)
    except ValueError:
        raise ConfigError(f"--bg-rates must be two non-negative rates D1,D2 in counts/s, got '{text}'") from None
    scenario = set_parameter(scenario, "source.bg1", bg1)
    return set_parameter(scenario, "source.bg2", bg2)


def _formats(text: str) -> List[str]:
    """Non-empty items of a comma-separated list."""
    return [item.strip() for item in text.split(",") if item.strip()]


def _print_summary(report) -> None:
    """Print the g estimates and the Cauchy-Schwarz verdict."""
    cs = report.cs
    for name in ("g11", "g22", "g12"):
        estimate = getattr(cs, name)
        print(f"{name} = {estimate.value:.4f} +/- {estimate.sigma:.4f}")
    print(f"g12^2 = {cs.numerator:.3f} +/- {cs.numerator_sigma:.3f}, g11*g22 = {cs.denominator:.3f} +/- {cs.denominator_sigma:.3f}")
    verdict = "violated" if cs.violated else "satisfied"
    print(f"R = {cs.ratio:.4f} +/- {cs.ratio_sigma:.4f} ({verdict}, {cs.significance:.1f} sigma)")


def _cmd_simulate(args: argparse.Namespace) -> int:
    """`simulate`: write one event file per splitter mode."""
    scenario = _load_scenario(args)
    simulation = Simulation(scenario, workers=args.workers)
    for mode in simulation.modes:
        stream = simulation.simulate_mode(mode)
        path = write_events(args.out / f"{scenario.name}_{mode}.events", stream, scenario.run.for_mode(mode))
        print(path)
    return EXIT_OK


def _cmd_analyze(args: argparse.Namespace) -> int:
    """`analyze`: rebuild the run from event-file headers and export its report."""
    streams: Dict[str, EventStream] = {}
    run_config = None
    for path in args.events:
        event_file = read_events(path)
        header = event_file.header
        if header.config is None or header.splitter_mode is None:
            raise ConfigError(f"{path} carries no run configuration in its header")
        if header.splitter_mode in streams:
            raise ConfigError(f"two event files for splitter mode '{header.splitter_mode}'")
        streams[header.splitter_mode] = event_file.stream
        base = header.config.for_mode("pair")
        if run_config is not None and base.digest() != run_config.digest():
            raise ConfigError(f"{path} was generated with a different run configuration")
        run_config = base

    scenario = _load_scenario(args, required=False)
    analysis = scenario.analysis if scenario is not None else AnalysisConfig()
    name = scenario.name if scenario is not None else args.events[0].stem.rsplit("_", 1)[0]
    report = analyze_run(streams, run_config, analysis, name, workers=args.workers)
    export_report(report, args.out, _formats(args.formats), analysis.n_offsets, analysis.view_span)
    _print_summary(report)
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    """`run`: simulate, analyze and export."""
    scenario = _load_scenario(args)
    simulation = Simulation(scenario, workers=args.workers)
    report = simulation.run()
    analysis = scenario.analysis
    export_report(report, args.out, _formats(args.formats), analysis.n_offsets, analysis.view_span)
    if "pair" in simulation.streams:
        export_singles(simulation.streams["pair"], args.out, analysis.bin_width)
    if args.save_events:
        for mode, stream in sorted(simulation.streams.items()):
            write_events(args.out / f"{scenario.name}_{mode}.events", stream, scenario.run.for_mode(mode))
    _print_summary(report)
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    """`sweep`: one row per grid value, written as CSV."""
    scenario = _load_scenario(args)
    if args.values is not None:
        try:
            values = [float(value) for value in _formats(args.values)]
        except ValueError:
            raise ConfigError(f"--values must be comma-separated numbers, got '{args.values}'") from None
    elif args.start is not None and args.stop is not None:
        if args.steps < 1:
            raise ConfigError("--steps must be >= 1")
        values = list(np.linspace(args.start, args.stop, args.steps))
    else:
        raise ConfigError("give either --values or both --from and --to")
    table = sweep(scenario, args.param, values, workers=args.workers)
    if args.out is None:
        sys.stdout.write(table.to_csv(index=False, float_format="%.8g", lineterminator="\n"))
    else:
        print(write_table(table, args.out))
    return EXIT_OK


def _cmd_presets(args: argparse.Namespace) -> int:
    """`presets`: list the built-in scenarios."""
    for name, scenario in load_presets().items():
        print(f"{name}\t{scenario.description}")
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    """`calibrate`: fit the noise constants and write them out."""
    try:
        targets = tuple(float(value) for value in _formats(args.targets))
    except ValueError:
        raise ConfigError(f"--targets must be three numbers, got '{args.targets}'") from None
    if len(targets) != 3:
        raise ConfigError(f"--targets must be three numbers, got '{args.targets}'")
    timing = get_preset(DEFAULT_PRESET).run.timing
    if args.gate_width is not None:
        timing = update_model(timing, {"gate_width": args.gate_width})
    result = calibrate(targets, timing=timing, leak_share=args.leak_share)
    if args.out is None:
        sys.stdout.write(yaml.safe_dump(result.to_dict(), sort_keys=False))
    else:
        print(write_calibration(result, args.out))
    return EXIT_OK


COMMANDS = {
    "simulate": _cmd_simulate,
    "analyze": _cmd_analyze,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "presets": _cmd_presets,
    "calibrate": _cmd_calibrate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point; returns the process exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        sys.stderr.write(f"error: FileNotFoundError: {exc}\n")
        return EXIT_MISSING_INPUT
    except DlczSimError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_ERROR
    except OSError as exc:
        message = f"{exc.strerror}: {exc.filename}" if exc.filename is not None else str(exc)
        sys.stderr.write(f"error: {type(exc).__name__}: {message}\n")
        return EXIT_ERROR
