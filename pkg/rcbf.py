#!/usr/bin/env python3

import argparse
import json
import os
import sys
from typing import List

from config_manager import (
    ConfigError,
    export_config,
    get_config_value,
    list_presets,
    load_config,
    output_directory,
    read_config,
)
from core import DEFAULT_VERBOSITY, configure_logging, write_json
from scenarios import build_portrait, build_scenario
from sim import Outcome, run_scenario, write_portrait, write_run_outputs
from sweeper import parse_seed_range, sweep
from verifier import report_checks, run_checks


def _add_verbose(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "-v", "--verbose",
        action="count",
        default=0,
        help="Increase verbosity level (can be used multiple times)"
    )


def _add_scenario_options(parser: argparse.ArgumentParser, default_config: str = None) -> None:
    parser.add_argument(
        "config",
        nargs="?",
        default=default_config,
        help="Preset name or path to a JSON scenario file"
    )
    parser.add_argument("--config", dest="config_path", type=str, help="Path to a JSON scenario file")
    parser.add_argument("--seed", type=int, help="Disturbance seed")
    parser.add_argument("--gamma1", type=float, help="Minimum contact speed")
    parser.add_argument("--gamma2", type=float, help="Maximum contact speed")
    parser.add_argument("--k", type=str, help="Class-K gain of H1, a number or 'auto'")
    parser.add_argument("--dt", type=float, help="Control and integration step in seconds")
    parser.add_argument("--t-max", dest="t_max", type=float, help="Timeout in seconds")
    parser.add_argument(
        "--policy",
        choices=["zero", "random", "adversarial", "helpful"],
        help="Disturbance policy"
    )
    parser.add_argument("--out", type=str, help="Output directory")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="PATH=VALUE",
        help="Override any config value by dot path (repeatable)"
    )
    _add_verbose(parser)


def parse_args() -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        description="Robust control barrier function landing and docking simulations."
    )

    subparsers = parser.add_subparsers(dest="command", help="Command to execute")

    run_parser = subparsers.add_parser("run", help="Run one closed-loop scenario")
    _add_scenario_options(run_parser)

    sweep_parser = subparsers.add_parser("sweep", help="Run a scenario over a seed range")
    _add_scenario_options(sweep_parser)
    sweep_parser.add_argument(
        "--seeds",
        type=str,
        default="0..19",
        help="Inclusive seed range A..B (default: 0..19)"
    )
    sweep_parser.add_argument("--jobs", type=int, default=1, help="Worker processes")

    portrait_parser = subparsers.add_parser("portrait", help="Generate the (h, h_dot_w) phase portrait")
    _add_scenario_options(portrait_parser, default_config="phase-portrait")

    verify_parser = subparsers.add_parser("verify", help="Run the invariant suite")
    verify_parser.add_argument("--samples", type=int, default=200, help="Samples per sampled check")
    verify_parser.add_argument("--seed", type=int, default=0, help="Base seed")
    _add_verbose(verify_parser)

    config_parser = subparsers.add_parser("config", help="Inspect scenario presets")
    config_subparsers = config_parser.add_subparsers(dest="config_command", help="Config command to execute")
    config_subparsers.add_parser("list", help="List presets")
    show_parser = config_subparsers.add_parser("show", help="Print a preset or config file")
    show_parser.add_argument("name", type=str, help="Preset name or path")
    get_parser = config_subparsers.add_parser("get", help="Get a configuration value")
    get_parser.add_argument("name", type=str, help="Preset name or path")
    get_parser.add_argument("option", type=str, help="Option path (e.g., 'tolerances.gamma2')")
    export_parser = config_subparsers.add_parser("export", help="Copy a preset to a file")
    export_parser.add_argument("name", type=str, help="Preset name or path")
    export_parser.add_argument("path", type=str, help="Destination file")

    return parser.parse_args()


def collect_overrides(args: argparse.Namespace) -> List[str]:
    """Translate shorthand flags into PATH=VALUE overrides, then append --set ones."""
    overrides = []
    shorthands = (
        ("seed", "simulation.seed"),
        ("gamma1", "tolerances.gamma1"),
        ("gamma2", "tolerances.gamma2"),
        ("dt", "simulation.dt"),
        ("t_max", "simulation.t_max"),
        ("policy", "simulation.policy"),
        ("out", "output.directory"),
    )
    for attribute, path in shorthands:
        value = getattr(args, attribute, None)
        if value is not None:
            overrides.append(f"{path}={json.dumps(value)}")

    k = getattr(args, "k", None)
    if k is not None and k != "auto":
        try:
            k = float(k)
        except ValueError:
            raise ConfigError([f"--k: expected a number or 'auto', got '{k}'"])
    if k is not None:
        overrides.append(f"gains.k={json.dumps(k)}")
    return overrides + list(getattr(args, "overrides", []) or [])


def _source(args: argparse.Namespace) -> str:
    source = args.config_path or args.config
    if not source:
        raise ConfigError(["config: give a preset name or --config PATH"])
    return source


def cmd_run(args: argparse.Namespace, verbosity: int) -> int:
    config = load_config(_source(args), collect_overrides(args))
    scenario = build_scenario(config)
    if args.k == "auto" and verbosity >= 1:
        print(f"Solved gain k = {scenario.metadata['gain']:.4g}")

    log, outcome = run_scenario(scenario)
    csv_path, json_path = write_run_outputs(log, outcome, output_directory(config))

    if verbosity >= 1:
        status = "✓" if outcome.success else "✗"
        line = f"{status} {scenario.name}: {outcome.classification.value}"
        if outcome.t_f is not None:
            line += f" t_f={outcome.t_f:.1f}s terminal h_dot={outcome.terminal_h_dot:.4f}m/s"
        line += f" peak |u|={outcome.peak_input:.4g}"
        if outcome.violations:
            line += f" violations={len(outcome.violations)}"
        print(line)
        if verbosity >= 2:
            print(f"Wrote {csv_path} and {json_path}")
    return 0 if outcome.success else 1


def cmd_sweep(args: argparse.Namespace, verbosity: int) -> int:
    config = load_config(_source(args), collect_overrides(args))
    seeds = parse_seed_range(args.seeds)
    if args.jobs < 1:
        raise ConfigError(["--jobs: must be at least 1"])

    report = sweep(config, seeds, jobs=args.jobs, verbosity=verbosity)
    path = os.path.join(output_directory(config), "sweep.json")
    write_json(path, report)

    if verbosity >= 1:
        counts = ", ".join(f"{name}: {count}" for name, count in sorted(report["classifications"].items()))
        print(f"\nSummary: {report['successes']}/{report['runs']} successful ({counts})")
        for failure in report["failures"]:
            print(f"✗ seed {failure['seed']}: {failure['classification']}")
    return 0 if report["successes"] == report["runs"] else 1


def cmd_portrait(args: argparse.Namespace, verbosity: int) -> int:
    config = load_config(_source(args), collect_overrides(args))
    setup = build_portrait(config)
    dataset = setup.run()
    paths = write_portrait(dataset, output_directory(config))

    failures = 0
    for trajectory in dataset.trajectories:
        outcome = trajectory.outcome
        ok = not outcome.violations and (
            trajectory.label != "inside" or outcome.classification is Outcome.DOCKING
        )
        failures += 0 if ok else 1
        if verbosity >= 1:
            status = "✓" if ok else "✗"
            speed = "-" if outcome.terminal_h_dot is None else f"{outcome.terminal_h_dot:.4f}"
            print(f"{status} {trajectory.name}: {outcome.classification.value} h_dot={speed}")
    if verbosity >= 1:
        print(f"\nSummary: {len(paths)} files written to {output_directory(config)}")
    return 0 if failures == 0 else 1


def cmd_verify(args: argparse.Namespace, verbosity: int) -> int:
    results = run_checks(samples=args.samples, seed=args.seed)
    _, failed = report_checks(results, verbosity)
    return 0 if failed == 0 else 1


def cmd_config(args: argparse.Namespace) -> int:
    if not args.config_command:
        print("Please specify a config command. Run with --help for usage information.")
        return 1

    if args.config_command == "list":
        for name in list_presets():
            print(name)
    elif args.config_command == "show":
        print(json.dumps(read_config(args.name), indent=2))
    elif args.config_command == "get":
        value = get_config_value(read_config(args.name), args.option)
        if value is None:
            print(f"Option '{args.option}' not found")
            return 1
        if isinstance(value, (list, dict)):
            print(json.dumps(value, indent=2))
        else:
            print(value)
    elif args.config_command == "export":
        export_config(read_config(args.name), args.path)
        print(f"Exported '{args.name}' to {args.path}")
    return 0


def main() -> None:
    """Main entry point."""
    args = parse_args()

    verbosity = DEFAULT_VERBOSITY + getattr(args, "verbose", 0)
    configure_logging(verbosity)

    try:
        if args.command == "run":
            code = cmd_run(args, verbosity)
        elif args.command == "sweep":
            code = cmd_sweep(args, verbosity)
        elif args.command == "portrait":
            code = cmd_portrait(args, verbosity)
        elif args.command == "verify":
            code = cmd_verify(args, verbosity)
        elif args.command == "config":
            code = cmd_config(args)
        else:
            print("Please specify a command. Run with --help for usage information.")
            code = 1
    except ConfigError as e:
        print("Error: invalid configuration")
        for error in e.errors:
            print(f"  {error}")
        sys.exit(2)
    except (ValueError, RuntimeError) as e:
        print(f"Error: {e}")
        sys.exit(1)

    if code != 0:
        sys.exit(code)


if __name__ == "__main__":
    main()
