#!/usr/bin/env python3
"""
Command-line front end.

    growcoag <subcommand> --config <path> [--out <dir>] [--verify] [--verbose]

Exit codes: 0 success, 2 invariant violation, 3 nonconvergence,
4 validation error, 5 parse error, 6 missing configuration file.
"""

import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from artifacts import write_experiment, write_simulation
from config import RunConfig, parse_config
from errors import (ConfigFileError, ConfigParseError, ConfigurationError, ConfigValidationError, DomainError,
                    FlowError, InputError, InvariantViolation, NonconvergenceError)
from experiments import continuous_dependence, tail_report, truncation_ladder
from grid import project_initial
from growth import flow_property_suite, verify_growth_assumptions
from kernels import truncate, verify_envelope
from solver import solve

logger = logging.getLogger("growcoag")

SUBCOMMANDS = {
    "check-kernel": "verify the kernel envelope on a three-regime sample grid",
    "check-growth": "verify the growth assumptions and the characteristic flow properties",
    "simulate": "solve the truncated problem and write the moment history",
    "depend": "continuous dependence on perturbed initial data",
    "converge": "successive distances along a ladder of truncation indices",
    "tails": "tail first moments for a list of radii",
}

# order matters: subclasses before their bases
EXIT_CODES = [
    (InvariantViolation, 2),
    (FlowError, 2),
    (NonconvergenceError, 3),
    (ConfigFileError, 6),
    (ConfigParseError, 5),
    (ConfigValidationError, 4),
    (ConfigurationError, 4),
    (InputError, 4),
    (DomainError, 4),
]


def exit_code_for(error: Exception) -> int:
    for kind, code in EXIT_CODES:
        if isinstance(error, kind):
            return code
    return 1


def _write_report(out_dir: str, name: str, text: str):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, name), "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _execute(command: str, config: RunConfig, out_dir: str):
    if command == "check-kernel":
        report = verify_envelope(config.kernel_spec())
        print(report.as_text(), end="")
        _write_report(out_dir, "envelope.txt", report.as_text())
        if not report.ok:
            raise InvariantViolation(f"kernel envelope violated: worst ratio {report.worst_ratio:.6g} at {report.witness}")
        return

    if command == "check-growth":
        field = config.growth_field()
        assumptions = verify_growth_assumptions(field)
        properties = flow_property_suite(field)
        text = assumptions.as_text() + properties.as_text()
        print(text, end="")
        _write_report(out_dir, "growth.txt", text)
        if not (assumptions.ok and properties.ok):
            raise InvariantViolation("growth assumptions or flow properties fail")
        return

    if command == "simulate":
        scenario = config.scenario()
        kernel_n = truncate(scenario.kernel, scenario.cfg.n)
        c0 = project_initial(scenario.initial, scenario.grid, scenario.kernel.beta)
        try:
            result = solve(c0, scenario.cfg, kernel_n, scenario.field)
        except NonconvergenceError as e:
            if e.partial is not None:
                write_simulation(e.partial, scenario, out_dir, config.source)
            raise
        paths = write_simulation(result, scenario, out_dir, config.source)
        history = result.moments.history
        print(f"Solved to T = {history['time'].iloc[-1]:g} in {len(result.reports)} windows")
        print(f"M0: {history['M0'].iloc[0]:.6g} -> {history['M0'].iloc[-1]:.6g}")
        print(f"M1: {history['M1'].iloc[0]:.6g} -> {history['M1'].iloc[-1]:.6g}")
        print(f"Moment history: {paths['moments']}")
        if not result.ok:
            failed = [k for k, v in result.moments.flags.items() if not v]
            failed += sorted({k for r in result.reports for k, v in r.flags.items() if not v})
            raise InvariantViolation(f"checks failed: {', '.join(failed)}")
        return

    experiments = {"depend": continuous_dependence, "converge": truncation_ladder, "tails": tail_report}
    plan = config.plan(command)
    result = experiments[command](plan)
    write_experiment(result, plan, out_dir, config.source)
    print(result.table.to_string(index=False))
    if not result.ok:
        failed = [k for k, v in result.flags.items() if not v]
        raise InvariantViolation(f"{result.name} checks failed: {', '.join(failed)}")


def run(command: str, config: RunConfig, out_dir: Optional[str] = None) -> int:
    """Execute one subcommand; returns the process exit code"""
    if command not in SUBCOMMANDS:
        print(f"Unknown subcommand {command!r}; choose from {', '.join(SUBCOMMANDS)}")
        return 4
    out_dir = out_dir or config.output.directory
    try:
        _execute(command, config, out_dir)
    except (InvariantViolation, FlowError, NonconvergenceError, ConfigurationError, InputError, DomainError) as e:
        code = exit_code_for(e)
        print(f"Error in {command}: {e}")
        return code
    print(f"\n=== {command} complete, outputs in {out_dir} ===")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="growcoag", description="Growth-coagulation solver with singular kernels")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="Path to the INI run configuration")
        p.add_argument("--out", default=None, help="Output directory (overrides GROWCOAG_OUT and [output] directory)")
        p.add_argument("--verify", action="store_true", help="Deterministic, timestamp-free outputs")
        p.add_argument("--verbose", action="store_true", help="Debug logging")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = parse_config(args.config)
    except (ConfigFileError, ConfigParseError, ConfigValidationError) as e:
        print(f"Configuration error: {e}")
        if isinstance(e, ConfigValidationError):
            for violation in e.violations:
                print(f"   - {violation}")
        return exit_code_for(e)
    logger.debug("loaded configuration %s", args.config)
    if args.verify:
        output = config.output.model_copy(update={"verification_mode": True})
        config = config.model_copy(update={"output": output})
    out_dir = args.out or os.getenv("GROWCOAG_OUT") or config.output.directory
    return run(args.command, config, out_dir)


if __name__ == "__main__":
    sys.exit(main())
