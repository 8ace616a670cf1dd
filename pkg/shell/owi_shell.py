# shell/owi_shell.py
"""
owi-sim command line: rates, evolve, steady, spectrum, presets, plot.
"""

import argparse
import logging
import sys
import traceback
from pathlib import Path
from typing import List, Optional

import numpy as np
from rich.console import Console
from rich.table import Table

from engine.core import DensityMatrix
from engine.errors import (EXIT_OK, EXIT_SOLVER, ConfigError, ErrorReporter, SimulationError,
                           SolverError)
from engine.liouville import (GeneratorMode, build_liouvillian, coherence_eq4, evolve,
                              steady_state)
from engine.spectrum import spectrum, summarize
from parser.config_transformer import RunConfig, load_config, parse_config, serialize_config
from presets import list_presets, load_preset_text
from shell.plot_scripts import PLOT_KINDS, emit_plot_script
from shell.serializers import (spectrum_table, stamp, steady_table, trajectory_table,
                               write_result)

logger = logging.getLogger(__name__)

console = Console()

COMMANDS = ("rates", "evolve", "steady", "spectrum", "presets", "plot")
DEFAULT_T_END_GAMMA3 = 200.0


# ==================== Configuration ====================

def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config from --config or --scenario, with command-line overrides applied."""
    if args.config and args.scenario:
        raise ConfigError("use either --config or --scenario, not both")
    if args.config:
        config = load_config(args.config)
    elif args.scenario:
        config = parse_config(f"scenario = {args.scenario}\n")
    else:
        raise ConfigError("no configuration given; pass --config <path> or --scenario <preset>")

    overrides = {}
    if args.out:
        overrides["output_path"] = args.out
    if args.format:
        overrides["output_format"] = args.format
    if args.mode:
        overrides["mode"] = GeneratorMode.parse(args.mode)
    if args.plot:
        overrides["emit_plot_script"] = True
    return config.replace(**overrides) if overrides else config


def output_path(config: RunConfig, command: str) -> Path:
    if config.output_path:
        return Path(config.output_path)
    return Path(f"{config.scenario}_{command}.{config.output_format}")


def run_metadata(config: RunConfig, command: str) -> dict:
    metadata = {
        "command": command,
        "scenario": config.scenario,
        "mode": config.mode.value,
        "system": config.system.to_dict(),
        "rates": config.rates.to_dict(),
        "config": serialize_config(config),
    }
    if config.spectrum is not None:
        metadata["spectrum"] = config.spectrum.to_dict()
    return metadata


# ==================== Commands ====================

def show_rates(config: RunConfig) -> None:
    params = config.system
    table = Table(title=f"Rates for '{config.scenario}'", show_header=True, header_style="bold bright_cyan")
    table.add_column("Quantity", style="bold")
    table.add_column("Value", justify="right", style="yellow")
    table.add_column("Unit", style="dim")
    table.add_column("/ gamma3", justify="right", style="green")

    for name in ("gamma3", "w12", "r34", "r43", "omega_pr", "omega_pu", "gamma_laser"):
        value = getattr(params, name)
        table.add_row(name, f"{value:.6e}", "rad/s", f"{value / params.gamma3:.4f}")
    table.add_row("u", f"{params.u:.6e}", "m/s", "")
    for name, value, unit in config.rates.as_rows():
        if name in ("v_bar", "v_av", "mu"):
            table.add_row(name, f"{value:.6e}", unit, "")
    console.print(table)


def run_evolve(config: RunConfig, fixed_clock: bool) -> Path:
    liouvillian = build_liouvillian(config.system, config.mode)
    t_end = config.t_end or DEFAULT_T_END_GAMMA3 / config.system.gamma3
    trajectory = evolve(DensityMatrix.thermal_ground(), liouvillian, t_end, config.evolve)
    if not trajectory.converged:
        logger.warning(f"evolve: not stationary at t_end = {t_end:.3e} s "
                       f"(‖dρ/dt‖∞ = {trajectory.final_residual:.3e} rad/s)")

    metadata = run_metadata(config, "evolve")
    metadata.update({"t_end_s": t_end, "converged": trajectory.converged,
                     "final_residual_radps": trajectory.final_residual})
    table = trajectory_table(trajectory, stamp(metadata, "trajectory", fixed_clock))
    path = write_result(table, output_path(config, "evolve"), config.output_format)

    final = trajectory.final_state
    summary = Table(title="Final state", show_header=True, header_style="bold green")
    for column in ("rho11", "rho22", "rho33", "rho44", "Im rho13", "rho33 - rho11", "converged"):
        summary.add_column(column, justify="right")
    summary.add_row(*[f"{p:.6f}" for p in final.populations],
                    f"{final.element(1, 3).imag:.4e}", f"{final.inversion_31:.6f}",
                    "yes" if trajectory.converged else "no")
    console.print(summary)
    return path


def run_steady(config: RunConfig, fixed_clock: bool) -> Path:
    if config.mode is not GeneratorMode.TRACE_CONSERVING:
        raise ConfigError("steady needs mode = conserving; the literal equations conserve no trace")
    liouvillian = build_liouvillian(config.system, config.mode)
    rho = steady_state(liouvillian)
    rho13 = rho.element(1, 3)
    closed_form = coherence_eq4(rho, config.system)
    residual = abs(closed_form - rho13) / abs(rho13) if rho13 != 0 else abs(closed_form)

    metadata = run_metadata(config, "steady")
    metadata.update({
        "eq4_rho13": [closed_form.real, closed_form.imag],
        "eq4_residual": residual,
        "populations": rho.populations.tolist(),
        "rho33_minus_rho11": rho.inversion_31,
    })
    path = write_result(steady_table(rho.rho, stamp(metadata, "steady", fixed_clock)),
                        output_path(config, "steady"), config.output_format)

    matrix = Table(title="Steady-state density matrix", show_header=True, header_style="bold magenta")
    matrix.add_column("")
    for j in range(1, 5):
        matrix.add_column(f"|{j}⟩", justify="right")
    for i in range(1, 5):
        matrix.add_row(f"⟨{i}|", *[f"{rho.element(i, j):.4e}" for j in range(1, 5)])
    console.print(matrix)
    console.print(f"Im ρ13 = {rho13.imag:.6e}   ρ33 − ρ11 = {rho.inversion_31:.6e}   "
                  f"closed-form residual = {residual:.2e}")
    return path


def run_spectrum(config: RunConfig, jobs: int, fixed_clock: bool, reporter: ErrorReporter) -> Path:
    if config.spectrum is None:
        raise ConfigError("spectrum needs a [spectrum] section")
    if config.mode is not GeneratorMode.TRACE_CONSERVING:
        raise ConfigError("spectrum needs mode = conserving")
    result = spectrum(config.system, config.spectrum, config.mode, jobs=jobs)
    for warning in result.warnings:
        reporter.warn(warning)

    figures = summarize(result)
    metadata = run_metadata(config, "spectrum")
    metadata["summary"] = figures.to_dict()
    path = write_result(spectrum_table(result, stamp(metadata, "spectrum", fixed_clock)),
                        output_path(config, "spectrum"), config.output_format)

    table = Table(title="Transmission spectrum", show_header=True, header_style="bold blue")
    table.add_column("Figure", style="bold")
    table.add_column("Value", justify="right", style="yellow")
    table.add_row("peak gain G", f"{figures.peak_gain:.4e}")
    table.add_row("at detuning (GHz)", f"{figures.peak_detuning / (2 * np.pi * 1e9):.4f}")
    table.add_row("absorption contrast", f"{figures.contrast_percent:.3f} %")
    table.add_row("gain above unity", f"{figures.gain_percent:.3f} %")
    console.print(table)
    return path


def show_presets() -> None:
    table = Table(title="Presets", show_header=True, header_style="bold bright_blue")
    table.add_column("Name", style="bold")
    table.add_column("Description", style="dim")
    for name in list_presets():
        comments = [line.lstrip("# ").strip() for line in load_preset_text(name).splitlines()
                    if line.startswith("#")]
        table.add_row(name, " ".join(comments))
    console.print(table)


def run(config: RunConfig, command: str, jobs: int = 1, fixed_clock: bool = False,
        reporter: Optional[ErrorReporter] = None) -> int:
    """Execute one command for a resolved config; returns the exit code."""
    reporter = reporter or ErrorReporter()
    if command == "rates":
        show_rates(config)
        return EXIT_OK
    if command == "evolve":
        path = run_evolve(config, fixed_clock)
    elif command == "steady":
        path = run_steady(config, fixed_clock)
    elif command == "spectrum":
        path = run_spectrum(config, jobs, fixed_clock, reporter)
    else:
        raise ConfigError(f"unknown command '{command}'")

    console.print(f"✅ wrote [bold]{path}[/bold]")
    if config.emit_plot_script and command in ("evolve", "spectrum"):
        kind = "trajectory" if command == "evolve" else "spectrum"
        console.print(f"📈 plot script [bold]{emit_plot_script(path, kind)}[/bold]")
    return EXIT_OK


# ==================== Entry point ====================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="owi-sim",
        description="Four-level rubidium pump-probe simulator: gain without inversion",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  owi-sim rates --scenario rb85_cell
  owi-sim steady --scenario fig2
  owi-sim evolve --config run.conf --out fig2.csv --plot
  owi-sim spectrum --scenario fig4_walls --jobs 8 --format json
  owi-sim plot --result fig4_walls_spectrum.csv --kind spectrum
        """
    )
    parser.add_argument("command", choices=COMMANDS, help="What to compute")
    parser.add_argument("--config", help="Configuration document")
    parser.add_argument("--scenario", help="Run a shipped preset without a config file")
    parser.add_argument("--out", help="Result file (default: <scenario>_<command>.<format>)")
    parser.add_argument("--format", choices=("csv", "json"), help="Result file format")
    parser.add_argument("--jobs", type=int, default=1, help="Worker processes for spectra")
    parser.add_argument("--mode", choices=("literal", "conserving"), help="Population equations")
    parser.add_argument("--plot", action="store_true", help="Also write a matplotlib script")
    parser.add_argument("--fixed-clock", action="store_true",
                        help="Constant metadata timestamp (reproducible files)")
    parser.add_argument("--result", help="Result file for the plot command")
    parser.add_argument("--kind", choices=PLOT_KINDS, help="Plot kind for the plot command")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    parser.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.debug:
        logging.getLogger().setLevel(logging.DEBUG)
    elif args.quiet:
        logging.getLogger().setLevel(logging.WARNING)

    reporter = ErrorReporter()
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        if args.command == "presets":
            show_presets()
            return EXIT_OK
        if args.command == "plot":
            if not (args.result and args.kind):
                raise ConfigError("plot needs --result <file> and --kind trajectory|spectrum")
            target = emit_plot_script(args.result, args.kind, args.out)
            console.print(f"📈 plot script [bold]{target}[/bold]")
            return EXIT_OK
        config = resolve_config(args)
        return run(config, args.command, args.jobs, args.fixed_clock, reporter)
    except SimulationError as e:
        reporter.render(e)
        reporter.emit_record(e)
        return e.exit_code
    except Exception as e:
        if args.debug:
            traceback.print_exc()
        error = SolverError(f"unexpected failure: {e}")
        reporter.render(error)
        reporter.emit_record(error)
        return EXIT_SOLVER
    finally:
        reporter.show_summary()


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
