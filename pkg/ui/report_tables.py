from typing import Optional

from rich.console import Console
from rich.table import Table

from analysis.verify_suite import VerifyReport
from run_database.config_loader_run import RunConfig


def _fmt(value) -> str:
    if value is None:
        return "[dim]-[/dim]"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def display_config_summary(config: RunConfig, console: Optional[Console] = None):
    """Show the block that the selected command will run with."""
    console = console or Console()

    console.print(f"\n[bold blue]Run:[/bold blue] {config.run_info.name} ([cyan]{config.command}[/cyan])")
    if config.run_info.description:
        console.print(f"[dim]{config.run_info.description}[/dim]")
    console.print(f"Output: {config.output.out_dir}, threads: {_fmt(config.output.threads)}")

    block = {
            "simulate"    : config.simulation,
            "equilibrium" : config.equilibrium,
            "hj"          : config.hj,
            "verify"      : config.verify,
            "bench"       : config.bench,
    }[config.command]

    table = Table(show_header=False, title="Parameters", border_style="blue")
    table.add_column("Key", style="cyan")
    table.add_column("Value", style="white")
    for key, value in vars(block).items():
        table.add_row(key, _fmt(value))
    console.print(table)


def display_simulation(result, console: Optional[Console] = None):
    console = console or Console()
    traj    = result.trajectory
    first, last = traj.moments[0], traj.moments[-1]

    table = Table(title="Simulation", border_style="blue")
    table.add_column("Quantity", style="cyan")
    table.add_column("t = 0", style="white")
    table.add_column(f"t = {traj.times[-1]:g}", style="green")
    table.add_row("m0", _fmt(first.m0), _fmt(last.m0))
    table.add_row("m1", _fmt(first.m1), _fmt(last.m1))
    table.add_row("m2", _fmt(first.m2), _fmt(last.m2))
    table.add_row("gel mass", _fmt(traj.snapshots[0].gel_mass), _fmt(traj.final.gel_mass))
    console.print(table)

    onset = "[dim]none[/dim]" if result.gelation_onset is None else f"[red]t = {result.gelation_onset:.6g}[/red]"
    console.print(f"Steps: {traj.accepted_steps} accepted, {traj.rejected_steps} rejected; "
                  f"max mass defect {float(traj.mass_defect().max()):.3e}; gelation onset: {onset}")


def display_equilibrium(result, console: Optional[Console] = None):
    console = console or Console()
    verdict = result.verdict

    colors = {"exists_unique": "green", "nonexistent": "red", "conjectural": "yellow"}
    color  = colors[verdict.kind]
    console.print(f"\n[bold blue]Equilibrium[/bold blue] m = {verdict.mass_m:g}, L = {verdict.length_l}: "
                  f"[{color}]{verdict.kind}[/{color}]")

    table = Table(show_header=False, border_style="blue")
    table.add_column("Key", style="cyan")
    table.add_column("Value", style="white")
    if verdict.witness is not None:
        table.add_row("witness rho~(1)", f"{verdict.witness_exact} ({verdict.witness:.17g})")
    table.add_row("min rho~", f"{_fmt(verdict.min_value)} at l = {verdict.min_location}")
    table.add_row("negative entries", str(verdict.negative_count))
    table.add_row("identity residual", _fmt(result.identity_residual))
    if result.validation is not None:
        v = result.validation
        table.add_row("m0 gap", _fmt(v.m0_gap))
        table.add_row("m1 gap", _fmt(v.m1_gap))
        table.add_row("tail ratio", _fmt(v.tail_ratio))
        table.add_row("rhs residual", _fmt(v.rhs_residual))
    console.print(table)


def display_hj(result, console: Optional[Console] = None):
    console = console or Console()
    run     = result.evolution

    table = Table(title=f"HJ evolution ({run.final.grid.variable}-form)", border_style="blue")
    table.add_column("t", style="cyan")
    table.add_column("min", style="white")
    table.add_column("max", style="white")
    table.add_column("band drift", style="yellow")
    for state in run.snapshots:
        table.add_row(f"{state.time:.4g}", _fmt(float(state.values.min())), _fmt(float(state.values.max())),
                      f"{state.band_drift:.2e}")
    console.print(table)
    console.print(f"Steps: {run.steps}")

    if result.blowup is not None:
        b = result.blowup
        console.print(f"[bold blue]Blow-up functional[/bold blue] sigma = {b.sigma:g}: phi(0) = {b.phi[0]:.6g}, "
                      f"delta = {b.delta:.6g}, predicted exit T = {b.predicted_exit:.6g}, "
                      f"collapse at {_fmt(b.collapse_time)}")


def display_verify(report: VerifyReport, console: Optional[Console] = None):
    console = console or Console()

    table = Table(title=f"Verification: {report.suite}", border_style="blue")
    table.add_column("Check", style="cyan")
    table.add_column("Value", style="white")
    table.add_column("Threshold", style="white")
    table.add_column("Result")
    for check in report.checks:
        status = "[green]pass[/green]" if check.passed else "[red]FAIL[/red]"
        table.add_row(check.name, _fmt(check.value), _fmt(check.threshold), status)
    console.print(table)

    summary = "[green]all checks passed[/green]" if report.passed else f"[red]{len(report.failures)} failed[/red]"
    console.print(f"{len(report.checks)} checks, {summary}")


def display_bench(report, console: Optional[Console] = None):
    console = console or Console()

    table = Table(title=f"RHS timings ({report.repetitions} repetitions)", border_style="blue")
    table.add_column("N", style="cyan")
    table.add_column("Mode", style="white")
    table.add_column("Median [s]", style="green")
    table.add_column("Spread [s]", style="yellow")
    for row in report.rows:
        table.add_row(str(row.size), row.mode, f"{row.median:.3e}", f"{row.spread:.3e}")
    console.print(table)
    console.print(f"FFT faster from N = {_fmt(report.crossover)}")
