"""
Command-line interface for probe-core.

Provides commands for designing games, evaluating them with downstream
classification, rendering them, and reproducing the published tables.
"""

from __future__ import annotations

import functools
import logging
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from rich.table import Table

from probe_core import __version__
from probe_core.config import SAMPLE_CONFIG, Config, ConfigError
from probe_core.core import GAME_IDS, TABLES, ProbeCore, ReproductionTable
from probe_core.designer import LEARN_MODES, DivergenceError
from probe_core.diffcore import NonFiniteError
from probe_core.evalharness import DegenerateDatasetError, EvalReport
from probe_core.gamespace import BASELINE_REWARDS, TOPOLOGY_ACTIONS
from probe_core.players import PRIORS, PlayerTrait, TraitError, parse_trait
from probe_core.renderers import RENDERERS, list_renderers
from probe_core.storage import (
    CheckpointError,
    save_checkpoint,
    save_dataset,
    save_loss_curve,
    save_report,
)

console = Console()
logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4


def setup_logging(level: str, log_file: str | None = None) -> None:
    """Configure logging with rich handler."""
    handlers: list[logging.Handler] = [RichHandler(console=console, rich_tracebacks=True)]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(
            logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s")
        )
        handlers.append(file_handler)
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=handlers,
    )


def handle_errors(fn: Callable[..., Any]) -> Callable[..., Any]:
    """Map domain exceptions to exit codes and print them without a traceback."""

    @functools.wraps(fn)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        ctx = click.get_current_context()
        verbose = (ctx.obj or {}).get("verbose", False)
        try:
            return fn(*args, **kwargs)
        except (ConfigError, DegenerateDatasetError) as e:
            code, message = EXIT_CONFIG, f"Configuration error: {e}"
        except (DivergenceError, NonFiniteError) as e:
            code, message = EXIT_DIVERGENCE, f"Numerical divergence: {e}"
        except (CheckpointError, OSError) as e:
            code, message = EXIT_IO, f"I/O error: {e}"
        if verbose:
            console.print_exception()
        console.print(f"[red]✗ {message}[/]")
        sys.exit(code)

    return wrapper


def _out_dir(ctx: click.Context, out: Path | None) -> Path:
    config: Config = ctx.obj["config"]
    return out or Path(config.output_dir)


def _progress() -> Progress:
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("{task.fields[status]}"),
        TimeElapsedColumn(),
        console=console,
        transient=True,
    )


@click.group(invoke_without_command=True)
@click.version_option(version=__version__, prog_name="probe-core")
@click.option(
    "-c",
    "--config",
    type=click.Path(exists=True, path_type=Path),
    help="Path to configuration file",
)
@click.option(
    "-V",
    "--verbose",
    is_flag=True,
    help="Enable verbose output",
)
@click.pass_context
def main(ctx: click.Context, config: Path | None, verbose: bool) -> None:
    """
    probe-core - Design games that reveal how players perceive reward.

    Learn game parameters that make player traits identifiable from behavior, then
    measure how well the traits can be recovered.
    """
    ctx.ensure_object(dict)

    # If no subcommand is provided, show help
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
        ctx.exit()

    try:
        ctx.obj["config"] = Config.load(config)
    except ConfigError as e:
        console.print(f"[red]✗ Configuration error: {e}[/]")
        sys.exit(EXIT_CONFIG)

    log_level = "DEBUG" if verbose else ctx.obj["config"].log_level
    setup_logging(log_level, ctx.obj["config"].log_file)
    ctx.obj["verbose"] = verbose


def _apply(ctx: click.Context, **overrides: Any) -> Config:
    config: Config = ctx.obj["config"]
    updated = config.with_overrides(**overrides)
    ctx.obj["config"] = updated
    return updated


lambda_option = click.option(
    "--lambda", "lam", type=float, default=None, help="Action noise (>= 1) for sampled play"
)
seed_option = click.option("--seed", type=int, default=None, help="Random seed")
out_option = click.option(
    "--out",
    "-o",
    type=click.Path(path_type=Path),
    default=None,
    help="Output directory (defaults to output.dir or PROBE_OUTPUT_DIR)",
)


@main.command()
@seed_option
@lambda_option
@click.option("--prior", type=click.Choice(list(PRIORS)), default=None, help="Player prior")
@click.option("--learn", type=click.Choice(list(LEARN_MODES)), default=None, help="What to learn")
@click.option("--topology", default=None, help="Game family, e.g. path:1x6 or grid:3x6")
@click.option("--steps", type=int, default=None, help="Number of training steps")
@out_option
@click.pass_context
@handle_errors
def design(
    ctx: click.Context,
    seed: int | None,
    lam: float | None,
    prior: str | None,
    learn: str | None,
    topology: str | None,
    steps: int | None,
    out: Path | None,
) -> None:
    """
    Learn a diagnostic game.

    Writes checkpoint.json and loss_curve.csv to the output directory.
    """
    config = _apply(
        ctx, seed=seed, lam=lam, prior=prior, learn=learn, topology=topology, steps=steps
    )
    core = ProbeCore(config)
    out_dir = _out_dir(ctx, out)

    console.print()
    console.print(
        Panel.fit(
            f"[bold blue]probe-core v{__version__}[/]\n"
            f"Designing {config.topology} (learn={config.learn}, prior={config.prior})",
            border_style="blue",
        )
    )

    with _progress() as progress:
        task = progress.add_task("Designing...", total=config.steps, status="")

        def on_step(step: int, loss: float) -> None:
            progress.update(task, completed=step, status=f"loss {loss:.4f}")

        report = core.design(progress=on_step)

    checkpoint = save_checkpoint(report, out_dir / "checkpoint.json")
    curve = save_loss_curve(report.loss_curve, out_dir / "loss_curve.csv")
    console.print(f"[green]✓ Final loss:[/] {report.final_loss:.6f}")
    if report.entropy_constant is not None:
        console.print(f"[dim]  Prior entropy H(Z): {report.entropy_constant:.5f}[/]")
    console.print(f"[dim]Checkpoint saved to: {checkpoint}[/]")
    console.print(f"[dim]Loss curve saved to: {curve}[/]")


def _display_report(title: str, report: EvalReport) -> None:
    table = Table(title=title, show_header=True)
    table.add_column("Seed", style="cyan", justify="right")
    table.add_column("Best epoch", justify="right")
    table.add_column("Val", justify="right")
    table.add_column("Test", justify="right")
    for r in report.rounds:
        table.add_row(
            str(r.seed), str(r.best_epoch), f"{r.val_accuracy:.3f}", f"{r.test_accuracy:.3f}"
        )
    console.print(table)
    console.print(f"[bold]Accuracy:[/] {report.summary()}")


@main.command()
@click.argument("source")
@seed_option
@lambda_option
@out_option
@click.pass_context
@handle_errors
def evaluate(
    ctx: click.Context, source: str, seed: int | None, lam: float | None, out: Path | None
) -> None:
    """
    Classify player types from play in a game.

    SOURCE is a checkpoint path or a built-in game id (see `probe list`).
    """
    config = _apply(ctx, seed=seed, lam=lam)
    core = ProbeCore(config)

    with _progress() as progress:
        task = progress.add_task(f"Evaluating {source}...", total=None, status="")
        report = core.evaluate(source)
        progress.update(task, completed=True)

    _display_report(f"Classification on {source} (lambda={config.lam})", report)
    name = Path(source).stem if source not in GAME_IDS else source
    path = save_report(report.to_dict(), _out_dir(ctx, out) / f"eval_{name}.json")
    console.print(f"\n[dim]Report saved to: {path}[/]")


def _parse_traits(
    ctx: click.Context, param: click.Parameter, values: tuple[str, ...]
) -> dict[str, PlayerTrait] | None:
    try:
        return dict(parse_trait(v) for v in values) or None
    except TraitError as e:
        raise click.BadParameter(str(e), ctx=ctx, param=param) from e


@main.command()
@click.argument("source")
@click.argument("what", type=click.Choice(list_renderers() + ["all"]))
@click.option(
    "--traits",
    "-t",
    multiple=True,
    callback=_parse_traits,
    help="Player to draw: a type name, XI_POS,XI_NEG or NAME=XI_POS,XI_NEG (repeatable)",
)
@seed_option
@out_option
@click.pass_context
@handle_errors
def render(
    ctx: click.Context,
    source: str,
    what: str,
    traits: dict[str, PlayerTrait] | None,
    seed: int | None,
    out: Path | None,
) -> None:
    """
    Draw reward, stickiness, policy or trajectory figures for a game.

    Each target is written as SVG with a plain-text twin. Policy and trajectory
    figures show the three player types unless --traits is given.
    """
    config = _apply(ctx, seed=seed)
    core = ProbeCore(config)
    targets = list_renderers() if what == "all" else [what]
    out_dir = _out_dir(ctx, out)
    for target in targets:
        for path in core.render(source, target, out_dir, traits=traits):
            console.print(f"[green]✓[/] {path}")


def _display_reproduction(result: ReproductionTable) -> None:
    table = Table(title=f"Table {result.table}: {TABLES[result.table]}", show_header=True)
    keys = [k for k in result.rows[0] if k not in ("ours", "published")] if result.rows else []
    for key in keys:
        table.add_column(key.capitalize(), style="cyan")
    table.add_column("Ours", justify="right")
    table.add_column("Published", justify="right")
    for row in result.rows:
        table.add_row(*[str(row[k]) for k in keys], _fmt(row["ours"]), _fmt(row["published"]))
    console.print(table)
    for check in result.checks:
        mark = "[green]✓ PASS[/]" if check.passed else "[red]✗ FAIL[/]"
        console.print(f"  {mark} {check.name} [dim]{check.detail}[/]")


def _fmt(value: Any) -> str:
    if isinstance(value, dict):
        return ", ".join(f"{k} {_fmt(v)}" for k, v in value.items())
    if isinstance(value, (list, tuple)) and len(value) == 2 and all(
        isinstance(v, (int, float)) for v in value
    ):
        return f"{value[0]:.3f} ({value[1]:.3f})"
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


@main.command()
@click.argument("table", type=click.IntRange(1, 4))
@click.option("--replications", type=int, default=1, help="Seeded repeats (table 1 only)")
@seed_option
@out_option
@click.pass_context
@handle_errors
def reproduce(
    ctx: click.Context, table: int, replications: int, seed: int | None, out: Path | None
) -> None:
    """
    Run every cell of a published table and compare.

    TABLE is 1 (design loss), 2 (accuracy), 3 (noise sweep) or 4 (prior ablation).
    """
    config = _apply(ctx, seed=seed)
    core = ProbeCore(config)
    with _progress() as progress:
        task = progress.add_task(f"Reproducing table {table}...", total=None, status="")
        result = core.reproduce(table, replications=replications)
        progress.update(task, completed=True)

    _display_reproduction(result)
    path = save_report(result.to_dict(), _out_dir(ctx, out) / f"table{table}.json")
    console.print(f"\n[dim]Report saved to: {path}[/]")


@main.command()
@click.argument("source")
@seed_option
@lambda_option
@out_option
@click.pass_context
@handle_errors
def simulate(
    ctx: click.Context, source: str, seed: int | None, lam: float | None, out: Path | None
) -> None:
    """Generate a labelled trajectory dataset from a game."""
    config = _apply(ctx, seed=seed, lam=lam)
    if seed is not None:
        config = _apply(ctx, dataset_seed=seed)
    dataset = ProbeCore(config).simulate(source)
    name = Path(source).stem if source not in GAME_IDS else source
    path = save_dataset(dataset, _out_dir(ctx, out) / f"dataset_{name}.jsonl")
    sizes = "/".join(str(s) for s in dataset.sizes)
    console.print(f"[green]✓ Dataset ({sizes}) saved to:[/] {path}")


@main.command("list")
def list_available() -> None:
    """List topologies, built-in games, render targets and tables."""
    table = Table(title="Topologies", show_header=True)
    table.add_column("Kind", style="cyan")
    table.add_column("Actions")
    table.add_column("Baseline layouts")
    for kind, actions in TOPOLOGY_ACTIONS.items():
        layouts = [f"{k}:{r}x{c}" for (k, r, c) in BASELINE_REWARDS if k == kind]
        table.add_row(kind, ", ".join(actions), ", ".join(layouts))
    console.print()
    console.print(table)

    games = Table(title="Built-in Games", show_header=True)
    games.add_column("Id", style="cyan")
    games.add_column("Description")
    for name, description in GAME_IDS.items():
        games.add_row(name, description)
    console.print(games)

    renderers = Table(title="Render Targets", show_header=True)
    renderers.add_column("Name", style="cyan")
    renderers.add_column("Description")
    for name, cls in RENDERERS.items():
        renderers.add_row(name, cls.description)
    console.print(renderers)

    tables = Table(title="Reproducible Tables", show_header=True)
    tables.add_column("Table", style="cyan")
    tables.add_column("Content")
    for number, title in TABLES.items():
        tables.add_row(str(number), title)
    console.print(tables)


@main.command("version", short_help="Display version information")
def version() -> None:
    """Display version information for probe-core."""
    import numpy

    console.print()
    console.print(
        Panel.fit(
            f"[bold blue]probe-core[/]\nVersion: [cyan]{__version__}[/]",
            border_style="blue",
            title="Version Information",
        )
    )
    console.print()

    table = Table(show_header=False, box=None)
    table.add_column("Component", style="dim", width=20)
    table.add_column("Version", style="cyan")
    table.add_row("probe-core", __version__)
    table.add_row("Python", f"{sys.version.split()[0]}")
    table.add_row("NumPy", numpy.__version__)

    console.print(table)
    console.print()


@main.command()
@click.argument("output_path", type=click.Path(path_type=Path))
@click.pass_context
@handle_errors
def init_config(ctx: click.Context, output_path: Path) -> None:
    """
    Generate a sample configuration file.

    Creates a YAML configuration file with all available options
    and helpful comments.
    """
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_text(SAMPLE_CONFIG)
    console.print(f"[green]✓ Configuration file created: {output_path}[/]")
    console.print()
    console.print("Next steps:")
    console.print("  1. Edit the game and design sections")
    console.print(f"  2. Design a game: [cyan]probe -c {output_path} design[/]")
    console.print("  3. Evaluate it: [cyan]probe evaluate probe-output/checkpoint.json[/]")


if __name__ == "__main__":
    main()
