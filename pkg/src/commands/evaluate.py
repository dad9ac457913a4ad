"""Typer commands to score the four methods and run the full comparison."""

import logging
from pathlib import Path
from typing import Annotated, List, Optional, Sequence

import typer
from rich import box
from rich.console import Console
from rich.progress import Progress
from rich.table import Table

import services.harness as harness
from commands.options import output_path, settings
from services.core import ParameterError
from services.simscene import load_scene

log = logging.getLogger(__name__)
console = Console()


def _summary_table(results: Sequence[harness.MethodResult]) -> Table:
    table = Table(box=box.ROUNDED)
    for column in ("Method", "IoU", "pixAcc", "TP", "MeanD (mm)", "SD (mm)", "MaxD (mm)"):
        table.add_column(column, justify="left" if column == "Method" else "right")
    table.add_column("Touches", justify="right")
    table.add_column("Time (s)", justify="right")
    for method, row in harness.summarize(results).items():
        distances = [
            "[dim]n/a[/dim]" if row[key] is None else f"{row[key]:.3f}"
            for key in ("meanD", "sd", "maxD")
        ]
        table.add_row(
            method,
            f"{row['iou']:.3f}",
            f"{row['pixAcc']:.3f}",
            f"{row['tp']:.3f}",
            *distances,
            f"{row['touches']:.1f}",
            f"{row['time_model_s']:.0f}",
        )
    return table


def _check_methods(methods: List[str]) -> List[str]:
    unknown = sorted(set(methods) - set(harness.METHODS))
    if unknown:
        raise ParameterError(f"Unknown methods {unknown}; expected {list(harness.METHODS)}.")
    return methods or list(harness.METHODS)


def evaluate(
    ctx: typer.Context,
    scene: Annotated[List[Path], typer.Option(help="Scene directory (repeatable).")],
    method: Annotated[
        Optional[List[str]],
        typer.Option(help="Method to run (repeatable); all four by default.", show_default=False),
    ] = None,
    out: Annotated[
        Optional[Path], typer.Option("--out", help="Report (.csv).", show_default=False)
    ] = None,
):
    """Score methods on saved scenes and write the CSV/JSON report."""
    config = settings(ctx).config
    methods = _check_methods(method or [])
    scenes = [load_scene(directory) for directory in scene]
    results = harness.evaluate_corpus(scenes, config, methods)
    path = output_path(ctx, out, "report.csv")
    harness.emit_report(results, path, config)
    console.print(_summary_table(results))
    console.print(f"Report -> {path}")


def demo(
    ctx: typer.Context,
    out: Annotated[
        Optional[Path], typer.Option("--out", help="Report (.csv).", show_default=False)
    ] = None,
):
    """Run the full four-method comparison on the generated corpus."""
    state = settings(ctx)
    config = state.config
    total = config.corpus.scenes * len(harness.METHODS)
    with Progress(console=console, transient=True) as progress:
        task = progress.add_task("Generating scenes...", total=total)
        scenes = harness.build_corpus(config, state.seed)
        progress.update(task, description="Evaluating methods...")
        results = harness.evaluate_corpus(
            scenes,
            config,
            on_result=lambda r: progress.update(
                task, advance=1, description=f"Scene {r.scene_index}: {r.method}"
            ),
        )
    path = output_path(ctx, out, "report.csv")
    harness.emit_report(results, path, config)
    console.print(_summary_table(results))
    failed = [r for r in results if r.failed]
    for result in failed:
        console.print(
            f"[yellow]Scene {result.scene_index}, {result.method}: empty reconstruction[/yellow]"
        )
    console.print(f"Report -> {path}")
