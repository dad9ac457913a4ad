"""Typer commands to generate synthetic cracked structures."""

import logging
from pathlib import Path
from typing import Annotated, Optional

import typer
from rich.console import Console

import services.simscene as simscene
from commands.options import settings

log = logging.getLogger(__name__)
console = Console()


def generate(
    ctx: typer.Context,
    n_real: Annotated[int, typer.Option("--real", help="Number of real (grooved) cracks.")] = 2,
    n_fake: Annotated[int, typer.Option("--fake", help="Number of fake (painted) cracks.")] = 1,
    seed: Annotated[
        Optional[int], typer.Option(help="Scene seed; defaults to the global --seed.")
    ] = None,
    width: Annotated[float, typer.Option(help="Structure width in mm.")] = 140.0,
    height: Annotated[float, typer.Option(help="Structure height in mm.")] = 105.0,
    out: Annotated[
        Optional[Path],
        typer.Option("--out", help="Scene directory; defaults to the global --out."),
    ] = None,
):
    """Generate a seeded synthetic scene with real and fake cracks."""
    state = settings(ctx)
    corpus = state.config.corpus
    spec = simscene.random_scene(
        state.seed if seed is None else seed,
        n_real,
        n_fake,
        extent=(width, height),
        mm_per_px=corpus.mm_per_px,
        min_length_mm=corpus.min_length_mm,
        clearance_mm=corpus.clearance_mm,
    )
    scene = simscene.generate_scene(spec)
    directory = out or state.out
    simscene.save_scene(scene, directory)
    console.print(
        f"Scene [b]{spec.seed}[/b]: {n_real} real and {n_fake} fake cracks, "
        f"{scene.geometry.width_px}x{scene.geometry.height_px} px -> {directory}"
    )
