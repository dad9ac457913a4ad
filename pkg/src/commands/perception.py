"""Typer commands running the perception stages one artifact at a time."""

import logging
from pathlib import Path
from typing import Annotated, Optional

import typer
from rich.console import Console

import services.planner as planner
import services.segment as segment
import services.skeleton as skeleton
import services.tactile as tactile
from commands.options import output_path, settings
from services.core import read_json, read_mask, read_raster, write_json, write_mask
from services.simscene import load_scene

log = logging.getLogger(__name__)
console = Console()


def segment_visual(
    ctx: typer.Context,
    albedo: Annotated[
        Path, typer.Option(help="Albedo raster (float32 + sidecar).", show_default=False)
    ],
    out: Annotated[
        Optional[Path], typer.Option("--out", help="Output mask (.pgm).", show_default=False)
    ] = None,
):
    """Segment dark crack-like pixels from a visual albedo image."""
    cfg = settings(ctx).config.segmenter
    mask = segment.segment_visual(read_raster(albedo, "albedo"), cfg)  # type: ignore[arg-type]
    path = output_path(ctx, out, "visual_mask.pgm")
    write_mask(path, mask)
    console.print(f"Visual mask: [b]{mask.count}[/b] crack pixels -> {path}")


def skeletonize(
    ctx: typer.Context,
    mask: Annotated[Path, typer.Option(help="Crack mask (.pgm).", show_default=False)],
    out: Annotated[
        Optional[Path], typer.Option("--out", help="Output graph (.json).", show_default=False)
    ] = None,
):
    """Thin a crack mask and extract its keypoints and minimal edges."""
    graph = skeleton.build_graph(read_mask(mask))
    path = output_path(ctx, out, "graph.json")
    write_json(path, graph.to_dict())
    console.print(
        f"Skeleton: [b]{len(graph.keypoints)}[/b] keypoints, "
        f"[b]{len(graph.edges)}[/b] minimal edges -> {path}"
    )


def plan(
    ctx: typer.Context,
    graph: Annotated[
        Optional[Path], typer.Option(help="Skeleton graph (.json).", show_default=False)
    ] = None,
    passive: Annotated[
        bool, typer.Option(help="Plan a raster over the whole surface instead.")
    ] = False,
    scene: Annotated[
        Optional[Path],
        typer.Option(help="Scene directory, whose geometry a passive raster covers."),
    ] = None,
    out: Annotated[
        Optional[Path], typer.Option("--out", help="Output plan (.json).", show_default=False)
    ] = None,
):
    """Plan tactile contacts along the minimal edges of a skeleton graph."""
    cfg = settings(ctx).config.planner
    if passive:
        if scene is not None:
            geometry = load_scene(scene).geometry
        elif graph is not None:
            geometry = skeleton.SkeletonGraph.from_dict(read_json(graph)).skeleton.geometry
        else:
            raise typer.BadParameter("A passive plan needs --scene or --graph.")
        touch_plan = planner.plan_passive_raster(
            geometry, planner.SENSOR_VIEW_MM, cfg.passive_overlap
        )
    else:
        if graph is None:
            raise typer.BadParameter("An active plan needs --graph.")
        topology = skeleton.SkeletonGraph.from_dict(read_json(graph))
        touch_plan = planner.build_touch_plan(
            topology, topology.skeleton.geometry, cfg.spacing_mm, cfg.min_spur_mm
        )
    path = output_path(ctx, out, "plan.json")
    write_json(path, touch_plan.to_dict())
    console.print(f"Plan: [b]{len(touch_plan)}[/b] touches -> {path}")


def simulate(
    ctx: typer.Context,
    scene: Annotated[Path, typer.Option(help="Scene directory.", show_default=False)],
    plan: Annotated[Path, typer.Option(help="Touch plan (.json).", show_default=False)],
    out: Annotated[
        Optional[Path], typer.Option("--out", help="Frame directory.", show_default=False)
    ] = None,
):
    """Press the simulated tactile sensor at every planned contact."""
    state = settings(ctx)
    touch_plan = planner.TouchPlan.from_dict(read_json(plan))
    frames = tactile.simulate_plan(
        load_scene(scene), state.config.sensor.build(), touch_plan, seed=state.seed
    )
    directory = output_path(ctx, out, "frames")
    tactile.save_frames(directory, frames)
    missed = sum(not f.ok for f in frames)
    console.print(
        f"Simulated [b]{len(frames)}[/b] touches ({missed} without contact) -> {directory}"
    )


def segment_tactile(
    ctx: typer.Context,
    frames: Annotated[Path, typer.Option(help="Frame directory.", show_default=False)],
    out: Annotated[
        Optional[Path], typer.Option("--out", help="Tactile mask directory.", show_default=False)
    ] = None,
):
    """Segment the groove band of every tactile frame."""
    cfg = settings(ctx).config.segmenter
    masks = segment.segment_tactile_frames(tactile.load_frames(frames), cfg)
    directory = output_path(ctx, out, "tactile_masks")
    directory.mkdir(parents=True, exist_ok=True)
    for i, mask in enumerate(masks):
        write_mask(directory / f"mask_{i:04d}.pgm", mask)
    console.print(f"Segmented [b]{len(masks)}[/b] tactile frames -> {directory}")
