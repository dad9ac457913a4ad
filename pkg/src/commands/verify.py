"""Typer commands to verify visual detections by touch and reconstruct cracks."""

import logging
from pathlib import Path
from typing import Annotated, List, Optional

import typer
from rich.console import Console

import services.fusion as fusion
import services.tactile as tactile
from commands.options import output_path, settings
from services.core import ContractError, Mask, read_json, read_mask, write_mask
from services.planner import TouchPlan
from services.skeleton import SkeletonGraph

log = logging.getLogger(__name__)
console = Console()


def load_tactile_masks(directory: Path) -> List[Mask]:
    """Read `mask_0000.pgm`, `mask_0001.pgm`, ... in plan order."""
    return [read_mask(p) for p in sorted(Path(directory).glob("mask_*.pgm"))]


def _frames_ok(frames: Optional[Path], count: int) -> Optional[List[bool]]:
    if frames is None:
        return None
    flags = [f.ok for f in tactile.load_frames(frames)]
    if len(flags) != count:
        raise ContractError(f"{frames} holds {len(flags)} frames, expected {count}.")
    return flags


def fuse(
    ctx: typer.Context,
    mask: Annotated[Path, typer.Option(help="Visual crack mask (.pgm).", show_default=False)],
    graph: Annotated[Path, typer.Option(help="Skeleton graph (.json).", show_default=False)],
    plan: Annotated[Path, typer.Option(help="Executed touch plan (.json).", show_default=False)],
    tactile_masks: Annotated[
        Path, typer.Option("--tactile", help="Tactile mask directory.", show_default=False)
    ],
    frames: Annotated[
        Optional[Path],
        typer.Option(help="Frame directory; touches without contact are not counted."),
    ] = None,
    out: Annotated[
        Optional[Path], typer.Option("--out", help="Refined mask (.pgm).", show_default=False)
    ] = None,
):
    """Reject visual detections that touch shows to be flat, and refine the visual mask."""
    cfg = settings(ctx).config.fusion
    topology = SkeletonGraph.from_dict(read_json(graph))
    touch_plan = TouchPlan.from_dict(read_json(plan))
    masks = load_tactile_masks(tactile_masks)
    verdicts = fusion.verify_edges(
        touch_plan,
        masks,
        cfg.area_threshold_frac,
        frames_ok=_frames_ok(frames, len(masks)),
        n_edges=len(topology.edges),
    )
    refined = fusion.refine_visual_mask(read_mask(mask), topology, verdicts)
    path = output_path(ctx, out, "refined_mask.pgm")
    write_mask(path, refined)
    fusion.write_verdicts(path.with_name("verdicts.json"), verdicts)
    for verdict in verdicts:
        status = "[red]rejected[/red]" if verdict.rejected else "[green]kept[/green]"
        console.print(
            f"Edge {verdict.edge_index}: {verdict.low_area_touches}/{verdict.touches} "
            f"low-area touches, {status}"
        )
    console.print(f"Refined mask: [b]{refined.count}[/b] crack pixels -> {path}")


def reconstruct(
    ctx: typer.Context,
    frames: Annotated[Path, typer.Option(help="Frame directory.", show_default=False)],
    tactile_masks: Annotated[
        Path, typer.Option("--tactile", help="Tactile mask directory.", show_default=False)
    ],
    plan: Annotated[Path, typer.Option(help="Executed touch plan (.json).", show_default=False)],
    verdicts: Annotated[
        Optional[Path],
        typer.Option(help="Verdict report (.json); without it every frame is used."),
    ] = None,
    out: Annotated[
        Optional[Path], typer.Option("--out", help="Point cloud (.csv).", show_default=False)
    ] = None,
):
    """Reconstruct world-frame crack points from the tactile masks of kept edges."""
    config = settings(ctx).config
    judged = (
        [fusion.EdgeVerdict.from_dict(v) for v in read_json(verdicts)] if verdicts else None
    )
    recon = fusion.assemble_reconstruction(
        tactile.load_frames(frames),
        load_tactile_masks(tactile_masks),
        judged,
        TouchPlan.from_dict(read_json(plan)),
        config.sensor.build(),
        config.fusion.stride,
        config.fusion.boundary_only,
    )
    path = output_path(ctx, out, "points.csv")
    fusion.write_points_csv(path, recon)
    console.print(f"Reconstructed [b]{len(recon)}[/b] points -> {path}")
