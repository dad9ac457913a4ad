"""Tactile verification of visual crack detections and world-frame reconstruction."""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from services.core import (
    ContractError,
    FormatError,
    Mask,
    ParameterError,
    PathLike,
    apply_points,
    pixels_to_sensor,
    write_json,
)
from services.planner import TouchPlan
from services.skeleton import EIGHT, SkeletonGraph
from services.tactile import SensorModel, TactileFrame

log = logging.getLogger(__name__)

AREA_THRESHOLD_FRAC = 1 / 50
RECONSTRUCTION_STRIDE = 4
CSV_HEADER = ("x_mm", "y_mm", "z_mm", "frame")


@dataclass(frozen=True)
class EdgeVerdict:
    """Tactile evidence gathered along one minimal edge."""

    edge_index: int
    touches: int
    low_area_touches: int
    rejected: bool
    area_fractions: Tuple[float, ...] = ()

    def __post_init__(self):
        """Validate the counting invariants."""
        if not 0 <= self.low_area_touches <= self.touches:
            raise ContractError(
                f"Edge {self.edge_index}: {self.low_area_touches} low-area touches out of "
                f"{self.touches}."
            )
        if self.rejected and self.low_area_touches <= 2:
            raise ContractError(
                f"Edge {self.edge_index} rejected on {self.low_area_touches} low-area touches."
            )

    def to_dict(self) -> Dict[str, Any]:
        """Return the verdict report entry."""
        return {
            "edge": self.edge_index,
            "touches": self.touches,
            "low_area_touches": self.low_area_touches,
            "rejected": self.rejected,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EdgeVerdict":
        """Create a verdict from its report entry."""
        try:
            return cls(
                edge_index=int(data["edge"]),
                touches=int(data["touches"]),
                low_area_touches=int(data["low_area_touches"]),
                rejected=bool(data["rejected"]),
            )
        except KeyError as e:
            raise FormatError(f"Verdict entry is missing {e.args[0]!r}.") from e


@dataclass
class CrackReconstruction:
    """World-frame crack points, each tagged with the frame it came from."""

    points: np.ndarray = field(default_factory=lambda: np.empty((0, 3)))
    source_frame: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    per_edge: Dict[int, List[int]] = field(default_factory=dict)

    def __len__(self) -> int:
        """Return the number of points."""
        return len(self.points)

    @property
    def is_empty(self) -> bool:
        """Return True when no point was reconstructed."""
        return len(self.points) == 0


def verify_edges(
    plan: TouchPlan,
    tactile_masks: Sequence[Mask],
    area_threshold_frac: float = AREA_THRESHOLD_FRAC,
    frames_ok: Optional[Sequence[bool]] = None,
    n_edges: Optional[int] = None,
) -> List[EdgeVerdict]:
    """Judge every planned edge from the crack area its touches saw.

    A touch is low-area when its crack-pixel fraction is below `area_threshold_frac`;
    an edge with more than two low-area touches is rejected as a false positive.

    Args:
        plan: The executed touch plan.
        tactile_masks: One mask per contact, in plan order.
        area_threshold_frac: Low-area cut-off as a fraction of the frame's pixels.
        frames_ok: Contact flags per touch; touches without contact are not counted.
        n_edges: When given, edges without touches get an explicit zero-touch verdict.

    Raises:
        ContractError: if the masks do not line up with the plan.
    """
    if len(tactile_masks) != len(plan.contacts):
        raise ContractError(
            f"Got {len(tactile_masks)} tactile masks for a plan of {len(plan.contacts)} contacts."
        )
    if frames_ok is not None and len(frames_ok) != len(plan.contacts):
        raise ContractError("frames_ok must have one flag per contact.")
    if not 0.0 < area_threshold_frac <= 1.0:
        raise ParameterError(f"area_threshold_frac must lie in (0, 1], got {area_threshold_frac}.")

    edge_ids = set(plan.per_edge_index)
    if n_edges is not None:
        edge_ids |= set(range(n_edges))
    verdicts = []
    for edge in sorted(edge_ids):
        fractions = tuple(
            float(tactile_masks[i].data.mean())
            for i in plan.per_edge_index.get(edge, [])
            if frames_ok is None or frames_ok[i]
        )
        low = sum(f < area_threshold_frac for f in fractions)
        verdicts.append(EdgeVerdict(edge, len(fractions), low, low > 2, fractions))
        log.debug("Edge %d: fractions %s -> low=%d", edge, fractions, low)
    log.info(
        "Verified %d edges, rejected %d", len(verdicts), sum(v.rejected for v in verdicts)
    )
    return verdicts


def refine_visual_mask(
    visual_mask: Mask, graph: SkeletonGraph, verdicts: Sequence[EdgeVerdict]
) -> Mask:
    """Remove visual components explained only by rejected edges.

    A connected component goes iff every edge whose path meets it is rejected. One
    kept edge, touched or not, keeps the whole component.

    Raises:
        ContractError: if the graph does not belong to the mask or a verdict is missing.
    """
    if not graph.skeleton.geometry.close_to(visual_mask.geometry):
        raise ContractError("Skeleton graph and visual mask have different geometries.")
    by_edge = {v.edge_index: v for v in verdicts}
    missing = [i for i in range(len(graph.edges)) if i not in by_edge]
    if missing:
        raise ContractError(f"No verdict for edges {missing}.")

    labels, count = ndimage.label(visual_mask.data, structure=EIGHT)
    rejected = np.zeros(count + 1, dtype=bool)
    kept = np.zeros(count + 1, dtype=bool)
    for i, edge in enumerate(graph.edges):
        verdict = by_edge[i]
        us, vs = zip(*edge.path)
        components = np.unique(labels[list(vs), list(us)])
        components = components[components > 0]
        if verdict.rejected:
            rejected[components] = True
        else:
            kept[components] = True
    drop = rejected & ~kept
    drop[0] = False
    refined = Mask(visual_mask.geometry, visual_mask.data & ~drop[labels])
    log.info(
        "Refined visual mask: removed %d of %d components (%d pixels)",
        int(drop.sum()),
        count,
        visual_mask.count - refined.count,
    )
    return refined


def crack_pixels(mask: Mask, stride: int = RECONSTRUCTION_STRIDE, boundary_only: bool = False):
    """Return (N, 2) row-major (u, v) crack pixels, subsampled by `stride`."""
    if stride < 1:
        raise ParameterError(f"stride must be at least 1, got {stride}.")
    img = mask.data
    if boundary_only:
        img = img & ~ndimage.binary_erosion(img, structure=EIGHT)
    v, u = np.nonzero(img)
    return np.column_stack([u, v])[::stride].astype(float)


def reconstruct_frame(
    frame: TactileFrame,
    mask: Mask,
    sensor: SensorModel,
    stride: int = RECONSTRUCTION_STRIDE,
    boundary_only: bool = False,
) -> np.ndarray:
    """Lift a tactile crack mask into world points via the gel plane and T_E^W T_C^E."""
    if not mask.geometry.close_to(frame.geometry):
        raise ContractError(
            f"Mask geometry {mask.geometry.shape} does not match frame geometry "
            f"{frame.geometry.shape}."
        )
    uv = crack_pixels(mask, stride, boundary_only)
    if not len(uv):
        return np.empty((0, 3))
    return apply_points(frame.sensor_to_world(sensor), pixels_to_sensor(sensor.intrinsics, uv))


def assemble_reconstruction(
    frames: Sequence[TactileFrame],
    masks: Sequence[Mask],
    verdicts: Optional[Sequence[EdgeVerdict]],
    plan: TouchPlan,
    sensor: SensorModel,
    stride: int = RECONSTRUCTION_STRIDE,
    boundary_only: bool = False,
) -> CrackReconstruction:
    """Union the reconstructions of every contact frame of a kept edge, in frame order.

    With `verdicts=None` every frame is kept.
    """
    if not len(frames) == len(masks) == len(plan.contacts):
        raise ContractError(
            f"Misaligned inputs: {len(frames)} frames, {len(masks)} masks, "
            f"{len(plan.contacts)} contacts."
        )
    rejected = {v.edge_index for v in verdicts or () if v.rejected}
    clouds, sources = [], []
    per_edge: Dict[int, List[int]] = {}
    total = 0
    for i, (frame, mask, contact) in enumerate(zip(frames, masks, plan.contacts)):
        if not frame.ok or contact.source_edge in rejected:
            continue
        points = reconstruct_frame(frame, mask, sensor, stride, boundary_only)
        clouds.append(points)
        sources.append(np.full(len(points), i, dtype=int))
        per_edge.setdefault(contact.source_edge, []).extend(range(total, total + len(points)))
        total += len(points)
    recon = CrackReconstruction(
        points=np.concatenate(clouds) if clouds else np.empty((0, 3)),
        source_frame=np.concatenate(sources) if sources else np.empty(0, dtype=int),
        per_edge=per_edge,
    )
    log.info("Reconstructed %d points from %d frames", len(recon), len(clouds))
    return recon


def write_points_csv(path: PathLike, recon: CrackReconstruction):
    """Write reconstructed points as CSV `x_mm,y_mm,z_mm,frame`."""
    with Path(path).open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for (x, y, z), frame in zip(recon.points, recon.source_frame):
            writer.writerow((f"{x:.6f}", f"{y:.6f}", f"{z:.6f}", int(frame)))


def write_verdicts(path: PathLike, verdicts: Sequence[EdgeVerdict]):
    """Write the verdict report as a JSON list."""
    write_json(path, [v.to_dict() for v in verdicts])
