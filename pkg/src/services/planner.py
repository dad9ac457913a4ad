"""Touch planning: greedy contact selection along minimal edges and the passive raster baseline."""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from services.core import GridGeometry, ParameterError, Pixel
from services.skeleton import KeypointKind, MinimalEdge, SkeletonGraph

log = logging.getLogger(__name__)

SENSOR_VIEW_MM = (14.0, 10.5)
DEFAULT_SPACING_MM = 0.8 * SENSOR_VIEW_MM[0]  # four fifths of the view length
PASSIVE_EDGE = -1


@dataclass(frozen=True)
class ContactPose:
    """World-frame pose at which the sensor is pressed onto the surface."""

    position: Tuple[float, float, float]
    yaw_rad: float
    source_edge: int
    source_pixel: Pixel

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation."""
        x, y, z = self.position
        return {
            "x_mm": x,
            "y_mm": y,
            "z_mm": z,
            "yaw_rad": self.yaw_rad,
            "edge": self.source_edge,
            "pixel": list(self.source_pixel),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ContactPose":
        """Create a ContactPose from its JSON representation."""
        return cls(
            position=(float(data["x_mm"]), float(data["y_mm"]), float(data["z_mm"])),
            yaw_rad=float(data["yaw_rad"]),
            source_edge=int(data["edge"]),
            source_pixel=(int(data["pixel"][0]), int(data["pixel"][1])),
        )


@dataclass
class TouchPlan:
    """Ordered contacts grouped by the minimal edge they verify."""

    contacts: List[ContactPose]
    spacing_mm: float
    per_edge_index: Dict[int, List[int]] = field(default_factory=dict)
    skipped_edges: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        """Return the number of touches."""
        return len(self.contacts)

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "spacing_mm": self.spacing_mm,
            "skipped_edges": list(self.skipped_edges),
            "contacts": [c.to_dict() for c in self.contacts],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TouchPlan":
        """Create a TouchPlan from its JSON representation; the edge index is rebuilt."""
        contacts = [ContactPose.from_dict(c) for c in data["contacts"]]
        return cls(
            contacts=contacts,
            spacing_mm=float(data["spacing_mm"]),
            per_edge_index=_index_by_edge(contacts),
            skipped_edges=[int(e) for e in data.get("skipped_edges", [])],
        )


def _index_by_edge(contacts: Sequence[ContactPose]) -> Dict[int, List[int]]:
    index: Dict[int, List[int]] = {}
    for i, contact in enumerate(contacts):
        index.setdefault(contact.source_edge, []).append(i)
    return index


def _path_world(edge: MinimalEdge, geom: GridGeometry) -> np.ndarray:
    path = np.asarray(edge.path, dtype=float).reshape(-1, 2)
    return geom.pixel_to_world(path[:, 0], path[:, 1])


def path_length_mm(edge: MinimalEdge, geom: GridGeometry) -> float:
    """Return the world length of an edge's pixel path."""
    points = _path_world(edge, geom)
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def select_contact_indices(points: np.ndarray, d_mm: float) -> List[int]:
    """Greedy contact selection over ordered path points.

    From the current contact, the next one is the strictly-later point farthest away
    while still closer than `d_mm`; when none qualifies, the nearest strictly-later
    point is taken. The last path point always ends the selection.
    """
    if not d_mm > 0:
        raise ParameterError(f"Contact spacing d must be positive, got {d_mm}.")
    selected = [0]
    current = 0
    last = len(points) - 1
    while current < last:
        distances = np.linalg.norm(points[current + 1 :] - points[current], axis=1)
        reachable = distances < d_mm
        if reachable.any():
            step = int(np.argmax(np.where(reachable, distances, -np.inf)))
        else:
            step = int(np.argmin(distances))
        current = current + 1 + step
        selected.append(current)
    return selected


def plan_edge_contacts(edge: MinimalEdge, geom: GridGeometry, d_mm: float) -> List[Pixel]:
    """Return the ordered contact pixels of one minimal edge."""
    if not edge.path:
        raise ParameterError("Cannot plan contacts on an empty edge path.")
    indices = select_contact_indices(_path_world(edge, geom), d_mm)
    return [edge.path[i] for i in indices]


def canonical_yaw(yaw_rad: float) -> float:
    """Fold a yaw into [0, pi); the rectangular sensor is symmetric under a half turn."""
    folded = math.fmod(yaw_rad, math.pi)
    if folded < 0:
        folded += math.pi
    return 0.0 if folded >= math.pi else folded


def _plane_yaw(vector: np.ndarray, geom: GridGeometry) -> float:
    axis_u, axis_v = (np.asarray(a) for a in geom.plane_axes)
    return canonical_yaw(math.atan2(float(vector @ axis_v), float(vector @ axis_u)))


def assign_yaw(
    contacts: Sequence[Sequence[Pixel]],
    geom: GridGeometry,
    edges: Optional[Sequence[MinimalEdge]] = None,
    edge_ids: Optional[Sequence[int]] = None,
) -> List[ContactPose]:
    """Turn per-edge contact pixels into poses whose yaw follows the crack.

    Each contact is aligned with the vector to its nearest other contact on the same edge.
    A lone contact uses the path tangent (central difference over up to five pixels),
    which needs `edges`; without them it gets yaw 0.
    """
    poses: List[ContactPose] = []
    edge_ids = list(edge_ids) if edge_ids is not None else list(range(len(contacts)))
    for run, edge_id in zip(contacts, edge_ids):
        pixels = np.asarray(run, dtype=float).reshape(-1, 2)
        world = geom.pixel_to_world(pixels[:, 0], pixels[:, 1])
        for i, pixel in enumerate(run):
            if len(run) > 1:
                gaps = np.linalg.norm(world - world[i], axis=1)
                gaps[i] = np.inf
                yaw = _plane_yaw(world[int(np.argmin(gaps))] - world[i], geom)
            elif edges is not None:
                yaw = _tangent_yaw(edges[edge_id], pixel, geom)
            else:
                yaw = 0.0
            poses.append(
                ContactPose(
                    position=tuple(float(c) for c in world[i]),
                    yaw_rad=yaw,
                    source_edge=edge_id,
                    source_pixel=(int(pixel[0]), int(pixel[1])),
                )
            )
    return poses


def _tangent_yaw(edge: MinimalEdge, pixel: Pixel, geom: GridGeometry) -> float:
    k = edge.path.index(pixel)
    lo, hi = max(0, k - 2), min(len(edge.path) - 1, k + 2)
    ends = geom.pixel_to_world(
        np.array([edge.path[lo][0], edge.path[hi][0]], dtype=float),
        np.array([edge.path[lo][1], edge.path[hi][1]], dtype=float),
    )
    tangent = ends[1] - ends[0]
    if not np.any(tangent):
        return 0.0
    return _plane_yaw(tangent, geom)


def _is_spur(edge: MinimalEdge, graph: SkeletonGraph) -> bool:
    kinds = {k.pixel: k.kind for k in graph.keypoints}
    ends = {kinds.get(edge.p_i), kinds.get(edge.p_j)}
    return ends == {KeypointKind.END, KeypointKind.BRANCH}


def build_touch_plan(
    graph: SkeletonGraph,
    geom: GridGeometry,
    d_mm: float = DEFAULT_SPACING_MM,
    min_spur_mm: float = 0.0,
) -> TouchPlan:
    """Plan contacts for every minimal edge, in edge order.

    Args:
        graph: Skeleton topology of the visual crack mask.
        geom: Geometry of the raster the graph was extracted from.
        d_mm: Contact spacing threshold d.
        min_spur_mm: End-to-Branch edges shorter than this get no contacts; 0 touches
            every edge.
    """
    if not d_mm > 0:
        raise ParameterError(f"Contact spacing d must be positive, got {d_mm}.")
    runs: List[List[Pixel]] = []
    edge_ids: List[int] = []
    skipped: List[int] = []
    for edge_id, edge in enumerate(graph.edges):
        if min_spur_mm > 0 and _is_spur(edge, graph) and path_length_mm(edge, geom) < min_spur_mm:
            skipped.append(edge_id)
            continue
        runs.append(plan_edge_contacts(edge, geom, d_mm))
        edge_ids.append(edge_id)
    contacts = assign_yaw(runs, geom, edges=graph.edges, edge_ids=edge_ids)
    log.info(
        "Planned %d touches over %d edges (%d spurs skipped)",
        len(contacts),
        len(edge_ids),
        len(skipped),
    )
    return TouchPlan(
        contacts=contacts,
        spacing_mm=d_mm,
        per_edge_index=_index_by_edge(contacts),
        skipped_edges=skipped,
    )


def plan_passive_raster(
    geom: GridGeometry,
    footprint_mm: Tuple[float, float] = SENSOR_VIEW_MM,
    overlap: float = 0.0,
) -> TouchPlan:
    """Boustrophedon grid of yaw-0 touches covering the whole raster extent."""
    if not 0.0 <= overlap < 1.0:
        raise ParameterError(f"overlap must lie in [0, 1), got {overlap}.")
    width, height = geom.extent_mm
    foot_x, foot_y = footprint_mm
    if width < foot_x - 1e-9 or height < foot_y - 1e-9:
        raise ParameterError(
            f"Surface {width}x{height} mm is smaller than one {foot_x}x{foot_y} mm footprint."
        )
    stride_x, stride_y = foot_x * (1 - overlap), foot_y * (1 - overlap)
    columns = math.ceil(width / stride_x - 1e-9)
    rows = math.ceil(height / stride_y - 1e-9)

    contacts: List[ContactPose] = []
    for j in range(rows):
        s_y = min(foot_y / 2 + j * stride_y, height - foot_y / 2)
        order = range(columns) if j % 2 == 0 else reversed(range(columns))
        for i in order:
            s_x = min(foot_x / 2 + i * stride_x, width - foot_x / 2)
            # surface coordinates are measured from the raster's outer edge
            u = s_x / geom.mm_per_px - 0.5
            v = s_y / geom.mm_per_px - 0.5
            position = geom.pixel_to_world(u, v)
            pixel = (
                int(min(max(round(u), 0), geom.width_px - 1)),
                int(min(max(round(v), 0), geom.height_px - 1)),
            )
            contacts.append(
                ContactPose(tuple(float(c) for c in position), 0.0, PASSIVE_EDGE, pixel)
            )
    log.info("Passive raster: %d x %d = %d touches", columns, rows, len(contacts))
    return TouchPlan(
        contacts=contacts, spacing_mm=stride_x, per_edge_index=_index_by_edge(contacts)
    )
