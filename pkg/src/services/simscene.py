"""Seeded synthetic cracked structures: real cracks are grooves, fake cracks are paint."""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from services.core import (
    AlbedoImage,
    ContractError,
    DepthMap,
    GridGeometry,
    Mask,
    PathLike,
    read_json,
    read_mask,
    read_raster,
    write_json,
    write_mask,
    write_raster,
)

log = logging.getLogger(__name__)

BACKGROUND_ALBEDO = 0.8
BACKGROUND_NOISE = 0.05
CRACK_ALBEDO = 0.15


class SpecError(ContractError):
    """Exception due to an invalid or unsatisfiable scene specification."""


@dataclass(frozen=True)
class CrackSpec:
    """A crack band: all points within width/2 of a centreline polyline (mm)."""

    centerline: Tuple[Tuple[float, float], ...]
    width_mm: float
    depth_mm: float
    albedo: float = CRACK_ALBEDO

    def __post_init__(self):
        """Validate the crack's shape parameters."""
        if len(self.centerline) < 1:
            raise SpecError("A crack centreline needs at least one point.")
        if not self.width_mm > 0:
            raise SpecError(f"Crack width must be positive, got {self.width_mm}.")
        if not self.depth_mm >= 0:
            raise SpecError(f"Crack depth must be non-negative, got {self.depth_mm}.")
        if not 0.0 <= self.albedo <= 1.0:
            raise SpecError(f"Crack albedo must lie in [0, 1], got {self.albedo}.")
        object.__setattr__(
            self, "centerline", tuple((float(x), float(y)) for x, y in self.centerline)
        )

    @property
    def is_fake(self) -> bool:
        """Return True for painted cracks, which have no depth."""
        return self.depth_mm == 0

    @property
    def length_mm(self) -> float:
        """Return the centreline length."""
        points = np.asarray(self.centerline)
        return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "centerline": [list(p) for p in self.centerline],
            "width_mm": self.width_mm,
            "depth_mm": self.depth_mm,
            "albedo": self.albedo,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CrackSpec":
        """Create a CrackSpec from its JSON representation."""
        return cls(
            centerline=tuple(tuple(p) for p in data["centerline"]),
            width_mm=float(data["width_mm"]),
            depth_mm=float(data["depth_mm"]),
            albedo=float(data.get("albedo", CRACK_ALBEDO)),
        )


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to regenerate a scene bit for bit."""

    seed: int
    extent_mm: Tuple[float, float]
    surface_z_mm: float = 0.0
    real_cracks: Tuple[CrackSpec, ...] = ()
    fake_cracks: Tuple[CrackSpec, ...] = ()
    mm_per_px: float = 0.25

    def __post_init__(self):
        """Normalise crack lists to tuples."""
        object.__setattr__(self, "real_cracks", tuple(self.real_cracks))
        object.__setattr__(self, "fake_cracks", tuple(self.fake_cracks))

    @property
    def geometry(self) -> GridGeometry:
        """Return the top-down raster geometry; pixel centres sit half a pixel inside."""
        width, height = self.extent_mm
        half = self.mm_per_px / 2
        return GridGeometry(
            width_px=max(1, round(width / self.mm_per_px)),
            height_px=max(1, round(height / self.mm_per_px)),
            mm_per_px=self.mm_per_px,
            world_origin=(half, half, self.surface_z_mm),
        )

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "seed": self.seed,
            "extent_mm": list(self.extent_mm),
            "surface_z_mm": self.surface_z_mm,
            "mm_per_px": self.mm_per_px,
            "real_cracks": [c.to_dict() for c in self.real_cracks],
            "fake_cracks": [c.to_dict() for c in self.fake_cracks],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SceneSpec":
        """Create a SceneSpec from its JSON representation."""
        return cls(
            seed=int(data["seed"]),
            extent_mm=(float(data["extent_mm"][0]), float(data["extent_mm"][1])),
            surface_z_mm=float(data.get("surface_z_mm", 0.0)),
            real_cracks=tuple(CrackSpec.from_dict(c) for c in data["real_cracks"]),
            fake_cracks=tuple(CrackSpec.from_dict(c) for c in data["fake_cracks"]),
            mm_per_px=float(data.get("mm_per_px", 0.25)),
        )


@dataclass(frozen=True, eq=False)
class Scene:
    """Rendered scene: albedo for the camera, depth and ground truth for real cracks."""

    spec: SceneSpec
    albedo: AlbedoImage
    depth: DepthMap
    gt_mask: Mask
    gt_centerlines: List[np.ndarray] = field(default_factory=list)

    @property
    def geometry(self) -> GridGeometry:
        """Return the scene raster geometry."""
        return self.depth.geometry


def distance_to_polyline(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Exact shortest distance from each point to a polyline (any dimension).

    Args:
        points: (N, D) query points.
        polyline: (K, D) vertices; a single vertex is treated as a point.
    """
    points = np.asarray(points, dtype=float)
    polyline = np.asarray(polyline, dtype=float)
    if len(polyline) == 1:
        return np.linalg.norm(points - polyline[0], axis=-1)
    best = np.full(points.shape[:-1], np.inf)
    for a, b in zip(polyline[:-1], polyline[1:]):
        ab = b - a
        denom = float(ab @ ab)
        if denom == 0.0:
            t = np.zeros(points.shape[:-1])
        else:
            t = np.clip((points - a) @ ab / denom, 0.0, 1.0)
        best = np.minimum(best, np.linalg.norm(points - (a + t[..., None] * ab), axis=-1))
    return best


def crack_band(xy: np.ndarray, crack: CrackSpec) -> np.ndarray:
    """Return which (..., 2) surface points lie inside the crack band."""
    return distance_to_polyline(xy, np.asarray(crack.centerline)) <= crack.width_mm / 2


def _pixel_centres(geometry: GridGeometry) -> np.ndarray:
    v, u = np.mgrid[0 : geometry.height_px, 0 : geometry.width_px]
    return geometry.pixel_to_world(u, v)[..., :2]


def groove_depth(
    spec: SceneSpec,
    xy: np.ndarray,
    min_width_mm: float = 0.0,
) -> np.ndarray:
    """Analytic groove depth at surface points; grooves narrower than `min_width_mm` vanish."""
    xy = np.asarray(xy, dtype=float)
    depth = np.zeros(xy.shape[:-1])
    for crack in spec.real_cracks:
        if crack.width_mm < min_width_mm:
            continue
        depth = np.where(crack_band(xy, crack), np.maximum(depth, crack.depth_mm), depth)
    return depth


def _check_inside(spec: SceneSpec):
    width, height = spec.extent_mm
    if not (width > 0 and height > 0 and spec.mm_per_px > 0):
        raise SpecError(f"Scene extent {spec.extent_mm} and mm_per_px must be positive.")
    for crack in spec.real_cracks:
        if crack.is_fake:
            raise SpecError("Real cracks need a positive depth.")
    for crack in spec.fake_cracks:
        if not crack.is_fake:
            raise SpecError("Fake cracks must have zero depth.")
    for crack in spec.real_cracks + spec.fake_cracks:
        for x, y in crack.centerline:
            if not (0 <= x <= width and 0 <= y <= height):
                raise SpecError(
                    f"Crack point ({x}, {y}) lies outside the {width}x{height} mm extent."
                )


def generate_scene(spec: SceneSpec) -> Scene:
    """Rasterise a scene specification."""
    _check_inside(spec)
    geometry = spec.geometry
    rng = np.random.default_rng(spec.seed)
    centres = _pixel_centres(geometry)

    albedo = np.full(geometry.shape, BACKGROUND_ALBEDO)
    for crack in spec.real_cracks + spec.fake_cracks:
        albedo[crack_band(centres, crack)] = crack.albedo
    albedo += rng.uniform(-BACKGROUND_NOISE, BACKGROUND_NOISE, size=geometry.shape)
    depth = groove_depth(spec, centres)

    scene = Scene(
        spec=spec,
        albedo=AlbedoImage(geometry, np.clip(albedo, 0.0, 1.0)),
        depth=DepthMap(geometry, depth),
        gt_mask=Mask(geometry, depth > 0),
        gt_centerlines=[
            np.column_stack(
                [np.asarray(c.centerline), np.full(len(c.centerline), spec.surface_z_mm)]
            )
            for c in spec.real_cracks
        ],
    )
    log.info(
        "Generated scene seed=%d: %d real, %d fake cracks, %d ground-truth pixels",
        spec.seed,
        len(spec.real_cracks),
        len(spec.fake_cracks),
        scene.gt_mask.count,
    )
    return scene


def _polyline_gap(a: np.ndarray, b: np.ndarray) -> float:
    """Shortest distance between two polylines (vertices against segments, both ways)."""
    return float(min(distance_to_polyline(a, b).min(), distance_to_polyline(b, a).min()))


def _segments_cross(a: np.ndarray, b: np.ndarray) -> bool:
    def orient(p, q, r):
        return np.sign((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))

    for p1, p2 in zip(a[:-1], a[1:]):
        for q1, q2 in zip(b[:-1], b[1:]):
            if orient(p1, p2, q1) * orient(p1, p2, q2) < 0 and orient(q1, q2, p1) * orient(
                q1, q2, p2
            ) < 0:
                return True
    return False


def _random_walk(
    rng: np.random.Generator,
    extent: Tuple[float, float],
    margin: float,
    step_mm: Tuple[float, float],
    turn_rad: float,
) -> Optional[np.ndarray]:
    width, height = extent
    segments = int(rng.integers(3, 7))
    point = rng.uniform([margin, margin], [width - margin, height - margin])
    heading = rng.uniform(-math.pi, math.pi)
    points = [point]
    for _ in range(segments):
        heading += rng.uniform(-turn_rad, turn_rad)
        step = rng.uniform(*step_mm)
        nxt = points[-1] + step * np.array([math.cos(heading), math.sin(heading)])
        if not (margin <= nxt[0] <= width - margin and margin <= nxt[1] <= height - margin):
            return None
        points.append(nxt)
    return np.asarray(points)


def random_scene(
    seed: int,
    n_real: int,
    n_fake: int,
    extent: Tuple[float, float] = (140.0, 105.0),
    mm_per_px: float = 0.25,
    width_range_mm: Tuple[float, float] = (0.5, 3.0),
    depth_range_mm: Tuple[float, float] = (1.0, 3.0),
    min_length_mm: float = 20.0,
    clearance_mm: float = 14.0,
    step_range_mm: Tuple[float, float] = (5.0, 8.0),
    max_attempts: int = 500,
) -> SceneSpec:
    """Draw a reproducible scene specification of smooth random-walk cracks.

    Cracks keep `clearance_mm` from each other so that one sensor footprint never sees
    two cracks.

    Raises:
        SpecError: if the extent cannot hold the requested cracks.
    """
    if n_real < 0 or n_fake < 0:
        raise SpecError(f"Crack counts must be non-negative, got {n_real} and {n_fake}.")
    margin = max(width_range_mm[1], 2.0) + 2.0
    width, height = extent
    if n_real + n_fake and min(width, height) < 2 * margin + step_range_mm[1]:
        raise SpecError(f"Extent {extent} mm is too small for random cracks.")
    rng = np.random.default_rng(seed)
    placed: List[np.ndarray] = []
    cracks: List[CrackSpec] = []
    for index in range(n_real + n_fake):
        fake = index >= n_real
        for _ in range(max_attempts):
            line = _random_walk(rng, extent, margin, step_range_mm, turn_rad=0.35)
            if line is None:
                continue
            if CrackSpec(tuple(map(tuple, line)), 1.0, 0.0).length_mm < min_length_mm:
                continue
            if _segments_cross(line, line) or any(
                _polyline_gap(line, other) < clearance_mm for other in placed
            ):
                continue
            break
        else:
            raise SpecError(
                f"Could not place crack {index + 1} of {n_real + n_fake} in a {extent} mm extent."
            )
        placed.append(line)
        cracks.append(
            CrackSpec(
                centerline=tuple(map(tuple, line)),
                width_mm=float(rng.uniform(*width_range_mm)),
                depth_mm=0.0 if fake else float(rng.uniform(*depth_range_mm)),
            )
        )
    return SceneSpec(
        seed=seed,
        extent_mm=(float(width), float(height)),
        real_cracks=tuple(cracks[:n_real]),
        fake_cracks=tuple(cracks[n_real:]),
        mm_per_px=mm_per_px,
    )


def save_scene(scene: Scene, directory: PathLike):
    """Write a scene directory: spec, rasters, ground-truth mask and centrelines."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_json(directory / "spec.json", scene.spec.to_dict())
    write_raster(directory / "albedo.raw", scene.albedo)
    write_raster(directory / "depth.raw", scene.depth)
    write_mask(directory / "gt_mask.pgm", scene.gt_mask)
    write_json(directory / "gt_centerlines.json", [c.tolist() for c in scene.gt_centerlines])


def load_scene(directory: PathLike, spec: Optional[SceneSpec] = None) -> Scene:
    """Read a scene directory written by `save_scene`."""
    directory = Path(directory)
    spec = spec or SceneSpec.from_dict(read_json(directory / "spec.json"))
    return Scene(
        spec=spec,
        albedo=read_raster(directory / "albedo.raw", "albedo"),  # type: ignore[arg-type]
        depth=read_raster(directory / "depth.raw", "depth"),  # type: ignore[arg-type]
        gt_mask=read_mask(directory / "gt_mask.pgm"),
        gt_centerlines=[
            np.asarray(c, dtype=float) for c in read_json(directory / "gt_centerlines.json")
        ],
    )


def scene_corpus(
    seed: int, count: int, n_real: int, n_fake: int, **kwargs: Any
) -> List[SceneSpec]:
    """Return `count` scene specifications seeded `seed, seed + 1, ...`."""
    return [random_scene(seed + i, n_real, n_fake, **kwargs) for i in range(count)]


def polylines_length(lines: Sequence[np.ndarray]) -> float:
    """Return the summed length of polylines."""
    return float(sum(np.linalg.norm(np.diff(line, axis=0), axis=1).sum() for line in lines))
