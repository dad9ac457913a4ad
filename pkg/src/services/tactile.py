"""Camera-based optical tactile sensor simulation on synthetic scenes."""

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from services.core import (
    ContractError,
    DepthMap,
    FormatError,
    GridGeometry,
    ParameterError,
    PathLike,
    PinholeIntrinsics,
    RigidTransform,
    apply_points,
    compose,
    pixels_to_sensor,
    read_json,
    read_raster,
    sidecar_path,
    write_json,
    write_raster,
)
from services.planner import SENSOR_VIEW_MM, ContactPose, TouchPlan
from services.simscene import Scene, distance_to_polyline, groove_depth

log = logging.getLogger(__name__)

Sampling = Literal["analytic", "bilinear"]

IMAGE_PX = (640, 480)
PLANE_DEPTH_MM = 20.0
MAX_INDENT_MM = 1.0
BRIDGING_WIDTH_MM = 0.3


class PoseError(ContractError):
    """Exception due to a contact pose the scene cannot host."""


def camera_to_effector(plane_depth_mm: float) -> RigidTransform:
    """Return T_C^E for a camera looking down the effector's -z axis at the gel plane."""
    return RigidTransform(np.diag([1.0, -1.0, -1.0]), np.array([0.0, 0.0, plane_depth_mm]))


@dataclass(frozen=True)
class SensorModel:
    """Pinhole camera imaging the gel plane, plus the gel's contact behaviour.

    The camera-to-effector transform turns the camera half a turn about x, so
    its optical axis points down at the surface, and places the gel plane
    (camera depth `intrinsics.plane_depth_mm`) at the effector origin.
    """

    intrinsics: PinholeIntrinsics
    image_px: Tuple[int, int] = IMAGE_PX
    view_mm: Tuple[float, float] = SENSOR_VIEW_MM
    press_depth_mm: float = 0.2
    noise_sigma: float = 0.0
    sensor_to_effector: RigidTransform = field(
        default_factory=lambda: camera_to_effector(PLANE_DEPTH_MM)
    )
    max_indent_mm: float = MAX_INDENT_MM
    bridging_width_mm: float = BRIDGING_WIDTH_MM
    sampling: Sampling = "bilinear"

    def __post_init__(self):
        """Validate gel parameters and the view/intrinsics consistency."""
        if not self.press_depth_mm > 0:
            raise ParameterError(f"press_depth_mm must be positive, got {self.press_depth_mm}.")
        if not self.noise_sigma >= 0:
            raise ParameterError(f"noise_sigma must be non-negative, got {self.noise_sigma}.")
        if not self.max_indent_mm >= self.press_depth_mm:
            raise ParameterError("max_indent_mm must be at least press_depth_mm.")
        if self.sampling not in ("analytic", "bilinear"):
            raise ParameterError(f"Unknown sampling {self.sampling!r}.")
        k = self.intrinsics
        for focal, view, pixels, axis in (
            (k.fx_px, self.view_mm[0], self.image_px[0], "x"),
            (k.fy_px, self.view_mm[1], self.image_px[1], "y"),
        ):
            if abs(focal * view / k.plane_depth_mm - pixels) > 1e-6:
                raise ContractError(
                    f"View {view} mm along {axis} is inconsistent with f={focal} px at "
                    f"Z_c={k.plane_depth_mm} mm for a {pixels} px image."
                )
        object.__setattr__(self, "image_px", tuple(int(p) for p in self.image_px))
        object.__setattr__(self, "view_mm", tuple(float(m) for m in self.view_mm))

    @property
    def pitch_mm(self) -> float:
        """Return the gel-plane size of one sensor pixel."""
        return self.view_mm[0] / self.image_px[0]

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "intrinsics": self.intrinsics.to_dict(),
            "image_px": list(self.image_px),
            "view_mm": list(self.view_mm),
            "press_depth_mm": self.press_depth_mm,
            "noise_sigma": self.noise_sigma,
            "sensor_to_effector": self.sensor_to_effector.to_dict(),
            "max_indent_mm": self.max_indent_mm,
            "bridging_width_mm": self.bridging_width_mm,
            "sampling": self.sampling,
        }


def default_sensor(
    press_depth_mm: float = 0.2,
    noise_sigma: float = 0.0,
    sampling: Sampling = "bilinear",
    bridging_width_mm: float = BRIDGING_WIDTH_MM,
    max_indent_mm: float = MAX_INDENT_MM,
) -> SensorModel:
    """Return the 640x480 px sensor over a 14x10.5 mm view at Z_c = 20 mm."""
    width, height = IMAGE_PX
    focal = width * PLANE_DEPTH_MM / SENSOR_VIEW_MM[0]
    return SensorModel(
        intrinsics=PinholeIntrinsics(
            fx_px=focal,
            fy_px=focal,
            u0_px=width / 2,
            v0_px=height / 2,
            plane_depth_mm=PLANE_DEPTH_MM,
        ),
        press_depth_mm=press_depth_mm,
        noise_sigma=noise_sigma,
        max_indent_mm=max_indent_mm,
        bridging_width_mm=bridging_width_mm,
        sampling=sampling,
    )


def frame_geometry(sensor: SensorModel) -> GridGeometry:
    """Return the geometry of tactile rasters in the sensor (camera) frame."""
    k = sensor.intrinsics
    pitch_x = k.plane_depth_mm / k.fx_px
    if abs(pitch_x - k.plane_depth_mm / k.fy_px) > 1e-12:
        raise ContractError("Tactile rasters need square pixels (fx_px == fy_px).")
    return GridGeometry(
        width_px=sensor.image_px[0],
        height_px=sensor.image_px[1],
        mm_per_px=pitch_x,
        world_origin=(-k.u0_px * pitch_x, -k.v0_px * pitch_x, k.plane_depth_mm),
    )


def effector_to_world(pose: ContactPose) -> RigidTransform:
    """Return T_E^W: yaw about the surface normal, then the contact position."""
    return RigidTransform.rot_z(pose.yaw_rad, pose.position)


@dataclass(frozen=True, eq=False)
class TactileFrame:
    """One tactile image: gel indentation per sensor pixel, with its pose."""

    contact_depth: DepthMap
    pose: ContactPose
    effector_to_world: RigidTransform
    ok: bool
    intrinsics: Optional[PinholeIntrinsics] = None
    press_depth_mm: float = 0.2

    @property
    def geometry(self) -> GridGeometry:
        """Return the sensor-frame raster geometry."""
        return self.contact_depth.geometry

    def sensor_to_world(self, sensor: SensorModel) -> RigidTransform:
        """Return T_E^W composed with T_C^E."""
        return compose(self.effector_to_world, sensor.sensor_to_effector)


def _check_pose(scene: Scene, pose: ContactPose):
    width, height = scene.spec.extent_mm
    x, y, _ = pose.position
    if not (0.0 <= x <= width and 0.0 <= y <= height):
        raise PoseError(
            f"Contact at ({x:.3f}, {y:.3f}) mm lies outside the {width}x{height} mm scene."
        )
    if not all(math.isfinite(c) for c in (*pose.position, pose.yaw_rad)):
        raise PoseError("Contact pose has non-finite components.")


def _nearby_spec(scene: Scene, centre: np.ndarray, radius: float):
    """Drop real cracks that cannot reach the footprint around `centre`."""
    spec = scene.spec
    near = tuple(
        crack
        for crack in spec.real_cracks
        if distance_to_polyline(centre[None, :], np.asarray(crack.centerline))[0]
        <= radius + crack.width_mm / 2
    )
    return replace(spec, real_cracks=near, fake_cracks=())


def _sample_groove(scene: Scene, sensor: SensorModel, world: np.ndarray, centre: np.ndarray):
    radius = math.hypot(*sensor.view_mm) / 2 + sensor.pitch_mm
    local = _nearby_spec(scene, centre, radius)
    if sensor.sampling == "analytic":
        return groove_depth(local, world[:, :2], min_width_mm=sensor.bridging_width_mm)
    u, v = scene.geometry.world_to_pixel(world)
    depth = ndimage.map_coordinates(scene.depth.data, [v, u], order=1, mode="constant", cval=0.0)
    bridged = [c for c in local.real_cracks if c.width_mm < sensor.bridging_width_mm]
    if bridged:
        narrow = replace(local, real_cracks=tuple(bridged))
        depth = np.where(groove_depth(narrow, world[:, :2]) > 0, 0.0, depth)
    return depth


def simulate_touch(
    scene: Scene, sensor: SensorModel, pose: ContactPose, seed: Optional[int] = None
) -> TactileFrame:
    """Press the sensor onto the scene at `pose` and render the gel indentation.

    Raises:
        PoseError: if the pose is outside the scene extent.
    """
    _check_pose(scene, pose)
    width, height = sensor.image_px
    v, u = np.mgrid[0:height, 0:width]
    uv = np.column_stack([u.ravel(), v.ravel()]).astype(float)
    t_ew = effector_to_world(pose)
    chain = compose(t_ew, sensor.sensor_to_effector)
    world = apply_points(chain, pixels_to_sensor(sensor.intrinsics, uv))
    centre = np.asarray(pose.position[:2])
    groove = _sample_groove(scene, sensor, world, centre).reshape(height, width)

    # lifting the effector above the surface eats into the press depth
    standoff = max(pose.position[2] - scene.spec.surface_z_mm, 0.0)
    base = sensor.press_depth_mm - standoff
    if base > 0:
        indent = np.minimum(base + groove, sensor.max_indent_mm)
    else:
        indent = np.zeros((height, width))
    if sensor.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        indent = indent + rng.normal(0.0, sensor.noise_sigma, size=indent.shape)
    indent = np.clip(indent, 0.0, None)

    ok = bool(indent.max() >= sensor.press_depth_mm)
    log.debug(
        "Touch at (%.2f, %.2f) yaw %.3f: max indentation %.3f mm, ok=%s",
        pose.position[0],
        pose.position[1],
        pose.yaw_rad,
        indent.max(),
        ok,
    )
    return TactileFrame(
        contact_depth=DepthMap(frame_geometry(sensor), indent),
        pose=pose,
        effector_to_world=t_ew,
        ok=ok,
        intrinsics=sensor.intrinsics,
        press_depth_mm=sensor.press_depth_mm,
    )


def simulate_plan(
    scene: Scene, sensor: SensorModel, plan: TouchPlan, seed: int = 0
) -> List[TactileFrame]:
    """Execute every contact of a plan in order; touch `i` is seeded `seed + i`."""
    frames = [
        simulate_touch(scene, sensor, pose, seed=seed + i) for i, pose in enumerate(plan.contacts)
    ]
    log.info(
        "Simulated %d touches (%d without contact)", len(frames), sum(not f.ok for f in frames)
    )
    return frames


def frame_name(index: int) -> str:
    """Return the file name of the `index`-th frame in a frame directory."""
    return f"frame_{index:04d}.raw"


def write_frame(path: PathLike, frame: TactileFrame):
    """Write a frame as float32 indentation plus a JSON sidecar with its pose."""
    write_raster(path, frame.contact_depth)
    meta = read_json(sidecar_path(path))
    meta.update(
        {
            "pose": frame.pose.to_dict(),
            "effector_to_world": frame.effector_to_world.to_dict(),
            "ok": frame.ok,
            "press_depth_mm": frame.press_depth_mm,
        }
    )
    if frame.intrinsics is not None:
        meta["intrinsics"] = frame.intrinsics.to_dict()
    write_json(sidecar_path(path), meta)


def read_frame(path: PathLike) -> TactileFrame:
    """Read a frame written by `write_frame`."""
    depth = read_raster(path, "depth")
    meta = read_json(sidecar_path(path))
    try:
        return TactileFrame(
            contact_depth=depth,  # type: ignore[arg-type]
            pose=ContactPose.from_dict(meta["pose"]),
            effector_to_world=RigidTransform.from_dict(meta["effector_to_world"]),
            ok=bool(meta["ok"]),
            press_depth_mm=float(meta.get("press_depth_mm", 0.2)),
            intrinsics=(
                PinholeIntrinsics.from_dict(meta["intrinsics"]) if "intrinsics" in meta else None
            ),
        )
    except KeyError as e:
        raise FormatError(f"{path}: frame sidecar is missing {e.args[0]!r}.") from e


def save_frames(directory: PathLike, frames: Sequence[TactileFrame]):
    """Write frames as `frame_0000.raw`, `frame_0001.raw`, ... in plan order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(frames):
        write_frame(directory / frame_name(i), frame)


def load_frames(directory: PathLike) -> List[TactileFrame]:
    """Read every frame of a directory in plan order."""
    return [read_frame(p) for p in sorted(Path(directory).glob("frame_*.raw"))]
