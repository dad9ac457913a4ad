"""Raster grids with physical geometry, rigid transforms, pinhole intrinsics and file I/O."""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Sequence, Tuple, Union

import numpy as np

log = logging.getLogger(__name__)

Vec3 = Tuple[float, float, float]
Pixel = Tuple[int, int]  # (u, v): column, row
PathLike = Union[str, Path]

_ORTHO_TOL = 1e-9
_DRIFT_TOL = 1e-12


class ContractError(Exception):
    """Exception due to inputs violating an operation's preconditions."""


class ParameterError(ContractError):
    """Exception due to an out-of-range tuning parameter."""


class DomainError(ContractError):
    """Exception due to a value outside a function's mathematical domain."""


class FormatError(Exception):
    """Exception due to a malformed file on disk."""


def scan_key(pixel: Pixel) -> Tuple[int, int]:
    """Return the row-major ordering key of a pixel."""
    return pixel[1], pixel[0]


@dataclass(frozen=True)
class GridGeometry:
    """Physical placement of a row-major raster.

    Pixel (u, v) has its centre at `world_origin + mm_per_px * (u * axis_u + v * axis_v)`.
    """

    width_px: int
    height_px: int
    mm_per_px: float
    world_origin: Vec3 = (0.0, 0.0, 0.0)
    plane_axes: Tuple[Vec3, Vec3] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))

    def __post_init__(self):
        """Validate dimensions and axes."""
        if int(self.width_px) < 1 or int(self.height_px) < 1:
            raise ContractError(
                f"Invalid raster size {self.width_px}x{self.height_px}: both must be >= 1."
            )
        if not self.mm_per_px > 0:
            raise ContractError(f"mm_per_px must be positive, got {self.mm_per_px}.")
        axes = np.asarray(self.plane_axes, dtype=float)
        if axes.shape != (2, 3) or np.asarray(self.world_origin).shape != (3,):
            raise ContractError("plane_axes must be two 3-vectors and world_origin a 3-vector.")
        if np.abs(axes @ axes.T - np.eye(2)).max() > _ORTHO_TOL:
            raise ContractError(f"plane_axes {self.plane_axes} are not orthonormal.")
        object.__setattr__(self, "width_px", int(self.width_px))
        object.__setattr__(self, "height_px", int(self.height_px))
        object.__setattr__(self, "mm_per_px", float(self.mm_per_px))
        object.__setattr__(self, "world_origin", tuple(float(x) for x in self.world_origin))
        object.__setattr__(
            self, "plane_axes", tuple(tuple(float(x) for x in a) for a in self.plane_axes)
        )

    @property
    def shape(self) -> Tuple[int, int]:
        """Return the numpy shape (rows, columns) of rasters with this geometry."""
        return self.height_px, self.width_px

    @property
    def extent_mm(self) -> Tuple[float, float]:
        """Return the physical size (width, height) covered by the raster."""
        return self.width_px * self.mm_per_px, self.height_px * self.mm_per_px

    @property
    def normal(self) -> np.ndarray:
        """Return the unit normal of the raster plane (axis_u x axis_v)."""
        return np.cross(self.plane_axes[0], self.plane_axes[1])

    def pixel_to_world(self, u, v) -> np.ndarray:
        """Map pixel coordinates (scalars or arrays) to world points, shape (..., 3)."""
        u = np.asarray(u, dtype=float)[..., None]
        v = np.asarray(v, dtype=float)[..., None]
        axis_u, axis_v = (np.asarray(a) for a in self.plane_axes)
        return np.asarray(self.world_origin) + self.mm_per_px * (u * axis_u + v * axis_v)

    def world_to_pixel(self, points) -> Tuple[np.ndarray, np.ndarray]:
        """Project world points onto the raster plane; returns fractional (u, v)."""
        offset = np.asarray(points, dtype=float) - np.asarray(self.world_origin)
        axis_u, axis_v = (np.asarray(a) for a in self.plane_axes)
        return offset @ axis_u / self.mm_per_px, offset @ axis_v / self.mm_per_px

    def close_to(self, other: "GridGeometry", tol: float = 1e-9) -> bool:
        """Check whether two geometries agree within a tolerance."""
        return (
            self.shape == other.shape
            and abs(self.mm_per_px - other.mm_per_px) <= tol
            and np.allclose(self.world_origin, other.world_origin, rtol=0, atol=tol)
            and np.allclose(self.plane_axes, other.plane_axes, rtol=0, atol=tol)
        )

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "width_px": self.width_px,
            "height_px": self.height_px,
            "mm_per_px": self.mm_per_px,
            "world_origin": list(self.world_origin),
            "plane_axes": [list(a) for a in self.plane_axes],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GridGeometry":
        """Create a GridGeometry from its JSON representation."""
        try:
            return cls(
                width_px=data["width_px"],
                height_px=data["height_px"],
                mm_per_px=data["mm_per_px"],
                world_origin=tuple(data["world_origin"]),
                plane_axes=tuple(tuple(a) for a in data["plane_axes"]),
            )
        except KeyError as e:
            raise FormatError(f"Geometry is missing the field {e.args[0]!r}.") from e


@dataclass(frozen=True, eq=False)
class Raster:
    """A row-major grid bound to a GridGeometry. Data is read-only after construction."""

    geometry: GridGeometry
    data: np.ndarray = field(repr=False)

    _dtype = np.float64

    def __post_init__(self):
        """Copy, freeze and validate the grid."""
        data = np.array(self.data, dtype=self._dtype)
        if data.shape != self.geometry.shape:
            raise ContractError(
                f"{type(self).__name__} data has shape {data.shape}, "
                f"geometry expects {self.geometry.shape}."
            )
        self._validate(data)
        data.flags.writeable = False
        object.__setattr__(self, "data", data)

    def _validate(self, data: np.ndarray):
        pass

    def __eq__(self, other) -> bool:
        """Compare geometry (within 1e-12) and data (exactly)."""
        if type(other) is not type(self):
            return NotImplemented
        return self.geometry.close_to(other.geometry, tol=1e-12) and np.array_equal(
            self.data, other.data
        )

    __hash__ = object.__hash__


@dataclass(frozen=True, eq=False)
class Mask(Raster):
    """Boolean crack mask."""

    _dtype = np.bool_

    @property
    def count(self) -> int:
        """Return the number of foreground pixels."""
        return int(self.data.sum())

    @classmethod
    def empty(cls, geometry: GridGeometry) -> "Mask":
        """Return an all-background mask."""
        return cls(geometry, np.zeros(geometry.shape, dtype=bool))


@dataclass(frozen=True, eq=False)
class DepthMap(Raster):
    """Groove depth below the nominal surface, in mm."""

    def _validate(self, data: np.ndarray):
        if not np.all(np.isfinite(data)) or np.any(data < 0):
            raise ContractError("DepthMap values must be finite and non-negative.")


@dataclass(frozen=True, eq=False)
class AlbedoImage(Raster):
    """Surface reflectance in [0, 1]."""

    def _validate(self, data: np.ndarray):
        if not np.all(np.isfinite(data)) or np.any(data < 0) or np.any(data > 1):
            raise ContractError("AlbedoImage values must lie in [0, 1].")


def _gram_schmidt(rotation: np.ndarray) -> np.ndarray:
    x = rotation[:, 0] / np.linalg.norm(rotation[:, 0])
    y = rotation[:, 1] - (x @ rotation[:, 1]) * x
    y = y / np.linalg.norm(y)
    return np.column_stack([x, y, np.cross(x, y)])


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion p -> rotation @ p + translation (mm)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        """Validate the rotation and freeze both arrays."""
        rotation = np.array(self.rotation, dtype=float)
        translation = np.array(self.translation, dtype=float).reshape(-1)
        if rotation.shape != (3, 3) or translation.shape != (3,):
            raise ContractError("RigidTransform needs a 3x3 rotation and a 3-vector translation.")
        if not np.all(np.isfinite(rotation)) or not np.all(np.isfinite(translation)):
            raise ContractError("RigidTransform entries must be finite.")
        if (
            np.abs(rotation.T @ rotation - np.eye(3)).max() > _ORTHO_TOL
            or abs(np.linalg.det(rotation) - 1.0) > _ORTHO_TOL
        ):
            raise ContractError("RigidTransform rotation is not a proper orthonormal matrix.")
        rotation.flags.writeable = False
        translation.flags.writeable = False
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "RigidTransform":
        """Return the identity transform."""
        return cls()

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> "RigidTransform":
        """Return a pure translation."""
        return cls(np.eye(3), np.array([x, y, z], dtype=float))

    @classmethod
    def rot_z(cls, angle_rad: float, translation: Sequence[float] = (0, 0, 0)) -> "RigidTransform":
        """Return a rotation about the z axis, optionally followed by a translation."""
        c, s = math.cos(angle_rad), math.sin(angle_rad)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]), translation)

    @classmethod
    def from_matrix(cls, matrix) -> "RigidTransform":
        """Create a transform from a 4x4 homogeneous matrix."""
        matrix = np.asarray(matrix, dtype=float)
        if matrix.shape != (4, 4) or not np.allclose(matrix[3], [0, 0, 0, 1]):
            raise ContractError("Expected a 4x4 homogeneous matrix with last row [0, 0, 0, 1].")
        return cls(matrix[:3, :3], matrix[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        """Return the 4x4 homogeneous matrix."""
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation (row-major rotation)."""
        return {
            "rotation": self.rotation.reshape(-1).tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RigidTransform":
        """Create a transform from its JSON representation."""
        try:
            rotation = np.asarray(data["rotation"], dtype=float).reshape(3, 3)
            return cls(rotation, np.asarray(data["translation"], dtype=float))
        except KeyError as e:
            raise FormatError(f"Transform is missing the field {e.args[0]!r}.") from e
        except ValueError as e:
            raise FormatError(f"Transform has malformed 'rotation': {e}") from e


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Return the transform applying `b` first, then `a`."""
    rotation = a.rotation @ b.rotation
    if np.abs(rotation.T @ rotation - np.eye(3)).max() > _DRIFT_TOL:
        rotation = _gram_schmidt(rotation)
    return RigidTransform(rotation, a.rotation @ b.translation + a.translation)


def inverse(t: RigidTransform) -> RigidTransform:
    """Return the inverse transform."""
    return RigidTransform(t.rotation.T, -t.rotation.T @ t.translation)


def apply(t: RigidTransform, p) -> np.ndarray:
    """Apply a transform to a single 3-vector."""
    return t.rotation @ np.asarray(p, dtype=float) + t.translation


def apply_points(t: RigidTransform, points) -> np.ndarray:
    """Apply a transform to an (N, 3) array of points."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    return points @ t.rotation.T + t.translation


@dataclass(frozen=True)
class PinholeIntrinsics:
    """Pinhole model of the tactile sensor's internal camera, imaging a flat gel plane."""

    fx_px: float
    fy_px: float
    u0_px: float
    v0_px: float
    plane_depth_mm: float

    def __post_init__(self):
        """Validate focal lengths and plane depth."""
        for name in ("fx_px", "fy_px", "plane_depth_mm"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be positive, got {getattr(self, name)}.")

    @property
    def matrix(self) -> np.ndarray:
        """Return the 3x4 intrinsic matrix K."""
        return np.array(
            [
                [self.fx_px, 0.0, self.u0_px, 0.0],
                [0.0, self.fy_px, self.v0_px, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ]
        )

    def to_dict(self) -> Dict[str, float]:
        """Return a JSON-ready representation."""
        return {
            "fx_px": self.fx_px,
            "fy_px": self.fy_px,
            "u0_px": self.u0_px,
            "v0_px": self.v0_px,
            "plane_depth_mm": self.plane_depth_mm,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PinholeIntrinsics":
        """Create intrinsics from their JSON representation."""
        try:
            return cls(**{k: float(data[k]) for k in cls.__dataclass_fields__})
        except KeyError as e:
            raise FormatError(f"Intrinsics are missing the field {e.args[0]!r}.") from e


def pixel_to_sensor(k: PinholeIntrinsics, px: Tuple[float, float]) -> np.ndarray:
    """Back-project a pixel onto the gel plane Z = Z_c in sensor coordinates."""
    return pixels_to_sensor(k, np.asarray([px], dtype=float))[0]


def pixels_to_sensor(k: PinholeIntrinsics, uv) -> np.ndarray:
    """Vectorised `pixel_to_sensor` for an (N, 2) array of (u, v)."""
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    z = k.plane_depth_mm
    out = np.empty((uv.shape[0], 3))
    out[:, 0] = (uv[:, 0] - k.u0_px) * z / k.fx_px
    out[:, 1] = (uv[:, 1] - k.v0_px) * z / k.fy_px
    out[:, 2] = z
    return out


def sensor_to_pixel(k: PinholeIntrinsics, p) -> Tuple[float, float]:
    """Project a point in sensor coordinates to pixel coordinates."""
    x, y, z = (float(c) for c in p)
    if not z > 0:
        raise DomainError(f"Cannot project a point with non-positive depth z={z}.")
    return k.fx_px * x / z + k.u0_px, k.fy_px * y / z + k.v0_px


def sidecar_path(path: PathLike) -> Path:
    """Return the JSON sidecar path sharing the stem of `path`."""
    return Path(path).with_suffix(".json")


def write_json(path: PathLike, payload: Any):
    """Write JSON with stable key order and a trailing newline."""
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path: PathLike) -> Any:
    """Read a JSON file, turning decoding failures into FormatError."""
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path} is not valid JSON: {e}") from e


def _read_sidecar(path: PathLike, kind: str) -> Dict[str, Any]:
    sidecar = sidecar_path(path)
    if not sidecar.exists():
        raise FormatError(f"Missing sidecar {sidecar} for {path}.")
    meta = read_json(sidecar)
    if not isinstance(meta, dict) or "geometry" not in meta:
        raise FormatError(f"Sidecar {sidecar} has no 'geometry' field.")
    if meta.get("kind") != kind:
        raise FormatError(f"Sidecar {sidecar} has kind {meta.get('kind')!r}, expected {kind!r}.")
    return meta


def _pgm_tokens(blob: bytes, count: int) -> Tuple[list, int]:
    """Read `count` whitespace-separated header tokens, skipping '#' comments."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("PGM header is truncated.")
        tokens.append(blob[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_mask(path: PathLike) -> Mask:
    """Read a binary P5 PGM mask (maxval 255, values {0, 255}) and its geometry sidecar."""
    blob = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(blob, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: magic is {tokens[0]!r}, expected b'P5'.")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise FormatError(f"{path}: non-integer width/height/maxval in header.") from e
    if maxval != 255:
        raise FormatError(f"{path}: maxval is {maxval}, expected 255.")
    payload = np.frombuffer(blob[offset:], dtype=np.uint8)
    if payload.size != width * height:
        raise FormatError(
            f"{path}: pixel payload has {payload.size} bytes, expected {width * height}."
        )
    if not np.all((payload == 0) | (payload == 255)):
        raise FormatError(f"{path}: pixel values must be 0 or 255.")
    geometry = GridGeometry.from_dict(_read_sidecar(path, "mask")["geometry"])
    if (geometry.width_px, geometry.height_px) != (width, height):
        raise FormatError(
            f"{path}: sidecar width_px/height_px {geometry.width_px}x{geometry.height_px} "
            f"disagree with the PGM header {width}x{height}."
        )
    return Mask(geometry, payload.reshape(height, width) == 255)


def write_mask(path: PathLike, mask: Mask):
    """Write a mask as binary P5 PGM plus geometry sidecar."""
    path = Path(path)
    header = f"P5\n{mask.geometry.width_px} {mask.geometry.height_px}\n255\n".encode()
    path.write_bytes(header + (mask.data.astype(np.uint8) * 255).tobytes())
    write_json(sidecar_path(path), {"kind": "mask", "geometry": mask.geometry.to_dict()})
    log.debug("Wrote mask %s (%d foreground pixels)", path, mask.count)


def mask_io(path: PathLike, mode: Literal["r", "w"], mask: Optional[Mask] = None):
    """Read (`mode='r'`) or write (`mode='w'`) a mask file."""
    if mode == "r":
        return read_mask(path)
    if mode == "w":
        if mask is None:
            raise ContractError("mask_io in write mode needs a mask.")
        write_mask(path, mask)
        return None
    raise ContractError(f"Unknown mask_io mode {mode!r}; use 'r' or 'w'.")


_RASTER_KINDS = {"depth": DepthMap, "albedo": AlbedoImage}


def write_raster(path: PathLike, raster: Union[DepthMap, AlbedoImage]):
    """Write a DepthMap/AlbedoImage as little-endian float32 plus geometry sidecar."""
    kind = "depth" if isinstance(raster, DepthMap) else "albedo"
    path = Path(path)
    path.write_bytes(raster.data.astype("<f4").tobytes())
    write_json(
        sidecar_path(path), {"kind": kind, "dtype": "<f4", "geometry": raster.geometry.to_dict()}
    )


def read_raster(path: PathLike, kind: Literal["depth", "albedo"]) -> Union[DepthMap, AlbedoImage]:
    """Read a float32 raster written by `write_raster`."""
    meta = _read_sidecar(path, kind)
    geometry = GridGeometry.from_dict(meta["geometry"])
    if meta.get("dtype") != "<f4":
        raise FormatError(f"{path}: dtype is {meta.get('dtype')!r}, expected '<f4'.")
    values = np.frombuffer(Path(path).read_bytes(), dtype="<f4")
    if values.size != geometry.width_px * geometry.height_px:
        raise FormatError(
            f"{path}: raster has {values.size} values, geometry expects "
            f"{geometry.width_px * geometry.height_px}."
        )
    return _RASTER_KINDS[kind](geometry, values.reshape(geometry.shape).astype(np.float64))
