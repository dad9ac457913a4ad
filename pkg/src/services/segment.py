"""Reference crack segmenters and ingestion of externally produced masks."""

import logging
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Sequence

import numpy as np
from scipy import ndimage

from services.core import AlbedoImage, ContractError, GridGeometry, Mask, PathLike, read_mask
from services.skeleton import EIGHT
from services.tactile import TactileFrame

log = logging.getLogger(__name__)


class NoContactError(ContractError):
    """Exception due to segmenting a frame whose contact never registered."""


@dataclass(frozen=True)
class SegmenterConfig:
    """Thresholds of the reference segmenters."""

    visual_albedo_threshold: float = 0.5
    tactile_indent_margin_mm: float = 0.1
    min_component_px: int = 8

    def __post_init__(self):
        """Validate threshold ranges."""
        if not 0.0 < self.visual_albedo_threshold < 1.0:
            raise ContractError(
                f"visual_albedo_threshold must lie in (0, 1), got {self.visual_albedo_threshold}."
            )
        if not self.tactile_indent_margin_mm > 0:
            raise ContractError(
                f"tactile_indent_margin_mm must be positive, got {self.tactile_indent_margin_mm}."
            )
        if int(self.min_component_px) != self.min_component_px or self.min_component_px < 0:
            raise ContractError(
                f"min_component_px must be a non-negative integer, got {self.min_component_px}."
            )

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation."""
        return asdict(self)


def remove_small_components(img: np.ndarray, min_px: int) -> np.ndarray:
    """Drop 8-connected components with fewer than `min_px` pixels."""
    if min_px <= 1 or not img.any():
        return img
    labels, count = ndimage.label(img, structure=EIGHT)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    keep = sizes >= min_px
    keep[0] = False
    return keep[labels]


def segment_visual(albedo: AlbedoImage, cfg: SegmenterConfig = SegmenterConfig()) -> Mask:
    """Mark dark pixels as crack; real and painted cracks look the same here."""
    img = remove_small_components(albedo.data < cfg.visual_albedo_threshold, cfg.min_component_px)
    mask = Mask(albedo.geometry, img)
    log.info("Visual segmentation: %d crack pixels", mask.count)
    return mask


def segment_tactile(frame: TactileFrame, cfg: SegmenterConfig = SegmenterConfig()) -> Mask:
    """Mark sensor pixels where the gel sank measurably deeper than the press depth.

    Raises:
        NoContactError: if the frame never reached the contact threshold.
    """
    if not frame.ok:
        raise NoContactError(
            f"Frame at ({frame.pose.position[0]:.2f}, {frame.pose.position[1]:.2f}) mm "
            "registered no contact."
        )
    threshold = frame.press_depth_mm + cfg.tactile_indent_margin_mm
    return Mask(frame.geometry, frame.contact_depth.data > threshold)


def segment_tactile_frames(
    frames: Sequence[TactileFrame], cfg: SegmenterConfig = SegmenterConfig()
) -> List[Mask]:
    """Segment a frame batch in order; frames without contact get an empty mask."""
    masks = []
    for frame in frames:
        if frame.ok:
            masks.append(segment_tactile(frame, cfg))
        else:
            masks.append(Mask.empty(frame.geometry))
    log.info("Segmented %d tactile frames", len(masks))
    return masks


def ingest_mask(path: PathLike, expected_geometry: GridGeometry) -> Mask:
    """Load an externally produced mask, checking it matches the expected geometry."""
    mask = read_mask(path)
    got, want = mask.geometry, expected_geometry
    if not got.close_to(want, tol=1e-9):
        raise ContractError(
            f"{path}: mask geometry {got.width_px}x{got.height_px} px at {got.mm_per_px} mm/px "
            f"does not match the expected {want.width_px}x{want.height_px} px at "
            f"{want.mm_per_px} mm/px."
        )
    return mask
