"""Pipeline configuration loaded from YAML or JSON files."""

import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml

from services.core import ContractError, FormatError, PathLike
from services.fusion import AREA_THRESHOLD_FRAC, RECONSTRUCTION_STRIDE
from services.planner import DEFAULT_SPACING_MM
from services.segment import SegmenterConfig
from services.tactile import BRIDGING_WIDTH_MM, MAX_INDENT_MM, SensorModel, default_sensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlannerConfig:
    """Touch planning parameters."""

    spacing_mm: float = DEFAULT_SPACING_MM
    min_spur_mm: float = 0.0
    passive_overlap: float = 0.0


@dataclass(frozen=True)
class SensorConfig:
    """Gel and sampling parameters of the simulated tactile sensor."""

    press_depth_mm: float = 0.2
    noise_sigma: float = 0.0
    bridging_width_mm: float = BRIDGING_WIDTH_MM
    max_indent_mm: float = MAX_INDENT_MM
    sampling: str = "bilinear"

    def build(self) -> SensorModel:
        """Return the sensor model these settings describe."""
        return default_sensor(
            press_depth_mm=self.press_depth_mm,
            noise_sigma=self.noise_sigma,
            sampling=self.sampling,  # type: ignore[arg-type]
            bridging_width_mm=self.bridging_width_mm,
            max_indent_mm=self.max_indent_mm,
        )


@dataclass(frozen=True)
class FusionConfig:
    """Verification and reconstruction parameters."""

    area_threshold_frac: float = AREA_THRESHOLD_FRAC
    stride: int = RECONSTRUCTION_STRIDE
    boundary_only: bool = False


@dataclass(frozen=True)
class HarnessConfig:
    """Baseline models of the evaluation harness."""

    depth_noise_sigma_mm: float = 0.5
    per_touch_s: float = 8.0
    vision_time_s: float = 1.0
    distance_reference: str = "centerline"


@dataclass(frozen=True)
class CorpusConfig:
    """Shape of the generated evaluation corpus."""

    scenes: int = 5
    n_real: int = 2
    n_fake: int = 1
    extent_mm: Tuple[float, float] = (140.0, 105.0)
    mm_per_px: float = 0.25
    min_length_mm: float = 20.0
    clearance_mm: float = 14.0


_SECTIONS = {
    "segmenter": SegmenterConfig,
    "planner": PlannerConfig,
    "sensor": SensorConfig,
    "fusion": FusionConfig,
    "harness": HarnessConfig,
    "corpus": CorpusConfig,
}


@dataclass(frozen=True)
class PipelineConfig:
    """All tunables of the pipeline, one section per stage."""

    segmenter: SegmenterConfig = field(default_factory=SegmenterConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    harness: HarnessConfig = field(default_factory=HarnessConfig)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation."""
        data = asdict(self)
        data["corpus"]["extent_mm"] = list(self.corpus.extent_mm)
        return data

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "PipelineConfig":
        """Build a configuration, rejecting unknown sections and keys."""
        data = data or {}
        if not isinstance(data, dict):
            raise FormatError("The configuration must be a mapping of sections.")
        sections = {}
        for name, values in data.items():
            if name not in _SECTIONS:
                raise ContractError(
                    f"Unknown configuration section {name!r}; expected one of {sorted(_SECTIONS)}."
                )
            if values is not None and not isinstance(values, dict):
                raise FormatError(f"Configuration section {name!r} must be a mapping.")
            section = _SECTIONS[name]
            known = {f.name for f in fields(section)}
            for key in values or {}:
                if key not in known:
                    raise ContractError(f"Unknown key {name}.{key} in configuration.")
            values = dict(values or {})
            if "extent_mm" in values:
                values["extent_mm"] = tuple(values["extent_mm"])
            sections[name] = section(**values)
        return cls(**sections)


def load_config(path: Optional[PathLike] = None) -> PipelineConfig:
    """Read a YAML (or JSON) configuration file; no path means the defaults.

    Raises:
        OSError: if the file cannot be read.
        FormatError: if the file is not valid YAML.
        ContractError: on unknown sections or keys.
    """
    if path is None:
        return PipelineConfig()
    with Path(path).open() as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise FormatError(f"{path} is not valid YAML/JSON: {e}") from e
    config = PipelineConfig.from_dict(data)
    log.info("Loaded configuration from %s", path)
    return config
