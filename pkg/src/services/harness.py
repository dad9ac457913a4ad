"""Detection and reconstruction metrics, the four-method comparison and its report."""

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from services.config import PipelineConfig
from services.core import (
    ContractError,
    GridGeometry,
    Mask,
    ParameterError,
    PathLike,
    sidecar_path,
    write_json,
)
from services.fusion import (
    CrackReconstruction,
    assemble_reconstruction,
    refine_visual_mask,
    verify_edges,
)
from services.planner import build_touch_plan, plan_passive_raster
from services.segment import segment_tactile_frames, segment_visual
from services.simscene import Scene, distance_to_polyline, generate_scene, random_scene
from services.skeleton import build_graph
from services.tactile import simulate_plan

log = logging.getLogger(__name__)

METHODS = ("vision", "aligned-vision", "passive-tactile", "active-tactile")
DISTANCE_REFERENCES = ("centerline", "band")
REPORT_HEADER = (
    "scene",
    "seed",
    "method",
    "iou",
    "pixAcc",
    "tp",
    "meanD",
    "sd",
    "maxD",
    "touches",
    "time_model_s",
)


class EmptyReconstructionError(Exception):
    """Exception due to measuring a reconstruction without points."""


@dataclass(frozen=True)
class DetectionMetrics:
    """Pixel-level agreement between a predicted and a ground-truth crack mask."""

    iou: float
    pix_acc: float
    tp_rate: float

    def __post_init__(self):
        """Check every ratio lies in [0, 1]."""
        for name in ("iou", "pix_acc", "tp_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1], got {getattr(self, name)}.")

    def to_dict(self) -> Dict[str, float]:
        """Return a JSON-ready representation."""
        return {"iou": self.iou, "pixAcc": self.pix_acc, "tp": self.tp_rate}


@dataclass(frozen=True)
class ReconstructionMetrics:
    """Shortest-distance statistics of reconstructed points against true centrelines."""

    mean_d_mm: float
    sd_mm: float
    max_d_mm: float
    touches: int
    time_model_s: float

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation."""
        return {
            "meanD": self.mean_d_mm,
            "sd": self.sd_mm,
            "maxD": self.max_d_mm,
            "touches": self.touches,
            "time_model_s": self.time_model_s,
        }


@dataclass
class MethodResult:
    """Outcome of one method on one scene."""

    scene_index: int
    seed: int
    method: str
    detection: DetectionMetrics
    reconstruction: Optional[ReconstructionMetrics]
    touches: int
    time_model_s: float
    artifacts: Dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def failed(self) -> bool:
        """Return True when the method reconstructed nothing."""
        return self.reconstruction is None

    def row(self) -> List[str]:
        """Return the CSV report row."""
        recon = self.reconstruction
        stats = (
            [f"{recon.mean_d_mm:.6f}", f"{recon.sd_mm:.6f}", f"{recon.max_d_mm:.6f}"]
            if recon
            else ["", "", ""]
        )
        return [
            str(self.scene_index),
            str(self.seed),
            self.method,
            f"{self.detection.iou:.6f}",
            f"{self.detection.pix_acc:.6f}",
            f"{self.detection.tp_rate:.6f}",
            *stats,
            str(self.touches),
            f"{self.time_model_s:.3f}",
        ]

    def to_dict(self) -> Dict[str, Any]:
        """Return a JSON-ready representation without artifacts."""
        return {
            "scene": self.scene_index,
            "seed": self.seed,
            "method": self.method,
            "detection": self.detection.to_dict(),
            "reconstruction": self.reconstruction.to_dict() if self.reconstruction else None,
            "touches": self.touches,
            "time_model_s": self.time_model_s,
        }


def detection_metrics(pred: Mask, gt: Mask) -> DetectionMetrics:
    """Return IoU, pixel accuracy and true-positive rate (recall) of a prediction."""
    if not pred.geometry.close_to(gt.geometry):
        raise ContractError(
            f"Prediction {pred.geometry.width_px}x{pred.geometry.height_px} and ground truth "
            f"{gt.geometry.width_px}x{gt.geometry.height_px} differ in geometry."
        )
    p, g = pred.data, gt.data
    inter = int(np.logical_and(p, g).sum())
    union = int(np.logical_or(p, g).sum())
    positives = int(g.sum())
    return DetectionMetrics(
        iou=inter / union if union else 1.0,
        pix_acc=float((p == g).mean()),
        tp_rate=inter / positives if positives else 1.0,
    )


def shortest_distances(points: np.ndarray, centerlines: Sequence[np.ndarray]) -> np.ndarray:
    """Return each point's exact distance to the nearest ground-truth polyline."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if not centerlines:
        raise ContractError("No ground-truth centrelines to measure against.")
    return np.min([distance_to_polyline(points, line) for line in centerlines], axis=0)


def band_distances(
    points: np.ndarray, centerlines: Sequence[np.ndarray], half_widths: Sequence[float]
) -> np.ndarray:
    """Return each point's distance to the nearest crack band on the surface plane.

    A band is its centreline widened by the half width within the plane the centreline
    lies in; points inside it are at distance 0.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if not centerlines:
        raise ContractError("No ground-truth centrelines to measure against.")
    if len(half_widths) != len(centerlines):
        raise ContractError(
            f"Got {len(half_widths)} half widths for {len(centerlines)} centrelines."
        )
    distances = []
    for line, half_width in zip(centerlines, half_widths):
        line = np.asarray(line, dtype=float)
        planar = distance_to_polyline(points[:, :2], line[:, :2])
        distances.append(np.hypot(np.maximum(planar - half_width, 0.0), points[:, 2] - line[0, 2]))
    return np.min(distances, axis=0)


def reconstruction_metrics(
    recon: CrackReconstruction,
    gt_centerlines: Sequence[np.ndarray],
    touches: int,
    per_touch_s: float,
    half_widths: Optional[Sequence[float]] = None,
) -> ReconstructionMetrics:
    """Score a reconstruction against the true centrelines, or their bands if widths are given.

    Raises:
        EmptyReconstructionError: if the reconstruction holds no points.
    """
    if recon.is_empty:
        raise EmptyReconstructionError("Reconstruction is empty; distances are undefined.")
    if half_widths is None:
        d = shortest_distances(recon.points, gt_centerlines)
    else:
        d = band_distances(recon.points, gt_centerlines, half_widths)
    return ReconstructionMetrics(
        mean_d_mm=float(d.mean()),
        sd_mm=float(d.std()),
        max_d_mm=float(d.max()),
        touches=touches,
        time_model_s=touches * per_touch_s,
    )


def rasterize_points(points: np.ndarray, geometry: GridGeometry) -> Mask:
    """Mark the raster pixels that contain at least one world point."""
    img = np.zeros(geometry.shape, dtype=bool)
    if len(points):
        u, v = geometry.world_to_pixel(points)
        u, v = np.rint(u).astype(int), np.rint(v).astype(int)
        inside = (u >= 0) & (u < geometry.width_px) & (v >= 0) & (v < geometry.height_px)
        img[v[inside], u[inside]] = True
    return Mask(geometry, img)


def _lift_visual(scene: Scene, mask: Mask, sigma_mm: float, seed: int, aligned: bool):
    v, u = np.nonzero(mask.data)
    points = scene.geometry.pixel_to_world(u, v).reshape(-1, 3)
    if not aligned:
        rng = np.random.default_rng(seed)
        measured = scene.depth.data[v, u] + rng.normal(0.0, sigma_mm, size=len(u))
        points[:, 2] = scene.spec.surface_z_mm - measured
    return CrackReconstruction(points=points, source_frame=np.full(len(points), -1))


def run_active_pipeline(scene: Scene, config: PipelineConfig, seed: int) -> Dict[str, Any]:
    """Run the visually guided tactile pipeline and return every intermediate artifact."""
    sensor = config.sensor.build()
    visual = segment_visual(scene.albedo, config.segmenter)
    graph = build_graph(visual)
    plan = build_touch_plan(
        graph, scene.geometry, config.planner.spacing_mm, config.planner.min_spur_mm
    )
    frames = simulate_plan(scene, sensor, plan, seed=seed)
    masks = segment_tactile_frames(frames, config.segmenter)
    verdicts = verify_edges(
        plan,
        masks,
        config.fusion.area_threshold_frac,
        frames_ok=[f.ok for f in frames],
        n_edges=len(graph.edges),
    )
    refined = refine_visual_mask(visual, graph, verdicts)
    recon = assemble_reconstruction(
        frames, masks, verdicts, plan, sensor, config.fusion.stride, config.fusion.boundary_only
    )
    return {
        "visual_mask": visual,
        "graph": graph,
        "plan": plan,
        "frames": frames,
        "tactile_masks": masks,
        "verdicts": verdicts,
        "refined_mask": refined,
        "reconstruction": recon,
    }


def run_passive_pipeline(scene: Scene, config: PipelineConfig, seed: int) -> Dict[str, Any]:
    """Raster-scan the whole surface and reconstruct every contact frame."""
    sensor = config.sensor.build()
    plan = plan_passive_raster(scene.geometry, sensor.view_mm, config.planner.passive_overlap)
    frames = simulate_plan(scene, sensor, plan, seed=seed)
    masks = segment_tactile_frames(frames, config.segmenter)
    recon = assemble_reconstruction(
        frames, masks, None, plan, sensor, config.fusion.stride, config.fusion.boundary_only
    )
    return {
        "plan": plan,
        "frames": frames,
        "tactile_masks": masks,
        "reconstruction": recon,
        "coverage_mask": rasterize_points(recon.points, scene.geometry),
    }


def run_method(
    scene: Scene,
    method: str,
    config: Optional[PipelineConfig] = None,
    seed: int = 0,
    scene_index: int = 0,
) -> MethodResult:
    """Run one of `METHODS` on a scene and score it.

    An empty reconstruction is reported as a missing reconstruction score, never as zero
    distance. Distances go to the true centrelines, or to the crack bands when
    `harness.distance_reference` is "band".

    Raises:
        ParameterError: if the method or the distance reference is unknown.
    """
    if method not in METHODS:
        raise ParameterError(f"Unknown method {method!r}; expected one of {', '.join(METHODS)}.")
    config = config or PipelineConfig()
    harness = config.harness
    if harness.distance_reference not in DISTANCE_REFERENCES:
        raise ParameterError(
            f"Unknown distance reference {harness.distance_reference!r}; expected one of "
            f"{', '.join(DISTANCE_REFERENCES)}."
        )
    if method in ("vision", "aligned-vision"):
        visual = segment_visual(scene.albedo, config.segmenter)
        recon = _lift_visual(
            scene, visual, harness.depth_noise_sigma_mm, seed, aligned=method == "aligned-vision"
        )
        artifacts: Dict[str, Any] = {"visual_mask": visual, "reconstruction": recon}
        prediction, touches, time_s = visual, 0, harness.vision_time_s
    elif method == "passive-tactile":
        artifacts = run_passive_pipeline(scene, config, seed)
        prediction = artifacts["coverage_mask"]
        touches = len(artifacts["plan"])
        time_s = touches * harness.per_touch_s
    else:
        artifacts = run_active_pipeline(scene, config, seed)
        prediction = artifacts["refined_mask"]
        touches = len(artifacts["plan"])
        time_s = touches * harness.per_touch_s

    try:
        reconstruction = replace(
            reconstruction_metrics(
                artifacts["reconstruction"],
                scene.gt_centerlines,
                touches,
                harness.per_touch_s,
                half_widths=(
                    [c.width_mm / 2 for c in scene.spec.real_cracks]
                    if harness.distance_reference == "band"
                    else None
                ),
            ),
            time_model_s=time_s,
        )
    except EmptyReconstructionError:
        log.warning("Scene %d, %s: empty reconstruction", scene_index, method)
        reconstruction = None
    result = MethodResult(
        scene_index=scene_index,
        seed=seed,
        method=method,
        detection=detection_metrics(prediction, scene.gt_mask),
        reconstruction=reconstruction,
        touches=touches,
        time_model_s=time_s,
        artifacts=artifacts,
    )
    log.info(
        "Scene %d, %s: IoU %.3f, meanD %s, %d touches",
        scene_index,
        method,
        result.detection.iou,
        f"{reconstruction.mean_d_mm:.3f}" if reconstruction else "n/a",
        touches,
    )
    return result


def build_corpus(config: Optional[PipelineConfig] = None, seed: int = 0) -> List[Scene]:
    """Generate the evaluation corpus: scene `i` is seeded `seed + i`."""
    corpus = (config or PipelineConfig()).corpus
    return [
        generate_scene(
            random_scene(
                seed + i,
                corpus.n_real,
                corpus.n_fake,
                extent=corpus.extent_mm,
                mm_per_px=corpus.mm_per_px,
                min_length_mm=corpus.min_length_mm,
                clearance_mm=corpus.clearance_mm,
            )
        )
        for i in range(corpus.scenes)
    ]


def evaluate_corpus(
    scenes: Sequence[Scene],
    config: Optional[PipelineConfig] = None,
    methods: Sequence[str] = METHODS,
    on_result: Optional[Callable[[MethodResult], None]] = None,
) -> List[MethodResult]:
    """Run every method on every scene, ordered by scene index then method name."""
    results = []
    for index, scene in enumerate(scenes):
        for method in sorted(methods):
            result = run_method(scene, method, config, seed=scene.spec.seed, scene_index=index)
            results.append(result)
            if on_result:
                on_result(result)
    return results


def summarize(results: Sequence[MethodResult]) -> Dict[str, Dict[str, Any]]:
    """Average every metric per method; failed reconstructions are counted, not averaged."""
    summary: Dict[str, Dict[str, Any]] = {}
    for method in sorted({r.method for r in results}):
        group = [r for r in results if r.method == method]
        scored = [r.reconstruction for r in group if r.reconstruction]
        summary[method] = {
            "scenes": len(group),
            "iou": float(np.mean([r.detection.iou for r in group])),
            "pixAcc": float(np.mean([r.detection.pix_acc for r in group])),
            "tp": float(np.mean([r.detection.tp_rate for r in group])),
            "meanD": float(np.mean([m.mean_d_mm for m in scored])) if scored else None,
            "sd": float(np.mean([m.sd_mm for m in scored])) if scored else None,
            "maxD": float(np.mean([m.max_d_mm for m in scored])) if scored else None,
            "touches": float(np.mean([r.touches for r in group])),
            "time_model_s": float(np.mean([r.time_model_s for r in group])),
            "empty_reconstructions": len(group) - len(scored),
        }
    return summary


def emit_report(
    results: Sequence[MethodResult],
    path: PathLike,
    config: Optional[PipelineConfig] = None,
):
    """Write the CSV report and its JSON summary (same stem, `.json`)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(results, key=lambda r: (r.scene_index, r.method))
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for result in ordered:
            writer.writerow(result.row())
    write_json(
        sidecar_path(path),
        {
            "config": (config or PipelineConfig()).to_dict(),
            "seeds": sorted({r.seed for r in ordered}),
            "summary": summarize(ordered),
            "results": [r.to_dict() for r in ordered],
        },
    )
    log.info("Wrote report for %d results to %s", len(ordered), path)
