import csv
from dataclasses import replace
from pathlib import Path
from typing import List, Sequence

import numpy as np
import pytest

import services.fusion as fusion
import services.tactile as tactile
import tests.constants as constants
from services.core import ContractError, DepthMap, GridGeometry, Mask, RigidTransform, read_json
from services.planner import ContactPose, TouchPlan, build_touch_plan
from services.segment import segment_tactile_frames
from services.simscene import distance_to_polyline
from services.skeleton import build_graph

FRAME_GRID = GridGeometry(100, 10, 1.0)
SENSOR = tactile.default_sensor()


def _plan(edges: Sequence[int]) -> TouchPlan:
    contacts = [ContactPose((0.0, 0.0, 0.0), 0.0, edge, (0, 0)) for edge in edges]
    index = {}
    for i, contact in enumerate(contacts):
        index.setdefault(contact.source_edge, []).append(i)
    return TouchPlan(contacts, 11.2, index)


def _masks(fractions: Sequence[float]) -> List[Mask]:
    masks = []
    for fraction in fractions:
        img = np.zeros(FRAME_GRID.shape, dtype=bool)
        img.ravel()[: round(fraction * img.size)] = True
        masks.append(Mask(FRAME_GRID, img))
    return masks


@pytest.mark.parametrize(
    "fractions, low, rejected",
    [
        ([0.001, 0.004, 0.010], 3, True),
        ([0.5, 0.6, 0.004], 1, False),
        ([0.0, 0.0], 2, False),
        ([0.0, 0.0, 0.0, 0.5], 3, True),
        ([0.02, 0.02, 0.02], 0, False),
    ],
)
def test_verify_edges(fractions: List[float], low: int, rejected: bool):
    verdicts = fusion.verify_edges(_plan([0] * len(fractions)), _masks(fractions))
    assert len(verdicts) == 1
    verdict = verdicts[0]
    assert (verdict.touches, verdict.low_area_touches, verdict.rejected) == (
        len(fractions),
        low,
        rejected,
    )


def test_verify_edges_counts_only_contacts():
    fractions = [0.0, 0.0, 0.0]
    verdicts = fusion.verify_edges(
        _plan([0, 0, 0]), _masks(fractions), frames_ok=[True, False, True]
    )
    assert (verdicts[0].touches, verdicts[0].low_area_touches) == (2, 2)
    assert not verdicts[0].rejected


def test_verify_edges_reports_untouched_edges():
    verdicts = fusion.verify_edges(_plan([1, 1]), _masks([0.5, 0.5]), n_edges=3)
    assert [v.edge_index for v in verdicts] == [0, 1, 2]
    assert [v.touches for v in verdicts] == [0, 2, 0]
    assert not any(v.rejected for v in verdicts)


def test_verify_edges_rejects_misaligned_inputs():
    with pytest.raises(ContractError):
        fusion.verify_edges(_plan([0, 0]), _masks([0.5]))
    with pytest.raises(ContractError):
        fusion.verify_edges(_plan([0]), _masks([0.5]), frames_ok=[True, True])
    with pytest.raises(ContractError):
        fusion.verify_edges(_plan([0]), _masks([0.5]), area_threshold_frac=0.0)


def test_edge_verdict_invariants():
    with pytest.raises(ContractError):
        fusion.EdgeVerdict(0, touches=2, low_area_touches=3, rejected=False)
    with pytest.raises(ContractError):
        fusion.EdgeVerdict(0, touches=2, low_area_touches=2, rejected=True)
    verdict = fusion.EdgeVerdict(4, 3, 3, True)
    assert fusion.EdgeVerdict.from_dict(verdict.to_dict()) == verdict
    assert verdict.to_dict() == {"edge": 4, "touches": 3, "low_area_touches": 3, "rejected": True}


def _two_lines() -> Mask:
    return constants.mask_of([(u, 5) for u in range(3, 28)] + [(u, 20) for u in range(3, 28)])


def test_refine_keeps_mask_without_rejections():
    mask = _two_lines()
    graph = build_graph(mask)
    verdicts = [fusion.EdgeVerdict(i, 3, 0, False) for i in range(len(graph.edges))]
    assert fusion.refine_visual_mask(mask, graph, verdicts) == mask


def test_refine_removes_rejected_component():
    mask = _two_lines()
    graph = build_graph(mask)
    # edges are ordered row-major by their first pixel: the lower line is edge 1
    verdicts = [fusion.EdgeVerdict(0, 3, 0, False), fusion.EdgeVerdict(1, 3, 3, True)]
    refined = fusion.refine_visual_mask(mask, graph, verdicts)
    assert refined.data[5, 3:28].all()
    assert not refined.data[20].any()
    assert refined.count == 25


def test_refine_keeps_component_with_any_kept_edge():
    graph = build_graph(constants.T_MASK)
    verdicts = [
        fusion.EdgeVerdict(0, 3, 3, True),
        fusion.EdgeVerdict(1, 2, 2, False),
        fusion.EdgeVerdict(2, 0, 0, False),
    ]
    assert fusion.refine_visual_mask(constants.T_MASK, graph, verdicts) == constants.T_MASK

    verdicts[2] = fusion.EdgeVerdict(2, 3, 3, True)
    assert fusion.refine_visual_mask(constants.T_MASK, graph, verdicts) == constants.T_MASK

    verdicts[1] = fusion.EdgeVerdict(1, 4, 3, True)
    assert fusion.refine_visual_mask(constants.T_MASK, graph, verdicts).count == 0


def test_refine_rejects_inconsistent_inputs():
    graph = build_graph(constants.T_MASK)
    with pytest.raises(ContractError, match="No verdict"):
        fusion.refine_visual_mask(constants.T_MASK, graph, [fusion.EdgeVerdict(0, 0, 0, False)])
    other = Mask.empty(GridGeometry(10, 10, 0.25))
    with pytest.raises(ContractError):
        fusion.refine_visual_mask(other, graph, [])


def _identity_frame(sensor: tactile.SensorModel) -> tactile.TactileFrame:
    geometry = tactile.frame_geometry(sensor)
    return tactile.TactileFrame(
        contact_depth=DepthMap(geometry, np.zeros(geometry.shape)),
        pose=ContactPose((0.0, 0.0, 0.0), 0.0, 0, (0, 0)),
        effector_to_world=RigidTransform.identity(),
        ok=True,
    )


def test_reconstruct_centre_pixel():
    sensor = replace(SENSOR, sensor_to_effector=RigidTransform.identity())
    frame = _identity_frame(sensor)
    img = np.zeros(frame.geometry.shape, dtype=bool)
    img[240, 320] = True
    points = fusion.reconstruct_frame(frame, Mask(frame.geometry, img), sensor, stride=1)
    assert np.allclose(points, [[0.0, 0.0, 20.0]])

    empty = fusion.reconstruct_frame(frame, Mask.empty(frame.geometry), sensor)
    assert empty.shape == (0, 3)
    with pytest.raises(ContractError):
        fusion.reconstruct_frame(frame, Mask.empty(FRAME_GRID), sensor)


def test_crack_pixels_stride_and_boundary():
    geometry = GridGeometry(10, 10, 1.0)
    img = np.zeros(geometry.shape, dtype=bool)
    img[2:7, 2:7] = True
    mask = Mask(geometry, img)
    assert len(fusion.crack_pixels(mask, 1)) == 25
    assert len(fusion.crack_pixels(mask, 4)) == 7
    assert len(fusion.crack_pixels(mask, 1, boundary_only=True)) == 16
    with pytest.raises(ContractError):
        fusion.crack_pixels(mask, 0)


def _groove_run():
    graph = build_graph(constants.GROOVE_SCENE.gt_mask)
    plan = build_touch_plan(graph, constants.GROOVE_SCENE.geometry, 11.2, 4.0)
    frames = tactile.simulate_plan(constants.GROOVE_SCENE, SENSOR, plan)
    return graph, plan, frames, segment_tactile_frames(frames)


def test_reconstruction_hugs_the_groove():
    graph, plan, frames, masks = _groove_run()
    verdicts = fusion.verify_edges(plan, masks, n_edges=len(graph.edges))
    assert not any(v.rejected for v in verdicts)
    recon = fusion.assemble_reconstruction(frames, masks, verdicts, plan, SENSOR)
    assert not recon.is_empty
    assert np.allclose(recon.points[:, 2], 0.0)
    distances = distance_to_polyline(recon.points[:, :2], np.asarray(constants.GROOVE.centerline))
    # bilinear sampling widens the band by up to one scene pixel
    assert distances.max() <= 1.0 + constants.GROOVE_SCENE.geometry.mm_per_px + SENSOR.pitch_mm
    assert sorted(set(recon.source_frame)) == list(range(len(frames)))
    assert sum(len(v) for v in recon.per_edge.values()) == len(recon)


def test_assembly_drops_rejected_edges():
    graph, plan, frames, masks = _groove_run()
    rejected = [
        fusion.EdgeVerdict(i, len(plan.per_edge_index.get(i, [])), 3, True)
        if len(plan.per_edge_index.get(i, [])) >= 3
        else fusion.EdgeVerdict(i, 0, 0, False)
        for i in range(len(graph.edges))
    ]
    recon = fusion.assemble_reconstruction(frames, masks, rejected, plan, SENSOR)
    kept = [
        i for i, c in enumerate(plan.contacts) if len(plan.per_edge_index[c.source_edge]) < 3
    ]
    assert set(recon.source_frame) <= set(kept)

    first = replace(plan, contacts=plan.contacts[:1])
    single = fusion.assemble_reconstruction(frames[:1], masks[:1], None, first, SENSOR)
    assert np.allclose(single.points, fusion.reconstruct_frame(frames[0], masks[0], SENSOR))

    with pytest.raises(ContractError):
        fusion.assemble_reconstruction(frames, masks[:-1], None, plan, SENSOR)


def test_assembly_skips_frames_without_contact():
    graph, plan, frames, masks = _groove_run()
    lifted = [replace(f, ok=False) for f in frames]
    recon = fusion.assemble_reconstruction(lifted, masks, None, plan, SENSOR)
    assert recon.is_empty and len(recon) == 0


def test_write_points_and_verdicts(tmp_path: Path):
    recon = fusion.CrackReconstruction(
        points=np.array([[1.0, 2.0, 3.0], [0.1234567, 0.0, -1.0]]),
        source_frame=np.array([0, 3]),
    )
    fusion.write_points_csv(tmp_path / "points.csv", recon)
    with (tmp_path / "points.csv").open() as f:
        rows = list(csv.reader(f))
    assert rows == [
        ["x_mm", "y_mm", "z_mm", "frame"],
        ["1.000000", "2.000000", "3.000000", "0"],
        ["0.123457", "0.000000", "-1.000000", "3"],
    ]

    verdicts = [fusion.EdgeVerdict(0, 3, 3, True), fusion.EdgeVerdict(1, 1, 0, False)]
    fusion.write_verdicts(tmp_path / "verdicts.json", verdicts)
    assert read_json(tmp_path / "verdicts.json") == [v.to_dict() for v in verdicts]
