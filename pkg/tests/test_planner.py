import math
from typing import Tuple

import numpy as np
import pytest

import services.planner as planner
import services.simscene as simscene
import tests.constants as constants
from services.config import PipelineConfig
from services.core import GridGeometry, ParameterError
from services.segment import segment_visual
from services.skeleton import MinimalEdge, build_graph


def test_straight_edge_contacts():
    pixels = planner.plan_edge_contacts(constants.STRAIGHT_EDGE, constants.PATH_GRID, 11.2)
    assert [u * 0.25 for u, _ in pixels] == constants.STRAIGHT_CONTACTS_MM


def test_single_pixel_edge():
    edge = MinimalEdge((4, 4), (4, 4), ((4, 4),))
    assert planner.plan_edge_contacts(edge, constants.GRID, 11.2) == [(4, 4)]
    poses = planner.assign_yaw([[(4, 4)]], constants.GRID, edges=[edge])
    assert poses[0].yaw_rad == 0.0


def test_semicircle_contacts():
    t = np.linspace(math.pi, 0, 200)
    points = np.column_stack([3 * np.cos(t), 3 * np.sin(t), np.zeros_like(t)])
    assert planner.select_contact_indices(points, 11.2) == [0, 199]


def test_contact_selection_is_greedy_and_maximal():
    rng = np.random.default_rng(0)
    for _ in range(200):
        steps = rng.uniform(-1, 1, size=(int(rng.integers(2, 80)), 3))
        points = np.cumsum(steps, axis=0)
        d = float(rng.uniform(0.5, 6))
        indices = planner.select_contact_indices(points, d)
        assert indices[0] == 0 and indices[-1] == len(points) - 1
        assert indices == sorted(set(indices))
        for a, b in zip(indices[:-1], indices[1:]):
            later = np.linalg.norm(points[a + 1 :] - points[a], axis=1)
            gap = later[b - a - 1]
            if (later < d).any():
                assert gap < d
                assert gap == later[later < d].max()
            else:
                assert gap == later.min()


def test_contacts_on_every_edge_end():
    rng = np.random.default_rng(1)
    for _ in range(50):
        length = int(rng.integers(1, 161))
        edge = MinimalEdge((0, 0), (length - 1, 0), tuple((u, 0) for u in range(length)))
        pixels = planner.plan_edge_contacts(edge, constants.PATH_GRID, 11.2)
        assert pixels[0] == edge.p_i and pixels[-1] == edge.p_j
        assert len(pixels) == len(set(pixels))


def test_spacing_must_be_positive():
    with pytest.raises(ParameterError):
        planner.select_contact_indices(np.zeros((3, 3)), 0.0)
    with pytest.raises(ParameterError):
        planner.build_touch_plan(build_graph(constants.LINE_MASK), constants.GRID, -1.0)


@pytest.mark.parametrize(
    "yaw, expected",
    [(0.0, 0.0), (math.pi, 0.0), (-math.pi / 4, 3 * math.pi / 4), (5 * math.pi / 4, math.pi / 4)],
)
def test_canonical_yaw(yaw: float, expected: float):
    assert planner.canonical_yaw(yaw) == pytest.approx(expected)
    assert 0.0 <= planner.canonical_yaw(yaw) < math.pi


@pytest.mark.parametrize(
    "run, expected",
    [
        ([(0, 0), (10, 10)], math.pi / 4),
        ([(10, 10), (0, 0)], math.pi / 4),
        ([(5, 0), (5, 20)], math.pi / 2),
        ([(0, 3), (8, 3), (30, 3)], 0.0),
    ],
)
def test_assign_yaw_follows_neighbour(run, expected: float):
    poses = planner.assign_yaw([run], constants.GRID)
    assert all(p.yaw_rad == pytest.approx(expected) for p in poses)
    assert [p.source_pixel for p in poses] == run


def test_yaw_ignores_path_direction():
    rng = np.random.default_rng(3)
    geometry = GridGeometry(400, 700, 0.25)
    for _ in range(50):
        n = int(rng.integers(2, 300))
        steps = np.column_stack([np.ones(n, dtype=int), rng.integers(-1, 2, n)])
        path = [(int(u), int(v) + 350) for u, v in np.cumsum(steps, axis=0)]
        forward = MinimalEdge(path[0], path[-1], tuple(path))
        backward = MinimalEdge(path[-1], path[0], tuple(path[::-1]))
        run = planner.plan_edge_contacts(forward, geometry, 11.2)
        a = planner.assign_yaw([run], geometry, edges=[forward])
        b = planner.assign_yaw([run[::-1]], geometry, edges=[backward])[::-1]
        world = np.array([p.position for p in a])
        for i, (p, q) in enumerate(zip(a, b)):
            assert p.source_pixel == q.source_pixel
            gaps = np.sort(np.linalg.norm(world - world[i], axis=1))
            if len(gaps) > 2 and gaps[2] - gaps[1] < 1e-9:
                # two contacts equally near: either may set the yaw
                continue
            turn = abs(p.yaw_rad - q.yaw_rad) % math.pi
            assert min(turn, math.pi - turn) < 1e-9


def test_lone_contact_uses_tangent():
    edge = MinimalEdge((6, 2), (6, 9), tuple((6, v) for v in range(2, 10)))
    poses = planner.assign_yaw([[(6, 5)]], constants.GRID, edges=[edge])
    assert poses[0].yaw_rad == pytest.approx(math.pi / 2)


def test_build_touch_plan_groups_by_edge():
    graph = build_graph(constants.T_MASK)
    plan = planner.build_touch_plan(graph, constants.GRID, d_mm=1.0)
    assert len(plan) == sum(len(i) for i in plan.per_edge_index.values())
    assert sorted(plan.per_edge_index) == list(range(len(graph.edges)))
    for edge_id, indices in plan.per_edge_index.items():
        assert indices == sorted(indices)
        assert all(plan.contacts[i].source_edge == edge_id for i in indices)

    contacts = [c.source_pixel for c in plan.contacts]
    for edge in graph.edges:
        assert edge.p_i in contacts and edge.p_j in contacts


def test_build_touch_plan_skips_short_spurs():
    graph = build_graph(constants.T_MASK)
    # every arm of the T is a spur of about 2.5 mm
    plan = planner.build_touch_plan(graph, constants.GRID, min_spur_mm=4.0)
    assert len(plan) == 0
    assert plan.skipped_edges == [0, 1, 2]

    line = planner.build_touch_plan(build_graph(constants.LINE_MASK), constants.GRID, 11.2, 4.0)
    assert len(line) == 2 and line.skipped_edges == []


def test_default_plan_touches_every_edge():
    graph = build_graph(constants.SPUR_MASK)
    assert len(graph.edges) == 3
    cfg = PipelineConfig().planner
    plan = planner.build_touch_plan(graph, constants.SPUR_GRID, cfg.spacing_mm, cfg.min_spur_mm)
    assert sorted(plan.per_edge_index) == [0, 1, 2]
    assert plan.skipped_edges == []

    pruned = planner.build_touch_plan(graph, constants.SPUR_GRID, min_spur_mm=4.0)
    assert len(pruned.skipped_edges) == 1
    assert len(pruned.per_edge_index) == 2


def test_active_plan_never_exceeds_passive_raster():
    for seed in range(10):
        scene = simscene.generate_scene(simscene.random_scene(seed, 1 + seed % 3, seed % 2))
        graph = build_graph(segment_visual(scene.albedo))
        active = planner.build_touch_plan(graph, scene.geometry)
        passive = planner.plan_passive_raster(scene.geometry)
        assert 0 < len(active) <= len(passive)


def test_touch_plan_dict_round_trip():
    plan = planner.build_touch_plan(build_graph(constants.T_MASK), constants.GRID, d_mm=1.0)
    restored = planner.TouchPlan.from_dict(plan.to_dict())
    assert restored.contacts == plan.contacts
    assert restored.per_edge_index == plan.per_edge_index


@pytest.mark.parametrize(
    "extent, expected",
    [((140.0, 105.0), 100), ((14.0, 10.5), 1), ((280.0, 210.0), 400)],
)
def test_passive_raster_counts(extent: Tuple[float, float], expected: int):
    geometry = GridGeometry(
        round(extent[0] / 0.25), round(extent[1] / 0.25), 0.25, world_origin=(0.125, 0.125, 0)
    )
    plan = planner.plan_passive_raster(geometry, planner.SENSOR_VIEW_MM, 0.0)
    assert len(plan) == expected
    assert all(c.yaw_rad == 0.0 and c.source_edge == planner.PASSIVE_EDGE for c in plan.contacts)
    xs = np.array([c.position[0] for c in plan.contacts])
    ys = np.array([c.position[1] for c in plan.contacts])
    assert xs.min() == pytest.approx(7.0) and xs.max() == pytest.approx(extent[0] - 7.0)
    assert ys.min() == pytest.approx(5.25) and ys.max() == pytest.approx(extent[1] - 5.25)


def test_passive_raster_is_boustrophedon():
    geometry = GridGeometry(560, 84, 0.25, world_origin=(0.125, 0.125, 0))
    plan = planner.plan_passive_raster(geometry)
    xs = [round(c.position[0], 6) for c in plan.contacts]
    assert xs[:10] == sorted(xs[:10])
    assert xs[10:20] == sorted(xs[10:20], reverse=True)


@pytest.mark.parametrize("overlap", [1.0, 1.5, -0.1])
def test_passive_raster_rejects_overlap(overlap: float):
    with pytest.raises(ParameterError):
        planner.plan_passive_raster(GridGeometry(560, 420, 0.25), overlap=overlap)


def test_passive_raster_rejects_small_surface():
    with pytest.raises(ParameterError):
        planner.plan_passive_raster(GridGeometry(40, 40, 0.25))
