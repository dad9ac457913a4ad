from pathlib import Path

import numpy as np
import pytest

import services.simscene as simscene
import tests.constants as constants


def test_generate_scene_is_deterministic():
    spec = simscene.random_scene(3, 2, 1)
    a, b = simscene.generate_scene(spec), simscene.generate_scene(spec)
    assert a.albedo == b.albedo
    assert a.depth == b.depth
    assert a.gt_mask == b.gt_mask
    assert simscene.random_scene(3, 2, 1) == spec
    assert simscene.random_scene(4, 2, 1) != spec


def test_empty_scene():
    scene = constants.INTACT_SCENE
    assert scene.gt_mask.count == 0
    assert not scene.depth.data.any()
    assert scene.gt_centerlines == []
    assert np.all(np.abs(scene.albedo.data - simscene.BACKGROUND_ALBEDO) <= 0.05 + 1e-12)


def test_scene_geometry():
    geometry = constants.GROOVE_SCENE.geometry
    assert geometry.shape == (120, 160)
    assert geometry.world_origin == (0.125, 0.125, 0.0)
    assert geometry.extent_mm == (40.0, 30.0)


def test_groove_band_width():
    crack = simscene.CrackSpec(((2.0, 15.0), (38.0, 15.0)), width_mm=1.0, depth_mm=1.5)
    scene = simscene.generate_scene(
        simscene.SceneSpec(seed=0, extent_mm=(40.0, 30.0), real_cracks=(crack,))
    )
    column = scene.gt_mask.data[:, 80]
    assert 4 <= column.sum() <= 5
    assert set(np.unique(scene.depth.data)) == {0.0, 1.5}


def test_real_and_fake_cracks_look_alike():
    real, fake = constants.GROOVE_SCENE, constants.PAINT_SCENE
    assert np.array_equal(real.albedo.data, fake.albedo.data)
    assert real.gt_mask.count > 0
    assert fake.gt_mask.count == 0
    assert len(real.gt_centerlines) == 1 and fake.gt_centerlines == []
    assert real.gt_centerlines[0].shape == (2, 3)


def test_random_scene_counts():
    spec = simscene.random_scene(11, 2, 2)
    assert len(spec.real_cracks) == 2 and len(spec.fake_cracks) == 2
    assert all(not c.is_fake for c in spec.real_cracks)
    assert all(c.is_fake for c in spec.fake_cracks)
    scene = simscene.generate_scene(spec)
    assert len(scene.gt_centerlines) == 2
    lines = [np.asarray(c.centerline) for c in spec.real_cracks + spec.fake_cracks]
    for i, a in enumerate(lines):
        assert simscene.polylines_length([a]) >= 20.0
        for b in lines[i + 1 :]:
            assert simscene._polyline_gap(a, b) >= 14.0


@pytest.mark.parametrize(
    "crack",
    [
        {"centerline": ((1.0, 1.0),), "width_mm": 0.0, "depth_mm": 1.0},
        {"centerline": ((1.0, 1.0),), "width_mm": 1.0, "depth_mm": -1.0},
        {"centerline": (), "width_mm": 1.0, "depth_mm": 1.0},
        {"centerline": ((1.0, 1.0),), "width_mm": 1.0, "depth_mm": 1.0, "albedo": 2.0},
    ],
)
def test_crack_spec_validation(crack):
    with pytest.raises(simscene.SpecError):
        simscene.CrackSpec(**crack)


def test_generate_scene_rejects_bad_specs():
    outside = simscene.CrackSpec(((2.0, 15.0), (48.0, 15.0)), 1.0, 1.0)
    with pytest.raises(simscene.SpecError, match="outside"):
        simscene.generate_scene(
            simscene.SceneSpec(seed=0, extent_mm=(40.0, 30.0), real_cracks=(outside,))
        )
    with pytest.raises(simscene.SpecError):
        simscene.generate_scene(
            simscene.SceneSpec(seed=0, extent_mm=(40.0, 30.0), real_cracks=(constants.PAINT,))
        )
    with pytest.raises(simscene.SpecError):
        simscene.generate_scene(
            simscene.SceneSpec(seed=0, extent_mm=(40.0, 30.0), fake_cracks=(constants.GROOVE,))
        )


def test_random_scene_rejects_impossible_requests():
    with pytest.raises(simscene.SpecError):
        simscene.random_scene(0, -1, 0)
    with pytest.raises(simscene.SpecError, match="too small"):
        simscene.random_scene(0, 1, 0, extent=(10.0, 10.0))
    with pytest.raises(simscene.SpecError, match="Could not place"):
        simscene.random_scene(0, 6, 0, extent=(40.0, 30.0), max_attempts=20)


def test_distance_to_polyline():
    line = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]])
    points = np.array([[5.0, 3.0], [-4.0, 3.0], [13.0, 5.0], [10.0, 0.0]])
    assert np.allclose(simscene.distance_to_polyline(points, line), [3.0, 5.0, 3.0, 0.0])
    assert np.allclose(simscene.distance_to_polyline(points[:1], line[:1]), [np.hypot(5, 3)])


def test_scene_save_load(tmp_path: Path):
    spec = simscene.random_scene(5, 1, 1, extent=(60.0, 45.0))
    scene = simscene.generate_scene(spec)
    simscene.save_scene(scene, tmp_path / "scene")
    assert sorted(p.name for p in (tmp_path / "scene").iterdir()) == [
        "albedo.json",
        "albedo.raw",
        "depth.json",
        "depth.raw",
        "gt_centerlines.json",
        "gt_mask.json",
        "gt_mask.pgm",
        "spec.json",
    ]
    loaded = simscene.load_scene(tmp_path / "scene")
    assert loaded.spec == spec
    assert loaded.gt_mask == scene.gt_mask
    assert np.allclose(loaded.albedo.data, scene.albedo.data, atol=1e-6)
    assert np.allclose(loaded.depth.data, scene.depth.data, atol=1e-6)
    assert np.allclose(loaded.gt_centerlines[0], scene.gt_centerlines[0])


def test_scene_corpus_seeds():
    specs = simscene.scene_corpus(10, 3, 1, 1, extent=(80.0, 60.0))
    assert [s.seed for s in specs] == [10, 11, 12]
    assert simscene.SceneSpec.from_dict(specs[0].to_dict()) == specs[0]
