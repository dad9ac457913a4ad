import csv
from pathlib import Path
from typing import List
from unittest.mock import patch

import pytest
from typer.testing import CliRunner

import main
from services.core import read_json, read_mask

runner = CliRunner()


def _invoke(out: Path, args: List[str]):
    result = runner.invoke(main.app, ["--seed", "3", "--out", str(out), *args])
    assert result.exit_code == 0, result.output
    return result


def _run(argv: List[str]) -> int:
    with patch("sys.argv", ["crackprobe", *argv]):
        with pytest.raises(SystemExit) as e:
            main.run()
    return e.value.code


def test_pipeline_commands(tmp_path: Path):
    scene = tmp_path / "scene"
    size = ["--width", "80", "--height", "60"]
    _invoke(tmp_path, ["generate", "--real", "1", "--fake", "1", *size, "--out", str(scene)])
    assert read_json(scene / "spec.json")["seed"] == 3

    _invoke(tmp_path, ["segment-visual", "--albedo", str(scene / "albedo.raw")])
    visual = read_mask(tmp_path / "visual_mask.pgm")
    assert visual.count > 0

    _invoke(tmp_path, ["skeletonize", "--mask", str(tmp_path / "visual_mask.pgm")])
    assert read_json(tmp_path / "graph.json")["edges"]

    _invoke(tmp_path, ["plan", "--graph", str(tmp_path / "graph.json")])
    contacts = read_json(tmp_path / "plan.json")["contacts"]
    assert contacts

    _invoke(
        tmp_path, ["simulate", "--scene", str(scene), "--plan", str(tmp_path / "plan.json")]
    )
    assert len(list((tmp_path / "frames").glob("frame_*.raw"))) == len(contacts)

    _invoke(tmp_path, ["segment-tactile", "--frames", str(tmp_path / "frames")])
    assert len(list((tmp_path / "tactile_masks").glob("mask_*.pgm"))) == len(contacts)

    _invoke(
        tmp_path,
        [
            "fuse",
            "--mask",
            str(tmp_path / "visual_mask.pgm"),
            "--graph",
            str(tmp_path / "graph.json"),
            "--plan",
            str(tmp_path / "plan.json"),
            "--tactile",
            str(tmp_path / "tactile_masks"),
            "--frames",
            str(tmp_path / "frames"),
        ],
    )
    refined = read_mask(tmp_path / "refined_mask.pgm")
    assert refined.count <= visual.count
    verdicts = read_json(tmp_path / "verdicts.json")
    assert len(verdicts) == len(read_json(tmp_path / "graph.json")["edges"])

    _invoke(
        tmp_path,
        [
            "reconstruct",
            "--frames",
            str(tmp_path / "frames"),
            "--tactile",
            str(tmp_path / "tactile_masks"),
            "--plan",
            str(tmp_path / "plan.json"),
            "--verdicts",
            str(tmp_path / "verdicts.json"),
        ],
    )
    with (tmp_path / "points.csv").open() as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["x_mm", "y_mm", "z_mm", "frame"]
    assert len(rows) > 1

    _invoke(
        tmp_path,
        ["evaluate", "--scene", str(scene), "--method", "vision", "--method", "aligned-vision"],
    )
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert [line.split(",")[2] for line in lines[1:]] == ["aligned-vision", "vision"]
    assert (tmp_path / "report.json").exists()


def test_passive_plan(tmp_path: Path):
    scene = tmp_path / "scene"
    _invoke(tmp_path, ["generate", "--real", "0", "--fake", "0", "--out", str(scene)])
    _invoke(tmp_path, ["plan", "--passive", "--scene", str(scene)])
    assert len(read_json(tmp_path / "plan.json")["contacts"]) == 100


def test_usage_errors_exit_2(tmp_path: Path):
    assert _run(["--out", str(tmp_path), "plan", "--passive"]) == 2
    assert _run(["--out", str(tmp_path), "plan"]) == 2


def test_contract_errors_exit_2(tmp_path: Path):
    args = ["evaluate", "--scene", str(tmp_path), "--method", "telepathy"]
    assert _run(["--out", str(tmp_path), *args]) == 2
    assert _run(["--out", str(tmp_path), "generate", "--real", "1", "--width", "5"]) == 2


def test_io_errors_exit_3(tmp_path: Path):
    assert _run(["--out", str(tmp_path), "skeletonize", "--mask", str(tmp_path / "x.pgm")]) == 3

    bad = tmp_path / "bad.yaml"
    bad.write_text("planner: {spacing_mm: 1\n")
    assert _run(["--config", str(bad), "--out", str(tmp_path), "plan", "--passive"]) == 3


def test_success_exits_0(tmp_path: Path):
    assert _run(["--out", str(tmp_path), "generate", "--real", "0", "--fake", "0"]) == 0
    assert (tmp_path / "spec.json").exists()


def test_demo(tmp_path: Path):
    cfg = tmp_path / "config.yaml"
    cfg.write_text("corpus:\n  scenes: 1\n  extent_mm: [100, 80]\n")
    _invoke(tmp_path, ["--config", str(cfg), "demo"])
    lines = (tmp_path / "report.csv").read_text().splitlines()
    methods = ["active-tactile", "aligned-vision", "passive-tactile", "vision"]
    assert [line.split(",")[2] for line in lines[1:]] == methods


def test_demo_is_reproducible(tmp_path: Path):
    cfg = tmp_path / "config.yaml"
    cfg.write_text("corpus:\n  scenes: 1\n  n_real: 1\n  extent_mm: [100, 80]\n")
    for run in ("a", "b"):
        args = ["--seed", "7", "--config", str(cfg), "--out", str(tmp_path / run), "demo"]
        result = runner.invoke(main.app, args)
        assert result.exit_code == 0, result.output
    for name in ("report.csv", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
