import filecmp
import json
import subprocess
import sys

import numpy as np
import pytest

from cne.cli import main
from cne.pipeline import scene_statistics
from cne.raster import load_tensor
from cne.segmenter import load_model
from cne.synth import load_dataset
from cne.uncertainty import read_pnm, render_uncertainty_map

SMALL = ["--scenes", "12", "--size", "16", "--classes", "4", "--seed", "42"]
FAST = ["--epochs", "2", "--width", "8", "--seed", "42"]


def same_tree(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files:
        return False
    match, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(same_tree(a / d, b / d) for d in cmp.common_dirs)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", *SMALL, "--out", str(root / "data")]) == 0
    assert main(["train-seg", "--data", str(root / "data"), "--out", str(root / "model"), *FAST]) == 0
    return root


class TestSynth:
    def test_contract(self, tmp_path):
        assert main(["synth", "--scenes", "50", "--size", "64", "--classes", "5", "--seed", "42",
                     "--out", str(tmp_path / "d")]) == 0
        files = sorted(p.name for p in (tmp_path / "d").iterdir())
        assert len(files) == 101 and "index.json" in files
        assert "scene_0000_img.cnet" in files and "scene_0049_mask.cnet" in files
        assert load_tensor(tmp_path / "d" / "scene_0049_mask.cnet").shape == (64, 64)

    def test_repeatable(self, tmp_path):
        for name in ("a", "b"):
            assert main(["synth", *SMALL, "--out", str(tmp_path / name)]) == 0
        assert same_tree(tmp_path / "a", tmp_path / "b")

    def test_zero_classes_is_a_usage_error(self, tmp_path, capsys):
        assert main(["synth", "--classes", "0", "--out", str(tmp_path)]) == 2
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and "usage error" in err[0]

    def test_class_names(self, tmp_path):
        assert main(["synth", *SMALL, "--class-names", "a,b,c,d", "--out", str(tmp_path)]) == 0
        assert json.loads((tmp_path / "index.json").read_text())["class_names"] == list("abcd")

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"scenes": 3, "size": 8, "classes": 3, "seed": 1}))
        assert main(["synth", "--config", str(cfg), "--size", "10", "--out", str(tmp_path / "d")]) == 0
        index = json.loads((tmp_path / "d" / "index.json").read_text())
        assert len(index["scenes"]) == 3 and index["height"] == 10 and index["num_classes"] == 3

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"epochs": 3}))
        assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 2


class TestTrainInferReport:
    def test_metrics_and_manifest(self, trained):
        metrics = json.loads((trained / "model" / "seg_metrics.json").read_text())
        assert 0.0 <= metrics["test_mean_iou"] <= 1.0 and len(metrics["epoch_losses"]) == 2
        model = load_model(trained / "model" / "model.cnet")
        assert model.p_drop == 0.1 and model.lineage["train"]["seed"] == 42

    def test_pdrop_recorded(self, trained, tmp_path):
        assert main(["train-seg", "--data", str(trained / "data"), "--out", str(tmp_path), "--epochs", "1",
                     "--width", "4", "--pdrop", "0.3"]) == 0
        assert load_model(tmp_path / "model.cnet").p_drop == 0.3

    def test_infer_matches_library(self, trained, tmp_path):
        out = tmp_path / "inf"
        assert main(["infer", "--model", str(trained / "model" / "model.cnet"), "--data", str(trained / "data"),
                     "--out", str(out), "--J", "5", "--seed", "7", "--scenes-sel", "0,3"]) == 0
        model = load_model(trained / "model" / "model.cnet")
        ds = load_dataset(trained / "data")
        for idx in (0, 3):
            maps = scene_statistics(model, ds.samples[idx], 5, 7)
            assert load_tensor(out / f"scene_{idx:04d}_A.cnet").tobytes() == maps.mean.tobytes()
            assert load_tensor(out / f"scene_{idx:04d}_S.cnet").tobytes() == maps.std.tobytes()
            assert np.array_equal(read_pnm(out / f"scene_{idx:04d}_unc.pgm"),
                                  render_uncertainty_map(maps.pixel_std))

    def test_infer_repeatable(self, trained, tmp_path):
        args = ["infer", "--model", str(trained / "model" / "model.cnet"), "--data", str(trained / "data"),
                "--J", "25", "--seed", "7"]
        assert main([*args, "--out", str(tmp_path / "a")]) == 0
        assert main([*args, "--out", str(tmp_path / "b")]) == 0
        assert same_tree(tmp_path / "a", tmp_path / "b")

    def test_single_run_gives_black_map(self, trained, tmp_path):
        assert main(["infer", "--model", str(trained / "model" / "model.cnet"), "--data", str(trained / "data"),
                     "--out", str(tmp_path), "--J", "1"]) == 0
        pgms = list(tmp_path.glob("*_unc.pgm"))
        assert pgms and all((read_pnm(p) == 0).all() for p in pgms)

    def test_report_files(self, trained, tmp_path):
        assert main(["report", "--model", str(trained / "model" / "model.cnet"), "--data", str(trained / "data"),
                     "--out", str(tmp_path), "--J", "4", "--min-coeff", "0"]) == 0
        data = json.loads((tmp_path / "report.json").read_text())
        assert len(data["rows"]) == 4 and data["metadata"]["J"] == 4
        assert (tmp_path / "report.csv").exists() and (tmp_path / "report.txt").exists()

    def test_missing_dataset_is_a_runtime_error(self, trained, tmp_path, capsys):
        code = main(["infer", "--model", str(trained / "model" / "model.cnet"), "--data", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "o")])
        assert code == 1
        assert len(capsys.readouterr().err.strip().splitlines()) == 1

    def test_missing_required_path(self, capsys):
        assert main(["infer", "--data", "x", "--out", "y"]) == 2

    def test_bad_pdrop(self, trained, tmp_path):
        assert main(["train-seg", "--data", str(trained / "data"), "--out", str(tmp_path), "--pdrop", "1"]) == 2


def test_pipeline_equals_stepwise(tmp_path):
    common = ["--seed", "42"]
    synth = ["--scenes", "10", "--size", "12", "--classes", "3"]
    train = ["--epochs", "1", "--width", "4"]
    assert main(["pipeline", *synth, *train, "--J", "3", *common, "--out", str(tmp_path / "p")]) == 0

    step = tmp_path / "s"
    assert main(["synth", *synth, *common, "--out", str(step / "data")]) == 0
    assert main(["train-seg", "--data", str(step / "data"), "--out", str(step / "model"), *train, *common]) == 0
    model = str(step / "model" / "model.cnet")
    assert main(["infer", "--model", model, "--data", str(step / "data"), "--out", str(step / "infer"),
                 "--J", "3", *common]) == 0
    assert main(["report", "--model", model, "--data", str(step / "data"), "--out", str(step / "report"),
                 "--J", "3", *common]) == 0
    assert same_tree(tmp_path / "p", step)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cne.cli", "synth", "--classes", "0", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2 and proc.stderr.count("\n") == 1
