import json

import numpy as np
import pytest

from b1predictor import cli
from b1predictor.niftiio import load_nifti


def run(args):
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert run(["--out-dir", d, "--seed", "11", "synth",
                "--subjects", "2", "--grid", "48"]) == 0
    return d


@pytest.fixture(scope="module")
def tiny_model(tmp_path_factory):
    d = tmp_path_factory.mktemp("model")
    code = run(["--out-dir", d, "--seed", "0", "train",
                "--subjects", "2", "--grid", "48", "--patches", "8",
                "--epochs", "1", "--lr", "1e-3", "--batch", "8"])
    assert code == 0
    return d / "model.pt"


def test_synth_outputs(synth_dir):
    for i in range(2):
        for kind in ("localizer", "b1", "mask"):
            assert (synth_dir / f"subject{i:02d}_{kind}.nii").is_file()
    geom = json.loads((synth_dir / "geometry.json").read_text())
    assert geom["n_slices"] == 10
    data, _, intent = load_nifti(synth_dir / "subject00_b1.nii")
    assert intent == "RELATIVE_B1"
    assert data.shape == (48, 48, 48)


def test_train_artifacts(tiny_model):
    assert tiny_model.is_file()
    sidecar = json.loads(tiny_model.with_suffix(".json").read_text())
    assert sidecar["config"]["epochs"] == 1
    assert "best_val_loss" in sidecar["metrics"]
    log = tiny_model.parent / "training_log.csv"
    assert log.read_text().splitlines()[0] == "epoch,train_loss,val_loss"


def test_predict_cli(tiny_model, synth_dir, tmp_path):
    code = run(["--out-dir", tmp_path, "predict", "--model", tiny_model,
                "--localizer", synth_dir / "subject00_localizer.nii",
                "--mask", synth_dir / "subject00_mask.nii",
                "--out", "pred.nii"])
    assert code == 0
    data, _, intent = load_nifti(tmp_path / "pred.nii")
    assert intent == "RELATIVE_B1"
    assert np.all(np.isfinite(data))
    mask, _, _ = load_nifti(synth_dir / "subject00_mask.nii")
    assert np.all(data[mask == 0] == 0.0)


def test_predict_grid_mismatch(tiny_model, synth_dir, tmp_path):
    from b1predictor.niftiio import save_nifti

    mask, affine, _ = load_nifti(synth_dir / "subject00_mask.nii")
    save_nifti(tmp_path / "small_mask.nii", mask[:32, :32, :32], affine, "MASK")
    code = run(["--out-dir", tmp_path, "predict", "--model", tiny_model,
                "--localizer", synth_dir / "subject00_localizer.nii",
                "--mask", tmp_path / "small_mask.nii", "--out", "pred.nii"])
    assert code == 1


def test_robustness_cli(tiny_model, tmp_path):
    code = run(["--out-dir", tmp_path, "--seed", "5", "robustness",
                "--model", tiny_model, "--grid", "48",
                "--out", "table.csv"])
    assert code == 0
    lines = (tmp_path / "table.csv").read_text().strip().splitlines()
    assert lines[0] == "pose,mean_abs_percent"
    assert len(lines) == 6
    assert [line.split(",")[0] for line in lines[1:]] == [
        "NEUTRAL", "LEFT", "RIGHT", "FRONT", "BACK"
    ]


def test_missing_flag_usage_error():
    assert run(["robustness"]) == 2
