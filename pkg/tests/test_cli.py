import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from drivecog.cli import build_parser, config_from_args, main
from drivecog.config import PipelineConfig

FAST = ["--pca-dim", "5", "--elm-hidden", "40"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(out / "data"), "--subjects", "3", "--trials", "4",
                 "--duration", "3", "--seed", "2"]) == 0
    return out


def test_config_flags_override_file(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"pca_dim": 12, "epochs": 3}))
    args = build_parser().parse_args(["config", "--config", str(tmp_path / "c.json"),
                                      "--pca-dim", "7", "--lstm-hidden", "8", "4"])
    cfg = config_from_args(args)
    assert cfg.pca_dim == 7 and cfg.epochs == 3 and cfg.lstm_hidden == (8, 4)
    assert main(["config", "--n-bins", "6"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["config"]["n_bins"] == 6
    assert out["fingerprint"] == PipelineConfig(n_bins=6).fingerprint()


def test_extract_train_predict(dataset, capsys):
    d = dataset
    assert main(["extract", "--manifest", str(d / "data/manifest.json"), "--modality", "eeg",
                 "--out", str(d / "eeg.npz")]) == 0
    assert (d / "eeg.catalog.json").exists() and (d / "eeg.config.json").exists()
    assert json.loads((d / "eeg.catalog.json").read_text())["dim"] == 4187
    assert main(["train", "--features", str(d / "eeg.npz"), "--out", str(d / "m.bin")]
                + FAST) == 0
    assert main(["predict", "--model", str(d / "m.bin"), "--features", str(d / "eeg.npz"),
                 "--out", str(d / "pred.json")]) == 0
    pred = json.loads((d / "pred.json").read_text())
    assert len(pred["predictions"]) == 12 and 0 <= pred["accuracy"] <= 100


def test_evaluate_is_byte_deterministic_and_reports(dataset):
    d = dataset
    if not (d / "eeg.npz").exists():
        main(["extract", "--manifest", str(d / "data/manifest.json"), "--out", str(d / "eeg")])
    for name in ("r1", "r2"):
        assert main(["evaluate", "--features", str(d / "eeg.npz"), "--out", str(d / name),
                     "--seed", "4"] + FAST) == 0
    assert (d / "r1/results.json").read_bytes() == (d / "r2/results.json").read_bytes()
    assert (d / "r1/per_subject.png").read_bytes() == (d / "r2/per_subject.png").read_bytes()
    res = json.loads((d / "r1/results.json").read_text())
    assert res["n_folds"] == 3 and res["config"]["pca_dim"] == 5
    assert main(["report", "--results", str(d / "r1/results.json"),
                 "--out", str(d / "rep")]) == 0
    assert "| **mean** |" in (d / "rep/summary.md").read_text()


def test_topomap_command(dataset):
    d = dataset
    assert main(["topomap", "--manifest", str(d / "data/manifest.json"), "--trial",
                 "S01-T000", "--out", str(d / "t.png"), "--grid", str(d / "t.f32")]) == 0
    assert np.asarray(Image.open(d / "t.png")).shape == (224, 224, 3)
    assert (d / "t.f32").stat().st_size == 224 * 224 * 3 * 4


def test_errors_return_nonzero(tmp_path, capsys):
    assert main(["topomap", "--manifest", str(tmp_path / "missing.json"), "--trial", "x",
                 "--out", str(tmp_path / "x.png")]) == 1
    assert "error" in capsys.readouterr().err
    assert main(["config", "--pair-mode", "joint"]) == 1
    assert "pair_mode" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["evaluate", "--pca-dim", "many"])


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "drivecog.cli", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "drivecog" in out.stdout


def test_outputs_create_missing_directories(dataset):
    d = dataset
    assert main(["extract", "--manifest", str(d / "data/manifest.json"),
                 "--out", str(d / "new/feats/eeg.npz")]) == 0
    assert main(["train", "--features", str(d / "new/feats/eeg.npz"),
                 "--out", str(d / "new/models/m.bin")] + FAST) == 0
    assert (d / "new/feats/eeg.catalog.json").exists() and (d / "new/models/m.bin").exists()
