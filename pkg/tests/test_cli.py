import csv
import json
import subprocess
import sys

import pytest

from motionforge.cli import file_hash, main
from motionforge.model import load_checkpoint
from motionforge.motiondata import read_clip_csv
from motionforge.training import TrainConfig, write_config

SMALL = "knock=2,lift=2,throw=2,walk=2"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("synth-data", "--subjects", 3, "--seed", 7, "--windows", SMALL, "--out", root / "raw") == 0
    assert run("preprocess", "--data", root / "raw", "--out", root / "prep") == 0
    write_config(TrainConfig(batch_size=4, epochs=1, alpha=0.001), root / "cfg.txt")
    assert run("train", "--config", root / "cfg.txt", "--data", root / "prep", "--out", root / "run",
               "--widths", "desk", "--loops", 2) == 0  # fmt: skip
    return root


def test_synth_data_files_and_determinism(workspace, tmp_path):
    raw = workspace / "raw"
    assert len(list(raw.glob("*.csv"))) == 3 * 4
    assert (raw / "skeleton.txt").exists()
    assert run("synth-data", "--subjects", 3, "--seed", 7, "--windows", SMALL, "--out", tmp_path) == 0
    for f in sorted(raw.glob("*.csv")):
        assert (tmp_path / f.name).read_bytes() == f.read_bytes()


def test_synth_data_default_counts(tmp_path):
    assert run("synth-data", "--subjects", 1, "--out", tmp_path) == 0
    assert run("preprocess", "--data", tmp_path, "--out", tmp_path / "p") == 0
    names = [p.name.split("_")[1] for p in (tmp_path / "p" / "windows").glob("*.csv")]
    assert {a: names.count(a) for a in set(names)} == {"knock": 64, "lift": 88, "throw": 64, "walk": 80}


def test_synth_data_rejects_zero_subjects(capsys, tmp_path):
    assert run("synth-data", "--subjects", 0, "--out", tmp_path) == 1
    assert "--subjects must be >= 1" in capsys.readouterr().err


def test_preprocess_outputs(workspace):
    prep = workspace / "prep"
    wins = sorted((prep / "windows").glob("*.csv"))
    assert len(wins) == 3 * 8
    assert read_clip_csv(wins[0]).n_frames == 125
    assert set(json.loads((prep / "stats.json").read_text())) == {"mean", "std"}


def test_train_outputs_and_manifest(workspace):
    out = workspace / "run"
    assert sorted(p.name for p in out.glob("ckpt_*.bin")) == ["ckpt_0000.bin", "ckpt_0001.bin"]
    rows = list(csv.reader(open(out / "losses.csv")))
    assert rows[0] == ["step", "phase", "component", "value"] and len(rows) > 1
    man = json.loads((out / "manifest.json").read_text())
    assert man["command"] == "train" and man["seed"] == 0
    cfg_path = str(workspace / "cfg.txt")
    assert man["input_hashes"][cfg_path] == file_hash(cfg_path)
    _, header = load_checkpoint(out / "ckpt_0001.bin")
    assert "stats" in header["extra"]


def test_train_is_reproducible(workspace, tmp_path):
    assert run("train", "--config", workspace / "cfg.txt", "--data", workspace / "prep", "--out", tmp_path,
               "--widths", "desk", "--loops", 2) == 0  # fmt: skip
    for name in ("losses.csv", "ckpt_0001.bin"):
        assert (tmp_path / name).read_bytes() == (workspace / "run" / name).read_bytes()


def test_train_zero_epochs_and_missing_key(workspace, tmp_path, capsys):
    assert run("train", "--config", workspace / "cfg.txt", "--data", workspace / "prep", "--out", tmp_path / "z",
               "--widths", "desk", "--epochs", 0) == 0  # fmt: skip
    assert [p.name for p in (tmp_path / "z").glob("*.bin")] == ["ckpt_0000.bin"]
    bad = tmp_path / "bad.txt"
    bad.write_text("\n".join(l for l in (workspace / "cfg.txt").read_text().splitlines() if "lambda_gp" not in l))
    assert run("train", "--config", bad, "--data", workspace / "prep", "--out", tmp_path / "b") == 1
    assert "lambda_gp" in capsys.readouterr().err


def test_train_ablation_flags(workspace, tmp_path):
    assert run("train", "--config", workspace / "cfg.txt", "--data", workspace / "prep", "--out", tmp_path,
               "--widths", "desk", "--loops", 1, "--no-attention", "--no-blend-loss") == 0  # fmt: skip
    _, header = load_checkpoint(tmp_path / "ckpt_0001.bin")
    assert header["model_config"]["generator_attention"] is None
    assert header["model_config"]["critic_attention"] is False
    assert header["extra"]["ablation"] == {"use_blend": False, "use_skeleton": True}


def test_generate_lengths(workspace, tmp_path):
    ck = workspace / "run" / "ckpt_0001.bin"
    assert run("generate", "--ckpt", ck, "--data", workspace / "prep", "--action", "walk",
               "--iterations", 4, "--drop-seed", "--out", tmp_path / "g") == 0  # fmt: skip
    clip = read_clip_csv(tmp_path / "g" / "walk_00.csv")
    assert clip.n_frames == 100 and clip.action == "walk"
    assert (tmp_path / "g" / "walk_00.svg").read_text().startswith("<svg")
    assert run("generate", "--ckpt", ck, "--data", workspace / "prep", "--action", "lift",
               "--iterations", 0, "--out", tmp_path / "e") == 0  # fmt: skip
    assert read_clip_csv(tmp_path / "e" / "lift_00.csv").n_frames == 25


def test_generate_errors(workspace, tmp_path, capsys):
    ck = workspace / "run" / "ckpt_0001.bin"
    assert run("generate", "--ckpt", ck, "--data", workspace / "prep", "--action", "dance", "--out", tmp_path) == 1
    assert "valid actions: knock, lift, throw, walk" in capsys.readouterr().err
    assert run("generate", "--ckpt", tmp_path / "none.bin", "--data", workspace / "prep", "--action", "walk") == 1


def test_evaluate_kfold_and_errors(workspace, tmp_path, capsys):
    ck = workspace / "run" / "ckpt_0001.bin"
    assert run("evaluate", "--data", workspace / "prep", "--ckpt", ck, "--protocol", "kfold", "--k", 2,
               "--condition", "both", "--clf-epochs", 1, "--out", tmp_path) == 0  # fmt: skip
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["n_folds"] == 2 and "sign_test" in report and "angle_error_auc" in report
    assert len(list(csv.DictReader(open(tmp_path / "folds.csv")))) == 4
    assert (tmp_path / "angle_curve.svg").exists()
    capsys.readouterr()
    assert run("evaluate", "--data", workspace / "prep", "--fraction", 1.5) == 1
    assert "(0, 1]" in capsys.readouterr().err
    assert run("evaluate", "--data", workspace / "prep", "--condition", "synthetic-only") == 1
    assert "needs --ckpt" in capsys.readouterr().err


def test_plot_losses(workspace, tmp_path):
    assert run("plot", "--input", workspace / "run" / "losses.csv", "--out", tmp_path / "l.svg",
               "--series", "critic/gp_norm") == 0  # fmt: skip
    assert "<polyline" in (tmp_path / "l.svg").read_text()
    assert run("plot", "--input", workspace / "run" / "losses.csv", "--out", tmp_path / "x.svg", "--series", "nope") == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "motionforge.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("motionforge ")
