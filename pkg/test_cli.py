import json
import math
import os

import pytest

from cli import build_parser, error_line, resolve_config, run
from config import RunConfig, save_config
from errors import ClassTooSmallError, ConfigError


@pytest.fixture
def cfg_file(tiny_cfg, tmp_path):
    path = str(tmp_path / "tiny.cfg")
    save_config(tiny_cfg, path)
    return path


def stderr_error(capsys) -> str:
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("error=")]
    assert len(lines) == 1
    return lines[0]


def test_full_chain(cfg_file, tiny_cfg, capsys):
    assert run(["synth", "--config", cfg_file]) == 0
    assert os.path.exists(tiny_cfg.data.test_manifest)
    assert run(["pretrain", "--config", cfg_file]) == 0
    assert run(["metatrain", "--config", cfg_file, "--shots", "1"]) == 0
    assert run(["metatest", "--config", cfg_file, "--shots", "1"]) == 0

    out = capsys.readouterr().out
    assert "2-way 1-shot:" in out
    runs = tiny_cfg.out_dir
    assert os.path.exists(os.path.join(runs, "pretrain", "checkpoints", "epoch_000", "manifest.json"))
    assert os.path.exists(os.path.join(runs, "metatrain", "best", "manifest.json"))
    with open(os.path.join(runs, "metatest", "metatest_report.json")) as f:
        report = json.load(f)
    assert report["episodes"] == 4 and report["checkpoint"].endswith("best")

    assert run(["report", os.path.join(runs, "metatrain", "metrics.ndjson"), "--config", cfg_file]) == 0
    assert os.path.exists(os.path.join(runs, "metatrain", "report.txt"))
    assert os.path.exists(os.path.join(runs, "metatrain", "accuracy.csv"))
    with open(os.path.join(runs, "metatrain", "report.txt")) as f:
        assert "accuracy: 2-way 1-shot:" in f.read()


def test_overrides_and_out_dir(cfg_file, tiny_cfg, tmp_path):
    assert run(["synth", "--config", cfg_file]) == 0
    out = str(tmp_path / "custom")
    assert run(["pretrain", "--config", cfg_file, "--set", "pretrain.steps_per_epoch=1", "--out", out]) == 0
    with open(os.path.join(out, "metrics.ndjson")) as f:
        assert len(f.read().splitlines()) == 1
    with open(os.path.join(out, "config.txt")) as f:
        assert "pretrain.steps_per_epoch = 1" in f.read()


def test_unknown_key(capsys):
    assert run(["pretrain", "--set", "loss.tau9=0.1"]) == 2
    line = stderr_error(capsys)
    assert line.startswith("error=ConfigError exit=2 msg=")
    assert "loss.tau9" in line


def test_missing_training_data(cfg_file, capsys):
    assert run(["pretrain", "--config", cfg_file]) == 2
    assert "data.train_manifest" in stderr_error(capsys)


def test_class_too_small(cfg_file, capsys):
    assert run(["synth", "--config", cfg_file, "--set", "data.synth_per_class=2"]) == 0
    assert run(["metatrain", "--config", cfg_file, "--set", "data.synth_per_class=2"]) == 3
    line = stderr_error(capsys)
    assert line.startswith("error=ClassTooSmallError exit=3")
    assert "class_000" in line


def test_missing_metrics_file(tmp_path, capsys):
    assert run(["report", str(tmp_path / "absent.ndjson")]) == 3
    assert stderr_error(capsys).startswith("error=MissingFileError exit=3")


def test_oracle_commands(tmp_path, capsys):
    fixtures = str(tmp_path / "fixtures")
    assert run(["oracle", "--make-fixtures", fixtures]) == 0
    assert run(["oracle", "--fixtures", fixtures]) == 0
    out = capsys.readouterr().out
    assert out.count(" pass") == 5
    assert run(["oracle", "--batch", fixtures]) == 0
    assert "distance_scaled" in capsys.readouterr().out


def test_gradcheck_command(capsys):
    assert run(["gradcheck"]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_synth_goldens(cfg_file, tmp_path):
    goldens = str(tmp_path / "goldens")
    assert run(["synth", "--config", cfg_file, "--goldens", goldens]) == 0
    assert os.path.exists(os.path.join(goldens, "goldens.json"))


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])


def test_oracle_modes_are_exclusive():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["oracle", "--fixtures", "a", "--make-fixtures", "b"])


def test_error_line_is_single_line():
    assert error_line(ConfigError("bad\nvalue"), 2) == "error=ConfigError exit=2 msg=bad value"
    assert error_line(ClassTooSmallError("c", 1, 5), 3).startswith("error=ClassTooSmallError exit=3 msg=")


@pytest.mark.slow
def test_default_size_smoke(tmp_path):
    cfg = RunConfig()
    cfg.out_dir = str(tmp_path / "runs")
    cfg.data.root = str(tmp_path / "data")
    for role in ("train", "val", "test"):
        setattr(cfg.data, f"{role}_manifest", str(tmp_path / "data" / role / "manifest.json"))
    cfg.pretrain.epochs = 1
    cfg.pretrain.steps_per_epoch = 5
    cfg.metatrain.epochs = 1
    cfg.metatrain.episodes_per_epoch = 5
    cfg.metatrain.val_episodes = 5
    cfg.metatest.episodes = 20
    path = str(tmp_path / "smoke.cfg")
    save_config(cfg, path)
    for command in ("synth", "pretrain", "metatrain", "metatest"):
        assert run([command, "--config", path]) == 0


@pytest.mark.slow
def test_default_run_meets_accuracy_floor(tmp_path):
    """synth(8 classes, 60/class, 32px, 0.2), 30 + 20 epochs, 600 test episodes, 5-way 1-shot."""
    cfg = RunConfig()
    cfg.out_dir = str(tmp_path / "runs")
    cfg.data.root = str(tmp_path / "data")
    for role in ("train", "val", "test"):
        setattr(cfg.data, f"{role}_manifest", str(tmp_path / "data" / role / "manifest.json"))
    cfg.metatest.episodes = 600
    path = str(tmp_path / "default.cfg")
    save_config(cfg, path)
    runs = cfg.out_dir

    assert run(["synth", "--config", path]) == 0
    assert run(["pretrain", "--config", path]) == 0
    before = str(tmp_path / "before")
    assert run(["metatest", "--config", path, "--checkpoint", os.path.join(runs, "pretrain"), "--out", before]) == 0
    assert run(["metatrain", "--config", path]) == 0
    assert run(["metatest", "--config", path]) == 0

    with open(os.path.join(runs, "pretrain", "metrics.ndjson")) as f:
        records = [json.loads(line) for line in f]
    first = [r["losses"]["total"] for r in records if r["epoch"] == 0]
    last = [r["losses"]["total"] for r in records if r["epoch"] == cfg.pretrain.epochs - 1]
    assert sum(last) / len(last) <= 0.5 * sum(first) / len(first)

    with open(os.path.join(before, "metatest_report.json")) as f:
        untuned = json.load(f)
    with open(os.path.join(runs, "metatest", "metatest_report.json")) as f:
        tuned = json.load(f)
    assert (tuned["ways"], tuned["shots"], tuned["episodes"]) == (5, 1, 600)
    assert math.isfinite(tuned["mean"]) and math.isfinite(tuned["ci95"])
    assert tuned["mean"] >= 0.90
    assert tuned["mean"] >= untuned["mean"]


def test_explicit_overrides_beat_shot_preset():
    args = build_parser().parse_args(
        ["metatrain", "--shots", "5", "--set", "meta.beta=0.05", "--set", "metatrain.schedule.step_size=7"]
    )
    cfg = resolve_config(args)
    assert (cfg.meta.beta, cfg.metatrain.schedule.step_size) == (0.05, 7)
    assert cfg.episode.shots == cfg.metatest.shots == 5


def test_shot_preset_without_overrides():
    cfg = resolve_config(build_parser().parse_args(["metatrain", "--shots", "5"]))
    assert (cfg.meta.beta, cfg.metatrain.schedule.step_size) == (0.1, 50)


def test_shots_flag_sets_counts_over_config_file(cfg_file):
    cfg = resolve_config(build_parser().parse_args(["metatest", "--config", cfg_file, "--shots", "5"]))
    assert cfg.episode.shots == cfg.metatest.shots == 5


def test_report_with_explicit_accuracy(cfg_file, tiny_cfg, tmp_path):
    metrics = tmp_path / "elsewhere" / "metrics.ndjson"
    metrics.parent.mkdir()
    metrics.write_text(json.dumps({"step": 0, "epoch": 0, "stage": "metatrain", "lr": 0.1, "losses": {"total": 1.0}}) + "\n")
    accuracy = tmp_path / "acc.json"
    accuracy.write_text(json.dumps({"mean": 0.75, "ci95": 0.05, "episodes": 4, "ways": 2, "shots": 1, "queries": 2}))
    assert run(["report", str(metrics), "--config", cfg_file, "--accuracy", str(accuracy)]) == 0
    with open(metrics.parent / "accuracy.csv") as f:
        assert f.read().splitlines()[1].split(",")[3] == "0.75"


def test_report_with_missing_accuracy(cfg_file, tmp_path, capsys):
    metrics = tmp_path / "metrics.ndjson"
    metrics.write_text("")
    assert run(["report", str(metrics), "--config", cfg_file, "--accuracy", str(tmp_path / "none.json")]) == 3
    assert stderr_error(capsys).startswith("error=MissingFileError exit=3")


def test_manifest_entry_without_file(cfg_file, tiny_cfg, capsys):
    assert run(["synth", "--config", cfg_file]) == 0
    manifest_path = tiny_cfg.data.train_manifest
    with open(manifest_path) as f:
        manifest = json.load(f)
    del manifest["classes"][0]["file"]
    with open(manifest_path, "w") as f:
        json.dump(manifest, f)

    assert run(["pretrain", "--config", cfg_file]) == 3
    line = stderr_error(capsys)
    assert line.startswith("error=ManifestError exit=3")
    assert "classes.0.file" in line
