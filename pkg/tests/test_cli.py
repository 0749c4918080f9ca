import json

import pytest

from emir.cli import run
from emir.design import serialize_design


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_design(path, design):
    path.write_text(serialize_design(design), encoding="utf-8")
    return str(path)


def test_help_and_unknown_command(workdir, capsys):
    assert run(["--help"]) == 0
    assert "pipeline" in capsys.readouterr().out
    assert run(["frobnicate"]) == 2


def test_validate_reports_ok(workdir, tiny_design, capsys):
    name = write_design(workdir / "design.json", tiny_design)
    assert run(["validate", name]) == 0
    assert capsys.readouterr().out.strip() == "ok"


def test_validate_lists_violations(workdir, tiny_design, capsys):
    c4 = tiny_design.c4.model_copy(update={"origin": (200.0, 200.0)})
    name = write_design(workdir / "design.json", tiny_design.model_copy(update={"c4": c4}))
    assert run(["validate", name]) == 1
    captured = capsys.readouterr()
    assert "NINE_BUMP_CONTAINMENT" in captured.out
    assert "INVALID_DESIGN" in captured.err


def test_solve_without_bumps_fails(workdir, tiny_design, capsys):
    c4 = tiny_design.c4.model_copy(update={"origin": (200.0, 200.0)})
    name = write_design(workdir / "design.json", tiny_design.model_copy(update={"c4": c4}))
    assert run(["solve", name, "-o", "golden.json"]) == 1
    assert "FLOATING_NETWORK" in capsys.readouterr().err
    assert not (workdir / "golden.json").exists()


def test_solve_refuses_layer_without_stripes(workdir, tiny_design, capsys):
    layers = list(tiny_design.layers)
    layers[3] = layers[3].model_copy(update={"pitch": 300.0, "offset": 250.0})
    name = write_design(workdir / "design.json", tiny_design.model_copy(update={"layers": layers}))
    assert run(["solve", name, "-o", "golden.json"]) == 1
    assert "INVALID_DESIGN" in capsys.readouterr().err
    assert not (workdir / "golden.json").exists()


def test_train_rejects_wrong_window_class(workdir, tiny_design, capsys):
    name = write_design(workdir / "design.json", tiny_design)
    assert run(["solve", name, "-o", "golden.json"]) == 0
    assert run(["extract", name, "golden.json", "-o", "data"]) == 0
    code = run(["train", "data/continuous.jsonl", "--kind", "knn", "--target", "ir",
                "--window-class", "discontinuous", "-o", "m.json"])
    assert code == 1
    assert "DIMENSION_MISMATCH" in capsys.readouterr().err


def test_train_rejects_foreign_hyperparameter(workdir, tiny_design):
    name = write_design(workdir / "design.json", tiny_design)
    assert run(["solve", name, "-o", "golden.json"]) == 0
    assert run(["extract", name, "golden.json", "-o", "data"]) == 0
    assert run(["train", "data/continuous.jsonl", "--kind", "knn", "--target", "ir",
                "--epochs", "3", "-o", "m.json"]) == 2


def test_train_rejects_bad_hyperparameter_value(workdir, tiny_design, capsys):
    name = write_design(workdir / "design.json", tiny_design)
    assert run(["solve", name, "-o", "golden.json"]) == 0
    assert run(["extract", name, "golden.json", "-o", "data"]) == 0
    assert run(["train", "data/continuous.jsonl", "--kind", "knn", "--target", "ir",
                "--k", "0", "-o", "m.json"]) == 1
    assert "INVALID_HYPERPARAMETER" in capsys.readouterr().err


def test_scan_needs_a_model_choice(workdir, tiny_design, capsys):
    name = write_design(workdir / "design.json", tiny_design)
    (workdir / "models").mkdir()
    assert run(["scan", name, "--models", "models", "-o", "scan.json"]) == 1
    assert "MISSING_MODEL" in capsys.readouterr().err


def test_pipeline_is_reproducible(workdir, tiny_config_file, capsys):
    for run_dir in ("run1", "run2"):
        code = run(["pipeline", "--config", str(tiny_config_file), "--seed", "7",
                    "-o", run_dir, "--kinds", "knn"])
        assert code == 0
    for artifact in ("manifest.json", "report.json", "report.txt", "comparison.json", "models/best.json"):
        assert (workdir / "run1" / artifact).read_bytes() == (workdir / "run2" / artifact).read_bytes()

    manifest = json.loads((workdir / "run1" / "manifest.json").read_text())
    commands = [s["command"] for s in manifest["steps"]]
    assert commands[:4] == ["generate", "solve", "extract", "split"]
    assert commands.count("train") == 4
    assert commands[-1] == "evaluate"
    assert manifest["best_models"] == {"continuous": "knn", "discontinuous": "knn"}

    report = json.loads((workdir / "run1" / "report.json").read_text())
    assert report["kind"] == "knn"
    assert [c["window_class"] for c in report["columns"]] == ["continuous", "discontinuous"]
    assert "Prediction accuracy" in (workdir / "run1" / "report.txt").read_text()

    capsys.readouterr()
    assert run(["scan", "run1/design.json", "--models", "run1/models", "-o", "scan.json"]) == 0
    assert "of 144 windows" in capsys.readouterr().out
    scan = json.loads((workdir / "scan.json").read_text())
    assert scan["windows"] == 144
    assert all(hit["kind"] == "knn" for hit in scan["flagged"])


def test_manifest_replays_step_by_step(workdir, tiny_config_file, monkeypatch):
    """A recorded argv rerun on copies of its inputs rebuilds the same output bytes."""
    assert run(["pipeline", "--config", str(tiny_config_file), "--seed", "2", "-o", "run", "--kinds", "knn"]) == 0
    manifest = json.loads((workdir / "run" / "manifest.json").read_text())
    step = next(s for s in manifest["steps"] if s["command"] == "solve")
    original = (workdir / "run" / "golden.json").read_bytes()
    (workdir / "replay").mkdir()
    for name in step["inputs"]:
        (workdir / "replay" / name).write_bytes((workdir / "run" / name).read_bytes())
    monkeypatch.chdir(workdir / "replay")
    assert run(step["argv"]) == 0
    assert (workdir / "replay" / "golden.json").read_bytes() == original


def test_best_model_choice_is_a_recorded_output(workdir, tiny_config_file, monkeypatch):
    assert run(["pipeline", "--config", str(tiny_config_file), "--seed", "4", "-o", "run", "--kinds", "knn,forest"]) == 0
    manifest = json.loads((workdir / "run" / "manifest.json").read_text())
    step = next(s for s in manifest["steps"] if s["command"] == "compare")
    assert "models/best.json" in step["outputs"]
    assert json.loads((workdir / "run" / "models" / "best.json").read_text()) == manifest["best_models"]

    for name in step["inputs"]:
        target = workdir / "replay" / name
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes((workdir / "run" / name).read_bytes())
    monkeypatch.chdir(workdir / "replay")
    assert run(step["argv"]) == 0
    assert (workdir / "replay" / "models" / "best.json").read_bytes() == (workdir / "run" / "models" / "best.json").read_bytes()


@pytest.mark.slow
def test_default_config_pipeline_meets_the_accuracy_bar(workdir):
    (workdir / "gen.json").write_text('{"generator": {}}', encoding="utf-8")
    assert run(["pipeline", "--config", "gen.json", "--seed", "7", "-o", "run"]) == 0
    report = json.loads((workdir / "run" / "report.json").read_text())
    columns = {c["window_class"]: c for c in report["columns"]}
    assert set(columns) == {"continuous", "discontinuous"}

    continuous = columns["continuous"]
    flagged = continuous["flagged_ir"] + continuous["flagged_em"]
    assert continuous["prediction_accuracy"] >= 0.85
    assert continuous["false_positives"] <= 0.10 * flagged
    assert columns["discontinuous"]["windows"] > 0
    assert "discontinuous window" in (workdir / "run" / "report.txt").read_text()
