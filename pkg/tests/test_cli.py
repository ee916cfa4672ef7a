import csv

import numpy as np
import pytest

from gazeaffect.cli import main
from gazeaffect.corpus import load_datasets
from gazeaffect.fusion import TUNED_C, default_plan, save_plan
from gazeaffect.ingest import synth_corpus, write_gaze_csv


def _read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def _tree(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _synth(tmp_path, *extra, name="data"):
    out = tmp_path / name
    assert main(["synth", "--n-recordings", "6", "--duration", "24", "--out", str(out), *extra]) == 0
    return out


def _flat_plan(tmp_path):
    path = tmp_path / "plan.txt"
    save_plan(default_plan(c_values={k.format(a="speech", b="gaze"): 1.0 for k in TUNED_C}), path)
    return path


def test_synth_layout(tmp_path):
    out = _synth(tmp_path)
    for split in ("train", "development", "test"):
        for sub in ("gaze", "features/speech", "labels"):
            assert len(list((out / split / sub).glob("*.csv"))) == 2


def test_synth_seeds_differ(tmp_path):
    a = _synth(tmp_path, "--seed", "1", name="a")
    b = _synth(tmp_path, "--seed", "2", name="b")
    assert _tree(a).keys() == _tree(b).keys()
    assert _tree(a) != _tree(b)


def test_noise_free_labels_are_linear(tmp_path):
    out = _synth(tmp_path, "--noise-sd", "0")
    data = load_datasets(out)
    rows = data["speech"].train + data["speech"].development
    gaze = data["gaze"].train + data["gaze"].development
    x = np.column_stack([[i.features for i in rows], [g.features for g in gaze], np.ones(len(rows))])
    for target in ("arousal", "valence"):
        y = np.array([i.target(target) for i in rows])
        coef = np.linalg.lstsq(x, y, rcond=None)[0]
        assert np.corrcoef(x @ coef, y)[0, 1] == pytest.approx(1.0, abs=1e-9)


def test_extract_seven_seconds(tmp_path):
    rec = synth_corpus(3, 1, 7.0).recordings[0]
    write_gaze_csv(rec, tmp_path / "in" / "r7.csv")
    assert main(["extract", str(tmp_path / "in"), "--out", str(tmp_path / "out")]) == 0
    rows = _read(tmp_path / "out" / "r7.csv")
    assert len(rows) == 4 and all(len(r) == 1 + 31 for r in rows)
    first = _tree(tmp_path / "out")
    assert main(["extract", str(tmp_path / "in"), "--out", str(tmp_path / "out")]) == 0
    assert _tree(tmp_path / "out") == first


def test_extract_empty_dir(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    assert main(["extract", str(tmp_path / "empty"), "--out", str(tmp_path / "o")]) == 2
    assert "no input recordings" in capsys.readouterr().err


def test_extract_bad_file_names_it(tmp_path, capsys):
    (tmp_path / "in").mkdir()
    (tmp_path / "in" / "bad.csv").write_text("timestamp,gaze_x\n0,0\n")
    assert main(["extract", str(tmp_path / "in"), "--out", str(tmp_path / "o")]) == 2
    assert "bad.csv" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    [],
    ["nonsense"],
    ["synth", "--bogus"],
    ["synth", "--window", "2", "--overlap", "2"],
])
def test_usage_errors(tmp_path, argv):
    if argv and argv[0] == "synth":
        argv = [*argv, "--out", str(tmp_path / "o")]
    assert main(argv) == 1


def test_train_predict_fuse_evaluate(tmp_path):
    data = _synth(tmp_path)
    feats, labels = data / "train" / "features" / "speech", data / "train" / "labels"
    assert main(["train", "--features", str(feats), "--labels", str(labels), "--target", "arousal",
                 "--c", "1", "--out", str(tmp_path / "m")]) == 0
    model = tmp_path / "m" / "model.svr"
    assert model.read_text().startswith("gazeaffect-svr-model 1")
    assert main(["predict", "--model", str(model), "--features", str(feats), "--out", str(tmp_path / "p")]) == 0
    assert main(["fuse", "averaged", str(tmp_path / "p"), str(tmp_path / "p"), "--out", str(tmp_path / "f")]) == 0
    assert _tree(tmp_path / "f") == _tree(tmp_path / "p")
    assert main(["evaluate", "--predictions", str(tmp_path / "f"), "--labels", str(labels),
                 "--target", "arousal", "--per-recording", "--out", str(tmp_path / "e")]) == 0
    rows = _read(tmp_path / "e" / "metrics.csv")
    assert rows[0] == ["scope", "dimension", "r", "ccc"] and len(rows) == 4
    assert float(rows[1][2]) > 0.5


def test_fuse_features(tmp_path):
    data = _synth(tmp_path)
    assert main(["extract", str(data / "train" / "gaze"), "--out", str(tmp_path / "g")]) == 0
    assert main(["fuse", "feature", str(data / "train" / "features" / "speech"), str(tmp_path / "g"),
                 "--out", str(tmp_path / "f")]) == 0
    rows = _read(next((tmp_path / "f").glob("*.csv")))
    assert len(rows[0]) == 1 + 40 + 31


def test_predict_missing_model(tmp_path):
    data = _synth(tmp_path)
    assert main(["predict", "--model", str(tmp_path / "none.svr"),
                 "--features", str(data / "train" / "features" / "speech"), "--out", str(tmp_path / "p")]) == 2


def test_experiment_report(tmp_path):
    data = _synth(tmp_path)
    plan = _flat_plan(tmp_path)
    for out in ("r1", "r2"):
        assert main(["experiment", "--data", str(data), "--plan", str(plan), "--out", str(tmp_path / out)]) == 0
    rows = _read(tmp_path / "r1" / "report.csv")
    assert len(rows) == 13 and len(rows[1:]) * 2 == 24
    assert len(list((tmp_path / "r1" / "trajectories").glob("*.csv"))) == 12
    assert _tree(tmp_path / "r1") == _tree(tmp_path / "r2")


def test_experiment_without_development(tmp_path, capsys):
    data = _synth(tmp_path)
    for p in (data / "development").rglob("*.csv"):
        p.unlink()
    assert main(["experiment", "--data", str(data), "--plan", str(_flat_plan(tmp_path)),
                 "--out", str(tmp_path / "r")]) == 3
    assert "PlanIncomplete" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sizing\nn-recordings = 3\nduration = 10\nseed = 4\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert len(list((tmp_path / "a").rglob("labels/*.csv"))) == 3
    assert main(["synth", "--config", str(cfg), "--n-recordings", "4", "--out", str(tmp_path / "b")]) == 0
    assert len(list((tmp_path / "b").rglob("labels/*.csv"))) == 4
    cfg.write_text("colour = red\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "c")]) == 1
