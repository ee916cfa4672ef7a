import math

import numpy as np
import pytest

from gazeaffect import svr
from gazeaffect.corpus import datasets_from_corpus
from gazeaffect.errors import AlignmentError, LabelMismatch, LengthMismatch, PlanFormatError, PlanIncomplete
from gazeaffect.fusion import (
    SYSTEMS,
    TARGETS,
    TUNED_C,
    ModalityDataset,
    averaged_prediction_fusion,
    build_report,
    default_plan,
    feature_fusion,
    fit_entry,
    format_plan,
    model_fusion,
    output_associative_fusion,
    parse_plan,
    run_experiment,
)
from gazeaffect.ingest import synth_corpus
from gazeaffect.segmentation import LabeledInstance, Segment


def _inst(rid, k, features, arousal=0.0, valence=0.0):
    return LabeledInstance(Segment(rid, k, 2 * k, 2 * k + 3), features, arousal, valence)


def _dataset(modality, dims, n=4, rid="r"):
    split = [_inst(rid, k, np.full(dims, float(k)), 0.1 * k, -0.1 * k) for k in range(n)]
    return ModalityDataset(modality, split, split, split)


@pytest.fixture(scope="module")
def data():
    corpus = synth_corpus(5, 9, 30.0, zero_valence_fraction=0.3)
    return datasets_from_corpus(corpus)


@pytest.fixture(scope="module")
def plan():
    return default_plan(c_values={k.format(a="speech", b="gaze"): 1.0 for k in TUNED_C})


def _train_spy(monkeypatch):
    calls = []
    real = svr.train

    def spy(instances, target, hp, *args, **kwargs):
        calls.append((target, list(instances)))
        return real(instances, target, hp, *args, **kwargs)

    monkeypatch.setattr(svr, "train", spy)
    return calls


# --- feature fusion -------------------------------------------------------

def test_feature_fusion_dimension():
    fused = feature_fusion(_dataset("speech", 2268), _dataset("gaze", 31))
    assert fused.dimension == 2299
    assert len(fused.train) == 4


def test_feature_fusion_order():
    a = ModalityDataset("a", [_inst("r", 0, [1, 2])], [], [])
    b = ModalityDataset("b", [_inst("r", 0, [3, 4, 5])], [], [])
    np.testing.assert_array_equal(feature_fusion(a, b).train[0].features, [1, 2, 3, 4, 5])


def test_feature_fusion_errors():
    a, b = _dataset("a", 2, n=10), _dataset("b", 3, n=9)
    with pytest.raises(AlignmentError):
        feature_fusion(a, b)
    c = ModalityDataset("c", *([_inst("r", k, [0.0], 9.0, 0.0) for k in range(10)],) * 3)
    with pytest.raises(LabelMismatch):
        feature_fusion(_dataset("a", 2, n=10), c)


# --- averaged fusion --------------------------------------------------------

def test_averaged_examples():
    np.testing.assert_allclose(averaged_prediction_fusion([[0.2], [0.4]]), [0.3], rtol=1e-15)
    p = np.array([0.1, -0.7, 3.3])
    np.testing.assert_array_equal(averaged_prediction_fusion([p, p]), p)
    np.testing.assert_allclose(averaged_prediction_fusion([[0.0], [0.3], [0.6]]), [0.3], rtol=1e-15)


def test_averaged_is_exact_and_order_free(rng):
    preds = [rng.normal(size=50) * 10.0 ** rng.integers(-8, 8) for _ in range(4)]
    expect = [math.fsum(col) / 4 for col in zip(*preds)]
    np.testing.assert_array_equal(averaged_prediction_fusion(preds), expect)
    np.testing.assert_array_equal(averaged_prediction_fusion(preds[::-1]), expect)


def test_averaged_errors():
    with pytest.raises(LengthMismatch):
        averaged_prediction_fusion([[1.0, 2.0], [1.0]])
    with pytest.raises(LengthMismatch):
        averaged_prediction_fusion([[1.0]])


# --- stacking -------------------------------------------------------------

def test_model_fusion_stage2_shape(data, plan, monkeypatch):
    calls = _train_spy(monkeypatch)
    stage1, stage2, pred = model_fusion(data["speech"], data["gaze"], "arousal", plan.with_c(1.0))
    assert set(stage1) == {"speech", "gaze"}
    assert stage2.model.dimension == 2
    assert pred.shape == (len(data["speech"].test),)
    rows = calls[-1][1]
    assert all(r.features.size == 2 for r in rows)


def test_model_fusion_whole_dev_matrix(data, plan):
    # without a holdout the stage-2 fit sees all n_dev rows
    full = plan.__class__(plan.entries, holdout=0.0)
    log = []
    model_fusion(data["speech"], data["gaze"], "arousal", full, log)
    fit = [e for e in log if e["model"] == "model_fusion_final_arousal" and e["action"] == "fit"]
    assert fit[0]["rows"] == len(data["speech"].development)


def test_output_associative_shape(data, plan):
    for target in TARGETS:
        models, pred = output_associative_fusion(data["speech"], data["gaze"], target, plan)
        assert models[f"output_associative_final_{target}"].model.dimension == 4
        assert len(models) == 5
        assert pred.shape == (len(data["gaze"].test),)


def test_stage2_interpolates_perfect_predictions(data):
    dev = data["speech"].development
    rows = [i.with_features([i.arousal, i.arousal]) for i in dev]
    plan = default_plan(c_values={k.format(a="speech", b="gaze"): 50.0 for k in TUNED_C}, holdout=0.0,
                        tolerance=1e-6)
    fitted = fit_entry(plan, "model_fusion_final_arousal", rows, "development")
    truth = np.array([i.arousal for i in dev])
    assert np.max(np.abs(fitted.predict(rows) - truth)) <= 1e-3 + 1e-6 + 1e-12


def test_constant_second_modality_drops_out(data, plan):
    a = data["speech"]
    preds = []
    for k in (0.5, 7.0):
        flat = {s: [i.with_features(np.full(31, k)) for i in data["gaze"].split(s)]
                for s in ("train", "development", "test")}
        _, pred = output_associative_fusion(a, ModalityDataset("gaze", **flat), "valence", plan)
        preds.append(pred)
    np.testing.assert_allclose(preds[0], preds[1], atol=1e-8)


def test_constant_stage2_columns_drop_out(rng):
    x = rng.normal(size=(60, 2))
    y = x @ [0.4, -0.2] + 0.05 * rng.normal(size=60)
    probe = rng.normal(size=(20, 2))
    hp = svr.SvrHyperparams(c=1.0)
    out = []
    for k in (0.2, 5.0):
        pad = lambda m: np.column_stack([m, np.full((len(m), 2), k)])  # noqa: E731
        out.append(svr.fit(pad(x), y, hp).predict(pad(probe)))
    np.testing.assert_allclose(out[0], out[1], atol=1e-8)


def test_stacking_needs_development(data, plan):
    empty = ModalityDataset("gaze", data["gaze"].train, [], data["gaze"].test)
    speech = ModalityDataset("speech", data["speech"].train, [], data["speech"].test)
    with pytest.raises(PlanIncomplete):
        model_fusion(speech, empty, "arousal", plan)
    short = plan.__class__(tuple(e for e in plan.entries if e.model != "model_fusion_final_valence"))
    with pytest.raises(PlanIncomplete):
        model_fusion(data["speech"], data["gaze"], "valence", short)


# --- plan -------------------------------------------------------------------

def test_default_plan():
    plan = default_plan()
    assert len(plan) == 14
    assert plan.get("unimodal_gaze_valence").c == 6.5
    assert plan.get("model_fusion_speech_valence").c == 8.0e-6
    assert plan.get("output_associative_final_arousal").c == 0.2
    for e in plan.entries:
        assert e.filter_zero_valence == (e.target == "valence" and not e.model.startswith("feature_fusion"))
        assert e.set_id == {"unimodal": "A", "feature": "A", "output": "E"}.get(
            e.model.split("_")[0], "C" if "final" in e.model else "B")


def test_plan_round_trip():
    plan = default_plan(holdout=0.25, seed=3, tolerance=1e-4)
    assert parse_plan(format_plan(plan)) == plan


@pytest.mark.parametrize("text", [
    "model=x target=arousal set=A c=1 filter=maybe",
    "model=x target=mood set=A c=1",
    "model=x target=arousal set=D c=1",
    "model=x target=arousal set=A c=-1",
    "model=x target=arousal set=A",
    "holdout",
    "colour=blue",
])
def test_plan_format_errors(text):
    with pytest.raises(PlanFormatError):
        parse_plan(text)


# --- experiment -------------------------------------------------------------

def test_report_has_24_cells(data, plan):
    report = run_experiment(plan, data)
    assert len(report.cells) == 12 and len(report.cells) * 2 == 24
    assert [c[0] for c in report.cells[::2]] == [s.format(a="speech", b="gaze") for s in SYSTEMS]
    assert all(np.isfinite(c[2]) and np.isfinite(c[3]) for c in report.cells)
    assert len(report.models) == 14


def test_truth_as_predictions(data):
    test = data["speech"].test
    systems = [s.format(a="speech", b="gaze") for s in SYSTEMS]
    preds = {(s, t): np.array([i.target(t) for i in test]) for s in systems for t in TARGETS}
    report = build_report(("speech", "gaze"), preds, test)
    for _, _, r, c in report.cells:
        assert r == pytest.approx(1.0, abs=1e-12) and c == pytest.approx(1.0, abs=1e-12)


def test_data_access_isolation(data, plan, monkeypatch):
    calls = _train_spy(monkeypatch)
    log = []
    run_experiment(plan, data, log)
    fits = [e for e in log if e["action"] == "fit"]
    assert len(fits) == len(calls) == 14
    test_ids = {i.segment.recording_id for i in data["speech"].test}
    dev_keys = {(i.segment.recording_id, i.segment.index) for i in data["speech"].development}
    for entry, (_, rows) in zip(fits, calls):
        assert entry["split"] != "test"
        assert not test_ids & {r.segment.recording_id for r in rows}
        if "final" in entry["model"]:
            assert entry["split"] == "development" and entry["source"] == "predictions"
            assert {(r.segment.recording_id, r.segment.index) for r in rows} <= dev_keys
        elif entry["model"].startswith("model_fusion"):
            assert entry["split"] == "train"
    assert all(e["split"] == "test" for e in log if e["action"] == "predict" and "final" in e["model"])


def test_zero_valence_rule(data, plan, monkeypatch):
    calls = _train_spy(monkeypatch)
    log = []
    run_experiment(plan, data, log)
    fits = [e["model"] for e in log if e["action"] == "fit"]
    saw_zero = False
    for name, (target, rows) in zip(fits, calls):
        zeros = sum(abs(r.valence) <= 1e-9 for r in rows)
        if name == "feature_fusion_valence":
            saw_zero = zeros > 0
        elif target == "valence":
            assert zeros == 0, name
    assert saw_zero


def test_reordering_changes_nothing(data, plan):
    rng = np.random.default_rng(4)
    perms = {s: rng.permutation(len(data["speech"].split(s))) for s in ("train", "development", "test")}
    shuffled = {
        m: ModalityDataset(m, *([d.split(s)[k] for k in perms[s]] for s in ("train", "development", "test")))
        for m, d in data.items()
    }
    a, b = run_experiment(plan, data), run_experiment(plan, shuffled)
    assert a.models.keys() == b.models.keys()
    for name in a.models:
        assert a.models[name] == b.models[name], name
    for key, (keys, pred, _) in a.trajectories.items():
        keys_b, pred_b, _ = b.trajectories[key]
        np.testing.assert_array_equal(pred_b, [dict(zip(keys, pred))[k] for k in keys_b])
