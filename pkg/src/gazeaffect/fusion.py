"""Fusion strategies and the experiment orchestrator.

Training sets follow the letter ids used in the experiment plan:

* A  train + development combined (unimodal, feature fusion, averaged fusion)
* B  train only (stage-1 models of the stacking systems)
* C  stage-1 predictions on development, one column per modality
* E  arousal and valence stage-1 predictions on development from every modality

Every fit draws ``1 - holdout`` of its pool (split by recording) and keeps the
rest for validation. Stage-2 models only ever see stage-1 predictions on the
development split; test labels are used only for evaluation. Each data access
is appended to an optional ``log`` list so that both facts can be checked.
"""
import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import metrics, svr
from .errors import AlignmentError, LabelMismatch, LengthMismatch, PlanFormatError, PlanIncomplete
from .segmentation import ZERO_VALENCE_TOLERANCE, filter_zero_valence, split_train_validation

logger = logging.getLogger(__name__)

TARGETS = ("arousal", "valence")
SPLITS = ("train", "development", "test")
SET_IDS = ("A", "B", "C", "E")
SYSTEMS = (
    "unimodal_{a}", "unimodal_{b}", "feature_fusion",
    "averaged_prediction_fusion", "model_fusion", "output_associative_fusion",
)

# Complexity per model as tuned on the original speech/gaze corpus;
# {a} is the first (speech) modality, {b} the second (gaze).
TUNED_C = {
    "unimodal_{a}_arousal": 2.5e-4,
    "unimodal_{a}_valence": 9.0e-5,
    "unimodal_{b}_arousal": 0.009,
    "unimodal_{b}_valence": 6.5,
    "feature_fusion_arousal": 1.8e-4,
    "feature_fusion_valence": 2.0e-4,
    "model_fusion_{a}_arousal": 7.0e-5,
    "model_fusion_{a}_valence": 8.0e-6,
    "model_fusion_{b}_arousal": 10.0,
    "model_fusion_{b}_valence": 10.0,
    "model_fusion_final_arousal": 9.0,
    "model_fusion_final_valence": 7.0,
    "output_associative_final_arousal": 0.2,
    "output_associative_final_valence": 4.0e-4,
}


@dataclass(frozen=True)
class ModalityDataset:
    modality: str
    train: list
    development: list
    test: list

    def split(self, name):
        return getattr(self, name)

    @property
    def dimension(self):
        for part in (self.train, self.development, self.test):
            if part:
                return part[0].features.size
        return 0


@dataclass(frozen=True)
class PlanEntry:
    model: str
    target: str
    set_id: str
    c: float
    filter_zero_valence: bool

    def __post_init__(self):
        if self.target not in TARGETS:
            raise PlanFormatError(f"{self.model}: unknown target {self.target!r}")
        if self.set_id not in SET_IDS:
            raise PlanFormatError(f"{self.model}: unknown set id {self.set_id!r}")
        if not (math.isfinite(self.c) and self.c > 0):
            raise PlanFormatError(f"{self.model}: C must be positive")


@dataclass(frozen=True)
class ExperimentPlan:
    entries: tuple
    modalities: tuple = ("speech", "gaze")
    holdout: float = 0.34
    seed: int = 0
    epsilon: float = 1e-3
    tolerance: float = 1e-3
    max_iterations: int = svr.DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        names = [e.model for e in self.entries]
        if len(set(names)) != len(names):
            raise PlanFormatError("duplicate model names in plan")
        if len(self.modalities) != 2:
            raise PlanFormatError("plan needs exactly two modalities")
        if not 0 <= self.holdout < 1:
            raise PlanFormatError("holdout must lie in [0, 1)")

    def __len__(self):
        return len(self.entries)

    def get(self, name):
        for e in self.entries:
            if e.model == name:
                return e
        raise PlanIncomplete(f"plan has no entry {name!r}")

    def require(self, *names):
        missing = [n for n in names if n not in {e.model for e in self.entries}]
        if missing:
            raise PlanIncomplete(f"plan is missing {', '.join(missing)}")

    def hyperparams(self, name):
        return svr.SvrHyperparams(self.get(name).c, self.epsilon, self.tolerance)

    def with_c(self, c):
        """Same plan with every model's C replaced."""
        return replace(self, entries=tuple(replace(e, c=c) for e in self.entries))


def default_plan(modalities=("speech", "gaze"), c_values=None, **settings):
    """The 14-model plan; C defaults to the published per-model values."""
    a, b = modalities
    if c_values is None:
        c_values = {k.format(a=a, b=b): v for k, v in TUNED_C.items()}
    entries = []
    for t in TARGETS:
        flt = t == "valence"
        for m in (a, b):
            entries.append(PlanEntry(f"unimodal_{m}_{t}", t, "A", c_values[f"unimodal_{m}_{t}"], flt))
        entries.append(PlanEntry(f"feature_fusion_{t}", t, "A", c_values[f"feature_fusion_{t}"], False))
        for m in (a, b):
            entries.append(PlanEntry(f"model_fusion_{m}_{t}", t, "B", c_values[f"model_fusion_{m}_{t}"], flt))
        entries.append(PlanEntry(f"model_fusion_final_{t}", t, "C", c_values[f"model_fusion_final_{t}"], flt))
        entries.append(PlanEntry(f"output_associative_final_{t}", t, "E",
                                 c_values[f"output_associative_final_{t}"], flt))
    return ExperimentPlan(tuple(entries), tuple(modalities), **settings)


# ---------------------------------------------------------------------------
# plan file: one record per line, whitespace separated key=value pairs.
#   modalities=speech,gaze holdout=0.34 seed=0
#   model=unimodal_speech_arousal target=arousal set=A c=0.00025 filter=0

_SETTINGS = {"holdout": float, "seed": int, "epsilon": float, "tolerance": float, "max_iterations": int}


def parse_plan(text):
    entries, settings = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        pairs = {}
        for token in line.split():
            key, sep, value = token.partition("=")
            if not sep or not key or not value:
                raise PlanFormatError(f"line {lineno}: expected key=value, got {token!r}")
            pairs[key] = value
        try:
            if "model" in pairs:
                flag = pairs.get("filter", "0").lower()
                if flag not in ("0", "1", "true", "false", "yes", "no"):
                    raise PlanFormatError(f"line {lineno}: bad filter flag {flag!r}")
                entries.append(PlanEntry(pairs["model"], pairs["target"], pairs["set"], float(pairs["c"]),
                                         flag in ("1", "true", "yes")))
                continue
            for key, value in pairs.items():
                if key == "modalities":
                    settings[key] = tuple(value.split(","))
                elif key in _SETTINGS:
                    settings[key] = _SETTINGS[key](value)
                else:
                    raise PlanFormatError(f"line {lineno}: unknown setting {key!r}")
        except KeyError as exc:
            raise PlanFormatError(f"line {lineno}: model entry lacks {exc}") from None
        except ValueError as exc:
            if isinstance(exc, PlanFormatError):
                raise
            raise PlanFormatError(f"line {lineno}: {exc}") from None
    return ExperimentPlan(tuple(entries), **settings)


def format_plan(plan):
    lines = [
        f"modalities={','.join(plan.modalities)} holdout={plan.holdout!r} seed={plan.seed} "
        f"epsilon={plan.epsilon!r} tolerance={plan.tolerance!r} max_iterations={plan.max_iterations}"
    ]
    for e in plan.entries:
        lines.append(f"model={e.model} target={e.target} set={e.set_id} c={e.c!r} filter={int(e.filter_zero_valence)}")
    return "\n".join(lines) + "\n"


def load_plan(path):
    return parse_plan(Path(path).read_text(encoding="utf-8"))


def save_plan(plan, path):
    Path(path).write_text(format_plan(plan), encoding="utf-8")


# ---------------------------------------------------------------------------
# helpers

def _keys(instances):
    return [(i.segment.recording_id, i.segment.index) for i in instances]


def _check_aligned(a, b, what):
    if len(a) != len(b):
        raise AlignmentError(f"{what}: {len(a)} vs {len(b)} segments")
    if _keys(a) != _keys(b):
        raise AlignmentError(f"{what}: segment order differs between modalities")


def _labels_equal(x, y):
    return all(
        (p == q) or (math.isnan(p) and math.isnan(q))
        for p, q in ((x.arousal, y.arousal), (x.valence, y.valence))
    )


def _record(log_list, action, model, split, rows, source="features"):
    if log_list is not None:
        log_list.append({"action": action, "model": model, "split": split, "rows": rows, "source": source})


def _training_rows(instances, entry):
    if entry.target == "valence" and entry.filter_zero_valence:
        return filter_zero_valence(instances, ZERO_VALENCE_TOLERANCE)
    return list(instances)


@dataclass
class FittedModel:
    name: str
    model: svr.SvrModel
    validation: object = None  # metrics.MetricsReport on the held-out part, if any

    def predict(self, instances):
        if not instances:
            return np.zeros(0)
        return self.model.predict(np.stack([i.features for i in instances]))


def fit_entry(plan, name, pool, split_label, log=None, source="features"):
    """Fit one plan model on ``pool`` after the zero-valence rule and the holdout split."""
    entry = plan.get(name)
    rows = _training_rows(pool, entry)
    build, held = rows, []
    if plan.holdout > 0:
        build, held = split_train_validation(rows, 1.0 - plan.holdout, plan.seed)
    _record(log, "fit", name, split_label, len(build), source)
    model = svr.train(build, entry.target, plan.hyperparams(name), plan.max_iterations)
    report = None
    if held:
        pred = model.predict(np.stack([i.features for i in held]))
        truth = [i.target(entry.target) for i in held]
        try:
            report = metrics.evaluate(pred, truth)
        except ValueError as exc:
            logger.info("%s: validation metrics unavailable (%s)", name, exc)
    return FittedModel(name, model, report)


# ---------------------------------------------------------------------------
# the four strategies

def feature_fusion(a, b):
    """Concatenate per-segment feature vectors, a first."""
    parts = {}
    for split in SPLITS:
        xa, xb = a.split(split), b.split(split)
        _check_aligned(xa, xb, f"feature fusion ({split})")
        fused = []
        for ia, ib in zip(xa, xb):
            if not _labels_equal(ia, ib):
                raise LabelMismatch(f"labels differ for segment {ia.segment.index} of {ia.segment.recording_id!r}")
            fused.append(ia.with_features(np.concatenate((ia.features, ib.features))))
        parts[split] = fused
    return ModalityDataset(f"{a.modality}+{b.modality}", **parts)


def averaged_prediction_fusion(predictions):
    """Element-wise arithmetic mean of n >= 2 prediction vectors.

    Sums are exactly rounded, so the result does not depend on modality order.
    """
    arrays = [np.asarray(p, dtype=float).ravel() for p in predictions]
    if len(arrays) < 2:
        raise LengthMismatch("averaged fusion needs at least 2 modalities")
    if len({a.size for a in arrays}) != 1:
        raise LengthMismatch(f"prediction lengths differ: {[a.size for a in arrays]}")
    k = len(arrays)
    return np.array([math.fsum(col) / k for col in zip(*arrays)], dtype=float)


def _stage1(plan, dataset, target, role, log, cache):
    name = f"{role}_{dataset.modality}_{target}"
    if cache is not None and name in cache:
        return cache[name]
    fitted = fit_entry(plan, name, dataset.train, "train", log)
    if cache is not None:
        cache[name] = fitted
    return fitted


def _stack_rows(template, columns):
    """Instances carrying stacked prediction columns as features."""
    matrix = np.column_stack(columns) if columns else np.zeros((len(template), 0))
    return [inst.with_features(row) for inst, row in zip(template, matrix)]


def _require_dev(a, b):
    if not a.development or not b.development:
        raise PlanIncomplete("stacking models need a non-empty development split for both modalities")


def model_fusion(a, b, target, plan, log=None, cache=None):
    """Stage 1 per modality on train; stage 2 on paired development predictions.

    Returns (stage-1 models, stage-2 model, test predictions).
    """
    final = f"model_fusion_final_{target}"
    plan.require(f"model_fusion_{a.modality}_{target}", f"model_fusion_{b.modality}_{target}", final)
    _require_dev(a, b)
    for split in SPLITS:
        _check_aligned(a.split(split), b.split(split), f"model fusion ({split})")
    stage1 = {m.modality: _stage1(plan, m, target, "model_fusion", log, cache) for m in (a, b)}
    for m in (a, b):
        _record(log, "predict", stage1[m.modality].name, "development", len(m.development))
    dev_rows = _stack_rows(a.development, [stage1[m.modality].predict(m.development) for m in (a, b)])
    stage2 = fit_entry(plan, final, dev_rows, "development", log, source="predictions")
    for m in (a, b):
        _record(log, "predict", stage1[m.modality].name, "test", len(m.test))
    test_rows = _stack_rows(a.test, [stage1[m.modality].predict(m.test) for m in (a, b)])
    _record(log, "predict", final, "test", len(test_rows), source="predictions")
    return stage1, stage2, stage2.predict(test_rows)


def output_associative_fusion(a, b, target, plan, log=None, cache=None):
    """Stage 2 sees arousal and valence predictions from both modalities.

    Stage-2 columns: a-arousal, a-valence, b-arousal, b-valence. Returns
    (models by name, test predictions).
    """
    final = f"output_associative_final_{target}"
    plan.require(*(f"model_fusion_{m.modality}_{t}" for m in (a, b) for t in TARGETS), final)
    _require_dev(a, b)
    for split in SPLITS:
        _check_aligned(a.split(split), b.split(split), f"output-associative fusion ({split})")
    stage1 = [(m, _stage1(plan, m, t, "model_fusion", log, cache)) for m in (a, b) for t in TARGETS]
    for m, f in stage1:
        _record(log, "predict", f.name, "development", len(m.development))
    dev_rows = _stack_rows(a.development, [f.predict(m.development) for m, f in stage1])
    stage2 = fit_entry(plan, final, dev_rows, "development", log, source="predictions")
    for m, f in stage1:
        _record(log, "predict", f.name, "test", len(m.test))
    test_rows = _stack_rows(a.test, [f.predict(m.test) for m, f in stage1])
    _record(log, "predict", final, "test", len(test_rows), source="predictions")
    models = {f.name: f for _, f in stage1}
    models[final] = stage2
    return models, stage2.predict(test_rows)


# ---------------------------------------------------------------------------
# orchestration

@dataclass
class ExperimentReport:
    modalities: tuple
    cells: list = field(default_factory=list)  # (system, dimension, r, ccc)
    trajectories: dict = field(default_factory=dict)  # (system, dimension) -> (keys, pred, truth)
    validation: dict = field(default_factory=dict)  # model name -> MetricsReport | None
    models: dict = field(default_factory=dict)

    @property
    def systems(self):
        a, b = self.modalities
        return [s.format(a=a, b=b) for s in SYSTEMS]

    def cell(self, system, dimension):
        for s, d, r, c in self.cells:
            if s == system and d == dimension:
                return r, c
        raise KeyError((system, dimension))


def _score(pred, truth):
    truth = np.asarray(truth, dtype=float)
    if truth.size < 2 or not np.all(np.isfinite(truth)):
        return math.nan, math.nan
    return metrics.pearson(pred, truth), metrics.ccc(pred, truth)


def build_report(modalities, predictions, test_instances):
    """Score a {(system, dimension): prediction vector} mapping against test labels."""
    report = ExperimentReport(tuple(modalities))
    keys = _keys(test_instances)
    for system in report.systems:
        for dim in TARGETS:
            pred = np.asarray(predictions[(system, dim)], dtype=float)
            truth = np.array([i.target(dim) for i in test_instances])
            r, c = _score(pred, truth)
            report.cells.append((system, dim, r, c))
            report.trajectories[(system, dim)] = (keys, pred, truth)
    return report


def run_experiment(plan, datasets, log=None):
    """Train and score the six systems for both dimensions."""
    a_name, b_name = plan.modalities
    missing = [m for m in plan.modalities if m not in datasets]
    if missing:
        raise PlanIncomplete(f"no dataset for modality {', '.join(missing)}")
    a, b = datasets[a_name], datasets[b_name]
    stacking = [e for e in plan.entries if e.set_id in ("B", "C", "E")]
    if stacking:
        _require_dev(a, b)
    for split in SPLITS:
        _check_aligned(a.split(split), b.split(split), split)
    ab = feature_fusion(a, b)

    predictions, fitted, cache = {}, {}, {}
    for t in TARGETS:
        uni = {}
        for m in (a, b):
            name = f"unimodal_{m.modality}_{t}"
            fitted[name] = fit_entry(plan, name, m.train + m.development, "train+development", log)
            _record(log, "predict", name, "test", len(m.test))
            uni[m.modality] = fitted[name].predict(m.test)
            predictions[(f"unimodal_{m.modality}", t)] = uni[m.modality]

        name = f"feature_fusion_{t}"
        fitted[name] = fit_entry(plan, name, ab.train + ab.development, "train+development", log)
        _record(log, "predict", name, "test", len(ab.test))
        predictions[("feature_fusion", t)] = fitted[name].predict(ab.test)

        predictions[("averaged_prediction_fusion", t)] = averaged_prediction_fusion([uni[a_name], uni[b_name]])

        stage1, stage2, pred = model_fusion(a, b, t, plan, log, cache)
        fitted.update({f.name: f for f in stage1.values()})
        fitted[stage2.name] = stage2
        predictions[("model_fusion", t)] = pred

        models, pred = output_associative_fusion(a, b, t, plan, log, cache)
        fitted.update(models)
        predictions[("output_associative_fusion", t)] = pred

    report = build_report(plan.modalities, predictions, a.test)
    report.validation = {k: v.validation for k, v in fitted.items()}
    report.models = {k: v.model for k, v in fitted.items()}
    return report


def _fmt(x):
    return repr(float(x))


def write_report(report, out_dir):
    """report.csv, validation.csv and trajectories/<system>_<dimension>.csv."""
    out = Path(out_dir)
    (out / "trajectories").mkdir(parents=True, exist_ok=True)
    with open(out / "report.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["system", "dimension", "r", "ccc"])
        for system, dim, r, c in report.cells:
            w.writerow([system, dim, _fmt(r), _fmt(c)])
    with open(out / "validation.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "r", "ccc"])
        for name in sorted(report.validation):
            rep = report.validation[name]
            w.writerow([name, _fmt(rep.r) if rep else "nan", _fmt(rep.ccc) if rep else "nan"])
    for (system, dim), (keys, pred, truth) in report.trajectories.items():
        with open(out / "trajectories" / f"{system}_{dim}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["recording_id", "segment_index", "prediction", "ground_truth"])
            for (rid, idx), p, g in zip(keys, pred, truth):
                w.writerow([rid, idx, _fmt(p), _fmt(g)])
    return out / "report.csv"


def format_table(report):
    """Text table in the usual layout: one row per system, r/CCC per dimension."""
    lines = [f"{'system':<28}{'arousal r':>11}{'arousal CCC':>13}{'valence r':>11}{'valence CCC':>13}"]
    for system in report.systems:
        ra, ca = report.cell(system, "arousal")
        rv, cv = report.cell(system, "valence")
        lines.append(f"{system:<28}{ra:>11.3f}{ca:>13.3f}{rv:>11.3f}{cv:>13.3f}")
    return "\n".join(lines)
