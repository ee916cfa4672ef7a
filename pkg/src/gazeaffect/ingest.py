"""Reading and writing the CSV formats, plus a seeded synthetic corpus.

Formats (UTF-8, ``.`` decimal separator, header row first):

* gaze:     ``timestamp,gaze_x,gaze_y,eye_openness,valid`` with valid in {0, 1}
* features: ``segment_index,f0,...,f{d-1}`` (any column names after the first)
* labels:   ``segment_index,arousal,valence``

Floats are written with ``repr`` so a write/parse cycle is bit exact.
"""
import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateSegmentIndex,
    EmptyFile,
    GapInIndices,
    MalformedFile,
    MalformedValue,
    MissingColumn,
    NonFiniteValue,
    NonMonotoneTimestamp,
    RaggedRow,
)

log = logging.getLogger(__name__)

GAZE_COLUMNS = ("timestamp", "gaze_x", "gaze_y", "eye_openness", "valid")
LABEL_COLUMNS = ("segment_index", "arousal", "valence")


@dataclass(frozen=True)
class GazeFrame:
    timestamp: float
    gaze_x: float
    gaze_y: float
    eye_openness: float
    valid: bool = True


@dataclass(frozen=True, eq=False)
class Recording:
    """One gaze stream, stored column-wise."""

    recording_id: str
    frame_rate: float
    timestamp: np.ndarray
    gaze_x: np.ndarray
    gaze_y: np.ndarray
    eye_openness: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if not (math.isfinite(self.frame_rate) and self.frame_rate > 0):
            raise ValueError(f"frame_rate must be finite and positive, got {self.frame_rate}")
        for name in ("timestamp", "gaze_x", "gaze_y", "eye_openness", "valid"):
            dtype = bool if name == "valid" else float
            arr = np.array(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.timestamp.size
        if any(getattr(self, c).shape != (n,) for c in GAZE_COLUMNS):
            raise ValueError("recording columns differ in length")

    @classmethod
    def from_frames(cls, recording_id, frame_rate, frames):
        cols = list(zip(*[(f.timestamp, f.gaze_x, f.gaze_y, f.eye_openness, f.valid) for f in frames])) or [()] * 5
        return cls(recording_id, frame_rate, *cols)

    @property
    def frames(self):
        return [
            GazeFrame(float(t), float(x), float(y), float(o), bool(v))
            for t, x, y, o, v in zip(self.timestamp, self.gaze_x, self.gaze_y, self.eye_openness, self.valid)
        ]

    def __len__(self):
        return int(self.timestamp.size)

    @property
    def duration(self):
        """Span covered by the frames, counting the last frame's period."""
        if len(self) == 0:
            return 0.0
        return float(self.timestamp[-1] - self.timestamp[0]) + 1.0 / self.frame_rate

    def __eq__(self, other):
        if not isinstance(other, Recording):
            return NotImplemented
        return (
            self.recording_id == other.recording_id
            and self.frame_rate == other.frame_rate
            and all(np.array_equal(getattr(self, c), getattr(other, c), equal_nan=c != "valid") for c in GAZE_COLUMNS)
        )


@dataclass(frozen=True, eq=False)
class ModalityFeatureFile:
    """Per-segment feature matrix for one modality; row i is segment i."""

    modality: str
    values: np.ndarray
    columns: tuple = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("feature values must be a 2-D array")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if not self.columns:
            object.__setattr__(self, "columns", tuple(f"f{i}" for i in range(values.shape[1])))
        if len(self.columns) != values.shape[1]:
            raise ValueError("column names do not match feature dimension")

    @property
    def dimension(self):
        return self.values.shape[1]

    @property
    def segment_index(self):
        return np.arange(self.values.shape[0])

    @property
    def rows(self):
        return [(i, tuple(float(v) for v in row)) for i, row in enumerate(self.values)]

    def __len__(self):
        return self.values.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ModalityFeatureFile):
            return NotImplemented
        return (
            self.modality == other.modality
            and self.columns == other.columns
            and self.values.shape == other.values.shape
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class LabelFile:
    arousal: np.ndarray
    valence: np.ndarray

    def __post_init__(self):
        for name in ("arousal", "valence"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.arousal.shape != self.valence.shape:
            raise ValueError("arousal and valence differ in length")

    @property
    def rows(self):
        return [(i, float(a), float(v)) for i, (a, v) in enumerate(zip(self.arousal, self.valence))]

    def __len__(self):
        return self.arousal.size

    def __eq__(self, other):
        if not isinstance(other, LabelFile):
            return NotImplemented
        return np.array_equal(self.arousal, other.arousal) and np.array_equal(self.valence, other.valence)


# ---------------------------------------------------------------------------
# parsing

def _read_rows(path):
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise MalformedFile(f"not valid UTF-8: {exc.reason}", path) from None
    try:
        rows = [r for r in csv.reader(io.StringIO(text, newline="")) if r and any(c.strip() for c in r)]
    except csv.Error as exc:
        raise MalformedFile(f"unreadable CSV: {exc}", path) from None
    if not rows:
        raise EmptyFile("file has no header", path)
    header = [c.strip() for c in rows[0]]
    return path, header, rows[1:]


def _float(cell, path, row, column, finite=True):
    try:
        value = float(cell)
    except ValueError:
        raise MalformedValue(f"column {column!r}: cannot parse {cell.strip()!r} as a number", path, row) from None
    if finite and not math.isfinite(value):
        raise NonFiniteValue(f"column {column!r} is not finite", path, row)
    return value


def _segment_index(cell, path, row):
    try:
        value = int(cell.strip())
    except ValueError:
        raise MalformedValue(f"segment_index {cell.strip()!r} is not an integer", path, row) from None
    if value < 0:
        raise MalformedValue("segment_index must be >= 0", path, row)
    return value


def _check_contiguous(indices, path):
    seen = set()
    for i, (idx, row) in enumerate(indices):
        if idx in seen:
            raise DuplicateSegmentIndex(f"segment_index {idx} repeated", path, row)
        seen.add(idx)
    order = sorted(seen)
    for expect, got in enumerate(order):
        if expect != got:
            raise GapInIndices(f"segment_index {expect} missing", path)


def parse_gaze_csv(path, recording_id=None, frame_rate=None):
    """Parse one gaze recording.

    ``frame_rate`` defaults to the reciprocal of the median frame interval,
    rounded to 1e-6 Hz. A declared rate more than 10% away from that estimate
    only warns.
    """
    path, header, body = _read_rows(path)
    missing = [c for c in GAZE_COLUMNS if c not in header]
    if missing:
        raise MissingColumn(f"missing column(s): {', '.join(missing)}", path)
    if not body:
        raise EmptyFile("no data rows", path)
    pos = [header.index(c) for c in GAZE_COLUMNS]
    cols = [[] for _ in GAZE_COLUMNS]
    prev_t = None
    for k, raw in enumerate(body):
        row = k + 1
        if len(raw) != len(header):
            raise RaggedRow(f"expected {len(header)} fields, got {len(raw)}", path, row)
        flag = raw[pos[4]].strip()
        if flag not in ("0", "1"):
            raise MalformedValue(f"valid must be 0 or 1, got {flag!r}", path, row)
        valid = flag == "1"
        t = _float(raw[pos[0]], path, row, "timestamp")
        if prev_t is not None and t <= prev_t:
            raise NonMonotoneTimestamp(f"timestamp {t!r} does not increase", path, row)
        prev_t = t
        values = [_float(raw[p], path, row, c, finite=valid) for p, c in zip(pos[1:4], GAZE_COLUMNS[1:4])]
        if valid and values[2] < 0:
            raise MalformedValue("eye_openness must be >= 0", path, row)
        for col, v in zip(cols, [t, *values, valid]):
            col.append(v)

    timestamps = np.array(cols[0])
    estimate = None
    if timestamps.size >= 2:
        estimate = round(1.0 / float(np.median(np.diff(timestamps))), 6)
    if frame_rate is None:
        if estimate is None or not math.isfinite(estimate) or estimate <= 0:
            raise MalformedFile("cannot infer frame rate from fewer than 2 frames; pass frame_rate", path)
        frame_rate = estimate
    elif estimate is not None and abs(frame_rate - estimate) > 0.1 * estimate:
        warnings.warn(f"{path}: declared frame rate {frame_rate} Hz differs from observed {estimate} Hz by >10%")
    if recording_id is None:
        recording_id = path.stem
    return Recording(recording_id, float(frame_rate), *cols)


def parse_feature_csv(path, modality=None):
    path, header, body = _read_rows(path)
    if header[0] != "segment_index":
        raise MissingColumn("first column must be segment_index", path)
    if len(header) < 2:
        raise MissingColumn("no feature columns", path)
    if len(set(header)) != len(header):
        raise MalformedFile("duplicate column names", path)
    width = len(header)
    indexed = []
    for k, raw in enumerate(body):
        row = k + 1
        if len(raw) != width:
            raise RaggedRow(f"expected {width - 1} feature values, got {len(raw) - 1}", path, row)
        idx = _segment_index(raw[0], path, row)
        values = [_float(c, path, row, header[j + 1]) for j, c in enumerate(raw[1:])]
        indexed.append((idx, row, values))
    _check_contiguous([(i, r) for i, r, _ in indexed], path)
    indexed.sort(key=lambda t: t[0])
    values = np.array([v for _, _, v in indexed], dtype=float).reshape(len(indexed), width - 1)
    return ModalityFeatureFile(modality or path.parent.name, values, tuple(header[1:]))


def parse_label_csv(path):
    path, header, body = _read_rows(path)
    missing = [c for c in LABEL_COLUMNS if c not in header]
    if missing:
        raise MissingColumn(f"missing column(s): {', '.join(missing)}", path)
    pos = [header.index(c) for c in LABEL_COLUMNS]
    indexed = []
    for k, raw in enumerate(body):
        row = k + 1
        if len(raw) != len(header):
            raise RaggedRow(f"expected {len(header)} fields, got {len(raw)}", path, row)
        idx = _segment_index(raw[pos[0]], path, row)
        a = _float(raw[pos[1]], path, row, "arousal")
        v = _float(raw[pos[2]], path, row, "valence")
        indexed.append((idx, row, a, v))
    _check_contiguous([(i, r) for i, r, _, _ in indexed], path)
    indexed.sort(key=lambda t: t[0])
    return LabelFile([a for *_, a, _ in indexed], [v for *_, v in indexed])


# ---------------------------------------------------------------------------
# writing

def _fmt(x):
    return repr(float(x))


def write_gaze_csv(recording, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GAZE_COLUMNS)
        for t, x, y, o, v in zip(recording.timestamp, recording.gaze_x, recording.gaze_y,
                                 recording.eye_openness, recording.valid):
            w.writerow([_fmt(t), _fmt(x), _fmt(y), _fmt(o), int(v)])
    return path


def write_feature_csv(features, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment_index", *features.columns])
        for i, row in enumerate(features.values):
            w.writerow([i, *map(_fmt, row)])
    return path


def write_label_csv(labels, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_COLUMNS)
        for i, a, v in labels.rows:
            w.writerow([i, _fmt(a), _fmt(v)])
    return path


# ---------------------------------------------------------------------------
# synthetic corpus

# Label = intercept + weights . (selected features) + N(0, noise_sd).
# Speech carries most of the arousal signal, gaze most of the valence signal.
# Gaze indices refer to the 31-feature layout (4 = mean x, 16 = mean y).
AROUSAL_WEIGHTS = {"speech": {0: 0.25, 1: 0.15, 2: -0.10}, "gaze": {4: 0.12}}
VALENCE_WEIGHTS = {"speech": {3: 0.05}, "gaze": {16: 0.6, 4: 0.2}}


@dataclass(frozen=True)
class SyntheticCorpus:
    recordings: list
    speech: list
    labels: list
    gaze_features: list = field(repr=False, default_factory=list)


def _gaze_walk(rng, n, frame_rate):
    """Bounded random walk of fixation centres with eye-closure runs."""
    x = np.empty(n)
    y = np.empty(n)
    drift = rng.normal(0.0, 0.35, size=2)
    cx, cy = np.clip(drift, -0.9, 0.9)
    k = 0
    while k < n:
        hold = 1 + int(rng.geometric(1.0 / max(1.0, 0.3 * frame_rate)))
        stop = min(n, k + hold)
        x[k:stop] = cx + rng.normal(0.0, 0.004, stop - k)
        y[k:stop] = cy + rng.normal(0.0, 0.004, stop - k)
        k = stop
        # saccade: jump, pulled back towards the recording's own drift point
        cx = float(np.clip(cx + 0.3 * (drift[0] - cx) + rng.normal(0.0, 0.15), -1.0, 1.0))
        cy = float(np.clip(cy + 0.3 * (drift[1] - cy) + rng.normal(0.0, 0.15), -1.0, 1.0))
    openness = np.clip(rng.normal(0.8, 0.05, n), 0.3, None)
    k = 0
    while k < n:
        if rng.random() < 0.3 / frame_rate:
            run = int(rng.integers(2, max(3, int(0.3 * frame_rate))))
            openness[k:k + run] = rng.uniform(0.0, 0.1)
            k += run
        k += 1
    valid = rng.random(n) >= 0.01
    return x, y, openness, valid


def synth_corpus(seed, n_recordings, duration, frame_rate=30.0, speech_dim=40, noise_sd=0.05,
                 window=3.0, hop=2.0, zero_valence_fraction=0.0, id_prefix="rec"):
    """Generate gaze recordings, per-segment speech features and labels.

    Labels are a fixed linear function of a few true speech features and of
    gaze features extracted from the generated recordings with the default
    extraction settings, plus Gaussian noise. ``zero_valence_fraction`` of the
    segments get their valence overwritten with exactly 0.0.
    """
    from .gaze_features import GazeFeatureConfig, extract_recording
    from .segmentation import make_windows

    if n_recordings <= 0 or duration <= 0 or frame_rate <= 0 or speech_dim <= 0:
        raise ValueError("counts, duration and frame rate must be positive")
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    if max(AROUSAL_WEIGHTS["speech"] | VALENCE_WEIGHTS["speech"]) >= speech_dim:
        raise ValueError(f"speech_dim must be >= {max(AROUSAL_WEIGHTS['speech'] | VALENCE_WEIGHTS['speech']) + 1}")

    children = np.random.SeedSequence(seed).spawn(n_recordings)
    config = GazeFeatureConfig()
    n_frames = int(round(duration * frame_rate))
    width = len(str(n_recordings - 1))
    recordings, speech, labels, gaze_feats = [], [], [], []
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        rid = f"{id_prefix}{r:0{width}d}"
        t = np.arange(n_frames) / frame_rate
        x, y, o, valid = _gaze_walk(rng, n_frames, frame_rate)
        x[~valid] = 0.0
        y[~valid] = 0.0
        o[~valid] = 0.0
        rec = Recording(rid, float(frame_rate), t, x, y, o, valid)
        segments = make_windows(rec.duration, window, hop, recording_id=rid)
        g = extract_recording(rec, segments, config)
        s = rng.normal(0.0, 1.0, size=(len(segments), speech_dim))
        a = _linear_label(AROUSAL_WEIGHTS, s, g)
        v = _linear_label(VALENCE_WEIGHTS, s, g)
        if noise_sd > 0:
            a = a + rng.normal(0.0, noise_sd, a.size)
            v = v + rng.normal(0.0, noise_sd, v.size)
        if zero_valence_fraction > 0:
            v[rng.random(v.size) < zero_valence_fraction] = 0.0
        recordings.append(rec)
        speech.append(ModalityFeatureFile("speech", s))
        gaze_feats.append(g)
        labels.append(LabelFile(a, v))
    return SyntheticCorpus(recordings, speech, labels, gaze_feats)


def _linear_label(weights, speech, gaze):
    out = np.zeros(speech.shape[0])
    for j, w in weights["speech"].items():
        out += w * speech[:, j]
    for j, w in weights["gaze"].items():
        out += w * gaze.values[:, j]
    return out
