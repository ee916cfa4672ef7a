"""Overlapping analysis windows, feature/label alignment, dataset splits."""
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CountMismatch, InvalidWindowing, TooFewRecordings

DEFAULT_WINDOW = 3.0
DEFAULT_OVERLAP = 1.0
DEFAULT_HOP = DEFAULT_WINDOW - DEFAULT_OVERLAP
ZERO_VALENCE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Segment:
    recording_id: str
    index: int
    start: float
    end: float


@dataclass(frozen=True, eq=False)
class LabeledInstance:
    segment: Segment
    features: np.ndarray
    arousal: float
    valence: float

    def __post_init__(self):
        f = np.array(self.features, dtype=float).ravel()
        f.setflags(write=False)
        object.__setattr__(self, "features", f)

    def target(self, name):
        if name == "arousal":
            return self.arousal
        if name == "valence":
            return self.valence
        raise ValueError(f"unknown target {name!r}")

    def with_features(self, features):
        return LabeledInstance(self.segment, features, self.arousal, self.valence)

    def __eq__(self, other):
        if not isinstance(other, LabeledInstance):
            return NotImplemented
        return (
            self.segment == other.segment
            and self.arousal == other.arousal
            and self.valence == other.valence
            and np.array_equal(self.features, other.features)
        )


def window_count(duration, window, hop):
    """Number of full windows: floor((T - w) / h) + 1, or 0 when T < w."""
    if duration < window:
        return 0
    return int(math.floor((duration - window) / hop + 1e-9)) + 1


def make_windows(recording_duration, window=DEFAULT_WINDOW, hop=DEFAULT_HOP, recording_id=""):
    """Segments [k*hop, k*hop + window) that fit inside the recording.

    A small slack (1e-9 s) absorbs float error in durations derived from
    frame counts, so 210 frames at 30 Hz count as exactly 7 s.
    """
    if not (window > 0 and 0 < hop <= window) or not all(map(math.isfinite, (window, hop))):
        raise InvalidWindowing(f"need window > 0 and 0 < hop <= window (window={window}, hop={hop})")
    n = window_count(recording_duration, window, hop)
    if n == 0:
        warnings.warn(f"recording {recording_id!r} ({recording_duration:g} s) is shorter than one {window:g} s window")
    return [Segment(recording_id, k, k * hop, k * hop + window) for k in range(n)]


def align(features, labels, recording_id="", segments=None):
    """Pair feature row i with label row i. Counts must match exactly."""
    m, n = len(features), len(labels)
    if m != n:
        raise CountMismatch(m, n)
    if segments is None:
        segments = [Segment(recording_id, i, i * DEFAULT_HOP, i * DEFAULT_HOP + DEFAULT_WINDOW) for i in range(m)]
    elif len(segments) != m:
        raise CountMismatch(m, len(segments))
    return [
        LabeledInstance(seg, row, float(a), float(v))
        for seg, row, a, v in zip(segments, features.values, labels.arousal, labels.valence)
    ]


def filter_zero_valence(instances, tolerance=ZERO_VALENCE_TOLERANCE):
    if tolerance < 0:
        raise ValueError("tolerance must be >= 0")
    return [inst for inst in instances if abs(inst.valence) > tolerance]


def split_train_validation(instances, fraction=0.66, seed=0):
    """Recording-level split: shuffle recording ids, first ceil(f*n) go to train."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    ids = sorted({inst.segment.recording_id for inst in instances})
    if len(ids) < 2:
        raise TooFewRecordings(f"need at least 2 recordings to split, got {len(ids)}")
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = min(len(ids) - 1, math.ceil(fraction * len(ids) - 1e-9))
    train_ids = {ids[i] for i in order[:n_train]}
    train = [inst for inst in instances if inst.segment.recording_id in train_ids]
    validation = [inst for inst in instances if inst.segment.recording_id not in train_ids]
    return train, validation
