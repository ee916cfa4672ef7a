"""The 31-feature eye-gaze vector computed per analysis window.

Layout (index: name)::

     0 approach_ratio           1 mean_approach_time_ms
     2 mean_scan_path_len       3 sd_scan_path_len
     4-15  x block              16-27 y block
    28 mean_close_run          29 sd_close_run          30 skew_close_run

Each axis block holds mean, iqr_q1_q2, iqr_q2_q3, sd, skewness, psd_band_1..5,
zone_sd_mean, zone_sd_sd.

Only frames flagged valid enter any statistic. A window with fewer than two
valid frames gives the all-zero vector. A window where gaze never moves and
the eyes stay open gives zeros everywhere except the two means (indices 4 and
16), which equal the fixed gaze point.
"""
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import SegmentOutOfRange
from .ingest import ModalityFeatureFile

N_FEATURES = 31

_AXIS_FIELDS = (
    "mean", "iqr_q1_q2", "iqr_q2_q3", "sd", "skewness",
    "psd_band_1", "psd_band_2", "psd_band_3", "psd_band_4", "psd_band_5",
    "zone_sd_mean", "zone_sd_sd",
)
FEATURE_NAMES = (
    "approach_ratio", "mean_approach_time_ms", "mean_scan_path_len", "sd_scan_path_len",
    *(f"x_{f}" for f in _AXIS_FIELDS),
    *(f"y_{f}" for f in _AXIS_FIELDS),
    "mean_close_run", "sd_close_run", "skew_close_run",
)
COLUMN_NAMES = tuple(f"gf{i:02d}" for i in range(N_FEATURES))

# central moment below which a distribution is treated as flat
_FLAT = 1e-12


@dataclass(frozen=True)
class GazeFeatureConfig:
    reference_point: tuple = (0.0, 0.0)
    closure_threshold: float = 0.2
    dispersion_threshold: float = 0.05
    min_fixation_duration: float = 0.10
    zone_grid: tuple = (3, 3)  # rows (y), cols (x)
    zone_range: tuple = ((-1.0, 1.0), (-1.0, 1.0))  # (x range, y range)
    psd_bands: tuple = ((0.011, 0.011), (0.022, 0.022), (0.033, 0.044), (0.055, 0.066), (0.077, 0.133))
    psd_resolution: float = 0.011

    def __post_init__(self):
        if not (self.closure_threshold > 0 and self.dispersion_threshold > 0
                and self.min_fixation_duration > 0 and self.psd_resolution > 0):
            raise ValueError("thresholds and resolution must be positive")
        if len(self.zone_grid) != 2 or min(self.zone_grid) < 1:
            raise ValueError("zone_grid needs two dimensions >= 1")
        for lo, hi in self.zone_range:
            if not hi > lo:
                raise ValueError("zone_range needs min < max on each axis")
        prev_hi = -math.inf
        for lo, hi in self.psd_bands:
            if not (0 <= lo <= hi) or lo <= prev_hi:
                raise ValueError("psd_bands must be ascending and non-overlapping")
            prev_hi = hi

    def replace(self, **changes):
        return GazeFeatureConfig(**{**self.__dict__, **changes})


@dataclass(frozen=True)
class Fixation:
    centroid: tuple
    start: float
    end: float

    @property
    def duration(self):
        return self.end - self.start


def _runs(flags):
    """Lengths of maximal runs of True."""
    flags = np.asarray(flags, dtype=bool)
    if flags.size == 0:
        return np.zeros(0, dtype=int)
    padded = np.concatenate(([False], flags, [False])).astype(np.int8)
    edges = np.diff(padded)
    return np.flatnonzero(edges == -1) - np.flatnonzero(edges == 1)


def _mean_sd_skew(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0, 0.0, 0.0
    mean = float(values.mean())
    dev = values - mean
    m2 = float(np.mean(dev * dev))
    if m2 < _FLAT:
        return mean, float(math.sqrt(max(m2, 0.0))), 0.0
    m3 = float(np.mean(dev * dev * dev))
    return mean, math.sqrt(m2), m3 / m2 ** 1.5


def approach_features(x, y, frame_rate, config=GazeFeatureConfig()):
    """(approach_ratio, mean_approach_time_ms).

    A frame approaches when its distance to the reference point is smaller
    than the previous frame's. Approach events are maximal runs of such frames.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        return 0.0, 0.0
    rx, ry = config.reference_point
    d = np.hypot(x - rx, y - ry)
    flags = d[1:] < d[:-1]
    ratio = float(flags.sum()) / flags.size
    runs = _runs(flags)
    if runs.size == 0:
        return ratio, 0.0
    return ratio, float(runs.mean()) * 1000.0 / frame_rate


def detect_fixations(t, x, y, frame_rate, config=GazeFeatureConfig()):
    """Dispersion-threshold fixation identification.

    Starting at frame i, the window grows while (max_x - min_x) + (max_y - min_y)
    stays within the threshold. A window lasting at least the minimum duration
    (frame count / frame_rate) becomes a fixation and scanning resumes after it;
    otherwise the start moves forward one frame.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    limit = config.dispersion_threshold
    min_frames = config.min_fixation_duration * frame_rate - 1e-9
    fixations = []
    i = 0
    while i < n:
        xmin = xmax = x[i]
        ymin = ymax = y[i]
        j = i
        while j + 1 < n:
            nx, ny = x[j + 1], y[j + 1]
            if (max(xmax, nx) - min(xmin, nx)) + (max(ymax, ny) - min(ymin, ny)) > limit:
                break
            xmin, xmax = min(xmin, nx), max(xmax, nx)
            ymin, ymax = min(ymin, ny), max(ymax, ny)
            j += 1
        if j - i + 1 >= min_frames:
            centroid = (float(x[i:j + 1].mean()), float(y[i:j + 1].mean()))
            fixations.append(Fixation(centroid, float(t[i]), float(t[j]) + 1.0 / frame_rate))
            i = j + 1
        else:
            i += 1
    return fixations


def scan_path_features(fixations):
    """(mean, population sd) of distances between consecutive fixation centroids."""
    if len(fixations) < 2:
        return 0.0, 0.0
    c = np.array([f.centroid for f in fixations], dtype=float)
    lengths = np.hypot(*np.diff(c, axis=0).T)
    return float(lengths.mean()), float(lengths.std())


def coordinate_stats(values):
    """(mean, Q2 - Q1, Q3 - Q2, population sd, skewness g1).

    Quantiles interpolate linearly at rank (n - 1) * p of the sorted values.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.0, 0.0, 0.0, 0.0, 0.0
    q1, q2, q3 = np.quantile(values, [0.25, 0.5, 0.75], method="linear")
    mean, sd, skew = _mean_sd_skew(values)
    return mean, float(q2 - q1), float(q3 - q2), sd, skew


def psd_length(n, frame_rate, resolution):
    """FFT length: smallest power of two giving bin spacing <= resolution and >= n."""
    need = max(n, math.ceil(frame_rate / resolution - 1e-9))
    return 1 << max(0, (need - 1).bit_length())


def psd_features(values, frame_rate, config=GazeFeatureConfig()):
    """Periodogram energy in each configured band.

    The mean-removed signal is zero padded to ``psd_length``; the periodogram is
    |DFT[k]|^2 / (n * frame_rate) on the one-sided bins. A band (lo, hi) sums
    every bin whose frequency lies in [lo, hi]; a band with lo == hi takes the
    single nearest bin.
    """
    values = np.asarray(values, dtype=float)
    n_bands = len(config.psd_bands)
    if values.size < 2:
        return (0.0,) * n_bands
    n = values.size
    size = psd_length(n, frame_rate, config.psd_resolution)
    spectrum = np.fft.rfft(values - values.mean(), n=size)
    power = (spectrum.real ** 2 + spectrum.imag ** 2) / (n * frame_rate)
    freqs = np.arange(power.size) * (frame_rate / size)
    out = []
    for lo, hi in config.psd_bands:
        if lo == hi:
            k = int(round(lo * size / frame_rate))
            out.append(float(power[k]) if k < power.size else 0.0)
        else:
            out.append(float(power[(freqs >= lo) & (freqs <= hi)].sum()))
    return tuple(out)


def _zone_ids(x, y, config):
    rows, cols = config.zone_grid
    (xlo, xhi), (ylo, yhi) = config.zone_range
    cx = np.clip(np.floor((x - xlo) / (xhi - xlo) * cols), 0, cols - 1).astype(int)
    cy = np.clip(np.floor((y - ylo) / (yhi - ylo) * rows), 0, rows - 1).astype(int)
    return cy * cols + cx


def zone_features(x, y, axis, config=GazeFeatureConfig()):
    """(mean, population sd) over grid cells of the per-cell sd of one axis.

    Samples outside the configured range are clamped into the edge cells.
    Only cells with at least two samples count.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        return 0.0, 0.0
    coord = x if axis == "x" else y
    zones = _zone_ids(x, y, config)
    sds = [float(coord[zones == z].std()) for z in np.unique(zones) if np.count_nonzero(zones == z) >= 2]
    if not sds:
        return 0.0, 0.0
    if len(sds) == 1:
        return sds[0], 0.0
    sds = np.array(sds)
    return float(sds.mean()), float(sds.std())


def closure_features(eye_openness, config=GazeFeatureConfig()):
    """(mean, population sd, skewness) of eye-closure run lengths in frames."""
    closed = np.asarray(eye_openness, dtype=float) < config.closure_threshold
    runs = _runs(closed)
    if runs.size == 0:
        return 0.0, 0.0, 0.0
    return _mean_sd_skew(runs.astype(float))


def _axis_block(coord, x, y, axis, frame_rate, config):
    return (
        *coordinate_stats(coord),
        *psd_features(coord, frame_rate, config),
        *zone_features(x, y, axis, config),
    )


def segment_frames(recording, segment):
    """Boolean mask of valid frames whose time since recording start lies in [start, end)."""
    if len(recording) == 0 or segment.start < -1e-9 or segment.end > recording.duration + 1e-9:
        raise SegmentOutOfRange(
            f"segment [{segment.start:g}, {segment.end:g}) outside recording "
            f"{recording.recording_id!r} of {recording.duration:g} s"
        )
    rel = recording.timestamp - recording.timestamp[0]
    return (rel >= segment.start - 1e-9) & (rel < segment.end - 1e-9) & recording.valid


def features_from_frames(t, x, y, openness, frame_rate, config=GazeFeatureConfig()):
    """Assemble the 31-vector from the valid frames of one window."""
    t, x, y, openness = (np.asarray(a, dtype=float) for a in (t, x, y, openness))
    if x.size < 2:
        return np.zeros(N_FEATURES)
    fixations = detect_fixations(t, x, y, frame_rate, config)
    vec = (
        *approach_features(x, y, frame_rate, config),
        *scan_path_features(fixations),
        *_axis_block(x, x, y, "x", frame_rate, config),
        *_axis_block(y, x, y, "y", frame_rate, config),
        *closure_features(openness, config),
    )
    return np.array(vec, dtype=float)


def extract_gaze_vector(recording, segment, config=GazeFeatureConfig()):
    mask = segment_frames(recording, segment)
    if np.count_nonzero(mask) < 2:
        warnings.warn(
            f"segment {segment.index} of {recording.recording_id!r} has fewer than 2 valid frames; "
            "returning zeros"
        )
        return np.zeros(N_FEATURES)
    return features_from_frames(
        recording.timestamp[mask], recording.gaze_x[mask], recording.gaze_y[mask],
        recording.eye_openness[mask], recording.frame_rate, config,
    )


def extract_recording(recording, segments, config=GazeFeatureConfig()):
    """Feature file (modality "gaze", columns gf00..gf30) for every segment."""
    rows = [extract_gaze_vector(recording, seg, config) for seg in segments]
    values = np.array(rows, dtype=float).reshape(len(rows), N_FEATURES)
    return ModalityFeatureFile("gaze", values, COLUMN_NAMES)
