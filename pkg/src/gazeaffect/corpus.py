"""On-disk corpus layout shared by the command line and the tests.

::

    <root>/<split>/gaze/<recording>.csv              raw gaze stream
    <root>/<split>/features/<modality>/<recording>.csv
    <root>/<split>/labels/<recording>.csv

with split in {train, development, test}. Gaze features are extracted from
``gaze/`` on load when ``features/gaze/`` is absent.
"""
from pathlib import Path

import numpy as np

from .errors import PlanIncomplete
from .fusion import SPLITS, ModalityDataset
from .gaze_features import GazeFeatureConfig, extract_recording
from .ingest import (
    parse_feature_csv,
    parse_gaze_csv,
    parse_label_csv,
    write_feature_csv,
    write_gaze_csv,
    write_label_csv,
)
from .segmentation import DEFAULT_HOP, DEFAULT_WINDOW, Segment, align, make_windows


def split_recordings(n, parts=3):
    """Contiguous near-equal partition sizes, larger parts first."""
    base, extra = divmod(n, parts)
    return [base + (1 if k < extra else 0) for k in range(parts)]


def write_corpus(corpus, root):
    """Write a SyntheticCorpus as train/development/test thirds."""
    root = Path(root)
    sizes = split_recordings(len(corpus.recordings))
    bounds = np.cumsum([0, *sizes])
    written = []
    for split, lo, hi in zip(SPLITS, bounds[:-1], bounds[1:]):
        for k in range(lo, hi):
            rec = corpus.recordings[k]
            rid = rec.recording_id
            write_gaze_csv(rec, root / split / "gaze" / f"{rid}.csv")
            write_feature_csv(corpus.speech[k], root / split / "features" / "speech" / f"{rid}.csv")
            write_label_csv(corpus.labels[k], root / split / "labels" / f"{rid}.csv")
            written.append((split, rid))
    return written


def _segments(rid, n, window, hop):
    return [Segment(rid, k, k * hop, k * hop + window) for k in range(n)]


def extract_dir(gaze_dir, config=GazeFeatureConfig(), window=DEFAULT_WINDOW, hop=DEFAULT_HOP):
    """{recording_id: gaze ModalityFeatureFile} for every CSV in a directory."""
    out = {}
    for path in sorted(Path(gaze_dir).glob("*.csv")):
        rec = parse_gaze_csv(path)
        out[rec.recording_id] = extract_recording(rec, make_windows(rec.duration, window, hop, rec.recording_id),
                                                  config)
    return out


def load_split(split_dir, modality, config=GazeFeatureConfig(), window=DEFAULT_WINDOW, hop=DEFAULT_HOP):
    """LabeledInstances of one modality for every labelled recording in a split."""
    split_dir = Path(split_dir)
    label_dir = split_dir / "labels"
    feat_dir = split_dir / "features" / modality
    if not label_dir.is_dir():
        return []
    if feat_dir.is_dir():
        features = {p.stem: parse_feature_csv(p, modality) for p in sorted(feat_dir.glob("*.csv"))}
    elif modality == "gaze" and (split_dir / "gaze").is_dir():
        features = extract_dir(split_dir / "gaze", config, window, hop)
    else:
        raise PlanIncomplete(f"no {modality} features under {split_dir}")
    instances = []
    for path in sorted(label_dir.glob("*.csv")):
        rid = path.stem
        if rid not in features:
            raise PlanIncomplete(f"{modality} features missing for recording {rid!r} in {split_dir}")
        feats = features[rid]
        instances += align(feats, parse_label_csv(path), segments=_segments(rid, len(feats), window, hop))
    return instances


def load_datasets(root, modalities=("speech", "gaze"), config=GazeFeatureConfig(),
                  window=DEFAULT_WINDOW, hop=DEFAULT_HOP):
    root = Path(root)
    return {
        m: ModalityDataset(m, *(load_split(root / s, m, config, window, hop) for s in SPLITS))
        for m in modalities
    }


def datasets_from_corpus(corpus, window=DEFAULT_WINDOW, hop=DEFAULT_HOP):
    """In-memory speech and gaze ModalityDatasets split into thirds like write_corpus."""
    sizes = split_recordings(len(corpus.recordings))
    bounds = np.cumsum([0, *sizes])
    parts = {"speech": {}, "gaze": {}}
    for split, lo, hi in zip(SPLITS, bounds[:-1], bounds[1:]):
        for modality, files in (("speech", corpus.speech), ("gaze", corpus.gaze_features)):
            rows = []
            for k in range(lo, hi):
                rid = corpus.recordings[k].recording_id
                rows += align(files[k], corpus.labels[k], segments=_segments(rid, len(files[k]), window, hop))
            parts[modality][split] = rows
    return {m: ModalityDataset(m, **p) for m, p in parts.items()}
