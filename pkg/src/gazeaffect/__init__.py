"""Continuous arousal/valence prediction from eye gaze and speech features."""
from .errors import GazeAffectError
from .fusion import (
    ExperimentPlan,
    ModalityDataset,
    averaged_prediction_fusion,
    default_plan,
    feature_fusion,
    model_fusion,
    output_associative_fusion,
    run_experiment,
)
from .gaze_features import FEATURE_NAMES, GazeFeatureConfig, extract_gaze_vector, extract_recording
from .ingest import Recording, parse_feature_csv, parse_gaze_csv, parse_label_csv, synth_corpus
from .metrics import ccc, pearson
from .segmentation import LabeledInstance, Segment, align, filter_zero_valence, make_windows
from .svr import SvrHyperparams, SvrModel, predict, train

__version__ = "0.1.0"
