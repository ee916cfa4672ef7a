"""
From raw gaze samples to 31 features per window
===============================================

A synthetic recording is cut into 3 s windows with a 2 s hop and each window
is summarized by the 31-value gaze vector.
"""

import numpy as np

from gazeaffect import FEATURE_NAMES, GazeFeatureConfig, make_windows, synth_corpus
from gazeaffect.gaze_features import detect_fixations, extract_gaze_vector, psd_features

# one 20 second recording at 30 Hz
rec = synth_corpus(seed=7, n_recordings=1, duration=20.0).recordings[0]
print(f"{rec.recording_id}: {len(rec.timestamp)} frames, {rec.duration:.1f} s")

windows = make_windows(rec.duration, window=3.0, hop=2.0, recording_id=rec.recording_id)
print(f"{len(windows)} windows, the last one covers [{windows[-1].start}, {windows[-1].end}) s")

# the first window, feature by feature
cfg = GazeFeatureConfig()
v = extract_gaze_vector(rec, windows[0], cfg)
for name, value in zip(FEATURE_NAMES, v):
    print(f"  {name:<24}{value: .5f}")

# fixations are found with a dispersion threshold on x + y extent
first = (rec.timestamp - rec.timestamp[0] < 3.0) & rec.valid
fix = detect_fixations(rec.timestamp[first], rec.gaze_x[first], rec.gaze_y[first], rec.frame_rate, cfg)
print(f"{len(fix)} fixations in the first window; longest {max(f.duration for f in fix):.2f} s")

# band powers of a slow oscillation land in the top band (0.08-0.5 Hz)
t = np.arange(2700) / 30.0
bands = np.array(psd_features(np.sin(2 * np.pi * 0.1 * t), 30.0))
print("band share of a 0.1 Hz sine:", np.round(bands / bands.sum(), 4))
