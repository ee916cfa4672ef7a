"""
Speech and gaze fusion on a synthetic corpus
============================================

Arousal is driven mostly by speech features and valence mostly by gaze
features. The experiment trains both unimodal baselines and the four fusion
systems, then scores them on the held-out test recordings.
"""

from gazeaffect import default_plan, run_experiment, synth_corpus
from gazeaffect.corpus import datasets_from_corpus
from gazeaffect.fusion import TUNED_C, format_table

corpus = synth_corpus(seed=3, n_recordings=18, duration=60.0, zero_valence_fraction=0.1)
data = datasets_from_corpus(corpus)
for name, d in data.items():
    print(f"{name}: {d.dimension} features, {len(d.train)}/{len(d.development)}/{len(d.test)} segments")

# one C for every model; the tuned per-model values are the default plan
plan = default_plan(c_values={k.format(a="speech", b="gaze"): 1.0 for k in TUNED_C})

log = []
report = run_experiment(plan, data, log)
print(format_table(report))

# stage-2 models only ever see predictions made on the development split
for entry in log:
    if entry["action"] == "fit" and "final" in entry["model"]:
        print(f"{entry['model']:<36} fit on {entry['rows']} {entry['split']} {entry['source']}")
