"""Harvest labelled candidates from phantoms and train the 15-10-2 network.

    python demos/train_classifier.py [model.json]

Uses thick slices so it finishes in well under a minute.
"""
import sys

import numpy as np

from oralcad.cb_pipeline import build_training_pool
from oralcad.mlp import TrainingConfig, accuracy, classify, save_model, train
from oralcad.phantom import generate_phantom, random_spec
from oralcad.volume_io import VoxelSpacing

thick = VoxelSpacing(0.2, 0.5)
cases = [generate_phantom(random_spec(s, n_cb=int(s < 3), n_cavities=2, n_slices=40, spacing=thick))
         for s in range(6)]
pool = build_training_pool(cases)
n_lesion = sum(s.label == "lesion" for s in pool)
print(f"pool: {len(pool)} samples, {n_lesion} lesion, {len(pool) - n_lesion} normal")

model = train(pool, TrainingConfig(epochs=200, seed=0))
print("training accuracy %.3f" % accuracy(model, pool))

# scores for a few samples of each class
rng = np.random.default_rng(0)
for s in rng.choice(len(pool), 6, replace=False):
    label, score = classify(model, pool[s].features)
    print(f"  true {pool[s].label:7s} predicted {label:7s} score {score:.3f}")

if len(sys.argv) > 1:
    save_model(model, sys.argv[1])
    print("saved", sys.argv[1])
