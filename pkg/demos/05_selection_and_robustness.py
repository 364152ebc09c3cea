"""
Using the norm: sample selection and robustness
===============================================

Per class, train a feature map and read off each item's norm.  Then
(a) train a classifier on only the 10% most typical or most atypical items,
and (b) drop the 1% most atypical items and check the classifier's accuracy
under a one-step sign-gradient attack.  Both effects are small at this scale
and flip between seeds; the acceptance suite averages 300 per class over
three classifier seeds.

Run:  python3 demos/05_selection_and_robustness.py [n_per_class]   (default 150)
"""
import logging
import sys

import numpy as np

from hyperproto.data import synth_glyphs
from hyperproto.evaluate import SelectionSpec, evaluate_subset, select_per_class
from hyperproto.trainer import TrainConfig, per_class_features

logging.basicConfig(level=logging.WARNING)
npc = int(sys.argv[1]) if len(sys.argv) > 1 else 150

# one item in five is drawn in a minority writing style of its class
train = synth_glyphs(npc, seed=100, style_mix=0.2)
test = synth_glyphs(100, seed=200, style_mix=0.2)
feats = per_class_features(train, TrainConfig())

# %% (a) sample efficiency
for mode in ["typical", "atypical", "atypical_diverse"]:
    ids = select_per_class(feats, train.labels, SelectionSpec(0.1, mode))
    clean, _ = evaluate_subset(train, test, ids, seed=0)
    print(f"10% {mode:16s} -> test accuracy {clean:.3f}")

# %% (b) robustness after removing the most atypical items
drop = select_per_class(feats, train.labels, SelectionSpec(0.01, "atypical"))
keep = np.setdiff1d(np.arange(len(train)), drop)
for name, ids in [("all items", np.arange(len(train))), ("without top 1% atypical", keep)]:
    clean, adv = evaluate_subset(train, test, ids, seed=0)
    print(f"{name:24s} clean {clean:.3f}  FGSM(0.07) {adv:.3f}")
