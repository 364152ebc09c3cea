"""
Congealed images move towards the centre
========================================

Congealing aligns a stack of images so each sits closer to the stack mean,
which makes aligned images more prototypical by construction.  Mix some
aligned images back into the originals, train without labels, and see where
the two groups land.

Run:  python3 demos/04_congealed_emergence.py [n] [m]   (default 800 and 200)
"""
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.stats import mannwhitneyu

from hyperproto.congeal import CongealSpec, congeal_set
from hyperproto.data import make_congealed_dataset, synth_glyphs
from hyperproto.packing import PackingSpec, pack
from hyperproto.plot import disk_svg
from hyperproto.trainer import TrainConfig, hack_train

logging.basicConfig(level=logging.WARNING)
OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)
n = int(sys.argv[1]) if len(sys.argv) > 1 else 800
m = int(sys.argv[2]) if len(sys.argv) > 2 else 200

# %% One class of digit-like glyphs, aligned jointly
base = synth_glyphs(n, classes=[3], seed=0)
aligned = congeal_set(base.images(), CongealSpec())
print("stack variance per sweep:", [round(v, 2) for v in aligned.objective])
flat = aligned.images.reshape(n, -1)
print(f"mean distance to the mean image: {np.linalg.norm(base.x - base.x.mean(0), axis=1).mean():.3f}"
      f" -> {np.linalg.norm(flat - flat.mean(0), axis=1).mean():.3f}")

# %% Replace m originals by their aligned versions and train
data = make_congealed_dataset(base, m, seed=0, aligned=aligned)
res = hack_train(data, pack(PackingSpec(n=n)), TrainConfig(snapshot_epochs=(0, 50, 200)))
for snap in res.snapshots:
    norm = np.linalg.norm(snap.features, axis=1)
    c, o = norm[data.congealed], norm[~data.congealed]
    p = mannwhitneyu(c, o, alternative="less").pvalue
    print(f"epoch {snap.epoch:3d}: congealed {c.mean():.3f}, original {o.mean():.3f}, p = {p:.2g}")
    (OUT / f"congealed_epoch_{snap.epoch:03d}.svg").write_text(
        disk_svg(snap.features, data.congealed, title=f"epoch {snap.epoch}"))
print("wrote snapshots to", OUT)
