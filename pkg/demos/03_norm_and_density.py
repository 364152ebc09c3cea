"""
Feature norm against k-NN density
=================================

Train on 2-D data with a dense core and a broad halo, then compare each
learned feature's norm with its k-nearest-neighbour density.  The density is
measured two ways: on the learned hyperbolic features, and on the inputs
themselves binned by learned norm.  The second asks whether items that land
near the rim came from sparse regions of the data.

Run:  python3 demos/03_norm_and_density.py [n]   (default n=600)
"""
import logging
import sys
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from hyperproto.data import synth_clusters
from hyperproto.density import DensitySpec, knn_density, norm_density_profile
from hyperproto.packing import PackingSpec, pack
from hyperproto.plot import disk_svg, profile_svg
from hyperproto.trainer import TrainConfig, hack_train

logging.basicConfig(level=logging.WARNING)
OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)
n = int(sys.argv[1]) if len(sys.argv) > 1 else 600

# %% Heavy-centred data: half the items in a tight core, half in a wide halo
data = synth_clusters(n, [[0.0, 0.0], [0.0, 0.0]], [0.25, 1.0], seed=1)
particles = pack(PackingSpec(n=n))
res = hack_train(data, particles, TrainConfig(snapshot_epochs=(200,)))
feats = res.snapshots[-1].features
norm = np.linalg.norm(feats, axis=1)
print(f"final loss {res.loss_history[-1]:.4f}")

# %% Density of the learned features
dens = knn_density(feats, DensitySpec(k=10))
print(f"spearman(norm, feature density) = {spearmanr(norm, dens)[0]:+.3f}")
clipped = norm > 0.76 - 2e-5
print(f"{clipped.mean():.0%} of features sit on the clip radius")

# %% Density of the inputs, binned by learned norm
input_dens = knn_density(data.x, DensitySpec(k=10, metric="euclidean"))
print(f"spearman(norm, input density)   = {spearmanr(norm, input_dens)[0]:+.3f}")
print(f"core items: mean norm {norm[data.labels == 0].mean():.3f}, halo items {norm[data.labels == 1].mean():.3f}")

bins = norm_density_profile(feats, DensitySpec(k=10), portions=50, density=input_dens)
(OUT / "profile.svg").write_text(profile_svg(bins, title="input density by learned norm"))
(OUT / "clusters.svg").write_text(disk_svg(feats, data.labels == 0, title="core items in red"))
print("wrote", OUT / "profile.svg", "and", OUT / "clusters.svg")
