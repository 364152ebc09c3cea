"""
Packing particles in the Poincare disk
======================================

Distances in the Poincare disk grow without bound towards the rim, so a disk
of Euclidean radius 0.76 holds far more hyperbolic area than it looks.  This
script walks through the distance and exponential map, then packs 100
particles by minimising a short-range repulsion energy and checks how uniform
the result is.

Run:  python3 demos/01_geometry_and_packing.py  (writes demos/out/packing.svg)
"""
from pathlib import Path

import numpy as np

from hyperproto.geometry import exp_map0, hyp_distance, pairwise_hyp_distance
from hyperproto.packing import PackingSpec, pack, per_particle_radius
from hyperproto.plot import disk_svg

OUT = Path(__file__).parent / "out"
OUT.mkdir(exist_ok=True)

# %% Distance grows like a logarithm of the gap to the rim
for x in [0.5, 0.9, 0.99, 0.999]:
    print(f"d(0, {x}) = {hyp_distance([0, 0], [x, 0]):.4f}")

# The exponential map at the origin squeezes all of R^2 into the disk.
print("exp_map0((1, 0)) =", exp_map0(np.array([1.0, 0.0])))

# %% How large is each particle allowed to be?
spec = PackingSpec(n=100)
print(f"per-particle radius for n=100: {per_particle_radius(spec):.6f}")

# %% Pack and measure uniformity
ps = pack(spec)
d = pairwise_hyp_distance(ps.positions)
np.fill_diagonal(d, np.inf)
nn = d.min(axis=1)
print(f"repulsion {ps.initial_repulsion:.3g} -> {ps.final_repulsion:.3g}")
print(f"nearest-neighbour distance: mean {nn.mean():.4f}, cv {nn.std() / nn.mean():.4f} (contact {2 * ps.r_n:.4f})")
print(f"largest norm {np.linalg.norm(ps.positions, axis=1).max():.5f}")

(OUT / "packing.svg").write_text(disk_svg(ps.positions, title="100 packed particles"))
print("wrote", OUT / "packing.svg")
