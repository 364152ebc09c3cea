"""K-nearest-neighbour density and the feature-norm density profile."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import pairwise_hyp_distance

DUPLICATE_DISTANCE = 1e-12


@dataclass(frozen=True)
class DensitySpec:
    k: int = 10
    metric: str = "hyperbolic"
    d: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.metric not in ("euclidean", "hyperbolic"):
            raise ValueError(f"unknown metric {self.metric!r}")


def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in ``d`` dimensions, ``pi^(d/2) / Gamma(d/2 + 1)``."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def pairwise_distances(features, metric: str = "euclidean") -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if metric == "hyperbolic":
        return pairwise_hyp_distance(x)
    sq = np.sum(x * x, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2)


def knn_density(features, spec: DensitySpec = DensitySpec(), return_flags: bool = False):
    """``(k/n) / (A_d * D^d)`` with ``D`` the distance to the k-th neighbour.

    Points whose k-th neighbour sits at distance zero use ``1e-12`` instead and
    are flagged.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, dim = x.shape
    d = spec.d or dim
    if not spec.k < n:
        raise ValueError(f"need more than k={spec.k} points, got {n}")
    dist = pairwise_distances(x, spec.metric)
    np.fill_diagonal(dist, np.inf)
    kth = np.partition(dist, spec.k - 1, axis=1)[:, spec.k - 1]
    duplicate = kth <= 0.0
    kth = np.where(duplicate, DUPLICATE_DISTANCE, kth)
    density = (spec.k / n) / (unit_ball_volume(d) * kth**d)
    if return_flags:
        return density, duplicate
    return density


class ProfileBin(NamedTuple):
    center: float
    mean_density: float
    variance: float
    count: int


def norm_density_profile(features, spec: DensitySpec = DensitySpec(), portions: int = 50,
                         density=None) -> list:
    """Mean/variance of k-NN density within equal-width bins of feature norm.

    Empty bins report ``nan`` statistics and a count of zero.
    """
    x = np.asarray(features, dtype=float)
    if len(x) == 0:
        raise ValueError("no features")
    dens = knn_density(x, spec) if density is None else np.asarray(density, dtype=float)
    norms = np.linalg.norm(x, axis=1)
    lo, hi = float(norms.min()), float(norms.max())
    # a spread of a few ulps counts as one shared norm
    width = (hi - lo) / portions if hi - lo > 1e-12 * max(1.0, hi) else 0.0
    if width > 0:
        which = np.minimum(((norms - lo) / width).astype(np.intp), portions - 1)
    else:
        which = np.zeros(len(x), dtype=np.intp)
    out = []
    for b in range(portions):
        members = dens[which == b]
        center = lo + (b + 0.5) * width
        if len(members):
            out.append(ProfileBin(center, float(members.mean()), float(members.var()), len(members)))
        else:
            out.append(ProfileBin(center, float("nan"), float("nan"), 0))
    return out
