"""Uniform particle packing in a sub-ball of the Poincaré disk.

Particles repel each other through a truncated power-law energy that vanishes
once two particles are at least ``2 * r_n`` apart, ``r_n`` being the radius
each particle would own if the hyperbolic area of the packing region were
split evenly.  A hinge term keeps particles within Euclidean radius ``r``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import BallParams, clip_to_radius, hyp_distance, hyp_distance_grad

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
COINCIDENT_DISTANCE = 1e-9
COINCIDENT_CAP = 1e12
JITTER = 1e-6
BETA1, BETA2, ADAM_EPS = 0.9, 0.99, 1e-8


@dataclass(frozen=True)
class PackingSpec:
    n: int
    r: float = 0.76
    k: float = 1.55
    margin: float = 0.01
    lr: float = 0.01
    epochs: int = 1000
    seed: int = 0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"r must lie in (0, 1), got {self.r}")
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.margin < 0:
            raise ValueError(f"margin must be nonnegative, got {self.margin}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be nonnegative, got {self.epochs}")


@dataclass
class ParticleSet:
    positions: np.ndarray
    r_n: float
    spec: PackingSpec
    ball: BallParams = field(default_factory=BallParams)
    initial_loss: float = float("nan")
    final_loss: float = float("nan")
    initial_repulsion: float = float("nan")
    final_repulsion: float = float("nan")
    converged: bool = True
    history: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.positions)

    def to_json(self) -> str:
        doc = {
            "version": FORMAT_VERSION,
            "spec": asdict(self.spec),
            "ball": {"c": self.ball.c},
            "positions": self.positions.tolist(),
            "r_n": self.r_n,
            "final_loss": self.final_loss,
            "final_repulsion": self.final_repulsion,
            "initial_repulsion": self.initial_repulsion,
            "converged": self.converged,
        }
        return json.dumps(doc, indent=1)

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "ParticleSet":
        with open(path) as f:
            doc = json.load(f)
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported particle file version {doc.get('version')!r}")
        spec = PackingSpec(**doc["spec"])
        positions = np.asarray(doc["positions"], dtype=float).reshape(-1, 2)
        if len(positions) != spec.n:
            raise ValueError("particle count does not match the recorded spec")
        return cls(
            positions=positions,
            r_n=float(doc["r_n"]),
            spec=spec,
            ball=BallParams(doc["ball"]["c"]),
            final_loss=float(doc["final_loss"]),
            final_repulsion=float(doc.get("final_repulsion", "nan")),
            initial_repulsion=float(doc.get("initial_repulsion", "nan")),
            converged=bool(doc.get("converged", True)),
        )


def per_particle_radius(spec: PackingSpec, ball: BallParams = BallParams()) -> float:
    """Hyperbolic radius of the disk owning ``1/n`` of the packing region's area."""
    s, r = ball.s, spec.r
    if r >= s:
        raise ValueError(f"packing radius {r} must be below the ball scale {s}")
    r_ball = s * math.log((s + r) / (s - r))
    area = 4.0 * math.pi * s * s * math.sinh(r_ball / (2.0 * s)) ** 2
    area_each = area / spec.n
    return 2.0 * s * math.asinh(math.sqrt(area_each / (4.0 * math.pi * s * s)))


def repulsion_from_distance(d, r_n: float, k: float):
    """Pair energy as a function of hyperbolic distance (vectorised)."""
    d = np.asarray(d, dtype=float)
    contact = 2.0 * r_n
    const = contact ** (k + 1) / k
    bracket = contact - np.maximum(0.0, contact - d)
    safe = np.where(d > COINCIDENT_DISTANCE, bracket, 1.0)
    v = (safe ** (-k) - contact ** (-k)) * const
    return np.where(d > COINCIDENT_DISTANCE, v, COINCIDENT_CAP)


def repulsion_slope(d, r_n: float, k: float):
    """Derivative of the pair energy with respect to the distance.

    Zero at and beyond contact; ``-(2 r_n / d)^(k+1)`` inside it.
    """
    d = np.asarray(d, dtype=float)
    contact = 2.0 * r_n
    inside = (d < contact) & (d > COINCIDENT_DISTANCE)
    safe = np.where(inside, d, contact)
    return np.where(inside, -((contact / safe) ** (k + 1)), 0.0)


def repulsion_loss(i, j, r_n: float, k: float) -> float:
    return float(repulsion_from_distance(hyp_distance(i, j), r_n, k))


def boundary_loss(p, r: float, margin: float):
    """Hinge ``max(0, |p| - r + margin)``."""
    norm = np.linalg.norm(np.asarray(p, dtype=float), axis=-1)
    out = np.maximum(0.0, norm - r + margin)
    return float(out) if np.ndim(out) == 0 else out


def _candidate_pairs(x: np.ndarray, r_n: float) -> np.ndarray:
    # hyperbolic distance is at least twice the Euclidean gap, so pairs more
    # than r_n apart in the plane are beyond contact
    if len(x) < 2:
        return np.empty((0, 2), dtype=np.intp)
    pairs = cKDTree(x).query_pairs(r_n * (1.0 + 1e-9), output_type="ndarray")
    if len(pairs) == 0:
        return np.empty((0, 2), dtype=np.intp)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    return pairs[order]


def packing_energy(x: np.ndarray, r_n: float, spec: PackingSpec, with_grad: bool = True):
    """Total repulsion + boundary energy, its parts, and the coordinate gradient."""
    x = np.asarray(x, dtype=float)
    pairs = _candidate_pairs(x, r_n)
    grad = np.zeros_like(x)
    if len(pairs):
        xi, xj = x[pairs[:, 0]], x[pairs[:, 1]]
        d, gi = hyp_distance_grad(xi, xj)
        _, gj = hyp_distance_grad(xj, xi)
        repulsion = float(np.sum(repulsion_from_distance(d, r_n, spec.k)))
        if with_grad:
            slope = repulsion_slope(d, r_n, spec.k)[:, None]
            np.add.at(grad, pairs[:, 0], slope * gi)
            np.add.at(grad, pairs[:, 1], slope * gj)
    else:
        repulsion = 0.0
    norm = np.linalg.norm(x, axis=1)
    hinge = norm - spec.r + spec.margin
    boundary = float(np.sum(np.maximum(0.0, hinge)))
    if with_grad:
        active = hinge > 0
        grad[active] += x[active] / norm[active, None]
    return repulsion + boundary, repulsion, boundary, grad


def _separate_coincident(x: np.ndarray) -> np.ndarray:
    pairs = _candidate_pairs(x, COINCIDENT_DISTANCE)
    if len(pairs) == 0:
        return x
    x = x.copy()
    for i, j in pairs:
        offset = np.full(x.shape[1], JITTER / math.sqrt(x.shape[1]))
        x[i] += offset
        x[j] -= offset
    return x


def initial_positions(spec: PackingSpec) -> np.ndarray:
    """Uniform sample of the Euclidean disk of radius ``r/2``."""
    rng = np.random.default_rng(spec.seed)
    radius = 0.5 * spec.r * np.sqrt(rng.random(spec.n))
    angle = 2.0 * np.pi * rng.random(spec.n)
    return np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])


def pack(spec: PackingSpec, ball: BallParams = BallParams(), init=None, monotone: bool = False) -> ParticleSet:
    """Pack ``spec.n`` particles by descending the repulsion + boundary energy.

    Steps follow Adam (beta1 = 0.9, beta2 = 0.99) with the constant learning
    rate ``spec.lr`` and are followed by a clip to radius ``r``.  With
    ``monotone=True`` a step that would raise the energy is halved until it
    does not (up to 30 times), so the recorded history never increases.

    Non-convergence (final repulsion above 1e-3 of its initial value) is
    logged and recorded on the result, not raised.
    """
    r_n = per_particle_radius(spec, ball)
    x = initial_positions(spec) if init is None else np.array(init, dtype=float).reshape(spec.n, 2)
    x = _separate_coincident(x)
    total, rep0, _, grad = packing_energy(x, r_n, spec)
    history = [total]
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    for t in range(1, spec.epochs + 1):
        m = BETA1 * m + (1.0 - BETA1) * grad
        v = BETA2 * v + (1.0 - BETA2) * grad * grad
        step = spec.lr * (m / (1.0 - BETA1**t)) / (np.sqrt(v / (1.0 - BETA2**t)) + ADAM_EPS)
        scale = 1.0
        for _ in range(31 if monotone else 1):
            trial = clip_to_radius(x - scale * step, spec.r)
            t_total, _, _, t_grad = packing_energy(trial, r_n, spec)
            if not monotone or t_total <= total:
                x, total, grad = trial, t_total, t_grad
                break
            scale *= 0.5
        history.append(total)
    _, rep_final, _, _ = packing_energy(x, r_n, spec, with_grad=False)
    converged = rep_final <= 1e-3 * rep0 if rep0 > 0 else True
    if not converged:
        logger.warning("packing did not converge: repulsion %.3g of initial %.3g", rep_final, rep0)
    return ParticleSet(
        positions=x,
        r_n=r_n,
        spec=spec,
        ball=ball,
        initial_loss=history[0],
        final_loss=history[-1],
        initial_repulsion=rep0,
        final_repulsion=rep_final,
        converged=converged,
        history=history,
    )
