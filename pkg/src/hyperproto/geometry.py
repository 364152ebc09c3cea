"""Poincaré-ball kernels: distance, exponential map at the origin, clipping.

All functions accept single points of shape ``(d,)`` or batches of shape
``(..., d)`` and broadcast over the leading axes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

CLIP_MARGIN = 1e-5
# tanh rounds to 1.0 beyond ~19; capping the argument keeps exp_map0 inside the ball
TANH_CAP = 15.0


@dataclass(frozen=True)
class BallParams:
    """Curvature ``c`` of the ball and its scale ``s = 1/sqrt(c)``."""

    c: float = 1.0
    s: float = field(init=False)

    def __post_init__(self):
        if not (self.c > 0 and math.isfinite(self.c)):
            raise ValueError(f"curvature must be positive and finite, got {self.c}")
        object.__setattr__(self, "s", 1.0 / math.sqrt(self.c))


def _check_inside(*points: np.ndarray) -> None:
    for p in points:
        sq = np.sum(p * p, axis=-1)
        if np.any(~(sq < 1.0)):
            raise ValueError("point lies on or outside the unit ball")


def _sq_gap(u: np.ndarray, v: np.ndarray):
    """Return ``q = 2|u-v|^2 / ((1-|u|^2)(1-|v|^2))`` and its pieces."""
    diff = u - v
    sqdist = np.sum(diff * diff, axis=-1)
    alpha = 1.0 - np.sum(u * u, axis=-1)
    beta = 1.0 - np.sum(v * v, axis=-1)
    q = np.maximum(2.0 * sqdist / (alpha * beta), 0.0)
    return q, diff, sqdist, alpha, beta


def _arcosh1p(q):
    # arcosh(1 + q) without forming 1 + q; accurate as q -> 0 where it ~ sqrt(2q)
    return np.log1p(q + np.sqrt(q * (q + 2.0)))


def hyp_distance(u, v, check: bool = True):
    """Geodesic distance between points of the unit Poincaré ball.

    ``arcosh(1 + 2|u-v|^2 / ((1-|u|^2)(1-|v|^2)))``, evaluated through
    ``log1p`` so that nearby points do not lose precision.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if check:
        _check_inside(u, v)
    q, *_ = _sq_gap(u, v)
    d = _arcosh1p(q)
    return float(d) if np.ndim(d) == 0 else d


def hyp_distance_grad(u, v):
    """Distance and its gradient with respect to ``u``.

    The gradient is undefined at ``u == v``; zero is returned there.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    q, diff, sqdist, alpha, beta = _sq_gap(u, v)
    d = _arcosh1p(q)
    root = np.sqrt(q * (q + 2.0))
    safe = np.where(root > 0, root, 1.0)
    ab = (alpha * beta)[..., None]
    dq = 4.0 * diff / ab + 4.0 * sqdist[..., None] * u / (alpha[..., None] * ab)
    grad = np.where((root > 0)[..., None], dq / safe[..., None], 0.0)
    return d, grad


def pairwise_hyp_distance(x, y=None):
    """Matrix of hyperbolic distances between rows of ``x`` and rows of ``y``."""
    x = np.asarray(x, dtype=float)
    y = x if y is None else np.asarray(y, dtype=float)
    xx = np.sum(x * x, axis=1)
    yy = np.sum(y * y, axis=1)
    sq = np.maximum(xx[:, None] + yy[None, :] - 2.0 * x @ y.T, 0.0)
    if y is x:
        np.fill_diagonal(sq, 0.0)
    q = 2.0 * sq / np.outer(1.0 - xx, 1.0 - yy)
    return _arcosh1p(np.maximum(q, 0.0))


def exp_map0(v, ball: BallParams = BallParams()):
    """Exponential map at the origin: ``tanh(sqrt(c)|v|) v / (sqrt(c)|v|)``."""
    v = np.asarray(v, dtype=float)
    sc = math.sqrt(ball.c)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    scaled = sc * norm
    factor = np.where(scaled > 0, np.tanh(np.minimum(scaled, TANH_CAP)) / np.where(scaled > 0, scaled, 1.0), 1.0)
    return factor * v


def exp_map0_jacobian(v, ball: BallParams = BallParams()):
    """Jacobian of :func:`exp_map0`, shape ``(..., d, d)``."""
    v = np.asarray(v, dtype=float)
    a = math.sqrt(ball.c)
    n = np.linalg.norm(v, axis=-1)
    t = a * n
    small = t < 1e-4
    ts = np.where(small, 1.0, t)
    tc = np.minimum(ts, TANH_CAP)
    g = np.where(small, 1.0 - t * t / 3.0, np.tanh(tc) / ts)
    # g'(n) / n, finite as n -> 0 where it tends to -2a^2/3
    sech2 = np.where(ts < TANH_CAP, 1.0 / np.cosh(tc) ** 2, 0.0)
    gp_over_n = np.where(small, -2.0 * a * a / 3.0, a * a * (ts * sech2 - np.tanh(tc)) / ts**3)
    eye = np.eye(v.shape[-1])
    return g[..., None, None] * eye + gp_over_n[..., None, None] * v[..., :, None] * v[..., None, :]


def clip_to_radius(p, r_clip: float):
    """Rescale points whose norm exceeds ``r_clip`` to norm ``r_clip - 1e-5``."""
    if not 0.0 < r_clip < 1.0:
        raise ValueError(f"r_clip must lie in (0, 1), got {r_clip}")
    p = np.asarray(p, dtype=float)
    norm = np.linalg.norm(p, axis=-1, keepdims=True)
    over = norm > r_clip
    scale = np.where(over, (r_clip - CLIP_MARGIN) / np.where(over, norm, 1.0), 1.0)
    return p * scale


def clip_jacobian(p, r_clip: float):
    """Jacobian of :func:`clip_to_radius`; identity inside the clip radius."""
    p = np.asarray(p, dtype=float)
    d = p.shape[-1]
    norm = np.linalg.norm(p, axis=-1)
    over = norm > r_clip
    safe = np.where(over, norm, 1.0)
    unit = p / safe[..., None]
    eye = np.eye(d)
    outside = ((r_clip - CLIP_MARGIN) / safe)[..., None, None] * (eye - unit[..., :, None] * unit[..., None, :])
    return np.where(over[..., None, None], outside, eye)
