"""Joint alignment ("congealing") of an image stack over a discrete affine grid.

Each sweep visits the images in a seeded order and, for each, picks the grid
transform that minimises the summed per-pixel variance of the stack.  Keeping
the current transform unless another is strictly better makes the objective
non-increasing.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AffineParams:
    tx: int = 0
    ty: int = 0
    rot: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if abs(self.tx) > 3 or abs(self.ty) > 3:
            raise ValueError("translations are limited to 3 pixels")
        if abs(self.rot) > 12:
            raise ValueError("rotation is limited to 12 degrees")
        if not 0.88 <= self.scale <= 1.12:
            raise ValueError("scale must lie in [0.88, 1.12]")

    @property
    def is_identity(self) -> bool:
        return self.tx == 0 and self.ty == 0 and self.rot == 0 and self.scale == 1.0


IDENTITY = AffineParams()


@dataclass(frozen=True)
class CongealSpec:
    iterations: int = 2
    tx: tuple = (-2, -1, 0, 1, 2)
    ty: tuple = (-2, -1, 0, 1, 2)
    rot: tuple = (-10.0, 0.0, 10.0)
    scale: tuple = (0.9, 1.0, 1.1)
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")

    def grid(self) -> list:
        grid = [AffineParams(tx, ty, rot, s) for s in self.scale for rot in self.rot
                for ty in self.ty for tx in self.tx]
        if IDENTITY not in grid:
            grid.insert(0, IDENTITY)
        return grid


def _sampling_plan(shape, p: AffineParams):
    """Flat indices (into a zero-padded image) and bilinear weights, each (4, H*W)."""
    h, w = shape
    rows, cols = np.meshgrid(np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij")
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(p.rot)
    cos, sin = np.cos(theta), np.sin(theta)
    # inverse warp: destination -> source
    dx = cols.ravel() - cx - p.tx
    dy = rows.ravel() - cy - p.ty
    sx = (cos * dx + sin * dy) / p.scale + cx
    sy = (-sin * dx + cos * dy) / p.scale + cy
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0 = x0.astype(np.intp)
    y0 = y0.astype(np.intp)
    pad = h * w
    idx = np.empty((4, h * w), dtype=np.intp)
    wts = np.empty((4, h * w))
    corners = [(0, 0, (1 - fy) * (1 - fx)), (0, 1, (1 - fy) * fx), (1, 0, fy * (1 - fx)), (1, 1, fy * fx)]
    for k, (oy, ox, weight) in enumerate(corners):
        yy, xx = y0 + oy, x0 + ox
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        idx[k] = np.where(inside, yy * w + xx, pad)
        wts[k] = weight
    return idx, wts


def _apply_plan(flat_images: np.ndarray, idx: np.ndarray, wts: np.ndarray) -> np.ndarray:
    padded = np.concatenate([flat_images, np.zeros(flat_images.shape[:-1] + (1,))], axis=-1)
    return np.sum(padded[..., idx] * wts, axis=-2)


def affine_transform(image, p: AffineParams) -> np.ndarray:
    """Inverse-warp ``image`` with bilinear sampling and zero padding."""
    image = np.asarray(image, dtype=float)
    if p.is_identity:
        return image.copy()
    idx, wts = _sampling_plan(image.shape, p)
    return _apply_plan(image.ravel(), idx, wts).reshape(image.shape)


def stack_variance(stack) -> float:
    """Summed per-pixel variance of an image stack."""
    stack = np.asarray(stack, dtype=float).reshape(len(stack), -1)
    return float(np.sum(np.var(stack, axis=0)))


@dataclass
class CongealResult:
    images: np.ndarray
    params: list
    objective: list = field(default_factory=list)


def congeal_set(images, spec: CongealSpec = CongealSpec()) -> CongealResult:
    """Align ``images`` (N, H, W) jointly; see the module docstring."""
    images = np.asarray(images, dtype=float)
    if images.ndim != 3 or len(images) < 2:
        raise ValueError("need at least two images of identical 2-D shape")
    n, h, w = images.shape
    grid = spec.grid()
    plans = [_sampling_plan((h, w), p) for p in grid]
    all_idx = np.stack([pl[0] for pl in plans])
    all_wts = np.stack([pl[1] for pl in plans])
    identity = grid.index(IDENTITY)
    flat = images.reshape(n, -1)
    current = np.full(n, identity)
    warped = flat.copy()
    total = warped.sum(axis=0)
    total_sq = (warped * warped).sum(axis=0)
    objective = [stack_variance(warped)]
    rng = np.random.default_rng(spec.seed)
    for _ in range(spec.iterations):
        for i in rng.permutation(n):
            rest = total - warped[i]
            rest_sq = total_sq - warped[i] ** 2
            cand = _apply_plan(flat[i], all_idx, all_wts)
            cand[identity] = flat[i]
            obj = np.sum((rest_sq + cand * cand) / n - ((rest + cand) / n) ** 2, axis=1)
            best = int(np.argmin(obj))
            if obj[best] < obj[current[i]] - 1e-12:
                current[i] = best
                warped[i] = cand[best]
                total = rest + warped[i]
                total_sq = rest_sq + warped[i] ** 2
        total = warped.sum(axis=0)
        total_sq = (warped * warped).sum(axis=0)
        objective.append(stack_variance(warped))
    return CongealResult(warped.reshape(n, h, w), [grid[g] for g in current], objective)
