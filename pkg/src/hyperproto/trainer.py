"""Alternating encoder training and batch-wise particle reassignment."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .assignment import AssignmentState, batch_cost, batch_reassign
from .geometry import BallParams
from .nn import EncoderParams, MlpSpec, embed, hyperbolic_loss, init_params, sgd_step
from .packing import PackingSpec, ParticleSet, pack

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    lr0: float = 0.1
    batch_size: int = 128
    assign_every: int = 2
    seed: int = 0
    snapshot_epochs: tuple = ()
    r_clip: float = 0.76

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.assign_every < 1:
            raise ValueError("assign_every must be at least 1")
        object.__setattr__(self, "snapshot_epochs", tuple(sorted(set(int(e) for e in self.snapshot_epochs))))

    def lr_at(self, epoch: int) -> float:
        """Cosine schedule from ``lr0`` towards zero over ``epochs``."""
        return self.lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / self.epochs))


def default_encoder(input_dim: int, seed: int = 0) -> MlpSpec:
    if input_dim <= 2:
        return MlpSpec((input_dim, 32, 2), seed)
    return MlpSpec((input_dim, 256, 64, 2), seed)


@dataclass
class Snapshot:
    epoch: int
    features: np.ndarray
    assignment: AssignmentState


@dataclass
class TrainResult:
    params: EncoderParams
    assignment: AssignmentState
    snapshots: list = field(default_factory=list)
    loss_history: list = field(default_factory=list)
    # (epoch, cost before, cost after) summed over the reassigned batches
    assignment_cost: list = field(default_factory=list)


def embed_all(params: EncoderParams, x, ball: BallParams = BallParams(), r_clip: float = 0.76,
              chunk: int = 4096) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.concatenate([embed(params, x[i:i + chunk], ball, r_clip) for i in range(0, len(x), chunk)])


def hack_train(dataset, particles: ParticleSet, cfg: TrainConfig = TrainConfig(),
               encoder: MlpSpec | None = None, ball: BallParams = BallParams()) -> TrainResult:
    """Learn an encoder whose features land on uniformly packed particles.

    ``dataset`` is a :class:`~hyperproto.data.Dataset` or a plain array of
    vectors.  On every ``assign_every``-th epoch (starting with the first) each
    batch is re-matched to its own particles before its gradient step.
    """
    x = np.asarray(getattr(dataset, "x", dataset), dtype=float)
    n = len(x)
    if n != particles.n:
        raise ValueError(f"dataset has {n} items but there are {particles.n} particles")
    positions = particles.positions
    rng = np.random.default_rng(cfg.seed)
    state = AssignmentState.random(n, rng)
    params = init_params(encoder or default_encoder(x.shape[1], cfg.seed))
    result = TrainResult(params=params, assignment=state)

    def snapshot(epoch):
        if epoch in cfg.snapshot_epochs:
            feats = embed_all(params, x, ball, cfg.r_clip)
            result.snapshots.append(Snapshot(epoch, feats, state.copy()))

    snapshot(0)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        reassign = epoch % cfg.assign_every == 0
        order = rng.permutation(n)
        losses = []
        cost_before = cost_after = 0.0
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            xb = x[batch]
            if reassign and len(batch) >= 2:
                feats = embed(params, xb, ball, cfg.r_clip)
                cost_before += batch_cost(feats, batch, state, positions)
                state = batch_reassign(feats, batch, state, positions)
                cost_after += batch_cost(feats, batch, state, positions)
            loss, grads = hyperbolic_loss(params, xb, positions[state.particle_of[batch]], ball, cfg.r_clip)
            sgd_step(params, grads, lr)
            losses.append(loss * len(batch))
        if reassign:
            result.assignment_cost.append((epoch, cost_before, cost_after))
        result.loss_history.append(float(np.sum(losses) / n))
        logger.debug("epoch %d lr %.4g loss %.5f", epoch, lr, result.loss_history[-1])
        snapshot(epoch + 1)
    result.assignment = state
    return result


def per_class_features(dataset, cfg: TrainConfig = TrainConfig(), packing: PackingSpec | None = None,
                       ball: BallParams = BallParams()) -> np.ndarray:
    """Train one HACK encoder per class and return every item's final feature.

    Classes of equal size share one packing, since packing depends only on
    its spec.
    """
    if dataset.labels is None:
        raise ValueError("per-class training needs labels")
    template = packing or PackingSpec(n=1)
    features = np.zeros((len(dataset), 2))
    packed = {}
    for label in np.unique(dataset.labels):
        members = np.flatnonzero(dataset.labels == label)
        n = len(members)
        if n not in packed:
            packed[n] = pack(replace(template, n=n), ball)
        run = replace(cfg, snapshot_epochs=(cfg.epochs,))
        res = hack_train(dataset.x[members], packed[n], run, ball=ball)
        features[members] = res.snapshots[-1].features
    return features
