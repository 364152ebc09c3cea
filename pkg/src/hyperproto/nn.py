"""Small fully connected network with hand-written backpropagation.

Hidden layers use a rectifier, the output layer is linear.  Weights are stored
as ``(fan_in, fan_out)`` so a batch ``X`` of shape ``(B, fan_in)`` maps to
``X @ W + b``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    BallParams,
    clip_jacobian,
    clip_to_radius,
    exp_map0,
    exp_map0_jacobian,
    hyp_distance_grad,
)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    seed: int = 0

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise ValueError(f"need at least two positive layer sizes, got {self.layer_sizes}")
        object.__setattr__(self, "layer_sizes", sizes)


@dataclass
class EncoderParams:
    weights: list
    biases: list
    spec: MlpSpec | None = field(default=None, compare=False)

    def copy(self) -> "EncoderParams":
        return EncoderParams([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.spec)

    def arrays(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def to_json(self) -> str:
        doc = {
            "version": FORMAT_VERSION,
            "spec": {"layer_sizes": list(self.spec.layer_sizes), "seed": self.spec.seed} if self.spec else None,
            "layers": [{"W": w.tolist(), "b": b.tolist()} for w, b in zip(self.weights, self.biases)],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "EncoderParams":
        doc = json.loads(text)
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
        spec = MlpSpec(tuple(doc["spec"]["layer_sizes"]), doc["spec"]["seed"]) if doc.get("spec") else None
        weights = [np.asarray(layer["W"], dtype=float) for layer in doc["layers"]]
        biases = [np.asarray(layer["b"], dtype=float) for layer in doc["layers"]]
        return cls(weights, biases, spec)


def init_params(spec: MlpSpec) -> EncoderParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(spec.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return EncoderParams(weights, biases, spec)


def _as_batch(params: EncoderParams, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"input of shape {x.shape} does not match input size {params.weights[0].shape[0]}")
    return X, single


def _forward_cache(params: EncoderParams, X: np.ndarray):
    acts = [X]
    h = X
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if layer < last:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return acts


def forward(params: EncoderParams, x):
    X, single = _as_batch(params, x)
    out = _forward_cache(params, X)[-1]
    return out[0] if single else out


def _backward(params: EncoderParams, acts, grad_out):
    """Gradients for every layer plus the gradient with respect to the input."""
    gw = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    delta = grad_out
    for layer in range(len(params.weights) - 1, -1, -1):
        gw[layer] = acts[layer].T @ delta
        gb[layer] = delta.sum(axis=0)
        delta = delta @ params.weights[layer].T
        if layer > 0:
            # rectifier kink takes subgradient 0
            delta = delta * (acts[layer] > 0)
    return EncoderParams(gw, gb, params.spec), delta


def embed(params: EncoderParams, x, ball: BallParams = BallParams(), r_clip: float = 0.76):
    """Network output mapped into the ball and clipped to ``r_clip``."""
    return clip_to_radius(exp_map0(forward(params, x), ball), r_clip)


def hyperbolic_loss(params: EncoderParams, X, targets, ball: BallParams = BallParams(), r_clip: float = 0.76):
    """Mean hyperbolic distance between embeddings and targets, with gradients.

    Returns ``(loss, grads)`` where ``grads`` mirrors ``params``.
    """
    X, _ = _as_batch(params, X)
    targets = np.asarray(targets, dtype=float).reshape(len(X), -1)
    acts = _forward_cache(params, X)
    out = acts[-1]
    e = exp_map0(out, ball)
    y = clip_to_radius(e, r_clip)
    d, gy = hyp_distance_grad(y, targets)
    batch = len(X)
    gy = gy / batch
    ge = np.einsum("bij,bi->bj", clip_jacobian(e, r_clip), gy)
    go = np.einsum("bij,bi->bj", exp_map0_jacobian(out, ball), ge)
    grads, _ = _backward(params, acts, go)
    return float(np.mean(d)), grads


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits):
    logits = np.atleast_2d(np.asarray(logits, dtype=float))
    return np.exp(_log_softmax(logits))


def cross_entropy(params: EncoderParams, X, labels, input_grad: bool = False):
    """Mean softmax cross-entropy; returns ``(loss, grads[, grad_wrt_X])``."""
    X, _ = _as_batch(params, X)
    labels = np.asarray(labels, dtype=np.intp)
    acts = _forward_cache(params, X)
    logp = _log_softmax(acts[-1])
    rows = np.arange(len(X))
    loss = -float(np.mean(logp[rows, labels]))
    g = np.exp(logp)
    g[rows, labels] -= 1.0
    g /= len(X)
    grads, gx = _backward(params, acts, g)
    if input_grad:
        return loss, grads, gx
    return loss, grads


def sgd_step(params: EncoderParams, grads: EncoderParams, lr: float) -> None:
    for p, g in zip(params.arrays(), grads.arrays()):
        p -= lr * g
