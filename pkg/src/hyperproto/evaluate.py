"""Uses of the learned prototypicality: subset selection, classifier
training, FGSM robustness and the model-confidence baseline."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import EncoderParams, MlpSpec, cross_entropy, forward, init_params, sgd_step, softmax

MODES = ("typical", "atypical", "atypical_diverse")


@dataclass(frozen=True)
class SelectionSpec:
    fraction: float
    mode: str = "typical"
    angular_bins: int = 8

    def __post_init__(self):
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError(f"fraction must lie in (0, 1], got {self.fraction}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.angular_bins < 1:
            raise ValueError("angular_bins must be at least 1")


def polar(features):
    f = np.asarray(features, dtype=float)
    norm = np.linalg.norm(f, axis=1)
    angle = np.mod(np.arctan2(f[:, 1], f[:, 0]), 2.0 * np.pi)
    return norm, angle


def select_subset(features, spec: SelectionSpec) -> np.ndarray:
    """Ids of the selected items (row positions in ``features``).

    Ties in norm are broken by the smaller id.
    """
    f = np.asarray(features, dtype=float)
    n = len(f)
    if n == 0:
        raise ValueError("no features to select from")
    quota = min(n, math.ceil(spec.fraction * n - 1e-9))
    norm, angle = polar(f)
    ids = np.arange(n)
    if spec.mode == "typical":
        return np.lexsort((ids, norm))[:quota]
    largest_first = np.lexsort((ids, -norm))
    if spec.mode == "atypical":
        return largest_first[:quota]
    width = 2.0 * np.pi / spec.angular_bins
    sector = np.minimum((angle / width).astype(np.intp), spec.angular_bins - 1)
    queues = [[i for i in largest_first if sector[i] == s] for s in range(spec.angular_bins)]
    chosen = []
    depth = 0
    while len(chosen) < quota:
        for q in queues:
            if depth < len(q):
                chosen.append(q[depth])
                if len(chosen) == quota:
                    break
        depth += 1
    return np.asarray(chosen, dtype=np.intp)


def select_per_class(features, labels, spec: SelectionSpec) -> np.ndarray:
    """Apply :func:`select_subset` inside every class and pool the ids."""
    labels = np.asarray(labels)
    picked = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        picked.append(members[select_subset(np.asarray(features)[members], spec)])
    return np.sort(np.concatenate(picked))


def predict(params: EncoderParams, x) -> np.ndarray:
    return np.argmax(np.atleast_2d(forward(params, x)), axis=1)


def accuracy(params: EncoderParams, x, labels) -> float:
    return float(np.mean(predict(params, x) == np.asarray(labels)))


@dataclass
class Classifier:
    params: EncoderParams
    loss_history: list = field(default_factory=list)

    def accuracy(self, x, labels) -> float:
        return accuracy(self.params, x, labels)

    def adversarial_accuracy(self, x, labels, epsilon: float = 0.07) -> float:
        return accuracy(self.params, fgsm_attack(self.params, x, labels, epsilon), labels)


def train_classifier(dataset, mlp_spec: MlpSpec, epochs: int = 10, lr: float = 0.1, seed: int = 0,
                     batch_size: int = 32) -> Classifier:
    """Minibatch SGD on softmax cross-entropy; ``loss_history`` holds per-epoch means."""
    labels = getattr(dataset, "labels", None)
    if labels is None:
        raise ValueError("classifier training needs labels")
    x = np.asarray(dataset.x, dtype=float)
    labels = np.asarray(labels, dtype=np.intp)
    if len(x) == 0:
        raise ValueError("empty training set")
    params = init_params(mlp_spec)
    rng = np.random.default_rng(seed)
    history = []
    for _ in range(epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for start in range(0, len(x), batch_size):
            batch = order[start:start + batch_size]
            loss, grads = cross_entropy(params, x[batch], labels[batch])
            sgd_step(params, grads, lr)
            total += loss * len(batch)
        history.append(total / len(x))
    return Classifier(params, history)


def fgsm_attack(params: EncoderParams, x, label, epsilon: float) -> np.ndarray:
    """One signed-gradient step of size ``epsilon``, clamped to [0, 1]."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    labels = np.atleast_1d(np.asarray(label, dtype=np.intp))
    _, _, gx = cross_entropy(params, X, labels, input_grad=True)
    adv = np.clip(X + epsilon * np.sign(gx), 0.0, 1.0)
    return adv[0] if single else adv


def confidence(params: EncoderParams, x) -> np.ndarray:
    """Largest softmax probability per item."""
    return softmax(np.atleast_2d(forward(params, x))).max(axis=1)


def confidence_rank(params: EncoderParams, dataset) -> np.ndarray:
    """Ids by descending confidence, ties by ascending id."""
    x = np.asarray(getattr(dataset, "x", dataset), dtype=float)
    conf = confidence(params, x)
    return np.lexsort((np.arange(len(x)), -conf))


def classifier_spec(input_dim: int, num_classes: int, seed: int = 0) -> MlpSpec:
    """784-256-10 style network for images, a narrower one for low-dimensional data."""
    hidden = 256 if input_dim > 16 else 32
    return MlpSpec((input_dim, hidden, num_classes), seed)


def evaluate_subset(train, test, ids, epochs: int = 10, lr: float = 0.1, seed: int = 0,
                    epsilon: float = 0.07, return_classifier: bool = False) -> tuple:
    """Train on ``train.subset(ids)`` and return (clean, adversarial) test accuracy.

    With ``return_classifier`` the trained :class:`Classifier` is appended.
    """
    sub = train.subset(np.sort(np.asarray(ids, dtype=np.intp)))
    num_classes = int(max(train.labels.max(), test.labels.max())) + 1
    clf = train_classifier(sub, classifier_spec(train.x.shape[1], num_classes, seed), epochs, lr, seed)
    accs = (clf.accuracy(test.x, test.labels), clf.adversarial_accuracy(test.x, test.labels, epsilon))
    return accs + (clf,) if return_classifier else accs
