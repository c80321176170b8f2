# src/model.py
"""
model.py
Desk-scale classifier used by every client: a multilayer perceptron with
ReLU hidden layers and a softmax output, trained with mini-batch SGD or Adam.

Layer naming (ParameterSet order):
    dense_0.weight (in, h0), dense_0.bias (h0,), ..., dense_L.weight (h_last, K), dense_L.bias (K,)

The proximal term mu/2 * ||w - anchor||^2 (FedProx) is folded into the loss and
gradient when proximal_mu > 0; train_local anchors it at the parameters it
was handed, i.e. the broadcast global model.
"""

from __future__ import annotations
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from .data import LabeledDataset
from .errors import ConfigError, DatasetError, ShapeMismatchError
from .evaluate import EvalReport, classification_report
from .params import ParameterSet

OPTIMIZERS = ("sgd", "adam")

# Adam defaults
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


# -------------------------
# Config
# -------------------------
@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    hidden_dims: Tuple[int, ...] = (32,)
    num_classes: int = 4
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"all layer widths must be positive: {self}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.activation != "relu":
            raise ConfigError(f"only relu activation is supported, got {self.activation!r}")

    @property
    def layer_dims(self) -> Tuple[int, ...]:
        return (self.input_dim,) + self.hidden_dims + (self.num_classes,)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    proximal_mu: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.proximal_mu < 0:
            raise ConfigError(f"proximal_mu must be >= 0, got {self.proximal_mu}")

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=int(seed))


# -------------------------
# Parameters
# -------------------------
def init_params(spec: ModelSpec, seed: int) -> ParameterSet:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
    rng = np.random.default_rng(seed)
    dims = spec.layer_dims
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((f"dense_{i}.weight", rng.uniform(-limit, limit, size=(fan_in, fan_out))))
        layers.append((f"dense_{i}.bias", np.zeros(fan_out)))
    return ParameterSet(tuple(layers))


def _unpack(params: ParameterSet) -> List[Tuple[np.ndarray, np.ndarray]]:
    arrays = params.arrays
    if len(arrays) % 2 or not arrays:
        raise ShapeMismatchError("MLP parameters must alternate weight and bias layers")
    return [(arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)]


def _check_batch(pairs, features: np.ndarray, labels: Optional[np.ndarray]) -> None:
    width = pairs[0][0].shape[0]
    if features.ndim != 2 or features.shape[1] != width:
        raise ShapeMismatchError(f"feature width {features.shape[1:]} does not match input_dim {width}")
    if labels is not None:
        k = pairs[-1][1].shape[0]
        if labels.shape != (features.shape[0],):
            raise ShapeMismatchError("labels length does not match feature rows")
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise DatasetError(f"label out of range [0, {k})")


# -------------------------
# Forward / backward
# -------------------------
def _forward(pairs, x: np.ndarray):
    """Returns logits plus the inputs and pre-activations of every layer."""
    inputs, pre = [], []
    h = x
    for i, (w, b) in enumerate(pairs):
        inputs.append(h)
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < len(pairs) - 1 else z
    return h, inputs, pre


def predict_proba(params: ParameterSet, features: np.ndarray) -> np.ndarray:
    pairs = _unpack(params)
    x = np.asarray(features, dtype=np.float64)
    _check_batch(pairs, x, None)
    logits, _, _ = _forward(pairs, x)
    return softmax(logits, axis=1)


def loss_and_gradient(
    params: ParameterSet,
    features: np.ndarray,
    labels: np.ndarray,
    proximal_mu: float = 0.0,
    anchor: Optional[ParameterSet] = None,
) -> Tuple[float, ParameterSet]:
    """Mean cross-entropy (+ mu/2 ||params - anchor||^2) and its gradient."""
    pairs = _unpack(params)
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    _check_batch(pairs, x, y)
    if x.shape[0] == 0:
        raise DatasetError("empty batch")
    if proximal_mu > 0 and anchor is None:
        raise ValueError("proximal_mu > 0 requires an anchor parameter set")
    if anchor is not None and proximal_mu > 0 and not params.compatible_with(anchor):
        raise ShapeMismatchError("anchor is not shape-compatible with params")

    n = x.shape[0]
    logits, inputs, pre = _forward(pairs, x)
    logp = log_softmax(logits, axis=1)
    loss = -float(np.mean(logp[np.arange(n), y]))

    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads: List[np.ndarray] = [None] * (2 * len(pairs))
    for i in range(len(pairs) - 1, -1, -1):
        w, _ = pairs[i]
        grads[2 * i] = inputs[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ w.T) * (pre[i - 1] > 0)

    if proximal_mu > 0:
        diffs = [p - a for p, a in zip(params.arrays, anchor.arrays)]
        loss += 0.5 * proximal_mu * float(sum(np.sum(d * d) for d in diffs))
        grads = [g + proximal_mu * d for g, d in zip(grads, diffs)]

    return loss, ParameterSet(tuple(zip(params.names, grads)))


def mean_loss(params: ParameterSet, dataset: LabeledDataset) -> float:
    if len(dataset) == 0:
        raise DatasetError("empty dataset")
    pairs = _unpack(params)
    _check_batch(pairs, dataset.features, dataset.labels)
    logits, _, _ = _forward(pairs, dataset.features)
    logp = log_softmax(logits, axis=1)
    return -float(np.mean(logp[np.arange(len(dataset)), dataset.labels]))


# -------------------------
# Training
# -------------------------
def train_local(params: ParameterSet, dataset: LabeledDataset, config: TrainConfig) -> ParameterSet:
    """
    epochs x ceil(n / batch_size) mini-batch steps. Shuffling and optimizer
    state come only from config.seed; the input parameters are not modified.
    """
    if len(dataset) == 0:
        raise DatasetError("cannot train on an empty dataset")
    if config.epochs == 0:
        return params

    rng = np.random.default_rng(config.seed)
    anchor = params if config.proximal_mu > 0 else None
    names = params.names
    weights = [a.copy() for a in params.arrays]
    m = [np.zeros_like(a) for a in weights]
    v = [np.zeros_like(a) for a in weights]
    t = 0
    n = len(dataset)

    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            current = ParameterSet(tuple(zip(names, weights)))
            _, grad = loss_and_gradient(
                current,
                dataset.features[idx],
                dataset.labels[idx],
                proximal_mu=config.proximal_mu,
                anchor=anchor,
            )
            t += 1
            for j, g in enumerate(grad.arrays):
                if config.optimizer == "sgd":
                    weights[j] = weights[j] - config.learning_rate * g
                else:
                    m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g
                    v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * (g * g)
                    m_hat = m[j] / (1.0 - ADAM_BETA1 ** t)
                    v_hat = v[j] / (1.0 - ADAM_BETA2 ** t)
                    weights[j] = weights[j] - config.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

    return ParameterSet(tuple(zip(names, weights)))


# -------------------------
# Evaluation
# -------------------------
def evaluate(params: ParameterSet, dataset: LabeledDataset) -> EvalReport:
    if len(dataset) == 0:
        raise DatasetError("cannot evaluate on an empty dataset")
    proba = predict_proba(params, dataset.features)
    if proba.shape[1] != dataset.num_classes:
        raise ShapeMismatchError(
            f"model outputs {proba.shape[1]} classes, dataset declares {dataset.num_classes}"
        )
    return classification_report(dataset.labels, proba, mean_loss(params, dataset))
