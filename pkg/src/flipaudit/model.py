"""Small fully connected classifier with erf hidden activations and a
two-output softmax head.

The solver needs derivatives of the score with respect to the *input*, so the
forward/backward passes are written out explicitly in numpy rather than
delegated to an autodiff framework. All arithmetic is float64 and training is
deterministic for a fixed seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import erf

from .errors import ModelFormatError, TrainingDivergedError

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)


class ScoreVector(NamedTuple):
    z1: float
    z2: float


@dataclass
class TrainConfig:
    epochs: int = 80
    batch_size: int = 128
    learning_rate: float = 0.05
    seed: int = 0
    l2_penalty: float = 1e-5
    momentum: float = 0.9

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.l2_penalty < 0.0 or not (0.0 <= self.momentum < 1.0):
            raise ValueError("l2_penalty must be >= 0 and momentum in [0, 1)")


class MlpModel:
    """Feed-forward net: erf on hidden layers, softmax over the 2 outputs.

    ``weights[l]`` has shape (layer_sizes[l], layer_sizes[l+1]) so a batch of
    row vectors propagates as ``a @ W + b``.
    """

    def __init__(self, layer_sizes, weights, biases, feature_schema_hash=None):
        self.layer_sizes = [int(s) for s in layer_sizes]
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activation = "erf"
        self.feature_schema_hash = feature_schema_hash
        self._validate()

    def _validate(self):
        sizes = self.layer_sizes
        if len(sizes) < 2 or sizes[-1] != 2:
            raise ModelFormatError("layer_sizes must end with an output width of 2")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ModelFormatError("one weight matrix and bias vector per layer transition required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]):
                raise ModelFormatError(
                    f"layer {i}: weight shape {w.shape} does not match "
                    f"layer_sizes {(sizes[i], sizes[i + 1])}"
                )
            if b.shape != (sizes[i + 1],):
                raise ModelFormatError(f"layer {i}: bias shape {b.shape} does not match width {sizes[i + 1]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ModelFormatError(f"layer {i}: non-finite parameters")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    def logits(self, x) -> np.ndarray:
        a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if a.shape[1] != self.n_inputs:
            raise ValueError(f"input width {a.shape[1]} does not match model input width {self.n_inputs}")
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = erf(a @ w + b)
        return a @ self.weights[-1] + self.biases[-1]

    def scores(self, x) -> np.ndarray:
        """Batch softmax scores, shape (n, 2)."""
        logit = self.logits(x)
        shifted = logit - logit.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        return e / e.sum(axis=1, keepdims=True)

    def forward(self, x) -> ScoreVector:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("forward expects a single feature vector; use scores() for batches")
        z = self.scores(x[None, :])[0]
        return ScoreVector(float(z[0]), float(z[1]))

    def logit_gap(self, x) -> np.ndarray:
        """g = logit_1 - logit_2; the decision boundary is g = 0."""
        logit = self.logits(x)
        return logit[:, 0] - logit[:, 1]

    def gap_and_gradient(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Logit gap and its input gradient for a batch, shapes (n,), (n, d)."""
        a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if a.shape[1] != self.n_inputs:
            raise ValueError(f"input width {a.shape[1]} does not match model input width {self.n_inputs}")
        pre_acts = []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            s = a @ w + b
            pre_acts.append(s)
            a = erf(s)
        w_out = self.weights[-1]
        gap = a @ (w_out[:, 0] - w_out[:, 1]) + (self.biases[-1][0] - self.biases[-1][1])
        delta = np.broadcast_to(w_out[:, 0] - w_out[:, 1], (a.shape[0], w_out.shape[0])).copy()
        for w, s in zip(reversed(self.weights[:-1]), reversed(pre_acts)):
            delta = (delta * _TWO_OVER_SQRT_PI * np.exp(-s * s)) @ w.T
        return gap, delta

    def input_gradient(self, x) -> np.ndarray:
        """Gradient of z1 with respect to the input vector x."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("input_gradient expects a single feature vector")
        gap, grad = self.gap_and_gradient(x[None, :])
        z1 = 1.0 / (1.0 + np.exp(-gap[0]))
        return z1 * (1.0 - z1) * grad[0]

    def predicted_classes(self, x) -> np.ndarray:
        z = self.scores(x)
        return (z[:, 1] > z[:, 0]).astype(np.int64)

    def copy(self) -> "MlpModel":
        return MlpModel(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.feature_schema_hash,
        )


def accuracy(model: MlpModel, x, labels) -> float:
    labels = np.asarray(labels)
    if labels.ndim == 2:
        labels = np.argmax(labels, axis=1)
    return float(np.mean(model.predicted_classes(x) == labels))


def _as_soft_targets(labels, n_rows: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.float64)
    if y.shape[0] != n_rows:
        raise ValueError("labels and features disagree on row count")
    if y.ndim == 1:
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise ValueError("hard labels must be class indices 0 or 1")
        t = np.zeros((n_rows, 2))
        t[np.arange(n_rows), y.astype(np.int64)] = 1.0
        return t
    if y.ndim == 2 and y.shape[1] == 2:
        if not np.allclose(y.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("soft targets must sum to 1 per row")
        return y.copy()
    raise ValueError("labels must be a class-index vector or an (n, 2) soft-target array")


def _cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-np.sum(targets * log_z) / logits.shape[0])
    grad = (np.exp(log_z) - targets) / logits.shape[0]
    return loss, grad


def train_model(x, labels, layer_sizes, config: TrainConfig | None = None,
                feature_schema_hash=None) -> tuple[MlpModel, list[float]]:
    """Train by mini-batch gradient descent with momentum; returns the model
    and the per-epoch loss trace.

    Inputs are standardized internally; the affine transform is folded back
    into the first layer so the returned model scores raw feature vectors.
    """
    config = config or TrainConfig()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training features must be a nonempty 2-D array")
    targets = _as_soft_targets(labels, x.shape[0])
    sizes = [int(s) for s in layer_sizes]
    if sizes[0] != x.shape[1]:
        raise ValueError(f"layer_sizes[0]={sizes[0]} does not match feature width {x.shape[1]}")
    if sizes[-1] != 2:
        raise ValueError("final layer width must be 2")

    rng = np.random.default_rng(config.seed)
    weights = []
    biases = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
        biases.append(np.zeros(n_out))

    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    xs = (x - mean) / scale

    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]
    n = x.shape[0]
    losses: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            a = xs[idx]
            acts = [a]
            pre_acts = []
            for w, b in zip(weights[:-1], biases[:-1]):
                s = a @ w + b
                pre_acts.append(s)
                a = erf(s)
                acts.append(a)
            logits = a @ weights[-1] + biases[-1]
            loss, delta = _cross_entropy(logits, targets[idx])
            if config.l2_penalty > 0.0:
                loss += 0.5 * config.l2_penalty * sum(float(np.sum(w * w)) for w in weights)
            epoch_loss += loss
            n_batches += 1

            grads_w = [None] * len(weights)
            grads_b = [None] * len(biases)
            for layer in range(len(weights) - 1, -1, -1):
                grads_w[layer] = acts[layer].T @ delta + config.l2_penalty * weights[layer]
                grads_b[layer] = delta.sum(axis=0)
                if layer > 0:
                    delta = (delta @ weights[layer].T) * _TWO_OVER_SQRT_PI * np.exp(
                        -pre_acts[layer - 1] ** 2)
            for layer in range(len(weights)):
                vel_w[layer] = config.momentum * vel_w[layer] - config.learning_rate * grads_w[layer]
                vel_b[layer] = config.momentum * vel_b[layer] - config.learning_rate * grads_b[layer]
                weights[layer] += vel_w[layer]
                biases[layer] += vel_b[layer]

        mean_loss = epoch_loss / max(n_batches, 1)
        if not math.isfinite(mean_loss):
            raise TrainingDivergedError(epoch)
        losses.append(mean_loss)

    # Fold (x - mean) / scale into the first layer: the model scores raw inputs.
    w0 = weights[0]
    weights[0] = w0 / scale[:, None]
    biases[0] = biases[0] - (mean / scale) @ w0
    return MlpModel(sizes, weights, biases, feature_schema_hash), losses


def save_model(model: MlpModel, path) -> None:
    payload = {
        "layer_sizes": model.layer_sizes,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "activation": "erf",
        "feature_schema_hash": model.feature_schema_hash,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_model(path) -> MlpModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"model file is not valid JSON at offset {exc.pos}: {exc.msg}") from exc
    for key in ("layer_sizes", "weights", "biases", "activation"):
        if key not in payload:
            raise ModelFormatError(f"model file is missing required field '{key}'")
    if payload["activation"] != "erf":
        raise ModelFormatError(f"unsupported activation '{payload['activation']}'")
    try:
        return MlpModel(
            payload["layer_sizes"],
            payload["weights"],
            payload["biases"],
            payload.get("feature_schema_hash"),
        )
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"model file has malformed parameter arrays: {exc}") from exc
