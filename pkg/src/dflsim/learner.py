"""Local training: an MLP with ReLU hidden layers trained by mini-batch SGD.

This is the training function each federation node runs between exchanges.
Plain SGD on softmax cross-entropy keeps runs reproducible: given the same
parameters, data, and config, two calls return bit-identical results.

SGD updates clip the global gradient norm at ``GRAD_CLIP_NORM``. Clean
training never reaches the threshold (benchmark-scale gradients peak under
5), so the clip only engages when a node resumes from a poisoned aggregate,
keeping those trajectories finite instead of overflowing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset
from .params import ModelParams

DEFAULT_ARCH_SIZES = (784, 256, 128, 10)
GRAD_CLIP_NORM = 20.0


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; the node's round must be aborted."""


@dataclass(frozen=True)
class MlpArchitecture:
    """Layer sizes (input, hidden..., output); ReLU hidden, softmax output."""

    layer_sizes: tuple[int, ...] = DEFAULT_ARCH_SIZES
    activation: str = "relu"

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or any(s <= 0 for s in self.layer_sizes):
            raise ValueError(f"invalid layer sizes {self.layer_sizes}")
        if self.activation != "relu":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def arch_id(self) -> str:
        return "mlp-" + "x".join(str(s) for s in self.layer_sizes)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    learning_rate: float = 0.1
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")


def init_model(arch: MlpArchitecture, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases; deterministic per seed."""
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(arch.layer_sizes[:-1], arch.layer_sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append((w, np.zeros(fan_out)))
    return ModelParams(tuple(layers), arch.arch_id)


def _forward(layers: list, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Hidden activations plus output logits for a batch."""
    activations = [x]
    h = x
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
        activations.append(h)
    w, b = layers[-1]
    return activations, h @ w + b


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_gradients(p: ModelParams, x: np.ndarray, y: np.ndarray
                       ) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Mean cross-entropy and its gradients w.r.t. every layer.

    Args:
        p: model parameters.
        x: (batch, input_dim) features.
        y: (batch,) integer labels.

    Returns:
        (loss, [(dW, db), ...]) in layer order.
    """
    layers = list(p.layers)
    activations, logits = _forward(layers, x)
    batch = x.shape[0]
    probs = _softmax(logits)
    eps_logp = np.log(np.clip(probs[np.arange(batch), y], 1e-300, None))
    loss = float(-eps_logp.mean())

    delta = probs
    delta[np.arange(batch), y] -= 1.0
    delta /= batch

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)  # type: ignore[list-item]
    for li in range(len(layers) - 1, -1, -1):
        a_in = activations[li]
        grads[li] = (a_in.T @ delta, delta.sum(axis=0))
        if li > 0:
            w, _ = layers[li]
            delta = (delta @ w.T) * (activations[li] > 0.0)
    return loss, grads


def train(p: ModelParams, ds: LabeledDataset, cfg: TrainConfig) -> ModelParams:
    """cfg.epochs passes of shuffled mini-batch SGD; input model unmodified."""
    if ds.n == 0:
        raise ValueError("cannot train on an empty dataset")
    if ds.dim != p.layers[0][0].shape[0]:
        raise ValueError(f"feature dim {ds.dim} does not match model input "
                         f"{p.layers[0][0].shape[0]}")
    rng = np.random.default_rng(cfg.seed)
    layers = [(w.copy(), b.copy()) for w, b in p.layers]
    lr = cfg.learning_rate
    x_all, y_all = ds.features, ds.labels
    for _ in range(cfg.epochs):
        order = rng.permutation(ds.n)
        for start in range(0, ds.n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_gradients(ModelParams(tuple(layers), p.arch_id),
                                             x_all[idx], y_all[idx])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss {loss}")
            grad_norm_sq = sum(float((dw * dw).sum() + (db * db).sum()) for dw, db in grads)
            step = lr
            if grad_norm_sq > GRAD_CLIP_NORM ** 2:
                step = lr * GRAD_CLIP_NORM / np.sqrt(grad_norm_sq)
            for li, (dw, db) in enumerate(grads):
                w, b = layers[li]
                w -= step * dw
                b -= step * db
    return ModelParams(tuple((w, b) for w, b in layers), p.arch_id)


def logits_batch(p: ModelParams, x: np.ndarray) -> np.ndarray:
    _, logits = _forward(list(p.layers), x)
    return logits


def predict(p: ModelParams, x: np.ndarray) -> int:
    """Argmax label for one feature vector; ties go to the lowest index."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (p.layers[0][0].shape[0],):
        raise ValueError(f"feature shape {x.shape} does not match model input")
    return int(np.argmax(logits_batch(p, x[None, :])[0]))


def predict_batch(p: ModelParams, x: np.ndarray, chunk: int = 2048) -> np.ndarray:
    preds = np.empty(x.shape[0], dtype=np.int64)
    for start in range(0, x.shape[0], chunk):
        preds[start:start + chunk] = np.argmax(logits_batch(p, x[start:start + chunk]), axis=1)
    return preds


def evaluate(p: ModelParams, ds: LabeledDataset) -> np.ndarray:
    """Confusion matrix counts[i, j] = samples with true label i predicted j."""
    if ds.n == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    if ds.dim != p.layers[0][0].shape[0]:
        raise ValueError(f"feature dim {ds.dim} does not match model input")
    preds = predict_batch(p, ds.features)
    k = ds.label_count
    cm = np.bincount(ds.labels * k + preds, minlength=k * k).reshape(k, k)
    return cm.astype(np.int64)


def mean_cross_entropy(p: ModelParams, ds: LabeledDataset, chunk: int = 2048) -> float:
    """Mean softmax cross-entropy of the model on a dataset."""
    total = 0.0
    for start in range(0, ds.n, chunk):
        x = ds.features[start:start + chunk]
        y = ds.labels[start:start + chunk]
        probs = _softmax(logits_batch(p, x))
        logp = np.log(np.clip(probs[np.arange(x.shape[0]), y], 1e-300, None))
        total -= logp.sum()
    return total / ds.n
