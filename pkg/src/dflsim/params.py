"""Numeric kernel for model parameters.

A model is an ordered sequence of (weight matrix, bias vector) layers tagged
with an architecture id. All arithmetic is float64 and all operations are
pure: they never mutate their inputs.

Flattening order is fixed and documented: layers in order, within a layer the
weight matrix in row-major (C) order followed by the bias vector. Every
coordinate-wise operation in the aggregators relies on this ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Layer = tuple[np.ndarray, np.ndarray]


class ArchitectureMismatchError(ValueError):
    """Raised when an operation mixes models of different architectures."""


@dataclass(frozen=True)
class ModelParams:
    """Layered MLP parameters: ((W1, b1), (W2, b2), ...) plus an arch tag.

    Weight matrices have shape (fan_in, fan_out); biases have shape (fan_out,).
    """

    layers: tuple[Layer, ...]
    arch_id: str

    @property
    def total_count(self) -> int:
        return sum(w.size + b.size for w, b in self.layers)

    def layer_shapes(self) -> tuple[tuple[tuple[int, int], int], ...]:
        return tuple(((w.shape[0], w.shape[1]), b.shape[0]) for w, b in self.layers)

    def validate(self) -> None:
        for i, (w, b) in enumerate(self.layers):
            if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {i}: inconsistent shapes {w.shape} / {b.shape}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i}: non-finite parameter")


def _as_f64(a: np.ndarray) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)


def make_model(layers, arch_id: str) -> ModelParams:
    """Build a ModelParams from array-likes, coercing to float64 copies."""
    fixed = tuple((_as_f64(w).copy(), _as_f64(b).copy()) for w, b in layers)
    model = ModelParams(fixed, arch_id)
    model.validate()
    return model


def check_same_arch(a: ModelParams, b: ModelParams) -> None:
    if a.arch_id != b.arch_id or a.layer_shapes() != b.layer_shapes():
        raise ArchitectureMismatchError(f"architecture mismatch: {a.arch_id!r} vs {b.arch_id!r}")


def flatten(p: ModelParams) -> np.ndarray:
    """Layer-major, row-major flattening; inverse of :func:`unflatten`."""
    parts = []
    for w, b in p.layers:
        parts.append(w.ravel())
        parts.append(b)
    return np.concatenate(parts)


def unflatten(vec: np.ndarray, like: ModelParams) -> ModelParams:
    """Rebuild a model with the shapes/arch of ``like`` from a flat vector."""
    vec = _as_f64(vec)
    if vec.shape != (like.total_count,):
        raise ValueError(f"expected {like.total_count} coordinates, got {vec.shape}")
    layers = []
    offset = 0
    for w, b in like.layers:
        layers.append((
            vec[offset:offset + w.size].reshape(w.shape).copy(),
            vec[offset + w.size:offset + w.size + b.size].copy(),
        ))
        offset += w.size + b.size
    return ModelParams(tuple(layers), like.arch_id)


def l2_distance(a: ModelParams, b: ModelParams) -> float:
    """Euclidean distance between flattened parameter vectors."""
    check_same_arch(a, b)
    return float(np.linalg.norm(flatten(a) - flatten(b)))


def l2_norm(p: ModelParams) -> float:
    return float(np.linalg.norm(flatten(p)))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """cos(a, b) in [-1, 1]; returns 0.0 if either vector is all-zero.

    The zero-vector rule keeps trust-scoring aggregators total in round-0
    edge cases (no update yet means no evidence of alignment).
    """
    a = _as_f64(a)
    b = _as_f64(b)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def weighted_sum(models: list[ModelParams], weights) -> ModelParams:
    """Coordinate-wise sum(w_i * m_i) / sum(w_i) over nonnegative weights."""
    if len(models) == 0:
        raise ValueError("weighted_sum of empty model sequence")
    weights = _as_f64(weights)
    if weights.shape != (len(models),):
        raise ValueError("one weight per model required")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    total = float(weights.sum())
    if total <= 0.0:
        raise ValueError("weight sum must be positive")
    first = models[0]
    for m in models[1:]:
        check_same_arch(first, m)
    layers = []
    for li, (w0, b0) in enumerate(first.layers):
        w_acc = np.zeros_like(w0)
        b_acc = np.zeros_like(b0)
        for m, wt in zip(models, weights):
            if wt != 0.0:
                w_acc += wt * m.layers[li][0]
                b_acc += wt * m.layers[li][1]
        layers.append((w_acc / total, b_acc / total))
    return ModelParams(tuple(layers), first.arch_id)


def clip_to_norm(p: ModelParams, max_norm: float) -> ModelParams:
    """Scale the whole model down so its flattened L2 norm is <= max_norm."""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    norm = l2_norm(p)
    if norm <= max_norm:
        return p
    scale = max_norm / norm
    layers = tuple((w * scale, b * scale) for w, b in p.layers)
    return ModelParams(layers, p.arch_id)
