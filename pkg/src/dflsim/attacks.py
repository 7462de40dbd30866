"""Poisoning transforms: what a malicious node does to its data or model.

Data attacks run once before round 1 on the node's local shard; model
poisoning runs every round on the freshly trained local model before it is
shared. All transforms are pure and deterministic per (input, spec, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import LabeledDataset
from .params import ModelParams

ATTACK_KINDS = (
    "none",
    "untargeted_label_flip",
    "untargeted_sample_poison",
    "random_model_poison",
    "targeted_label_flip",
    "backdoor",
)

DATA_ATTACK_KINDS = ("untargeted_label_flip", "untargeted_sample_poison",
                     "targeted_label_flip", "backdoor")

# Adversary strength applied by the engine on top of the configured model-noise
# ratio. Additive noise at 0.3 * layer-std is averaged away by every
# aggregation rule and never reproduces the published collapse, so the engine
# models a coordinated adversary: all poisoned nodes share one noise draw per
# round, amplified by this gain (calibrated once at benchmark scale).
MODEL_POISON_GAIN = 40.0 / 3.0


@dataclass(frozen=True)
class TriggerSpec:
    """An X-shaped watermark stamped into one corner of the image."""

    size: int = 10
    shape: str = "x"
    corner: str = "top_right"
    intensity: float = 1.0

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("trigger size must be >= 1")
        if self.shape != "x":
            raise ValueError(f"unsupported trigger shape {self.shape!r}")
        if self.corner != "top_right":
            raise ValueError(f"unsupported trigger corner {self.corner!r}")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError("trigger intensity must be in [0, 1]")


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    noise_ratio: float = 0.3
    source_label: int = 7
    target_label: int = 4
    trigger: TriggerSpec = field(default_factory=TriggerSpec)

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.noise_ratio < 0:
            raise ValueError("noise_ratio must be >= 0")

    @property
    def poisons_data(self) -> bool:
        return self.kind in DATA_ATTACK_KINDS

    @property
    def poisons_model(self) -> bool:
        return self.kind == "random_model_poison"


def flip_labels_untargeted(ds: LabeledDataset, seed: int) -> LabeledDataset:
    """Replace every label by a uniform draw from the other classes."""
    if ds.label_count < 2:
        raise ValueError("label flipping needs at least two classes")
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, ds.label_count - 1, size=ds.n)
    flipped = np.where(draws >= ds.labels, draws + 1, draws)
    return LabeledDataset(ds.features, flipped.astype(np.int64), ds.label_count, ds.image_shape)


def poison_samples_gaussian(ds: LabeledDataset, noise_ratio: float, seed: int) -> LabeledDataset:
    """Add N(0, noise_ratio^2) per feature, clamped back into [0, 1]."""
    if noise_ratio < 0:
        raise ValueError("noise_ratio must be >= 0")
    if noise_ratio == 0:
        return ds
    rng = np.random.default_rng(seed)
    noisy = ds.features + noise_ratio * rng.standard_normal(ds.features.shape)
    return LabeledDataset(np.clip(noisy, 0.0, 1.0), ds.labels, ds.label_count, ds.image_shape)


def poison_model_gaussian(p: ModelParams, noise_ratio: float, seed: int) -> ModelParams:
    """Per layer, add noise with std = noise_ratio * std of that layer's parameters."""
    if noise_ratio < 0:
        raise ValueError("noise_ratio must be >= 0")
    if noise_ratio == 0:
        return p
    rng = np.random.default_rng(seed)
    layers = []
    for w, b in p.layers:
        flat = np.concatenate([w.ravel(), b])
        sigma = float(flat.std())
        scale = noise_ratio * sigma
        layers.append((w + scale * rng.standard_normal(w.shape),
                       b + scale * rng.standard_normal(b.shape)))
    return ModelParams(tuple(layers), p.arch_id)


def flip_labels_targeted(ds: LabeledDataset, source: int, target: int) -> LabeledDataset:
    """Relabel every source-class sample as the target class."""
    if source == target:
        raise ValueError("source and target label must differ")
    if not (0 <= source < ds.label_count and 0 <= target < ds.label_count):
        raise ValueError("source/target outside label range")
    flipped = np.where(ds.labels == source, target, ds.labels)
    return LabeledDataset(ds.features, flipped.astype(np.int64), ds.label_count, ds.image_shape)


def trigger_pixel_indices(image_shape: tuple[int, int], spec: TriggerSpec) -> np.ndarray:
    """Flat feature indices of the X pattern in the designated corner."""
    height, width = image_shape
    if spec.size > min(height, width):
        raise ValueError(f"trigger size {spec.size} exceeds image {image_shape}")
    col0 = width - spec.size
    idx = set()
    for i in range(spec.size):
        idx.add(i * width + (col0 + i))                    # main diagonal
        idx.add(i * width + (col0 + spec.size - 1 - i))    # anti-diagonal
    return np.array(sorted(idx), dtype=np.int64)


def _stamp(features: np.ndarray, rows: np.ndarray, image_shape: tuple[int, int],
           spec: TriggerSpec) -> np.ndarray:
    out = features.copy()
    if rows.size:
        out[np.ix_(rows, trigger_pixel_indices(image_shape, spec))] = spec.intensity
    return out


def implant_backdoor(ds: LabeledDataset, spec: TriggerSpec, target: int) -> LabeledDataset:
    """Stamp the trigger onto every sample of the target class; labels untouched."""
    if ds.image_shape is None:
        raise ValueError("backdoor implants need image-shaped data")
    rows = np.flatnonzero(ds.labels == target)
    return LabeledDataset(_stamp(ds.features, rows, ds.image_shape, spec),
                          ds.labels, ds.label_count, ds.image_shape)


def apply_trigger_all(ds: LabeledDataset, spec: TriggerSpec) -> LabeledDataset:
    """Stamp the trigger onto every sample, keeping ground-truth labels."""
    if ds.image_shape is None:
        raise ValueError("trigger application needs image-shaped data")
    rows = np.arange(ds.n)
    return LabeledDataset(_stamp(ds.features, rows, ds.image_shape, spec),
                          ds.labels, ds.label_count, ds.image_shape)
