"""Dataset loading, synthesis, and partitioning.

MNIST and FashionMNIST ship as big-endian IDX files; :func:`load_idx` reads
that container directly (no download — callers supply file paths). Features
are always float64 in [0, 1]; labels are int64 in 0..label_count-1.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Raised on bad magic numbers, truncation, or count mismatches."""


@dataclass(frozen=True)
class LabeledDataset:
    features: np.ndarray        # (n, d) float64 in [0, 1]
    labels: np.ndarray          # (n,) int64
    label_count: int
    image_shape: tuple[int, int] | None = None

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def validate(self) -> None:
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("features must be (n, d), labels (n,)")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("feature/label count mismatch")
        if self.n and (self.features.min() < 0.0 or self.features.max() > 1.0):
            raise ValueError("features outside [0, 1]")
        if self.n and (self.labels.min() < 0 or self.labels.max() >= self.label_count):
            raise ValueError("label outside 0..label_count-1")
        if self.image_shape is not None:
            h, w = self.image_shape
            if h * w != self.dim:
                raise ValueError("image_shape does not match feature dimension")

    def take(self, index: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.features[index].copy(), self.labels[index].copy(),
                              self.label_count, self.image_shape)


def _read_idx_header(data: bytes, path: str, expected_magic: int, dims: int) -> tuple[tuple[int, ...], int]:
    header_len = 4 + 4 * dims
    if len(data) < header_len:
        raise IdxFormatError(f"{path}: truncated header")
    magic = struct.unpack(">I", data[:4])[0]
    if magic != expected_magic:
        raise IdxFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    shape = struct.unpack(f">{dims}I", data[4:header_len])
    return shape, header_len


def load_idx(images_path: str, labels_path: str, label_count: int = 10) -> LabeledDataset:
    """Load an IDX image/label file pair (the MNIST container format).

    Pixel bytes are scaled by 1/255 into [0, 1].
    """
    with open(images_path, "rb") as f:
        img_data = f.read()
    with open(labels_path, "rb") as f:
        lbl_data = f.read()

    (n_img, rows, cols), img_off = _read_idx_header(img_data, images_path, IDX_IMAGES_MAGIC, 3)
    (n_lbl,), lbl_off = _read_idx_header(lbl_data, labels_path, IDX_LABELS_MAGIC, 1)
    if n_img != n_lbl:
        raise IdxFormatError(f"count mismatch: {n_img} images vs {n_lbl} labels")
    if len(img_data) - img_off < n_img * rows * cols:
        raise IdxFormatError(f"{images_path}: truncated pixel data")
    if len(lbl_data) - lbl_off < n_lbl:
        raise IdxFormatError(f"{labels_path}: truncated label data")

    pixels = np.frombuffer(img_data, dtype=np.uint8, count=n_img * rows * cols, offset=img_off)
    features = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lbl_data, dtype=np.uint8, count=n_lbl, offset=lbl_off).astype(np.int64)
    ds = LabeledDataset(features, labels, label_count, (rows, cols))
    ds.validate()
    return ds


def synthetic_blobs(classes: int, per_class: int, dim: int, spread: float, seed: int) -> LabeledDataset:
    """Gaussian blobs, one cluster per class, clamped to [0, 1].

    Class c is centered at 0.1 + 0.8 * one_hot(c); fast stand-in dataset for
    CI-scale runs.
    """
    if classes < 2 or per_class < 1 or dim < classes:
        raise ValueError(f"invalid sizes: classes={classes}, per_class={per_class}, dim={dim}")
    rng = np.random.default_rng(seed)
    n = classes * per_class
    labels = np.repeat(np.arange(classes, dtype=np.int64), per_class)
    centers = np.full((classes, dim), 0.1)
    centers[np.arange(classes), np.arange(classes)] += 0.8
    features = centers[labels]
    if spread > 0:
        features = features + spread * rng.standard_normal((n, dim))
    features = np.clip(features, 0.0, 1.0)
    ds = LabeledDataset(features, labels, classes)
    ds.validate()
    return ds


def partition_iid(ds: LabeledDataset, n_nodes: int, seed: int) -> list[LabeledDataset]:
    """Shuffle then slice into n_nodes shards whose sizes differ by at most 1."""
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    if n_nodes > ds.n:
        raise ValueError(f"cannot split {ds.n} samples across {n_nodes} nodes")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    bounds = np.linspace(0, ds.n, n_nodes + 1).astype(int)
    return [ds.take(perm[bounds[i]:bounds[i + 1]]) for i in range(n_nodes)]


def holdout_split(ds: LabeledDataset, frac: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Split off round(frac * n) samples as a local validation set."""
    if not 0.0 < frac < 1.0:
        raise ValueError(f"frac must be in (0, 1), got {frac}")
    n_val = int(round(frac * ds.n))
    if n_val < 1 or ds.n - n_val < 1:
        raise ValueError(f"split of {ds.n} samples at frac={frac} leaves an empty side")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(ds.n)
    return ds.take(perm[n_val:]), ds.take(perm[:n_val])


def subsample_fraction(ds: LabeledDataset, fraction: float) -> LabeledDataset:
    """First ceil(fraction * n) samples, for reduced-scale runs."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return ds
    k = max(1, int(np.ceil(fraction * ds.n)))
    return ds.take(np.arange(k))
