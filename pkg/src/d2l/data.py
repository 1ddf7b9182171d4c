"""Datasets: synthetic manifold blobs, symmetric label noise, IDX files,
a binary dataset cache, and deterministic batching.

The blob generator builds class-conditional manifolds: each class is a
uniform ball of chosen intrinsic dimension, embedded isometrically into
the ambient space by an orthonormal basis and shifted to an orthonormal
class center.  Distances within a class are exactly the distances on the
low-dimensional ball, so the intrinsic dimensionality of the inputs is
known by construction — which is what makes these datasets useful for
exercising the dimensionality estimator end to end.

Dataset cache layout (integers little-endian u32 unless noted, floats
little-endian f64, labels little-endian i64):

    magic b"D2LDATA1"
    point count, feature width, class count
    features row-major
    observed labels, then true labels
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagic,
    ConfigError,
    CountMismatch,
    InvalidDims,
    InvalidRate,
    NonFiniteInput,
    ShapeMismatch,
    TruncatedFile,
)

DATASET_MAGIC = b"D2LDATA1"
IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus observed and true labels.

    ``labels`` is what training sees; ``true_labels`` is the pre-noise
    ground truth kept for evaluation.  They are identical until noise is
    injected.
    """

    features: np.ndarray
    labels: np.ndarray
    true_labels: np.ndarray
    class_count: int

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        true_labels = np.ascontiguousarray(self.true_labels, dtype=np.int64)
        if features.ndim != 2:
            raise ShapeMismatch(f"features must be 2-d, got shape {features.shape}")
        if labels.shape != (len(features),) or true_labels.shape != (len(features),):
            raise ShapeMismatch("one observed and one true label per row required")
        if not np.isfinite(features).all():
            raise NonFiniteInput("features contain nan or inf")
        if self.class_count < 2:
            raise ConfigError(f"need at least 2 classes, got {self.class_count}")
        for name, arr in (("labels", labels), ("true_labels", true_labels)):
            if len(arr) and (arr.min() < 0 or arr.max() >= self.class_count):
                raise ConfigError(f"{name} outside [0, {self.class_count})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "true_labels", true_labels)

    def __len__(self) -> int:
        return len(self.features)


def inject_symmetric_noise(labels, class_count: int, rate: float, seed) -> np.ndarray:
    """Flip exactly round(rate * n) labels, uniformly to a different class.

    Flip positions are drawn without replacement; each flipped label is
    redrawn uniformly over the other ``class_count - 1`` classes, so the
    original label is never kept.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if not 0.0 <= rate < 1.0:
        raise InvalidRate(f"noise rate must be in [0, 1), got {rate}")
    count = int(round(rate * len(labels)))
    noisy = labels.copy()
    if count == 0:
        return noisy
    if class_count < 2:
        raise ConfigError("cannot flip labels with fewer than 2 classes")
    rng = np.random.default_rng(seed)
    positions = rng.choice(len(labels), size=count, replace=False)
    draws = rng.integers(0, class_count - 1, size=count)
    noisy[positions] = np.where(draws >= labels[positions], draws + 1, draws)
    return noisy


def with_noise(dataset: Dataset, rate: float, seed) -> Dataset:
    """Copy of the dataset with observed labels flipped at the given rate."""
    return Dataset(
        features=dataset.features,
        labels=inject_symmetric_noise(dataset.true_labels, dataset.class_count, rate, seed),
        true_labels=dataset.true_labels,
        class_count=dataset.class_count,
    )


def _ball(rng, count: int, dim: int) -> np.ndarray:
    """Uniform draws from the unit ball: random direction, radius u^(1/dim)."""
    direction = rng.standard_normal((count, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = rng.random(count) ** (1.0 / dim)
    return direction * radius[:, None]


def _orthonormal_columns(rng, rows: int, cols: int) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q


def gen_manifold_blobs(
    train_per_class: int,
    test_per_class: int,
    class_count: int,
    intrinsic_dim: int,
    ambient_dim: int,
    separation: float = 6.0,
    seed=0,
):
    """Paired train/test datasets of class-conditional manifold blobs.

    Both splits share the same geometry (class centers and embedding
    bases) and differ only in the sampled points, so a classifier trained
    on one generalizes to the other.  Class k occupies a unit ball of
    ``intrinsic_dim`` dimensions, embedded isometrically in the ambient
    space and centered at ``separation`` times an orthonormal direction.
    Returns (train, test).
    """
    if intrinsic_dim < 1 or ambient_dim < intrinsic_dim:
        raise InvalidDims(
            f"need 1 <= intrinsic_dim <= ambient_dim, got {intrinsic_dim}, {ambient_dim}"
        )
    if ambient_dim < class_count:
        raise InvalidDims(
            f"ambient_dim {ambient_dim} too small for {class_count} orthonormal centers"
        )
    if class_count < 2:
        raise ConfigError(f"need at least 2 classes, got {class_count}")
    if train_per_class < 1 or test_per_class < 1:
        raise ConfigError("need at least one point per class and split")
    if separation <= 0:
        raise ConfigError(f"separation must be positive, got {separation}")

    geometry_rng = np.random.default_rng([seed, 0])
    centers = separation * _orthonormal_columns(geometry_rng, ambient_dim, class_count).T
    bases = [
        _orthonormal_columns(geometry_rng, ambient_dim, intrinsic_dim)
        for _ in range(class_count)
    ]

    def sample(per_class: int, stream: int) -> Dataset:
        rng = np.random.default_rng([seed, stream])
        features = np.empty((class_count * per_class, ambient_dim))
        labels = np.repeat(np.arange(class_count, dtype=np.int64), per_class)
        for k in range(class_count):
            block = slice(k * per_class, (k + 1) * per_class)
            features[block] = centers[k] + _ball(rng, per_class, intrinsic_dim) @ bases[k].T
        return Dataset(
            features=features, labels=labels, true_labels=labels, class_count=class_count
        )

    return sample(train_per_class, 1), sample(test_per_class, 2)


def batch_indices(n: int, batch_size: int, rng):
    """Random-order index batches covering 0..n-1 exactly once.

    The last batch may be smaller.  Identical generator state yields
    identical batches.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be positive, got {batch_size}")
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _read_exact(fh, count, what):
    buf = fh.read(count)
    if len(buf) != count:
        raise TruncatedFile(f"expected {count} bytes for {what}, got {len(buf)}")
    return buf


def load_idx_images(path) -> np.ndarray:
    """Images from an IDX file as rows of [0, 1] floats (pixel / 255)."""
    with open(path, "rb") as fh:
        magic, count, rows, cols = struct.unpack(">IIII", _read_exact(fh, 16, "image header"))
        if magic != IDX_IMAGE_MAGIC:
            raise BadMagic(f"expected image magic {IDX_IMAGE_MAGIC:#010x}, got {magic:#010x}")
        raw = _read_exact(fh, count * rows * cols, "image pixels")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    return pixels.astype(np.float64) / 255.0


def load_idx_labels(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, count = struct.unpack(">II", _read_exact(fh, 8, "label header"))
        if magic != IDX_LABEL_MAGIC:
            raise BadMagic(f"expected label magic {IDX_LABEL_MAGIC:#010x}, got {magic:#010x}")
        raw = _read_exact(fh, count, "labels")
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def save_idx_images(path, features, rows: int, cols: int) -> None:
    """Inverse of the loader: floats in [0, 1] stored as rounded bytes."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != rows * cols:
        raise ShapeMismatch(f"features {features.shape} do not fill {rows}x{cols} images")
    pixels = np.rint(features * 255.0)
    if pixels.min() < 0 or pixels.max() > 255:
        raise ConfigError("pixel values outside [0, 1]")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, len(features), rows, cols))
        fh.write(pixels.astype(np.uint8).tobytes(order="C"))


def save_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() > 255:
        raise ConfigError("labels do not fit in one byte")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABEL_MAGIC, len(labels)))
        fh.write(labels.astype(np.uint8).tobytes(order="C"))


def load_idx_dataset(images_path, labels_path, class_count: int = 10) -> Dataset:
    """Image/label IDX pair as one dataset; counts must agree."""
    features = load_idx_images(images_path)
    labels = load_idx_labels(labels_path)
    if len(features) != len(labels):
        raise CountMismatch(f"{len(features)} images but {len(labels)} labels")
    return Dataset(features=features, labels=labels, true_labels=labels, class_count=class_count)


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(
            struct.pack(
                "<III", len(dataset), dataset.features.shape[1], dataset.class_count
            )
        )
        fh.write(dataset.features.astype("<f8").tobytes(order="C"))
        fh.write(dataset.labels.astype("<i8").tobytes(order="C"))
        fh.write(dataset.true_labels.astype("<i8").tobytes(order="C"))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(len(DATASET_MAGIC))
        if magic != DATASET_MAGIC:
            raise BadMagic(f"not a dataset cache: magic {magic!r}")
        n, width, class_count = struct.unpack("<III", _read_exact(fh, 12, "dataset header"))
        features = np.frombuffer(
            _read_exact(fh, 8 * n * width, "features"), dtype="<f8"
        ).reshape(n, width)
        labels = np.frombuffer(_read_exact(fh, 8 * n, "labels"), dtype="<i8")
        true_labels = np.frombuffer(_read_exact(fh, 8 * n, "true labels"), dtype="<i8")
    return Dataset(
        features=features.copy(),
        labels=labels.copy(),
        true_labels=true_labels.copy(),
        class_count=class_count,
    )
