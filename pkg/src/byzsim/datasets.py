"""Dataset construction and ingestion.

Two sources: a deterministic Gaussian-blob generator used by most tests and
experiments, and a byte-exact IDX reader for user-supplied MNIST-family
files. No download logic; file paths come from the caller.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .gradients import Array

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxMagicError(ValueError):
    """File does not start with the expected IDX magic number."""


class IdxTruncatedError(ValueError):
    """File ends before the payload promised by its header."""


class IdxCountMismatchError(ValueError):
    """Image file and label file disagree on the sample count."""


@dataclass(frozen=True)
class DatasetSpec:
    """A labelled dataset with an optional held-out test split.

    features are float64 in [0, 1]; labels are integers in [0, n_classes).
    Instances are immutable and safe to share across threads.
    """

    features: Array
    labels: Array
    n_classes: int
    provenance: str
    test_features: Array = None
    test_labels: Array = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labs = np.asarray(self.labels, dtype=np.intp)
        if feats.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if labs.ndim != 1 or labs.shape[0] != feats.shape[0]:
            raise ValueError("labels must be 1-D with one entry per sample")
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        tf = self.test_features
        tl = self.test_labels
        if tf is None:
            tf = np.empty((0, feats.shape[1]), dtype=np.float64)
            tl = np.empty((0,), dtype=np.intp)
        tf = np.asarray(tf, dtype=np.float64)
        tl = np.asarray(tl, dtype=np.intp)
        if tf.ndim != 2 or tf.shape[1] != feats.shape[1]:
            raise ValueError("test features must match the train dimension")
        if tl.shape[0] != tf.shape[0]:
            raise ValueError("test labels must be 1-D with one entry per sample")
        for arr in (feats, tf):
            if not np.all(np.isfinite(arr)):
                raise ValueError("features contain non-finite values")
        for arr in (labs, tl):
            if arr.size and (arr.min() < 0 or arr.max() >= self.n_classes):
                raise ValueError("labels outside [0, n_classes)")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labs)
        object.__setattr__(self, "test_features", tf)
        object.__setattr__(self, "test_labels", tl)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def d_in(self) -> int:
        return self.features.shape[1]


def informative_dims(d: int, n_classes: int) -> int:
    """Number of leading feature dimensions that carry class centers.

    C points span at most C-1 directions, so the informative block is
    C-1 wide (capped by d); every remaining dimension is pure noise.
    """
    return min(d, n_classes - 1)


def make_synthetic_dataset(d: int, n_samples: int, n_classes: int,
                           margin: float, seed: int,
                           scale: float = 1.0,
                           noise_scale: float | None = None) -> DatasetSpec:
    """Gaussian class blobs with a controlled center separation.

    Class centers live in a low-dimensional informative block (the leading
    `informative_dims(d, n_classes)` coordinates); the remaining dimensions
    are pure noise, mirroring how real feature vectors mix discriminative
    and nuisance directions. Centers are drawn at random, shifted so their
    mean is the origin (the feature population is centered), and rescaled
    so the smallest pairwise center distance equals `margin`; samples add
    unit-variance noise before scaling, so `margin` is in units of the
    informative-block standard deviation.

    `scale` sets the informative-block standard deviation (centers scale
    along with it, keeping the margin-to-noise geometry fixed); it
    controls how fast gradient descent saturates without changing the
    classification problem. `noise_scale` sets the nuisance dimensions'
    standard deviation independently (defaults to `scale`), so the
    nuisance block can dominate gradient magnitudes without touching the
    class geometry. Labels are assigned round-robin, so class priors are
    uniform up to one sample. The full set is split 80/20 per class into
    train/test.
    """
    if n_classes < 2:
        raise ValueError("need at least 2 classes")
    if d < 1 or n_samples < n_classes:
        raise ValueError("need d >= 1 and at least one sample per class")
    if margin <= 0:
        raise ValueError("margin must be > 0")
    if scale <= 0:
        raise ValueError("scale must be > 0")
    if noise_scale is None:
        noise_scale = scale
    if noise_scale <= 0:
        raise ValueError("noise_scale must be > 0")
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, 3]))
    k = informative_dims(d, n_classes)
    block = rng.normal(size=(n_classes, k))
    block -= block.mean(axis=0)
    gaps = [np.linalg.norm(block[i] - block[j])
            for i in range(n_classes) for j in range(i + 1, n_classes)]
    block *= margin / min(gaps)
    centers = np.zeros((n_classes, d))
    centers[:, :k] = block
    labels = np.arange(n_samples, dtype=np.intp) % n_classes
    feats = centers[labels] + rng.normal(size=(n_samples, d))
    feats[:, :k] *= scale
    feats[:, k:] *= noise_scale

    train_idx: list[int] = []
    test_idx: list[int] = []
    for c in range(n_classes):
        members = np.flatnonzero(labels == c)
        cut = int(round(0.8 * members.size))
        train_idx.extend(members[:cut])
        test_idx.extend(members[cut:])
    train_idx = np.sort(np.asarray(train_idx, dtype=np.intp))
    test_idx = np.sort(np.asarray(test_idx, dtype=np.intp))
    return DatasetSpec(
        features=feats[train_idx],
        labels=labels[train_idx],
        n_classes=n_classes,
        provenance=(f"synthetic(d={d},n={n_samples},classes={n_classes},"
                    f"margin={margin},seed={seed},scale={scale},"
                    f"noise_scale={noise_scale})"),
        test_features=feats[test_idx],
        test_labels=labels[test_idx],
    )


def _read_exact(fh, count: int, path: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise IdxTruncatedError(f"{path}: expected {count} more bytes")
    return data


def _read_header(fh, magic: int, n_dims: int, path: str) -> tuple:
    got = struct.unpack(">I", _read_exact(fh, 4, path))[0]
    if got != magic:
        raise IdxMagicError(f"{path}: magic {got:#010x}, expected {magic:#010x}")
    return struct.unpack(f">{n_dims}I", _read_exact(fh, 4 * n_dims, path))


def read_idx(images_path, labels_path) -> DatasetSpec:
    """Parse one big-endian IDX image/label file pair.

    Images: magic 0x00000803, u8 pixels, dims [n, rows, cols], scaled to
    [0, 1] and flattened. Labels: magic 0x00000801, u8, dims [n].
    """
    images_path = str(images_path)
    labels_path = str(labels_path)
    with open(images_path, "rb") as fh:
        n, rows, cols = _read_header(fh, IMAGES_MAGIC, 3, images_path)
        raw = _read_exact(fh, n * rows * cols, images_path)
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols)

    with open(labels_path, "rb") as fh:
        (n_labels,) = _read_header(fh, LABELS_MAGIC, 1, labels_path)
        raw = _read_exact(fh, n_labels, labels_path)
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.intp)

    if n_labels != n:
        raise IdxCountMismatchError(
            f"{images_path} has {n} images but {labels_path} has {n_labels} labels")
    return DatasetSpec(
        features=pixels.astype(np.float64) / 255.0,
        labels=labels,
        n_classes=int(labels.max()) + 1 if labels.size else 2,
        provenance=f"idx({images_path},{labels_path})",
    )
