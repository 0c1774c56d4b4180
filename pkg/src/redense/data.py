"""Dataset ingestion and synthetic generators.

Three on-disk formats are owned here: big-endian IDX images/labels, a small
little-endian feature-bundle container (magic RDFB), and headered CSV with an
integer class label in the last column. Loaders validate magics, lengths and
finiteness and fail with the byte offset when a file is malformed.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, ShapeError
from .linalg import Matrix, check_finite
from .nn import Dataset

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
BUNDLE_MAGIC = b"RDFB"
BUNDLE_VERSION = 1


@dataclass
class FeatureBundle:
    """Features, targets and the head weight exported from a trained model.

    metadata is free-form string pairs; well-known keys are source_model,
    base_loss, huber_delta, base_train_loss (the exporting model's training
    loss in its own loss) and ce_train_loss (the same predictions scored with
    softmax cross-entropy).
    """

    features: Matrix       # J x n
    targets: Matrix        # J x Q
    output_weight: Matrix  # Q x n
    metadata: dict[str, str]

    def __post_init__(self):
        j, n = self.features.shape
        if self.targets.shape[0] != j:
            raise ShapeError(f"targets have {self.targets.shape[0]} rows, features have {j}")
        q = self.targets.shape[1]
        if self.output_weight.shape != (q, n):
            raise ShapeError(
                f"output weight has shape {self.output_weight.shape}, expected ({q}, {n})"
            )
        for name, a in (("features", self.features), ("targets", self.targets),
                        ("output_weight", self.output_weight)):
            check_finite(a, name)
        if "base_train_loss" in self.metadata:
            lo = float(self.metadata["base_train_loss"])
            if not (np.isfinite(lo) and lo >= 0.0):
                raise ValueError(f"base_train_loss must be finite and >= 0, got {lo}")


def _read_exact(f, nbytes, path, what):
    data = f.read(nbytes)
    if len(data) != nbytes:
        raise DataFormatError(f"truncated while reading {what}", path=path,
                              offset=f.tell() - len(data))
    return data


def _read_u32_be(f, path, what):
    return struct.unpack(">I", _read_exact(f, 4, path, what))[0]


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair as floats in [0,1] with one-hot labels."""
    with open(images_path, "rb") as f:
        magic = _read_u32_be(f, images_path, "image magic")
        if magic != IDX_IMAGES_MAGIC:
            raise DataFormatError(f"bad image magic 0x{magic:08x}", path=images_path, offset=0)
        count = _read_u32_be(f, images_path, "image count")
        rows = _read_u32_be(f, images_path, "image rows")
        cols = _read_u32_be(f, images_path, "image cols")
        raw = _read_exact(f, count * rows * cols, images_path, "pixel data")
    pixels = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    inputs = pixels.reshape(count, rows * cols)

    with open(labels_path, "rb") as f:
        magic = _read_u32_be(f, labels_path, "label magic")
        if magic != IDX_LABELS_MAGIC:
            raise DataFormatError(f"bad label magic 0x{magic:08x}", path=labels_path, offset=0)
        label_count = _read_u32_be(f, labels_path, "label count")
        raw = _read_exact(f, label_count, labels_path, "label data")
    labels = np.frombuffer(raw, dtype=np.uint8)

    if label_count != count:
        raise DataFormatError(f"{count} images but {label_count} labels", path=labels_path)
    if labels.size and labels.max() > 9:
        raise DataFormatError(f"label {labels.max()} out of range 0..9", path=labels_path)
    targets = np.zeros((count, 10))
    targets[np.arange(count), labels] = 1.0
    return Dataset(inputs, targets)


def write_idx(images_path, labels_path, images: np.ndarray, labels: np.ndarray):
    """Write u8 images (J x rows x cols) and labels (J,) as an IDX pair."""
    images = np.ascontiguousarray(images, dtype=np.uint8)
    labels = np.ascontiguousarray(labels, dtype=np.uint8)
    if images.ndim != 3 or images.shape[0] != labels.shape[0]:
        raise ShapeError(f"expected (J, rows, cols) images matching (J,) labels, "
                         f"got {images.shape} and {labels.shape}")
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def _write_le_matrix(f, a: Matrix):
    f.write(struct.pack("<QQ", a.shape[0], a.shape[1]))
    f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_le_matrix(f, path, what) -> Matrix:
    rows, cols = struct.unpack("<QQ", _read_exact(f, 16, path, f"{what} shape"))
    if rows * cols > 1 << 40:
        raise DataFormatError(f"implausible {what} shape {rows}x{cols}", path=path,
                              offset=f.tell() - 16)
    raw = _read_exact(f, rows * cols * 8, path, f"{what} payload")
    a = np.frombuffer(raw, dtype="<f8").reshape(rows, cols).astype(np.float64)
    if not np.isfinite(a).all():
        raise DataFormatError(f"{what} payload contains NaN or Inf", path=path)
    return a


def _write_le_string(f, s: str):
    raw = s.encode("utf-8")
    f.write(struct.pack("<I", len(raw)))
    f.write(raw)


def _read_le_string(f, path, what) -> str:
    (length,) = struct.unpack("<I", _read_exact(f, 4, path, f"{what} length"))
    return _read_exact(f, length, path, what).decode("utf-8")


def save_feature_bundle(path, bundle: FeatureBundle):
    with open(path, "wb") as f:
        f.write(BUNDLE_MAGIC)
        f.write(struct.pack("<I", BUNDLE_VERSION))
        _write_le_matrix(f, bundle.features)
        _write_le_matrix(f, bundle.targets)
        _write_le_matrix(f, bundle.output_weight)
        f.write(struct.pack("<I", len(bundle.metadata)))
        for key in sorted(bundle.metadata):
            _write_le_string(f, key)
            _write_le_string(f, bundle.metadata[key])


def load_feature_bundle(path) -> FeatureBundle:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, path, "magic")
        if magic != BUNDLE_MAGIC:
            raise DataFormatError(f"bad magic {magic!r}", path=path, offset=0)
        (version,) = struct.unpack("<I", _read_exact(f, 4, path, "version"))
        if version != BUNDLE_VERSION:
            raise DataFormatError(f"unsupported bundle version {version}", path=path, offset=4)
        features = _read_le_matrix(f, path, "features")
        targets = _read_le_matrix(f, path, "targets")
        output_weight = _read_le_matrix(f, path, "output weight")
        (n_meta,) = struct.unpack("<I", _read_exact(f, 4, path, "metadata count"))
        metadata = {}
        for _ in range(n_meta):
            key = _read_le_string(f, path, "metadata key")
            metadata[key] = _read_le_string(f, path, "metadata value")
    return FeatureBundle(features, targets, output_weight, metadata)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name, frac in (("train_fraction", self.train_fraction),
                           ("validation_fraction", self.validation_fraction)):
            if not 0.0 < frac < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {frac}")
        if self.train_fraction + self.validation_fraction > 1.0:
            raise ValueError("fractions sum to more than 1")


def split(data: Dataset, spec: SplitSpec):
    """Disjoint, exhaustive (train, validation, test) shuffle split."""
    j = len(data)
    perm = np.random.default_rng(spec.seed).permutation(j)
    n_train = int(j * spec.train_fraction)
    n_val = int(j * spec.validation_fraction)
    parts = (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])
    if any(len(p) == 0 for p in parts):
        raise ValueError(f"split of {j} samples with {spec} leaves an empty partition")
    return tuple(Dataset(data.inputs[p], data.targets[p], one_hot=data.one_hot) for p in parts)


def _one_hot(labels: np.ndarray, classes: int) -> Matrix:
    targets = np.zeros((labels.shape[0], classes))
    targets[np.arange(labels.shape[0]), labels] = 1.0
    return targets


def gen_synthetic(kind: str, samples: int, classes: int = 2, noise: float = 0.1,
                  seed: int = 0) -> Dataset:
    """Reproducible 2-D labeled dataset; class counts balanced within one."""
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    if samples < classes:
        raise ValueError(f"need at least one sample per class, got {samples} for {classes}")
    rng = np.random.default_rng(seed)
    labels = np.arange(samples) % classes
    if kind == "blobs":
        angles = 2.0 * np.pi * np.arange(classes) / classes
        centers = 4.0 * np.column_stack([np.cos(angles), np.sin(angles)])
        inputs = centers[labels] + noise * rng.standard_normal((samples, 2))
    elif kind == "moons":
        if classes != 2:
            raise ValueError("moons supports exactly 2 classes")
        inputs = np.empty((samples, 2))
        for c, (sx, sy, ox, oy) in ((0, (1.0, 1.0, 0.0, 0.0)), (1, (-1.0, -1.0, 1.0, 0.5))):
            idx = np.flatnonzero(labels == c)
            t = np.linspace(0.0, np.pi, idx.size)
            inputs[idx, 0] = sx * np.cos(t) + ox
            inputs[idx, 1] = sy * np.sin(t) + oy
        inputs += noise * rng.standard_normal((samples, 2))
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return Dataset(inputs, _one_hot(labels, classes))


def _smooth(field: np.ndarray, passes: int = 2) -> np.ndarray:
    for _ in range(passes):
        field = sum(np.roll(np.roll(field, dr, 0), dc, 1)
                    for dr in (-1, 0, 1) for dc in (-1, 0, 1)) / 9.0
    return field


def gen_digit_images(samples: int, seed: int = 0, side: int = 28, classes: int = 10,
                     noise: float = 0.6, max_shift: int = 3):
    """Synthetic grayscale digit-like images: smoothed class prototypes plus
    pixel noise and small random shifts. Returns (images u8 JxSxS, labels u8 J).

    A stand-in for handwritten-digit corpora at the same scale when none is
    on disk; hard enough that a small classifier stays below 100% accuracy.
    """
    rng = np.random.default_rng(seed)
    protos = np.stack([_smooth(rng.random((side, side))) for _ in range(classes)])
    protos = (protos - protos.min(axis=(1, 2), keepdims=True))
    protos /= protos.max(axis=(1, 2), keepdims=True)
    labels = (np.arange(samples) % classes).astype(np.uint8)
    images = np.empty((samples, side, side), dtype=np.uint8)
    shifts = rng.integers(-max_shift, max_shift + 1, size=(samples, 2))
    jitter = rng.standard_normal((samples, side, side))
    for j in range(samples):
        img = np.roll(protos[labels[j]], tuple(shifts[j]), axis=(0, 1))
        img = np.clip(img + noise * jitter[j], 0.0, 1.0)
        images[j] = np.round(img * 255.0).astype(np.uint8)
    return images, labels


def load_csv(path) -> Dataset:
    """Headered CSV: float feature columns, integer class label last."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file", path=path) from None
        rows = list(reader)
    if not rows:
        raise DataFormatError("no data rows", path=path)
    width = len(header)
    feats = np.empty((len(rows), width - 1))
    labels = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataFormatError(f"row {i + 1} has {len(row)} fields, header has {width}",
                                  path=path)
        try:
            feats[i] = [float(v) for v in row[:-1]]
            labels[i] = int(row[-1])
        except ValueError as exc:
            raise DataFormatError(f"row {i + 1}: {exc}", path=path) from None
    check_finite(feats, "csv features")
    if labels.min() < 0:
        raise DataFormatError(f"negative class label {labels.min()}", path=path)
    return Dataset(feats, _one_hot(labels, int(labels.max()) + 1))


def standardize_inputs(data: Dataset, mean=None, std=None) -> Dataset:
    """Zero-mean unit-variance columns; off by default everywhere.

    Pass the training set's mean/std to transform held-out data consistently.
    """
    if mean is None:
        mean = data.inputs.mean(axis=0)
    if std is None:
        std = data.inputs.std(axis=0)
    std = np.where(std == 0.0, 1.0, std)
    return Dataset((data.inputs - mean) / std, data.targets.copy(), one_hot=data.one_hot)
