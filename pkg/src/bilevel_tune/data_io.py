"""MNIST IDX ingestion and per-digit binary task construction.

Pixels are scaled to [0, 1] by dividing by 255 (when ``normalize`` is set)
and optionally mean-pooled over non-overlapping ``f x f`` blocks. Index
selection is a single seeded permutation (numpy PCG64) of the image pool,
carved into consecutive, hence disjoint, blocks: tuning-train, tuning-test,
validation-train, validation-test. Every digit uses the same images; only the
labels differ.
"""

from __future__ import annotations

import hashlib
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import IdxFormatError, SizeError
from .problems import BinaryTask

log = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
_MAX_ELEMENTS = 2**31 - 1

SPLITS = ("train", "test", "validation_train", "validation_test")


@dataclass
class RawImages:
    count: int
    rows: int
    cols: int
    pixels: np.ndarray  # uint8, (count, rows, cols)

    def __post_init__(self):
        if self.pixels.shape != (self.count, self.rows, self.cols):
            raise ValueError("pixel tensor does not match header dimensions")


@dataclass(frozen=True)
class SplitSpec:
    train_size: int = 5000
    test_size: int = 1000
    validation_train_size: int = 5000
    validation_test_size: int = 1000
    seed: int = 0
    downsample_factor: int = 1
    normalize: bool = True

    @property
    def total(self):
        return (self.train_size + self.test_size
                + self.validation_train_size + self.validation_test_size)


def read_idx(path):
    """Parse an IDX file: image tensors (magic 0x803) or label vectors (0x801).

    Returns :class:`RawImages` for images and a uint8 array for labels.
    """
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise IdxFormatError("file shorter than the 4-byte magic number", len(data))
    (magic,) = struct.unpack_from(">I", data, 0)
    if magic == IMAGE_MAGIC:
        ndim = 3
    elif magic == LABEL_MAGIC:
        ndim = 1
    else:
        raise IdxFormatError(f"unknown magic number 0x{magic:08x}", 0)
    header = 4 + 4 * ndim
    if len(data) < header:
        raise IdxFormatError("truncated dimension header", len(data))
    dims = struct.unpack_from(f">{ndim}I", data, 4)
    total = 1
    for i, d in enumerate(dims):
        total *= d
        if total > _MAX_ELEMENTS:
            raise IdxFormatError("dimension product overflows", 4 + 4 * i)
    if len(data) - header < total:
        raise IdxFormatError(
            f"truncated payload: expected {total} bytes, found {len(data) - header}", len(data))
    if len(data) - header > total:
        raise IdxFormatError("trailing bytes after payload", header + total)
    payload = np.frombuffer(data, dtype=np.uint8, count=total, offset=header)
    if ndim == 1:
        return payload.copy()
    count, rows, cols = dims
    return RawImages(count, rows, cols, payload.reshape(count, rows, cols).copy())


def write_idx(path, array):
    """Write a uint8 array of rank 1 (labels) or 3 (images) in IDX format."""
    arr = np.asarray(array)
    if arr.dtype != np.uint8:
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError("values must fit in an unsigned byte")
        arr = arr.astype(np.uint8)
    if arr.ndim == 1:
        magic = LABEL_MAGIC
    elif arr.ndim == 3:
        magic = IMAGE_MAGIC
    else:
        raise ValueError("IDX writer supports rank-1 labels and rank-3 images only")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(np.ascontiguousarray(arr).tobytes())


def load_mnist(images_path, labels_path):
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if not isinstance(images, RawImages):
        raise IdxFormatError(f"{images_path} holds labels, not images", 0)
    if isinstance(labels, RawImages):
        raise IdxFormatError(f"{labels_path} holds images, not labels", 0)
    if labels.shape[0] != images.count:
        raise SizeError(f"{images.count} images but {labels.shape[0]} labels")
    return images, labels


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def split_indices(pool_size, spec: SplitSpec):
    """Disjoint index blocks ``{split name: indices}`` from one seeded permutation."""
    if spec.total > pool_size:
        raise SizeError(f"split needs {spec.total} images, pool has {pool_size}")
    perm = np.random.default_rng(spec.seed).permutation(pool_size)
    sizes = (spec.train_size, spec.test_size, spec.validation_train_size,
             spec.validation_test_size)
    out, start = {}, 0
    for name, n in zip(SPLITS, sizes):
        out[name] = perm[start:start + n]
        start += n
    return out


def image_features(images: RawImages, index, spec: SplitSpec):
    """Flattened (optionally normalised and pooled) features for ``index``."""
    px = images.pixels[index].astype(float)
    if spec.normalize:
        px /= 255.0
    f = int(spec.downsample_factor)
    if f < 1:
        raise ValueError("downsample_factor must be >= 1")
    if f > 1:
        if images.rows % f or images.cols % f:
            raise ValueError(f"downsample factor {f} does not divide {images.rows}x{images.cols}")
        n = px.shape[0]
        px = px.reshape(n, images.rows // f, f, images.cols // f, f).mean(axis=(2, 4))
    return px.reshape(px.shape[0], -1)


def _binary_labels(labels, index, digit):
    return np.where(np.asarray(labels)[index] == digit, 1, -1)


def make_tasks(images: RawImages, labels, digits, spec: SplitSpec, validation=False):
    """One task per digit sharing a single pair of feature matrices."""
    for d in digits:
        if not 0 <= d <= 9:
            raise ValueError(f"digit must lie in 0..9, got {d}")
    idx = split_indices(images.count, spec)
    tr, te = ("validation_train", "validation_test") if validation else ("train", "test")
    X = image_features(images, idx[tr], spec)
    Xt = image_features(images, idx[te], spec)
    tasks = []
    for d in digits:
        task = BinaryTask(X, _binary_labels(labels, idx[tr], d), Xt,
                          _binary_labels(labels, idx[te], d), digit=d)
        frac = label_balance(task)
        if not 0.05 <= frac <= 0.15:
            log.warning("digit %d: positive fraction %.3f outside the MNIST band [0.05, 0.15]",
                        d, frac)
        tasks.append(task)
    return tasks


def make_binary_task(images: RawImages, labels, digit, spec: SplitSpec):
    return make_tasks(images, labels, [digit], spec)[0]


def tuning_tasks(images: RawImages, labels, digits, spec: SplitSpec):
    return make_tasks(images, labels, digits, spec)


def validation_tasks(images: RawImages, labels, spec: SplitSpec, digits=range(10)):
    return make_tasks(images, labels, list(digits), spec, validation=True)


def label_balance(task: BinaryTask):
    return float(np.mean(task.labels == 1))


def majority_rate(labels):
    """Accuracy of always predicting the more common class."""
    pos = float(np.mean(np.asarray(labels) == 1))
    return max(pos, 1.0 - pos)
