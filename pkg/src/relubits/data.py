"""Datasets: IDX (MNIST format) parsing, synthetic blobs, normalization, splits, dataset files."""

from __future__ import annotations

import gzip
import io
import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import BadMagicError, CountMismatchError, DomainError, ParseError, ShapeError, TruncatedError
from .network import header_ints, read_text_header

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
DATASET_MAGIC = b"RBD1\n"
STD_FLOOR = 1e-8
NORM_MODES = ("none", "global", "per-feature")


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    source: str = "unknown"
    seed: int = 0
    tag: int = 0
    norm_mode: str = "none"
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise DomainError("dataset needs a non-empty (N, m) feature matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeError("one label per row required")
        if np.any(self.labels < 0):
            raise DomainError("labels must be non-negative")
        if self.norm_mode not in NORM_MODES:
            raise DomainError(f"unknown normalization mode {self.norm_mode!r}")
        if self.norm_mode != "none" and (self.norm_mean is None or self.norm_std is None):
            raise DomainError("normalized dataset must record its mean and std")

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        return replace(self, features=self.features[idx], labels=self.labels[idx])

    def with_features(self, features, tag=None) -> "LabeledDataset":
        return replace(self, features=features, tag=self.tag if tag is None else tag)


# -- IDX ---------------------------------------------------------------------

def _read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def parse_idx(data: bytes, expect_magic: int) -> np.ndarray:
    """Parse one IDX blob of unsigned bytes into an array shaped by its header."""
    if len(data) < 4:
        raise TruncatedError("file shorter than the magic number", len(data))
    (magic,) = struct.unpack(">I", data[:4])
    if magic != expect_magic:
        raise BadMagicError(f"magic 0x{magic:08x}, expected 0x{expect_magic:08x}", 0)
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(data) < head:
        raise TruncatedError("dimension header is cut short", len(data))
    dims = struct.unpack(f">{ndim}I", data[4:head])
    size = math.prod(dims)
    if len(data) - head < size:
        raise TruncatedError(f"payload has {len(data) - head} bytes, header declares {size}", len(data))
    if len(data) - head > size:
        raise ParseError(f"{len(data) - head - size} trailing bytes after payload", head + size)
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=head).reshape(dims)


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Load an IDX image/label pair; pixels are scaled to [0, 1] by /255. Gzipped files are accepted."""
    images = parse_idx(_read_bytes(images_path), IDX_IMAGES_MAGIC)
    labels = parse_idx(_read_bytes(labels_path), IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(f"{images.shape[0]} images but {labels.shape[0]} labels", 4)
    feats = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return LabeledDataset(feats, labels.astype(np.int64), source="idx")


def dumps_idx_images(images: np.ndarray) -> bytes:
    images = np.asarray(images)
    if images.ndim != 3:
        raise ShapeError("images must be (N, rows, cols)")
    if images.dtype != np.uint8:
        raise ShapeError("IDX images must be uint8")
    return struct.pack(">I3I", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes()


def dumps_idx_labels(labels: np.ndarray) -> bytes:
    labels = np.asarray(labels)
    if labels.ndim != 1 or np.any((labels < 0) | (labels > 255)):
        raise ShapeError("labels must be a 1-D array of values in [0, 255]")
    return struct.pack(">II", IDX_LABELS_MAGIC, labels.size) + labels.astype(np.uint8).tobytes()


def write_idx(images_path, labels_path, images, labels):
    with open(images_path, "wb") as f:
        f.write(dumps_idx_images(images))
    with open(labels_path, "wb") as f:
        f.write(dumps_idx_labels(labels))


# -- synthetic data ----------------------------------------------------------

def synth_blobs(n_per_class: int, centers, spread: float, seed: int = 0) -> LabeledDataset:
    """Isotropic Gaussian blobs, class ``i`` around ``centers[i]``."""
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2:
        raise ShapeError("centers must be (n_classes, dim)")
    if n_per_class < 1 or spread < 0:
        raise DomainError("need n_per_class >= 1 and spread >= 0")
    rng = np.random.default_rng(seed)
    feats = np.concatenate([c + spread * rng.standard_normal((n_per_class, centers.shape[1])) for c in centers])
    labels = np.repeat(np.arange(centers.shape[0]), n_per_class)
    return LabeledDataset(feats, labels, source="blobs", seed=seed)


# -- normalization -----------------------------------------------------------

def normalize(ds: LabeledDataset, mode: str = "per-feature", stats=None) -> LabeledDataset:
    """Standardize features; ``stats=(mean, std)`` reuses statistics from another split.

    The std is floored at 1e-8, so constant columns map to zero.
    """
    if mode not in ("global", "per-feature"):
        raise DomainError(f"mode must be 'global' or 'per-feature', got {mode!r}")
    X = ds.features
    if stats is None:
        if mode == "global":
            mean = np.full(X.shape[1], X.mean())
            std = np.full(X.shape[1], X.std())
        else:
            mean, std = X.mean(axis=0), X.std(axis=0)
        std = np.maximum(std, STD_FLOOR)
    else:
        mean, std = (np.broadcast_to(np.asarray(s, dtype=np.float64), (X.shape[1],)).copy() for s in stats)
    return replace(ds, features=(X - mean) / std, norm_mode=mode, norm_mean=mean, norm_std=std)


def denormalize(ds: LabeledDataset) -> np.ndarray:
    if ds.norm_mode == "none":
        return ds.features.copy()
    return ds.features * ds.norm_std + ds.norm_mean


# -- splits ------------------------------------------------------------------

@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.8
    val: float = 0.1
    test: float = 0.1
    seed: int = 0

    def __post_init__(self):
        r = (self.train, self.val, self.test)
        if any(not v > 0 for v in r):
            raise DomainError("split ratios must be positive")
        if abs(sum(r) - 1.0) > 1e-9:
            raise DomainError(f"split ratios sum to {sum(r)}, not 1")


def split_indices(n: int, spec: SplitSpec):
    perm = np.random.default_rng(spec.seed).permutation(n)
    cut1 = round(spec.train * n)
    cut2 = round((spec.train + spec.val) * n)
    parts = perm[:cut1], perm[cut1:cut2], perm[cut2:]
    if any(p.size == 0 for p in parts):
        raise DomainError(f"split of {n} rows by {spec} leaves an empty part")
    return parts


def split(ds: LabeledDataset, spec: SplitSpec):
    """Seeded permutation, then contiguous cuts; returns ``(train, val, test)``."""
    return tuple(ds.subset(idx) for idx in split_indices(len(ds), spec))


# -- dataset files -----------------------------------------------------------

def dumps_dataset(ds: LabeledDataset) -> bytes:
    n, m = ds.features.shape
    source = "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in ds.source) or "unknown"
    header = (f"n {n}\nm {m}\nsource {source}\nseed {ds.seed}\ntag {ds.tag}\n"
              f"norm {ds.norm_mode}\nend\n")
    buf = io.BytesIO()
    buf.write(DATASET_MAGIC)
    buf.write(header.encode("ascii"))
    buf.write(ds.labels.astype("<i4").tobytes())
    buf.write(np.ascontiguousarray(ds.features, dtype="<f8").tobytes())
    if ds.norm_mode != "none":
        buf.write(np.asarray(ds.norm_mean, dtype="<f8").tobytes())
        buf.write(np.asarray(ds.norm_std, dtype="<f8").tobytes())
    return buf.getvalue()


def loads_dataset(data: bytes) -> LabeledDataset:
    entries, pos = read_text_header(data, DATASET_MAGIC)
    f = {key: (values, off) for key, values, off in entries}
    for key in ("n", "m", "source", "seed", "tag", "norm"):
        if key not in f or len(f[key][0]) != 1:
            raise ParseError(f"missing or malformed header key {key!r}", f.get(key, (None, len(DATASET_MAGIC)))[1])
    n, m, seed, tag = (header_ints(*f[k], k)[0] for k in ("n", "m", "seed", "tag"))
    norm = f["norm"][0][0]
    if norm not in NORM_MODES:
        raise ParseError(f"unknown normalization {norm!r}", f["norm"][1])
    need = 4 * n + 8 * n * m + (16 * m if norm != "none" else 0)
    if len(data) - pos != need:
        raise ParseError(f"payload is {len(data) - pos} bytes, header implies {need}", pos)
    labels = np.frombuffer(data, dtype="<i4", count=n, offset=pos).astype(np.int64)
    pos += 4 * n
    feats = np.frombuffer(data, dtype="<f8", count=n * m, offset=pos).reshape(n, m).astype(np.float64)
    pos += 8 * n * m
    mean = std = None
    if norm != "none":
        mean = np.frombuffer(data, dtype="<f8", count=m, offset=pos).astype(np.float64)
        std = np.frombuffer(data, dtype="<f8", count=m, offset=pos + 8 * m).astype(np.float64)
    try:
        return LabeledDataset(feats, labels, f["source"][0][0], seed, tag, norm, mean, std)
    except (DomainError, ShapeError) as e:
        raise ParseError(str(e), len(DATASET_MAGIC)) from None


def save_dataset(path, ds: LabeledDataset):
    with open(path, "wb") as f:
        f.write(dumps_dataset(ds))


def load_dataset(path) -> LabeledDataset:
    with open(path, "rb") as f:
        return loads_dataset(f.read())


# -- bundled MNIST subset ----------------------------------------------------

def bundled_mnist():
    """The 5000-image MNIST subset (500 per digit) that ships with ``mlxtend``.

    Returns ``(images uint8 (5000, 28, 28), labels)``.  Requires the optional
    ``mlxtend`` dependency.
    """
    try:
        from mlxtend.data import mnist_data
    except ImportError as e:  # pragma: no cover - depends on environment
        raise DomainError("bundled MNIST needs the optional 'mlxtend' package") from e
    X, y = mnist_data()
    return X.astype(np.uint8).reshape(-1, 28, 28), y.astype(np.int64)


SHIFTS = ((0, 0), (0, 1), (1, 0), (0, -1), (-1, 0))


def shift_images(images: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate ``(N, rows, cols)`` images by whole pixels, filling with zeros."""
    out = np.zeros_like(images)
    r, c = images.shape[1:]
    out[:, max(dy, 0):r + min(dy, 0), max(dx, 0):c + min(dx, 0)] = \
        images[:, max(-dy, 0):r + min(-dy, 0), max(-dx, 0):c + min(-dx, 0)]
    return out


def desk_mnist(sizes=(8000, 1000, 1000), seed: int = 0):
    """Train/val/test image sets of the requested sizes built from the bundled subset.

    The 5000 real images are split first (seeded, in proportion to ``sizes``);
    each part is then padded with one-pixel translations of its own images, so
    no translated copy ever crosses a split boundary.  Returns three
    ``(images, labels)`` pairs.
    """
    images, labels = bundled_mnist()
    total = sum(sizes)
    spec = SplitSpec(sizes[0] / total, sizes[1] / total, sizes[2] / total, seed)
    out = []
    for part, want in zip(split_indices(len(labels), spec), sizes):
        reps = -(-want // part.size)
        if reps > len(SHIFTS):
            raise DomainError(f"cannot reach {want} images from {part.size} with {len(SHIFTS)} shifts")
        imgs = np.concatenate([shift_images(images[part], *SHIFTS[s]) for s in range(reps)])[:want]
        labs = np.tile(labels[part], reps)[:want]
        out.append((imgs, labs))
    return out
