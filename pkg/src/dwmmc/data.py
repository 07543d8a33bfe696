"""Synthetic classification sets, an IDX reader/writer and normalisation."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagic, DimMismatch, TruncatedFile, ZeroStd

TRAIN, TEST = "train", "test"

# IDX type codes -> big-endian dtypes
_IDX_TYPES = {
    0x08: np.dtype(">u1"),
    0x09: np.dtype(">i1"),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {v: k for k, v in _IDX_TYPES.items()}


@dataclass(frozen=True)
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    n_classes: int
    split: str = TRAIN
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.labels, dtype=np.int64)
        if len(x) != len(y):
            raise DimMismatch(f"{len(x)} inputs but {len(y)} labels")
        if len(y) and (y.min() < 0 or y.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(x)):
            raise ValueError("inputs must be finite")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return len(self.labels)

    def subset(self, idx, split: str | None = None) -> "Dataset":
        return Dataset(self.inputs[idx], self.labels[idx], self.n_classes,
                       split or self.split, dict(self.meta))

    def batches(self, batch_size: int, rng: np.random.Generator | None = None):
        """Yield ``(x, y)`` mini-batches, shuffled when ``rng`` is given; the last may be short."""
        order = np.arange(len(self)) if rng is None else rng.permutation(len(self))
        for i in range(0, len(order), batch_size):
            j = order[i:i + batch_size]
            yield self.inputs[j], self.labels[j]


def gen_gaussians(n_per_class: int, n_classes: int, spread: float, seed: int,
                  split: str = TRAIN, offset: int = 0) -> Dataset:
    """Isotropic 2-D blobs with centres evenly spaced on the unit circle.

    ``offset`` shifts the random stream so a test split drawn with the same
    seed does not repeat the training points.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if spread < 0:
        raise ValueError("spread must be >= 0")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(offset,)))
    ang = 2 * np.pi * np.arange(n_classes) / n_classes
    centres = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    y = np.repeat(np.arange(n_classes), n_per_class)
    x = centres[y] + spread * rng.standard_normal((len(y), 2))
    perm = rng.permutation(len(y))
    return Dataset(x[perm], y[perm], n_classes, split, {"generator": "gaussians", "seed": seed})


def _prototypes(n_classes: int, size: int, channels: int, rng) -> np.ndarray:
    # smooth random fields: low-frequency cosines with random phases
    yy, xx = np.mgrid[0:size, 0:size] / size
    protos = np.zeros((n_classes, channels, size, size))
    for c in range(n_classes):
        for ch in range(channels):
            for _ in range(3):
                fx, fy = rng.integers(0, 3, size=2)
                ph = rng.uniform(0, 2 * np.pi)
                protos[c, ch] += np.cos(2 * np.pi * (fx * xx + fy * yy) + ph)
    protos -= protos.mean(axis=(2, 3), keepdims=True)
    protos /= protos.std(axis=(2, 3), keepdims=True) + 1e-12
    return protos


def gen_patterns(n_per_class: int, n_classes: int = 10, size: int = 8, channels: int = 1,
                 noise: float = 1.0, max_shift: int = 1, seed: int = 0,
                 split: str = TRAIN) -> Dataset:
    """Small images: a per-class smooth prototype, randomly shifted, plus pixel noise.

    Prototypes depend only on ``seed``; the sample draws additionally depend on
    ``split`` so train and test sets share classes but not points.
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    protos = _prototypes(n_classes, size, channels, np.random.default_rng(seed))
    key = 0 if split == TRAIN else 1
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, key)))
    y = np.repeat(np.arange(n_classes), n_per_class)
    shifts = rng.integers(-max_shift, max_shift + 1, size=(len(y), 2))
    x = np.empty((len(y), channels, size, size))
    for i, (c, (dy, dx)) in enumerate(zip(y, shifts)):
        x[i] = np.roll(protos[c], (dy, dx), axis=(1, 2))
    x += noise * rng.standard_normal(x.shape)
    perm = rng.permutation(len(y))
    return Dataset(x[perm], y[perm], n_classes, split,
                   {"generator": "patterns", "seed": seed, "noise": noise})


def train_test_split(ds: Dataset, test_frac: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0 < test_frac < 1:
        raise ValueError("test_frac must be in (0, 1)")
    perm = np.random.default_rng(seed).permutation(len(ds))
    n_test = max(1, int(round(test_frac * len(ds))))
    return ds.subset(perm[n_test:], TRAIN), ds.subset(perm[:n_test], TEST)


def _channel_axes(x: np.ndarray) -> tuple[int, ...]:
    return tuple(i for i in range(x.ndim) if i != 1)


def channel_stats(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    x = ds.inputs
    axes = _channel_axes(x)
    return x.mean(axis=axes), x.std(axis=axes)


def normalize(ds: Dataset, mean=None, std=None) -> Dataset:
    """Channelwise ``(x - mean) / std``; statistics default to the dataset's own."""
    m0, s0 = channel_stats(ds)
    mean = m0 if mean is None else np.asarray(mean, dtype=float)
    std = s0 if std is None else np.asarray(std, dtype=float)
    if np.any(std <= 0):
        raise ZeroStd("every channel needs a positive standard deviation")
    shape = [1] * ds.inputs.ndim
    shape[1] = -1
    x = (ds.inputs - mean.reshape(shape)) / std.reshape(shape)
    meta = dict(ds.meta, norm_mean=mean.tolist(), norm_std=std.tolist())
    return Dataset(x, ds.labels, ds.n_classes, ds.split, meta)


# -- IDX ----------------------------------------------------------------------

def write_idx(path: str | Path, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    dt = arr.dtype.newbyteorder(">")
    if dt not in _IDX_CODES:
        raise ValueError(f"dtype {arr.dtype} has no IDX code")
    with open(path, "wb") as fh:
        fh.write(struct.pack(">BBBB", 0, 0, _IDX_CODES[dt], arr.ndim))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.astype(dt).tobytes())


def read_idx(path: str | Path, limit: int | None = None) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise TruncatedFile(f"{path}: no IDX header")
    z0, z1, code, ndim = struct.unpack(">BBBB", raw[:4])
    if z0 or z1 or code not in _IDX_TYPES or ndim == 0:
        raise BadMagic(f"{path}: magic 0x{raw[:4].hex()} is not an IDX header")
    if len(raw) < 4 + 4 * ndim:
        raise TruncatedFile(f"{path}: header cut short")
    dims = struct.unpack(f">{ndim}I", raw[4:4 + 4 * ndim])
    dt = _IDX_TYPES[code]
    body = raw[4 + 4 * ndim:]
    n = int(np.prod(dims)) * dt.itemsize
    if len(body) < n:
        raise TruncatedFile(f"{path}: payload has {len(body)} bytes, dims need {n}")
    arr = np.frombuffer(body[:n], dtype=dt).reshape(dims)
    if limit is not None:
        arr = arr[:limit]
    return arr.astype(dt.newbyteorder("="))


def load_idx(images: str | Path, labels: str | Path, n_classes: int | None = None,
             limit: int | None = None, split: str = TRAIN) -> Dataset:
    """Pair an IDX image file with an IDX label file.

    Rank-3 images ``(N, H, W)`` gain a channel axis; ``limit`` caps the number
    of examples read. 8-bit pixels are rescaled to [0, 1].
    """
    x = read_idx(images, limit)
    y = read_idx(labels, limit)
    if y.ndim != 1:
        raise DimMismatch(f"labels must be rank 1, got shape {y.shape}")
    if len(x) != len(y):
        raise DimMismatch(f"{len(x)} images but {len(y)} labels")
    if x.ndim == 3:
        x = x[:, None]
    elif x.ndim != 4:
        raise DimMismatch(f"images must be rank 3 or 4, got shape {x.shape}")
    xf = x.astype(float) / 255.0 if x.dtype == np.uint8 else x.astype(float)
    k = int(y.max()) + 1 if n_classes is None else n_classes
    return Dataset(xf, y.astype(np.int64), k, split, {"source": str(images)})


def save_idx(ds: Dataset, images: str | Path, labels: str | Path) -> None:
    write_idx(images, ds.inputs.astype(np.float64))
    write_idx(labels, ds.labels.astype(np.uint8 if ds.n_classes <= 256 else np.int32))


def export_csv(ds: Dataset, path: str | Path) -> None:
    """One row per example: label then the flattened input."""
    flat = ds.inputs.reshape(len(ds), -1)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"x{i}" for i in range(flat.shape[1])])
        for y, row in zip(ds.labels, flat):
            w.writerow([int(y)] + [repr(float(v)) for v in row])
