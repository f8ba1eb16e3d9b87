"""
Per-tile logit providers.

The merge and scoring code only ever asks a source for ``source[index]``, an
``(h, w, class_count)`` float32 array.  Three sources exist: a directory of
``.lgt`` files written by some external model, and oracles that derive
one-hot logits from the dataset's own label tiles (optionally corrupted).

``.lgt`` layout (little-endian)::

    b"LGT1" | u32 h | u32 w | u32 c | h*w*c float32, row-major, class fastest
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConsistencyError, DataError, FormatError, IncompletePredictionError

MAGIC = b"LGT1"
_HEADER = struct.Struct("<4sIII")


@dataclass
class LogitTile:
    index: int
    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise FormatError(f"logit tile must be (h, w, c), got {self.data.shape}")


def encode_logits(data):
    data = np.ascontiguousarray(data, dtype="<f4")
    h, w, c = data.shape
    return _HEADER.pack(MAGIC, h, w, c) + data.tobytes()


def decode_logits(buf, name="<buffer>"):
    if len(buf) < _HEADER.size:
        raise FormatError(f"{name}: truncated header")
    magic, h, w, c = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"{name}: bad magic {magic!r}")
    expected = _HEADER.size + h * w * c * 4
    if len(buf) != expected:
        raise FormatError(f"{name}: {len(buf)} bytes, header implies {expected}")
    return np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(h, w, c)


def write_logits(directory, index, data):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{index}.lgt"
    tmp = directory / f".{index}.lgt.tmp"
    tmp.write_bytes(encode_logits(data))
    os.replace(tmp, path)
    return path


def read_logit_header(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
    if len(head) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, h, w, c = _HEADER.unpack(head)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    return h, w, c


def load_logits(directory, index, class_count=None, tile_dims=None):
    """Read ``{index}.lgt``, optionally checking it against dataset metadata."""
    path = Path(directory) / f"{index}.lgt"
    data = decode_logits(path.read_bytes(), str(path))
    if class_count is not None and data.shape[2] != class_count:
        raise ConsistencyError(
            f"{path}: {data.shape[2]} classes, dataset declares {class_count}")
    if tile_dims is not None and data.shape[:2] != tuple(tile_dims):
        raise ConsistencyError(
            f"{path}: tile shape {data.shape[:2]}, dataset tiles are {tuple(tile_dims)}")
    return LogitTile(index, data)


def oracle_logits(label, class_count, noise_rate=0.0, seed=0, index=0):
    """One-hot logits from a label tile; a ``noise_rate`` share of pixels is
    moved to a uniformly chosen wrong class."""
    label = np.asarray(label)
    if label.ndim == 3:
        label = label[:, :, 0]
    if label.size and int(label.max()) >= class_count:
        raise DataError(f"label tile {index} has class ids >= {class_count}")
    cls = label.astype(np.int64)
    if noise_rate > 0 and class_count > 1:
        rng = np.random.default_rng([seed, index])
        flip = rng.random(cls.shape) < noise_rate
        shift = rng.integers(1, class_count, size=cls.shape)
        cls = np.where(flip, (cls + shift) % class_count, cls)
    out = np.zeros(cls.shape + (class_count,), np.float32)
    np.put_along_axis(out, cls[:, :, None], 1.0, axis=2)
    return LogitTile(index, out)


class DirectorySource:
    kind = "directory"

    def __init__(self, directory, class_count=None, tile_dims=None):
        self.directory = Path(directory)
        self.class_count = class_count
        self.tile_dims = tile_dims

    def __getitem__(self, index):
        """Memory-mapped view of one tile; pages are read only when touched."""
        path = self.directory / f"{index}.lgt"
        try:
            h, w, c = read_logit_header(path)
            size = path.stat().st_size
        except FileNotFoundError:
            raise IncompletePredictionError([index]) from None
        if size != _HEADER.size + h * w * c * 4:
            raise FormatError(f"{path}: {size} bytes, header implies "
                              f"{_HEADER.size + h * w * c * 4}")
        if self.class_count is not None and c != self.class_count:
            raise ConsistencyError(
                f"{path}: {c} classes, dataset declares {self.class_count}")
        return np.memmap(path, dtype="<f4", mode="r", offset=_HEADER.size,
                         shape=(h, w, c))

    def missing(self, indices):
        return [i for i in indices if not (self.directory / f"{i}.lgt").exists()]

    def check(self, indices):
        """Validate presence and headers of every tile without reading payloads."""
        missing = self.missing(indices)
        if missing:
            raise IncompletePredictionError(missing)
        for i in indices:
            h, w, c = read_logit_header(self.directory / f"{i}.lgt")
            if self.class_count is not None and c != self.class_count:
                raise ConsistencyError(
                    f"{i}.lgt: {c} classes, dataset declares {self.class_count}")
            if self.tile_dims is not None and (h, w) != tuple(self.tile_dims):
                raise ConsistencyError(f"{i}.lgt: shape {(h, w)} != {self.tile_dims}")


class OracleSource:
    """Logits synthesized from ground truth.  ``labels`` is a Dataset, or any
    callable/mapping returning the label tile for an index."""

    def __init__(self, labels, class_count, noise_rate=0.0, seed=0):
        if not 0 <= noise_rate <= 1:
            raise ValueError(f"noise_rate must lie in [0, 1], got {noise_rate}")
        self.labels = labels
        self.class_count = class_count
        self.noise_rate = noise_rate
        self.seed = seed

    @property
    def kind(self):
        return "noisy-oracle" if self.noise_rate > 0 else "oracle"

    def _label(self, index):
        if hasattr(self.labels, "label"):
            return self.labels.label(index)
        if callable(self.labels):
            return self.labels(index)
        return self.labels[index]

    def __getitem__(self, index):
        return oracle_logits(self._label(index), self.class_count, self.noise_rate,
                             self.seed, index).data

    def missing(self, indices):
        return []

    def check(self, indices):
        return None


class ArraySource:
    """Logits held in memory, keyed by tile index (tests and benchmarks)."""

    kind = "array"

    def __init__(self, tiles):
        self.tiles = tiles

    def __getitem__(self, index):
        try:
            return self.tiles[index]
        except (KeyError, IndexError):
            raise IncompletePredictionError([index]) from None

    def missing(self, indices):
        if isinstance(self.tiles, dict):
            return [i for i in indices if i not in self.tiles]
        return [i for i in indices if not 0 <= i < len(self.tiles)]

    def check(self, indices):
        missing = self.missing(indices)
        if missing:
            raise IncompletePredictionError(missing)


def make_source(kind, dataset=None, directory=None, noise_rate=0.0, seed=0):
    class_count = dataset.class_count if dataset is not None else None
    if kind == "directory":
        return DirectorySource(directory, class_count,
                               dataset.tile_dims() if dataset is not None else None)
    if kind in ("oracle", "noisy-oracle"):
        if dataset is None or class_count is None:
            raise ConsistencyError("oracle logits need a labelled dataset with a class count")
        return OracleSource(dataset, class_count, noise_rate, seed)
    raise ValueError(f"unknown predictor kind {kind!r}")
