"""
Sliding-window fragmentation of an orthomosaic into overlapping tiles.

The grid advances ``floor(tile * stride)`` pixels per step.  The last window
in each axis is shifted inward so it ends exactly on the image edge; tiles are
never padded.  Tile indices are row-major grid positions and serve as the join
key for logits, weights and splits.

Dataset directory layout::

    grid.json          tile dims, stride, source dims/geotransform, palette
    manifest.jsonl     one TileRecord per line, ordered by index
    images/{i}.jpg     RGB (or grey) tile, JPEG quality 90
    labels/{i}.png     single-band 8-bit class ids, lossless
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import cv2
import numpy as np

from ._runtime import crash_point, worker_count
from .errors import ConfigurationError, FormatError, ShapeError
from .journal import payload_digest
from .raster import GeoTransform, Window

log = logging.getLogger(__name__)

JPEG_QUALITY = 90


def _exact(value):
    """Exact rational for a float given in decimal notation (0.29 -> 29/100)."""
    if isinstance(value, Fraction):
        return value
    return Fraction(str(value)) if isinstance(value, float) else Fraction(value)


def grid_step(tile, stride):
    step = int(_exact(tile) * _exact(stride))  # floor for positive values
    if step < 1:
        raise ConfigurationError(f"tile {tile} with stride {stride} gives a zero step")
    return step


def axis_origins(extent, tile, step):
    if tile > extent:
        raise ConfigurationError(f"tile size {tile} exceeds image extent {extent}")
    origins = list(range(0, extent - tile + 1, step))
    if origins[-1] + tile < extent:
        origins.append(extent - tile)
    return origins


@dataclass(frozen=True)
class TileGrid:
    tile_w: int
    tile_h: int
    stride: float
    source_dims: tuple
    xs: tuple
    ys: tuple

    @property
    def cols(self):
        return len(self.xs)

    @property
    def rows(self):
        return len(self.ys)

    def __len__(self):
        return self.rows * self.cols

    @property
    def origins(self):
        return [self.window(i) for i in range(len(self))]

    def window(self, index):
        row, col = divmod(index, self.cols)
        return Window(self.xs[col], self.ys[row], self.tile_w, self.tile_h)

    def row_of(self, index):
        return index // self.cols

    def row_indices(self, row):
        return range(row * self.cols, (row + 1) * self.cols)

    def to_dict(self):
        return {"tile_w": self.tile_w, "tile_h": self.tile_h, "stride": self.stride,
                "source_dims": list(self.source_dims)}


def plan_grid(width, height, tile_w, tile_h=None, stride=0.5):
    """Enumerate overlapping ``tile_w x tile_h`` windows covering the extent."""
    tile_h = tile_w if tile_h is None else tile_h
    if not 0 < _exact(stride) <= 1:
        raise ConfigurationError(f"stride must lie in (0, 1], got {stride}")
    if tile_w <= 0 or tile_h <= 0:
        raise ConfigurationError("tile dimensions must be positive")
    xs = axis_origins(width, tile_w, grid_step(tile_w, stride))
    ys = axis_origins(height, tile_h, grid_step(tile_h, stride))
    return TileGrid(tile_w, tile_h, stride, (width, height), tuple(xs), tuple(ys))


def data_gain(stride):
    """Asymptotic tile-count ratio of stride ``s`` versus stride 1: ``(1/s)**2``."""
    s = _exact(stride)
    if not 0 < s <= 1:
        raise ConfigurationError(f"stride must lie in (0, 1], got {stride}")
    return float(1 / s**2)


@dataclass(frozen=True)
class TileRecord:
    index: int
    window: Window
    image_path: str
    label_path: str
    geo: GeoTransform | None = None

    def to_json(self):
        return json.dumps({
            "index": self.index,
            "window": self.window.to_list(),
            "image": self.image_path,
            "label": self.label_path,
            "geo": self.geo.to_dict() if self.geo else None,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        geo = GeoTransform.from_dict(d["geo"]) if d.get("geo") else None
        return cls(d["index"], Window(*d["window"]), d["image"], d["label"], geo)


# ---------------------------------------------------------------------------
# tile codecs


def encode_image_tile(block):
    if block.dtype != np.uint8:
        raise FormatError(f"image tiles must be uint8, got {block.dtype}")
    if block.shape[2] >= 3:
        pixels = cv2.cvtColor(np.ascontiguousarray(block[:, :, :3]), cv2.COLOR_RGB2BGR)
    else:
        pixels = np.ascontiguousarray(block[:, :, 0])
    ok, buf = cv2.imencode(".jpg", pixels, [cv2.IMWRITE_JPEG_QUALITY, JPEG_QUALITY])
    if not ok:
        raise FormatError("JPEG encoding failed")
    return buf.tobytes()


def encode_label_tile(block):
    if block.dtype != np.uint8:
        raise FormatError(f"label tiles must be uint8 class ids, got {block.dtype}")
    ok, buf = cv2.imencode(".png", np.ascontiguousarray(block[:, :, 0]))
    if not ok:
        raise FormatError("PNG encoding failed")
    return buf.tobytes()


def decode_image_tile(path):
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise FormatError(f"cannot decode image tile {path}")
    if arr.ndim == 2:
        return arr[:, :, None]
    return cv2.cvtColor(arr, cv2.COLOR_BGR2RGB)


def decode_label_tile(path):
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise FormatError(f"cannot decode label tile {path}")
    if arr.ndim != 2:
        raise FormatError(f"label tile {path} is not single-band")
    return arr


def write_atomic(path, data):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    crash_point("tile-written")
    os.replace(tmp, path)


def _remove_stale_tmp(root):
    for sub in ("", "images", "labels"):
        d = Path(root) / sub
        if d.is_dir():
            for p in d.glob(".*.tmp"):
                p.unlink()


# ---------------------------------------------------------------------------
# dataset directory


class Dataset:
    """Read access to a tiled dataset directory."""

    def __init__(self, root):
        self.root = Path(root)
        grid_file = self.root / "grid.json"
        if not grid_file.exists():
            raise FileNotFoundError(f"{grid_file} not found; is {root} a dataset?")
        self.meta = json.loads(grid_file.read_text())
        m = self.meta
        self.grid = plan_grid(m["source_dims"][0], m["source_dims"][1],
                              m["tile_w"], m["tile_h"], m["stride"])
        self.geo = GeoTransform.from_dict(m["geo"]) if m.get("geo") else None
        self._records = None

    @property
    def class_count(self):
        return self.meta.get("class_count")

    @property
    def palette(self):
        return self.meta.get("class_palette")

    @property
    def records(self):
        if self._records is None:
            self._records = read_manifest(self.root / "manifest.jsonl")
        return self._records

    @property
    def has_labels(self):
        return bool(self.records) and bool(self.records[0].label_path)

    def __len__(self):
        return len(self.grid)

    def label(self, index):
        return decode_label_tile(self.root / self.records[index].label_path)

    def image(self, index):
        return decode_image_tile(self.root / self.records[index].image_path)

    def tile_dims(self):
        """(h, w) of stored tiles; differs from the grid after method-A degradation."""
        override = self.root / "tile_dims.json"
        if override.exists():
            d = json.loads(override.read_text())
            return d["tile_h"], d["tile_w"]
        return self.grid.tile_h, self.grid.tile_w

    def read_json(self, name):
        return json.loads((self.root / name).read_text())


def read_manifest(path):
    records = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                records.append(TileRecord.from_json(line))
    records.sort(key=lambda r: r.index)
    return records


def write_manifest(path, records):
    text = "".join(r.to_json() + "\n" for r in sorted(records, key=lambda r: r.index))
    write_atomic(path, text.encode())


def write_json_atomic(path, obj):
    write_atomic(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode())


def tile_records(grid, geo=None, labels=True):
    records = []
    for index in range(len(grid)):
        win = grid.window(index)
        records.append(TileRecord(
            index, win, f"images/{index}.jpg",
            f"labels/{index}.png" if labels else "",
            geo.translated(win.x, win.y) if geo is not None else None))
    return records


# ---------------------------------------------------------------------------
# splitting


def _split_band(image, labels, grid, row, out):
    """Write the tiles of one grid row; returns a digest of everything written."""
    out = Path(out)
    parts = []
    for index in grid.row_indices(row):
        win = grid.window(index)
        img_bytes = encode_image_tile(image.read_window(win))
        write_atomic(out / "images" / f"{index}.jpg", img_bytes)
        parts.append(img_bytes)
        if labels is not None:
            lbl_bytes = encode_label_tile(labels.read_window(win))
            write_atomic(out / "labels" / f"{index}.png", lbl_bytes)
            parts.append(lbl_bytes)
    return row, payload_digest(*parts)


def split_raster(image, labels, grid, out, *, class_count=None, palette=None,
                 workers=None, checkpoints=None, source_paths=None):
    """Fragment ``image`` (and ``labels``) into tiles under directory ``out``.

    One checkpoint is committed per grid row when ``checkpoints`` (a
    :class:`~geoseg.journal.TaskCheckpoints`) is given; committed rows are
    skipped on a rerun.  The files produced do not depend on ``workers``.
    """
    if (image.width, image.height) != tuple(grid.source_dims):
        raise ShapeError(f"grid planned for {grid.source_dims}, image is "
                         f"{image.width}x{image.height}")
    if labels is not None:
        if (labels.width, labels.height) != (image.width, image.height):
            raise ShapeError(f"labels {labels.width}x{labels.height} do not match "
                             f"image {image.width}x{image.height}")
        if labels.band_count != 1:
            raise ShapeError("label raster must be single-band")
    out = Path(out)
    for sub in ("images", "labels") if labels is not None else ("images",):
        (out / sub).mkdir(parents=True, exist_ok=True)

    meta = grid.to_dict()
    meta["geo"] = image.geo.to_dict() if image.geo else None
    meta["class_count"] = class_count
    meta["class_palette"] = palette
    meta["image_bands"] = min(image.band_count, 3)
    if source_paths:
        meta.update({k: str(v) for k, v in source_paths.items() if v})
    write_json_atomic(out / "grid.json", meta)

    pending = [r for r in range(grid.rows)
               if checkpoints is None or not checkpoints.done(f"band-{r}")]
    n_workers = min(worker_count(workers), max(1, len(pending)))
    if n_workers == 1:
        for row in pending:
            _, digest = _split_band(image, labels, grid, row, out)
            if checkpoints is not None:
                checkpoints.commit(f"band-{row}", digest)
    else:
        with ProcessPoolExecutor(n_workers) as pool:
            futures = [pool.submit(_split_band, image, labels, grid, row, out)
                       for row in pending]
            for fut in as_completed(futures):
                row, digest = fut.result()
                if checkpoints is not None:
                    checkpoints.commit(f"band-{row}", digest)

    records = tile_records(grid, image.geo, labels is not None)
    write_manifest(out / "manifest.jsonl", records)
    _remove_stale_tmp(out)
    log.info("split %s into %d tiles (%d rows)", image, len(records), grid.rows)
    return records
