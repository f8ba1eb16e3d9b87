"""
Synthetic ground-sampling-distance degradation.

Three methods, all driven by the ratio ``r = source_gsd / target_gsd``:

A  shrink image and label tiles by ``r`` (area filter / nearest)
B  shrink image tiles by ``r`` then blow them back up (area, then bicubic);
   labels are left untouched
C  resample the whole orthomosaic (lanczos / nearest) and re-tile it

Output dimensions are ``floor(n * r + 1/2)`` computed in exact rationals, so
decimal GSDs such as 0.08 and 0.10 give the same sizes as pen-and-paper.
"""

from __future__ import annotations

import logging
import math
import shutil
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import cv2
import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .raster import Raster, create_raster
from .tiling import (Dataset, TileRecord, encode_image_tile, encode_label_tile,
                     plan_grid, split_raster, write_atomic, write_json_atomic,
                     write_manifest)

log = logging.getLogger(__name__)

# (gsd in m/px, platform)
LADDER = (
    ("0.08", "UAV"),
    ("0.10", "UAV"),
    ("0.12", "UAV"),
    ("0.15", "Maxar (Upscaled)"),
    ("0.30", "Maxar, Digital Globe"),
    ("0.50", "Maxar, Airbus"),
    ("0.70", "Maxar, Planet, CNES, KARI"),
    ("1", "Lockheed Martin Space"),
    ("3", "Planet"),
    ("5", "RapidEye Blackbridge"),
    ("10", "Sentinel-2"),
    ("15", "Landsat"),
)

IMAGE_FILTERS = {"area": cv2.INTER_AREA, "bicubic": cv2.INTER_CUBIC,
                 "lanczos": cv2.INTER_LANCZOS4}


@dataclass(frozen=True)
class Rung:
    gsd: float
    platform: str


class GsdLadder(tuple):
    """Strictly increasing sequence of :class:`Rung`."""

    def __new__(cls, rungs):
        rungs = tuple(rungs)
        if any(a.gsd >= b.gsd for a, b in zip(rungs, rungs[1:])):
            raise ConfigurationError("GSD ladder must be strictly increasing")
        return super().__new__(cls, rungs)

    @property
    def gsds(self):
        return [r.gsd for r in self]


def ladder_presets():
    return GsdLadder(Rung(float(g), p) for g, p in LADDER)


def _exact(value):
    if isinstance(value, Fraction):
        return value
    return Fraction(str(value)) if isinstance(value, float) else Fraction(value)


@dataclass(frozen=True)
class DegradeSpec:
    method: str
    source_gsd: float
    target_gsd: float
    image_filter: str = "area"
    label_filter: str = "nearest"

    def __post_init__(self):
        if self.method.upper() not in ("A", "B", "C"):
            raise ConfigurationError(f"unknown degradation method {self.method!r}")
        object.__setattr__(self, "method", self.method.upper())
        if not 0 < self.source_gsd <= self.target_gsd:
            raise ConfigurationError(
                f"target GSD {self.target_gsd} must be >= source GSD {self.source_gsd} > 0")
        if self.image_filter not in IMAGE_FILTERS:
            raise ConfigurationError(f"unknown image filter {self.image_filter!r}")
        if self.label_filter != "nearest":
            raise ConfigurationError("labels are only resampled with 'nearest'")

    @property
    def ratio(self):
        return _exact(self.source_gsd) / _exact(self.target_gsd)


def scaled_dim(n, ratio):
    """``round(n * ratio)`` with halves rounded up, in exact arithmetic."""
    return math.floor(n * _exact(ratio) + Fraction(1, 2))


def scaled_dims(width, height, ratio):
    w, h = scaled_dim(width, ratio), scaled_dim(height, ratio)
    if w < 1 or h < 1:
        raise ConfigurationError(
            f"scaling {width}x{height} by {float(ratio):.4g} yields an empty image")
    return w, h


def ladder_dimensions(width, height, source_gsd, ladder=None):
    ladder = ladder or ladder_presets()
    src = _exact(source_gsd)
    return {r.gsd: scaled_dims(width, height, src / _exact(r.gsd))
            for r in ladder if _exact(r.gsd) >= src}


# ---------------------------------------------------------------------------
# resampling kernels


def nearest_index(n_in, n_out):
    """Source index sampled by each output pixel centre, exact integers."""
    i = np.arange(n_out, dtype=np.int64)
    return np.minimum((2 * i + 1) * n_in // (2 * n_out), n_in - 1)


def nearest_resize(array, width, height):
    rows = nearest_index(array.shape[0], height)
    cols = nearest_index(array.shape[1], width)
    return array[rows][:, cols]


def _lanczos(x, a=3):
    x = np.asarray(x, dtype=np.float64)
    out = np.sinc(x) * np.sinc(x / a)
    out[np.abs(x) >= a] = 0.0
    return out


def lanczos_weights(n_in, n_out, a=3):
    """Sparse ``(n_out, n_in)`` resampling matrix with an anti-aliased kernel."""
    scale = n_in / n_out
    fs = max(scale, 1.0)
    support = a * fs
    rows, cols, vals = [], [], []
    for i in range(n_out):
        center = (i + 0.5) * scale
        j0 = max(0, int(math.floor(center - support)))
        j1 = min(n_in, int(math.ceil(center + support)) + 1)
        j = np.arange(j0, j1)
        w = _lanczos((j + 0.5 - center) / fs, a)
        total = w.sum()
        if total == 0:
            j = np.array([min(int(center), n_in - 1)])
            w = np.array([1.0])
            total = 1.0
        keep = w != 0
        rows.append(np.full(keep.sum(), i))
        cols.append(j[keep])
        vals.append(w[keep] / total)
    return sp.csr_matrix(
        (np.concatenate(vals).astype(np.float32),
         (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_out, n_in))


def _to_dtype(values, dtype):
    if np.dtype(dtype) == np.uint8:
        return np.clip(np.rint(values), 0, 255).astype(np.uint8)
    return values.astype(dtype)


class _BandedLanczos:
    """Lanczos resize of a raster, computed one output row band at a time."""

    def __init__(self, raster, width, height, chunk_rows=512):
        self.raster = raster
        self.width, self.height = width, height
        self.wx_t = lanczos_weights(raster.width, width).T.tocsr()
        self.wy = lanczos_weights(raster.height, height)
        self.chunk_rows = chunk_rows

    def band(self, r0, r1):
        wy = self.wy[r0:r1]
        c0, c1 = int(wy.indices.min()), int(wy.indices.max()) + 1
        bands = self.raster.band_count
        horiz = np.empty((c1 - c0, self.width, bands), np.float32)
        for y in range(c0, c1, self.chunk_rows):
            y1 = min(c1, y + self.chunk_rows)
            block = self.raster.read_rows(y, y1).astype(np.float32)
            for b in range(bands):
                horiz[y - c0:y1 - c0, :, b] = block[:, :, b] @ self.wx_t
        wy_local = sp.csr_matrix((wy.data, wy.indices - c0, wy.indptr),
                                 shape=(r1 - r0, c1 - c0))
        flat = wy_local @ horiz.reshape(c1 - c0, -1)
        return _to_dtype(flat.reshape(r1 - r0, self.width, bands), self.raster.dtype)


def resize_raster(raster, width, height, kind, out=None, band_rows=256):
    """Resample ``raster`` to ``width x height`` with 'lanczos' or 'nearest'.

    Streams in row bands, so the source is never materialized; the result
    is identical for any ``band_rows``.
    """
    geo = raster.geo.scaled(raster.width / width, raster.height / height) \
        if raster.geo else None
    if out is not None:
        result = create_raster(out, width, height, raster.band_count,
                               raster.sample_type, geo, raster.nodata)
    else:
        result = Raster(np.empty((height, width, raster.band_count), raster.dtype),
                        geo=geo, nodata=raster.nodata)
    same = (width, height) == (raster.width, raster.height)
    if kind == "lanczos" and not same:
        engine = _BandedLanczos(raster, width, height)
    elif kind not in ("lanczos", "nearest"):
        raise ConfigurationError(f"unknown mosaic filter {kind!r}")
    rows = nearest_index(raster.height, height)
    cols = nearest_index(raster.width, width)
    for r0 in range(0, height, band_rows):
        r1 = min(height, r0 + band_rows)
        if same:
            result.data[r0:r1] = raster.read_rows(r0, r1)
        elif kind == "lanczos":
            result.data[r0:r1] = engine.band(r0, r1)
        else:
            src = rows[r0:r1]
            block = raster.read_rows(int(src[0]), int(src[-1]) + 1)
            result.data[r0:r1] = block[src - src[0]][:, cols]
    result.flush()
    return result


# ---------------------------------------------------------------------------
# per-tile methods


def _check_dims(h, w, spec):
    return scaled_dims(w, h, spec.ratio)


def degrade_tile_a(image, label, spec):
    """Method A: both tiles shrink to ``round(dim * r)``."""
    w, h = _check_dims(image.shape[0], image.shape[1], spec)
    interp = IMAGE_FILTERS[spec.image_filter]
    small = cv2.resize(image, (w, h), interpolation=interp)
    if small.ndim == 2:
        small = small[:, :, None]
    small_label = nearest_resize(label, w, h) if label is not None else None
    return small, small_label


def degrade_tile_b(image, spec):
    """Method B: shrink with an area filter, then bicubic back to the original size."""
    h0, w0 = image.shape[:2]
    w, h = _check_dims(h0, w0, spec)
    small = cv2.resize(image, (w, h), interpolation=cv2.INTER_AREA)
    big = cv2.resize(small, (w0, h0), interpolation=cv2.INTER_CUBIC)
    if big.ndim == 2:
        big = big[:, :, None]
    return big


def _copy_dataset_meta(src, dst):
    dst.mkdir(parents=True, exist_ok=True)
    (dst / "images").mkdir(exist_ok=True)
    shutil.copyfile(src.root / "grid.json", dst / "grid.json")


def degrade_dataset(dataset, spec, out):
    """Apply method A or B to every tile of a dataset directory."""
    ds = dataset if isinstance(dataset, Dataset) else Dataset(dataset)
    out = Path(out)
    _copy_dataset_meta(ds, out)
    if ds.has_labels:
        (out / "labels").mkdir(exist_ok=True)
    records = []
    tile_w = tile_h = None
    for rec in ds.records:
        image = ds.image(rec.index)
        label = ds.label(rec.index) if rec.label_path else None
        if spec.method == "A":
            image, label = degrade_tile_a(image, label, spec)
            tile_h, tile_w = image.shape[:2]
            geo = rec.geo.scaled(rec.window.w / tile_w, rec.window.h / tile_h) \
                if rec.geo else None
            rec = TileRecord(rec.index, rec.window, rec.image_path, rec.label_path, geo)
            if label is not None:
                write_atomic(out / rec.label_path, encode_label_tile(label[:, :, None]))
        elif spec.method == "B":
            image = degrade_tile_b(image, spec)
            if label is not None:
                shutil.copyfile(ds.root / rec.label_path, out / rec.label_path)
        else:
            raise ConfigurationError("method C works on the mosaic; use degrade_mosaic_c")
        write_atomic(out / rec.image_path, encode_image_tile(image))
        records.append(rec)
    write_manifest(out / "manifest.jsonl", records)
    if spec.method == "A" and tile_w is not None:
        write_json_atomic(out / "tile_dims.json", {
            "tile_w": tile_w, "tile_h": tile_h,
            "source_gsd": spec.source_gsd, "target_gsd": spec.target_gsd})
    return records


def degrade_mosaic_c(image, labels, spec, tile_w, tile_h=None, stride=0.5, out=None,
                     *, class_count=None, palette=None, workers=None):
    """Method C: resample the orthomosaic and labels by ``r``, then re-tile.

    The resampled mosaics are kept under ``out/mosaic/``.  Fails before any
    work if the shrunken extent cannot hold a single tile.
    """
    tile_h = tile_w if tile_h is None else tile_h
    width, height = scaled_dims(image.width, image.height, spec.ratio)
    if width < tile_w or height < tile_h:
        raise ConfigurationError(
            f"degraded extent {width}x{height} is smaller than one "
            f"{tile_w}x{tile_h} tile")
    grid = plan_grid(width, height, tile_w, tile_h, stride)
    out = Path(out)
    mosaic_dir = out / "mosaic"
    small_img = resize_raster(image, width, height, "lanczos", mosaic_dir / "image.bin")
    small_lbl = resize_raster(labels, width, height, "nearest",
                              mosaic_dir / "labels.bin") if labels is not None else None
    records = split_raster(small_img, small_lbl, grid, out, class_count=class_count,
                           palette=palette, workers=workers,
                           source_paths={"source_image": mosaic_dir / "image.bin",
                                         "source_labels": small_lbl and mosaic_dir / "labels.bin"})
    write_json_atomic(out / "degrade.json", {
        "method": "C", "source_gsd": spec.source_gsd, "target_gsd": spec.target_gsd,
        "width": width, "height": height})
    return records
