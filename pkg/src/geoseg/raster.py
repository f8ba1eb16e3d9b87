"""
Georeferenced rasters with lazy windowed access.

Pixel data is always exposed as a ``(height, width, bands)`` array, row-major
and band-interleaved-by-pixel.  Large files are never read whole: the raw
binary format and uncompressed GeoTIFFs are memory mapped, and anything else
above the memory budget is decoded into a disk-backed map first.

Two on-disk encodings are supported:

* ``*.bin`` + ``*.meta``: raw little-endian samples plus a plain-text sidecar
  with one ``key=value`` per line (dimensions, sample type, the six affine
  coefficients, CRS id, optional nodata).  Always available.
* ``*.tif`` / ``*.tiff``: GeoTIFF through ``tifffile``; the affine is stored in
  ModelTransformationTag and the CRS id in the GeoTIFF citation key.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import BoundsError, FormatError, ShapeError

SAMPLE_TYPES = {"uint8": np.dtype("<u1"), "float32": np.dtype("<f4")}
DEFAULT_MEMORY_BUDGET = 256 * 2**20
NDVI_NODATA = -9999.0

_TIFF_SUFFIXES = {".tif", ".tiff"}
_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}

# GeoTIFF tag ids
_MODEL_TRANSFORMATION = 34264
_GEO_KEY_DIRECTORY = 34735
_GEO_ASCII_PARAMS = 34737


@dataclass(frozen=True)
class GeoTransform:
    """Affine pixel-to-map mapping plus an opaque CRS identifier.

    ``map_x = origin_x + px * pixel_size_x + py * skew_x`` and
    ``map_y = origin_y + px * skew_y + py * pixel_size_y``.
    """

    origin_x: float = 0.0
    origin_y: float = 0.0
    pixel_size_x: float = 1.0
    pixel_size_y: float = -1.0
    skew_x: float = 0.0
    skew_y: float = 0.0
    crs_id: str = ""

    def __post_init__(self):
        if not self.pixel_size_x > 0:
            raise ValueError(f"pixel_size_x must be > 0, got {self.pixel_size_x}")
        if self.pixel_size_y == 0:
            raise ValueError("pixel_size_y must be non-zero")
        if "\n" in self.crs_id:
            raise ValueError("crs_id may not contain newlines")

    def pixel_to_map(self, px, py):
        mx = self.origin_x + px * self.pixel_size_x + py * self.skew_x
        my = self.origin_y + px * self.skew_y + py * self.pixel_size_y
        return mx, my

    def map_to_pixel(self, mx, my):
        det = self.pixel_size_x * self.pixel_size_y - self.skew_x * self.skew_y
        dx = mx - self.origin_x
        dy = my - self.origin_y
        px = (dx * self.pixel_size_y - dy * self.skew_x) / det
        py = (dy * self.pixel_size_x - dx * self.skew_y) / det
        return px, py

    def translated(self, px, py):
        """Transform of a sub-grid whose pixel (0, 0) is our pixel (px, py)."""
        ox, oy = self.pixel_to_map(px, py)
        return replace(self, origin_x=ox, origin_y=oy)

    def scaled(self, fx, fy):
        """Transform after resampling so one new pixel spans fx by fy old pixels."""
        return replace(
            self,
            pixel_size_x=self.pixel_size_x * fx,
            pixel_size_y=self.pixel_size_y * fy,
            skew_x=self.skew_x * fy,
            skew_y=self.skew_y * fx,
        )

    def to_gdal(self):
        return (self.origin_x, self.pixel_size_x, self.skew_x,
                self.origin_y, self.skew_y, self.pixel_size_y)

    @classmethod
    def from_gdal(cls, coeffs, crs_id=""):
        ox, psx, skx, oy, sky, psy = (float(c) for c in coeffs)
        return cls(ox, oy, psx, psy, skx, sky, crs_id)

    def to_dict(self):
        return {
            "origin_x": self.origin_x, "origin_y": self.origin_y,
            "pixel_size_x": self.pixel_size_x, "pixel_size_y": self.pixel_size_y,
            "skew_x": self.skew_x, "skew_y": self.skew_y, "crs_id": self.crs_id,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class Window:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0 or self.w <= 0 or self.h <= 0:
            raise BoundsError(f"invalid window {self}")

    @property
    def slices(self):
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)

    def intersects(self, other):
        return (self.x < other.x + other.w and other.x < self.x + self.w
                and self.y < other.y + other.h and other.y < self.y + self.h)

    def to_list(self):
        return [self.x, self.y, self.w, self.h]


def sample_type_of(dtype):
    dtype = np.dtype(dtype)
    for name, dt in SAMPLE_TYPES.items():
        if dtype.kind == dt.kind and dtype.itemsize == dt.itemsize:
            return name
    raise FormatError(f"unsupported sample type {dtype}")


class Raster:
    """A georeferenced pixel grid.

    ``data`` is any array-like of shape ``(height, width, bands)``, usually a
    ``numpy.memmap``.  Rasters backed by a file pickle by path, so handles can
    be shipped to worker processes without copying pixels.
    """

    def __init__(self, data, geo=None, path=None, nodata=None):
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] < 1:
            raise ShapeError(f"raster data must be (h, w, bands), got {data.shape}")
        sample_type_of(data.dtype)
        self.data = data
        self.geo = geo
        self.path = Path(path) if path is not None else None
        self.nodata = nodata
        self._reopen = False   # True when ``data`` mirrors the file read-only

    @classmethod
    def from_array(cls, array, geo=None, nodata=None):
        array = np.asarray(array)
        if array.dtype == np.float64:
            array = array.astype(np.float32)
        return cls(array, geo=geo, nodata=nodata)

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def band_count(self):
        return self.data.shape[2]

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def sample_type(self):
        return sample_type_of(self.data.dtype)

    @property
    def nbytes(self):
        return self.height * self.width * self.band_count * self.data.dtype.itemsize

    def full_window(self):
        return Window(0, 0, self.width, self.height)

    def read_window(self, win):
        """Return a copy of the pixels under ``win`` as ``(h, w, bands)``."""
        if win.x + win.w > self.width or win.y + win.h > self.height:
            raise BoundsError(
                f"window {win} exceeds raster extent {self.width}x{self.height}")
        rows, cols = win.slices
        return np.array(self.data[rows, cols, :])

    def read_rows(self, y0, y1):
        return self.read_window(Window(0, y0, self.width, y1 - y0))

    def flush(self):
        if isinstance(self.data, np.memmap):
            self.data.flush()

    def __getstate__(self):
        state = dict(self.__dict__)
        if self.path is not None and (self._reopen or isinstance(self.data, np.memmap)):
            state["data"] = None
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        if self.data is None:
            self.data = open_raster(self.path).data

    def __repr__(self):
        src = f" path={str(self.path)!r}" if self.path else ""
        return (f"Raster({self.width}x{self.height}x{self.band_count}"
                f" {self.sample_type}{src})")


def read_window(raster, win):
    return raster.read_window(win)


def pixel_to_map(geo, px, py):
    return geo.pixel_to_map(px, py)


def map_to_pixel(geo, mx, my):
    return geo.map_to_pixel(mx, my)


# ---------------------------------------------------------------------------
# raw binary + sidecar


def sidecar_path(path):
    return Path(path).with_suffix(".meta")


def _format_meta(width, height, bands, sample_type, geo, nodata):
    lines = [f"width={width}", f"height={height}", f"bands={bands}",
             f"sample_type={sample_type}", "byte_order=little"]
    if geo is not None:
        for key, value in zip(("origin_x", "pixel_size_x", "skew_x",
                               "origin_y", "skew_y", "pixel_size_y"), geo.to_gdal()):
            lines.append(f"{key}={float(value)!r}")
        lines.append(f"crs_id={geo.crs_id}")
    if nodata is not None:
        lines.append(f"nodata={float(nodata)!r}")
    return "\n".join(lines) + "\n"


def read_meta(path):
    meta = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FormatError(f"cannot read sidecar {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{path}:{n}: expected key=value")
        meta[key.strip()] = value
    return meta


def _geo_from_meta(meta):
    if "origin_x" not in meta:
        return None
    keys = ("origin_x", "pixel_size_x", "skew_x", "origin_y", "skew_y", "pixel_size_y")
    return GeoTransform.from_gdal([float(meta[k]) for k in keys], meta.get("crs_id", ""))


def _write_text_atomic(path, text):
    tmp = Path(path).with_name(f".{Path(path).name}.tmp")
    with open(tmp, "w") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _open_bin(path, mode="r"):
    meta = read_meta(sidecar_path(path))
    try:
        width, height, bands = int(meta["width"]), int(meta["height"]), int(meta["bands"])
        dtype = SAMPLE_TYPES[meta["sample_type"]]
    except KeyError as exc:
        raise FormatError(f"sidecar for {path} lacks or has a bad {exc}") from exc
    expected = width * height * bands * dtype.itemsize
    try:
        actual = os.path.getsize(path)
    except OSError as exc:
        raise FormatError(f"cannot open {path}: {exc}") from exc
    if actual != expected:
        raise FormatError(f"{path}: {actual} bytes on disk, sidecar implies {expected}")
    data = np.memmap(path, dtype=dtype, mode=mode, shape=(height, width, bands))
    nodata = float(meta["nodata"]) if "nodata" in meta else None
    return Raster(data, geo=_geo_from_meta(meta), path=path, nodata=nodata)


# ---------------------------------------------------------------------------
# GeoTIFF


def _geotiff_extratags(geo):
    if geo is None:
        return []
    a, b, c, d, e, f = geo.to_gdal()
    matrix = (b, c, 0.0, a, e, f, 0.0, d, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0)
    citation = geo.crs_id + "|"
    # version 1.1.0, 2 keys: GTRasterType=PixelIsArea, GTCitation -> ascii params
    keys = (1, 1, 0, 2, 1025, 0, 1, 1, 1026, _GEO_ASCII_PARAMS, len(citation), 0)
    return [
        (_MODEL_TRANSFORMATION, "d", 16, matrix, True),
        (_GEO_KEY_DIRECTORY, "H", len(keys), keys, True),
        (_GEO_ASCII_PARAMS, "s", 0, citation, True),
    ]


def _geo_from_tiff(page):
    tags = page.tags
    crs_id = ""
    if _GEO_ASCII_PARAMS in tags:
        crs_id = str(tags[_GEO_ASCII_PARAMS].value).split("|")[0]
    if _MODEL_TRANSFORMATION in tags:
        m = tags[_MODEL_TRANSFORMATION].value
        return GeoTransform.from_gdal((m[3], m[0], m[1], m[7], m[4], m[5]), crs_id)
    if 33550 in tags and 33922 in tags:
        sx, sy = tags[33550].value[:2]
        tp = tags[33922].value
        ox = tp[3] - tp[0] * sx
        oy = tp[4] + tp[1] * sy
        return GeoTransform(ox, oy, sx, -sy, 0.0, 0.0, crs_id)
    return None


def _open_tiff(path, memory_budget):
    import tifffile

    with tifffile.TiffFile(path) as tif:
        page = tif.pages[0]
        geo = _geo_from_tiff(page)
        nodata = page.tags[42113].value if 42113 in page.tags else None
        shape = page.shape
        itemsize = page.dtype.itemsize
    try:
        data = tifffile.memmap(path, mode="r")
    except ValueError:
        nbytes = int(np.prod(shape)) * itemsize
        if nbytes <= memory_budget:
            data = tifffile.imread(path)
        else:
            fd, tmp = tempfile.mkstemp(suffix=".geoseg.mmap")
            os.close(fd)
            data = tifffile.imread(path, out=tmp)
    if data.ndim == 3 and data.shape[0] < data.shape[-1] and data.shape[0] <= 4 \
            and data.shape[-1] > 4:
        # planar layout; materializes, so only expected for small inputs
        data = np.ascontiguousarray(np.moveaxis(data, 0, -1))
    nodata = float(nodata) if nodata not in (None, "") else None
    return Raster(data, geo=geo, path=path, nodata=nodata)


def _open_image(path):
    import cv2

    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise FormatError(f"cannot decode {path}")
    if arr.ndim == 3:
        arr = cv2.cvtColor(arr, cv2.COLOR_BGR2RGB if arr.shape[2] == 3 else cv2.COLOR_BGRA2RGBA)
    return Raster(arr, path=path)


def open_raster(path, memory_budget=DEFAULT_MEMORY_BUDGET):
    """Open a raster without reading its pixels (where the format allows)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    suffix = path.suffix.lower()
    if suffix in _TIFF_SUFFIXES:
        raster = _open_tiff(path, memory_budget)
    elif suffix in _IMAGE_SUFFIXES:
        raster = _open_image(path)
    else:
        raster = _open_bin(path)
        if raster.nbytes <= memory_budget:
            raster.data = np.array(raster.data)
    # pickles by path, so worker processes reopen instead of copying pixels
    raster._reopen = True
    return raster


def create_raster(path, width, height, bands=1, sample_type="uint8", geo=None,
                  nodata=None):
    """Create a zero-filled writable raster on disk and return its handle.

    Only the raw binary format is writable in place; use :func:`save_raster`
    to export GeoTIFF.
    """
    path = Path(path)
    if path.suffix.lower() in _TIFF_SUFFIXES | _IMAGE_SUFFIXES:
        raise FormatError("create_raster writes the raw .bin format only")
    dtype = SAMPLE_TYPES[sample_type]
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_text_atomic(sidecar_path(path),
                       _format_meta(width, height, bands, sample_type, geo, nodata))
    nbytes = width * height * bands * dtype.itemsize
    with open(path, "wb") as fh:
        fh.truncate(nbytes)
    data = np.memmap(path, dtype=dtype, mode="r+", shape=(height, width, bands))
    return Raster(data, geo=geo, path=path, nodata=nodata)


def open_raster_for_update(path):
    """Reopen an existing raw raster writable (used when resuming work)."""
    return _open_bin(Path(path), mode="r+")


def save_raster(raster, path, band_rows=1024):
    """Write ``raster`` to ``path``; the suffix selects the encoding."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() in _TIFF_SUFFIXES:
        import tifffile

        extratags = _geotiff_extratags(raster.geo)
        if raster.nodata is not None:
            extratags.append((42113, "s", 0, repr(float(raster.nodata)), True))
        tmp = path.with_name(f".{path.name}.tmp")
        photometric = "rgb" if raster.band_count == 3 and raster.sample_type == "uint8" \
            else "minisblack"
        data = raster.data if raster.band_count > 1 else raster.data[:, :, 0]
        tifffile.imwrite(tmp, np.asarray(data), photometric=photometric,
                         planarconfig="contig", extratags=extratags)
        os.replace(tmp, path)
        return path
    out = create_raster(path, raster.width, raster.height, raster.band_count,
                        raster.sample_type, raster.geo, raster.nodata)
    for y0 in range(0, raster.height, band_rows):
        y1 = min(raster.height, y0 + band_rows)
        out.data[y0:y1] = raster.data[y0:y1]
    out.flush()
    del out
    return path


# ---------------------------------------------------------------------------
# NDVI


def masked_ndvi(nir, red, mask, target_class, nodata=NDVI_NODATA, out=None,
                band_rows=1024):
    """NDVI restricted to pixels whose mask class equals ``target_class``.

    Pixels outside the mask, or where NIR + red is zero, get ``nodata``.
    Returns an in-memory raster, or a disk raster when ``out`` is a path.
    """
    dims = {(r.width, r.height) for r in (nir, red, mask)}
    if len(dims) != 1:
        raise ShapeError(f"nir, red and mask differ in size: {sorted(dims)}")
    if mask.band_count != 1:
        raise ShapeError("mask must be single-band")
    width, height = nir.width, nir.height
    if out is not None:
        result = create_raster(out, width, height, 1, "float32", nir.geo, nodata)
    else:
        result = Raster(np.empty((height, width, 1), np.float32), geo=nir.geo,
                        nodata=nodata)
    for y0 in range(0, height, band_rows):
        y1 = min(height, y0 + band_rows)
        n = nir.read_rows(y0, y1)[:, :, 0].astype(np.float64)
        r = red.read_rows(y0, y1)[:, :, 0].astype(np.float64)
        m = mask.read_rows(y0, y1)[:, :, 0]
        total = n + r
        valid = (m == target_class) & (total != 0)
        ndvi = np.full(n.shape, nodata, np.float64)
        np.divide(n - r, total, out=ndvi, where=valid)
        result.data[y0:y1, :, 0] = ndvi.astype(np.float32)
    result.flush()
    return result


def geo_close(a, b, tol=1e-9):
    return all(math.isclose(x, y, abs_tol=tol) for x, y in zip(a.to_gdal(), b.to_gdal()))
