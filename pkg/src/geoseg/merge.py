"""
Reassembling per-tile predictions into one segmentation map.

logit-merge
    each pixel takes ``argmax_c max_t logits_t[p, c]`` over the tiles covering
    it.  Streamed down the grid: a float buffer spanning one tile height of
    rows holds running per-class maxima; rows above the next tile row's origin
    can no longer change and are flushed.

crop-merge
    overlapping tiles are cut halfway through their overlap, so each pixel
    comes from exactly one tile (the one whose centre it is nearest to along
    each axis).  Outer image edges are never cut.

Ties between classes go to the lowest class id (``numpy.argmax`` semantics).
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._runtime import crash_point, worker_count
from .errors import ConfigurationError, ConsistencyError, IncompletePredictionError
from .journal import payload_digest
from .raster import Raster, create_raster, open_raster_for_update, save_raster

log = logging.getLogger(__name__)

DEFAULT_CHECKPOINT_EVERY = 64


@dataclass
class SegmentationMap:
    raster: Raster
    class_count: int | None = None
    palette: list | None = None

    @property
    def array(self):
        return np.asarray(self.raster.data[:, :, 0])

    @property
    def geo(self):
        return self.raster.geo


def crop_bounds(origins, tile, extent):
    """Half-open ``(start, end)`` span each tile contributes along one axis."""
    starts = [0]
    for prev, cur in zip(origins, origins[1:]):
        overlap = prev + tile - cur
        starts.append(cur + max(overlap, 0) // 2)
    ends = starts[1:] + [extent]
    return list(zip(starts, ends))


def _check_complete(grid, source):
    missing = source.missing(range(len(grid)))
    if missing:
        raise IncompletePredictionError(missing)


def _tile_logits(source, grid, index):
    data = source[index]
    if data.shape[:2] != (grid.tile_h, grid.tile_w):
        raise ConsistencyError(
            f"logits for tile {index} are {data.shape[:2]}, grid tiles are "
            f"{(grid.tile_h, grid.tile_w)}")
    return data


def _output(grid, out, geo, resume):
    width, height = grid.source_dims
    if out is None:
        return Raster(np.zeros((height, width, 1), np.uint8), geo=geo)
    out = Path(out)
    if resume and out.exists():
        return open_raster_for_update(out)
    return create_raster(out, width, height, 1, "uint8", geo)


def merge_logits(grid, source, out=None, geo=None, checkpoints=None,
                 checkpoint_every=DEFAULT_CHECKPOINT_EVERY, class_count=None,
                 palette=None):
    """Max-logit merge of every tile in ``grid`` (see module docstring)."""
    _check_complete(grid, source)
    resume_y = 0
    if checkpoints is not None:
        done = [int(c.split("-")[1]) for c in checkpoints.ids() if c.startswith("rows-")]
        resume_y = max(done, default=0)
    result = _output(grid, out, geo, resume=resume_y > 0)
    width = grid.source_dims[0]
    height = grid.source_dims[1]
    th = grid.tile_h

    lo = resume_y          # first row not yet final
    buf = None             # running maxima for rows [lo, lo + len(buf))
    since_checkpoint = 0

    def apply_row(k, min_y):
        nonlocal buf, class_count
        y = grid.ys[k]
        for index in grid.row_indices(k):
            data = _tile_logits(source, grid, index)
            if buf is None:
                class_count = class_count or data.shape[2]
                buf = np.full((th, width, class_count), -np.inf, np.float32)
            elif data.shape[2] != buf.shape[2]:
                raise ConsistencyError(f"tile {index} has {data.shape[2]} classes, "
                                       f"expected {buf.shape[2]}")
            x = grid.xs[index % grid.cols]
            skip = max(0, min_y - y)
            dst = buf[y + skip - lo:y + th - lo, x:x + grid.tile_w]
            np.maximum(dst, data[skip:], out=dst)

    def flush(upto):
        nonlocal buf, lo
        n = upto - lo
        if n <= 0:
            return
        result.data[lo:upto, :, 0] = np.argmax(buf[:n], axis=2).astype(np.uint8)
        rest = buf[n:]
        buf = np.full_like(buf, -np.inf)
        buf[:len(rest)] = rest
        lo = upto

    first = next(k for k, y in enumerate(grid.ys) if y >= resume_y) if resume_y else 0
    # tiles above the resume row still reach into unfinished rows
    for k in range(first):
        if grid.ys[k] + th > resume_y:
            apply_row(k, resume_y)
    for k in range(first, grid.rows):
        y = grid.ys[k]
        if buf is not None and y > lo:
            flush(y)
            since_checkpoint += 1
            if checkpoints is not None and since_checkpoint >= checkpoint_every:
                result.flush()
                checkpoints.commit(f"rows-{lo}", "")
                since_checkpoint = 0
        apply_row(k, lo)
        crash_point("merge-logit-row")
    flush(height)
    result.flush()
    return SegmentationMap(result, class_count, palette)


def merge_crop(grid, source, out=None, geo=None, checkpoints=None,
               checkpoint_every=1, workers=None, class_count=None, palette=None):
    """Crop-merge: stitch the central region of each tile by block copy."""
    _check_complete(grid, source)
    width, height = grid.source_dims
    col_spans = crop_bounds(grid.xs, grid.tile_w, width)
    row_spans = crop_bounds(grid.ys, grid.tile_h, height)
    resume = checkpoints is not None and any(
        c.startswith("band-") for c in checkpoints.ids())
    result = _output(grid, out, geo, resume=resume)

    def copy_tile(index):
        row, col = divmod(index, grid.cols)
        ys, ye = row_spans[row]
        xs, xe = col_spans[col]
        x, y = grid.xs[col], grid.ys[row]
        data = _tile_logits(source, grid, index)
        block = data[ys - y:ye - y, xs - x:xe - x]
        result.data[ys:ye, xs:xe, 0] = np.argmax(block, axis=2).astype(np.uint8)
        return data.shape[2]

    n_workers = worker_count(workers)
    pool = ThreadPoolExecutor(n_workers) if n_workers > 1 else None
    pending_rows = []
    try:
        for row in range(grid.rows):
            if checkpoints is not None and checkpoints.done(f"band-{row}"):
                continue
            indices = grid.row_indices(row)
            counts = list(pool.map(copy_tile, indices)) if pool else \
                [copy_tile(i) for i in indices]
            class_count = class_count or counts[0]
            crash_point("merge-crop-row")
            pending_rows.append(row)
            if checkpoints is not None and (len(pending_rows) >= checkpoint_every
                                            or row == grid.rows - 1):
                result.flush()
                for r in pending_rows:
                    checkpoints.commit(f"band-{r}", "")
                pending_rows = []
    finally:
        if pool:
            pool.shutdown()
    result.flush()
    return SegmentationMap(result, class_count, palette)


STRATEGIES = {"logit": merge_logits, "crop": merge_crop}


def merge(grid, source, strategy="crop", **kwargs):
    try:
        fn = STRATEGIES[strategy]
    except KeyError:
        raise ConfigurationError(f"unknown merge strategy {strategy!r}") from None
    return fn(grid, source, **kwargs)


def merge_dataset(dataset, source, strategy="crop", out=None, checkpoints=None):
    return merge(dataset.grid, source, strategy, out=out, geo=dataset.geo,
                 checkpoints=checkpoints, class_count=dataset.class_count,
                 palette=dataset.palette)


def write_georeferenced(seg, out):
    """Write a merged map with the source geotransform and CRS id intact."""
    if seg.geo is None:
        raise ConfigurationError("segmentation map has no geotransform")
    path = save_raster(seg.raster, out)
    return path


def segmentation_digest(seg):
    return payload_digest(np.ascontiguousarray(seg.array).tobytes())
