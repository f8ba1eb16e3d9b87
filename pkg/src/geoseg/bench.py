"""
Desk-scale profiling of splitting and merging.

For each square size the harness builds a synthetic scene, times the
operation (median of ``repeats`` runs) and fits the log-log slope of time
against pixel count.  A slope near 1 means the operation is linear in the
image size.
"""

from __future__ import annotations

import csv
import hashlib
import json
import shutil
import tempfile
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .merge import merge_crop, merge_logits
from .predict import OracleSource
from .synthetic import synthetic_scene
from .tiling import plan_grid, split_raster

OPS = ("split", "merge-crop", "merge-logit")


@dataclass
class BenchResult:
    op: str
    pixels: list
    times: list
    slope: float
    checksums: list

    def to_dict(self):
        return asdict(self)


def fit_slope(pixels, times):
    if len(pixels) < 4:
        raise ValueError("need at least 4 sizes to fit a scaling exponent")
    if any(t <= 0 for t in times):
        raise ValueError("times must be positive")
    slope, _ = np.polyfit(np.log(pixels), np.log(times), 1)
    return float(slope)


def _dir_digest(root):
    h = hashlib.sha256()
    for p in sorted(Path(root).rglob("*")):
        if p.is_file():
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()


def _label_reader(labels, grid):
    def read(index):
        return labels.read_window(grid.window(index))[:, :, 0]
    return read


def time_op(op, size, tile=512, stride=0.5, class_count=3, repeats=3, seed=0,
            workers=None):
    """Median wall time of one op at one size, plus a checksum of its output."""
    image, labels = synthetic_scene(size, size, class_count, seed)
    grid = plan_grid(size, size, tile, tile, stride)
    times, digest = [], None
    for _ in range(repeats):
        if op == "split":
            out = Path(tempfile.mkdtemp(prefix="geoseg-bench-"))
            try:
                t0 = time.perf_counter()
                split_raster(image, labels, grid, out, class_count=class_count,
                             workers=workers)
                times.append(time.perf_counter() - t0)
                digest = _dir_digest(out)
            finally:
                shutil.rmtree(out, ignore_errors=True)
        elif op in ("merge-crop", "merge-logit"):
            source = OracleSource(_label_reader(labels, grid), class_count)
            fn = merge_crop if op == "merge-crop" else merge_logits
            t0 = time.perf_counter()
            seg = fn(grid, source)
            times.append(time.perf_counter() - t0)
            digest = hashlib.sha256(np.ascontiguousarray(seg.array).tobytes()).hexdigest()
        else:
            raise ValueError(f"unknown bench op {op!r}; choose from {OPS}")
    return float(np.median(times)), digest


def run_bench(op, sizes, repeats=3, tile=512, stride=0.5, class_count=3, workers=None):
    pixels, times, sums = [], [], []
    for size in sizes:
        t, digest = time_op(op, size, tile, stride, class_count, repeats, workers=workers)
        pixels.append(size * size)
        times.append(t)
        sums.append(digest)
    return BenchResult(op, pixels, times, fit_slope(pixels, times), sums)


def write_bench(result, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "bench.json").write_text(json.dumps(result.to_dict(), indent=2) + "\n")
    with open(out_dir / "bench.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["op", "pixels", "seconds"])
        for p, t in zip(result.pixels, result.times):
            writer.writerow([result.op, p, f"{t:.6f}"])
    return out_dir / "bench.json"
