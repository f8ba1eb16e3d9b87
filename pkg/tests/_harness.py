"""Kill-and-resume driver shared by the pipeline tests and the acceptance suite."""

import hashlib
import json
import os
import subprocess
import sys
from pathlib import Path

from geoseg.raster import GeoTransform, save_raster
from geoseg.synthetic import synthetic_scene

CRASH_EXIT = 77


def write_scene(root, size=768, class_count=3, seed=5):
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    geo = GeoTransform(120.5, 16.4, 0.08, -0.08, crs_id="EPSG:32651")
    image, labels = synthetic_scene(size, size, class_count, seed=seed, geo=geo)
    save_raster(image, root / "image.bin")
    save_raster(labels, root / "labels.bin")
    return root / "image.bin", root / "labels.bin"


def write_config(root, image, labels, class_count=3, strategy="crop", tile=128, **extra):
    doc = {
        "image": str(image), "labels": str(labels), "class_count": class_count,
        "tasks": ["split", "split-set", "weights", "predict-check", "merge", "score"],
        "split": {"tile": tile, "stride": 0.5},
        "split-set": {"fractions": [0.6, 0.2, 0.2], "gap": 1, "seed": 3},
        "merge": {"strategy": strategy},
        "score": {"mode": "merged", "split": "all"},
    }
    doc.update(extra)
    path = Path(root) / "config.json"
    path.write_text(json.dumps(doc))
    return path


def run_cli(workspace, config, crash_at=None, report=None, tasks=()):
    env = dict(os.environ, GEOSEG_WORKERS="1")
    env.pop("GEOSEG_CRASH_AT", None)
    env.pop("GEOSEG_CRASH_REPORT", None)
    if crash_at is not None:
        env["GEOSEG_CRASH_AT"] = str(crash_at)
    if report is not None:
        env["GEOSEG_CRASH_REPORT"] = str(report)
    return subprocess.run(
        [sys.executable, "-m", "geoseg", "run", "--workspace", str(workspace),
         "--config", str(config)] + [a for t in tasks for a in ("--task", t)],
        env=env, capture_output=True, text=True)


def artifact_digests(workspace):
    """Digest of every output file, journal and lock excluded."""
    workspace = Path(workspace)
    out = {}
    for p in sorted(workspace.rglob("*")):
        if p.is_file() and p.name not in ("journal.log", ".lock"):
            out[str(p.relative_to(workspace))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


def count_crash_points(workspace, config, report, tasks=()):
    proc = run_cli(workspace, config, report=report, tasks=tasks)
    if proc.returncode != 0:
        raise RuntimeError(proc.stderr)
    return int(Path(report).read_text())


def phase_ranges(workspace, config, report):
    """Kill-site numbers (1-based, in a fresh full run) falling in split and in merge."""
    phases = [("split",), ("split-set", "weights", "predict-check"), ("merge",), ("score",)]
    counts = [count_crash_points(workspace, config, report, p) for p in phases]
    split = range(1, counts[0] + 1)
    start = counts[0] + counts[1]
    merge = range(start + 1, start + counts[2] + 1)
    return split, merge, sum(counts)


def kill_and_resume(workspace, config, crash_at):
    """Crash at the ``crash_at``-th kill site, then rerun to completion."""
    first = run_cli(workspace, config, crash_at=crash_at)
    if first.returncode not in (0, CRASH_EXIT):
        raise RuntimeError(first.stderr)
    proc = run_cli(workspace, config)
    if proc.returncode != 0:
        raise RuntimeError(proc.stderr)
    return first.returncode
