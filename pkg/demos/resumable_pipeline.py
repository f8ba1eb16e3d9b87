"""
A pipeline that survives being killed
=====================================

The run is interrupted at an arbitrary crash point through the
GEOSEG_CRASH_AT variable, restarted, and compared byte for byte with an
uninterrupted run.
"""

import hashlib
import json
import os
import subprocess
import sys
import tempfile
from pathlib import Path

from geoseg.raster import GeoTransform, save_raster
from geoseg.synthetic import synthetic_scene

work = Path(tempfile.mkdtemp(prefix="geoseg-demo-"))
image, labels = synthetic_scene(1024, 1024, 3, seed=2,
                                geo=GeoTransform(0.0, 0.0, 0.08, -0.08, crs_id="EPSG:32651"))
save_raster(image, work / "image.bin")
save_raster(labels, work / "labels.bin")

config = {
    "image": "image.bin", "labels": "labels.bin", "class_count": 3,
    "tasks": ["split", "split-set", "weights", "predict-check", "merge", "score"],
    "split": {"tile": 128, "stride": 0.5},
    "split-set": {"fractions": [0.7, 0.1, 0.2], "gap": 1},
    "merge": {"strategy": "crop"},
    "score": {"mode": "merged", "split": "test"},
}
(work / "pipeline.json").write_text(json.dumps(config, indent=2))


def run(workspace, crash_at=None):
    env = dict(os.environ, GEOSEG_WORKERS="1")
    if crash_at:
        env["GEOSEG_CRASH_AT"] = str(crash_at)
    cmd = [sys.executable, "-m", "geoseg", "run", "--workspace", str(workspace),
           "--config", str(work / "pipeline.json")]
    return subprocess.run(cmd, env=env, capture_output=True, text=True)


def digest(workspace):
    h = hashlib.sha256()
    for p in sorted(Path(workspace).rglob("*")):
        if p.is_file() and p.name not in ("journal.log", ".lock"):
            h.update(p.read_bytes())
    return h.hexdigest()


clean = run(work / "clean")
print("clean run exit code", clean.returncode, clean.stderr)

killed = run(work / "killed", crash_at=40)
print("first attempt exit code", killed.returncode)
print(subprocess.run([sys.executable, "-m", "geoseg", "status", "--workspace",
                      str(work / "killed")], capture_output=True, text=True).stdout)
resumed = run(work / "killed")
print("resumed run exit code", resumed.returncode, resumed.stderr)
print("identical artifacts:", digest(work / "clean") == digest(work / "killed"))
print(json.loads((work / "clean" / "scores.json").read_text()))
