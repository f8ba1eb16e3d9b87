import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoseg.errors import ConfigurationError, ShapeError
from geoseg.journal import Journal, TaskCheckpoints
from geoseg.raster import Raster
from geoseg.tiling import (Dataset, data_gain, decode_label_tile, plan_grid, read_manifest,
                           split_raster)


def test_grid_1024_half_stride():
    g = plan_grid(1024, 1024, 512, 512, 0.5)
    assert g.xs == (0, 256, 512) and g.ys == (0, 256, 512)
    assert len(g) == 9


def test_grid_exact_tessellation():
    assert len(plan_grid(1024, 1024, 512, 512, 1.0)) == 4


def test_grid_clamps_last_origin():
    g = plan_grid(1025, 1024, 512, 512, 0.5)
    assert g.xs == (0, 256, 512, 513)
    assert (g.cols, g.rows, len(g)) == (4, 3, 12)


def test_grid_tile_too_large():
    with pytest.raises(ConfigurationError):
        plan_grid(500, 1024, 512)


@pytest.mark.parametrize("s", [0, -0.5, 1.5])
def test_grid_bad_stride(s):
    with pytest.raises(ConfigurationError):
        plan_grid(1024, 1024, 512, 512, s)


def test_decimal_stride_uses_exact_floor():
    # 100 * 0.29 is 28.999999999999996 in binary floating point
    g = plan_grid(300, 100, 100, 100, 0.29)
    assert g.xs[1] == 29


def test_data_gain():
    assert data_gain(0.5) == 4.0
    assert data_gain(1.0) == 1.0
    assert len(plan_grid(1024, 1024, 512, 512, 0.5)) / len(plan_grid(1024, 1024, 512, 512, 1)) \
        == 2.25
    big = len(plan_grid(512 * 64, 512 * 64, 512, 512, 0.5)) / \
        len(plan_grid(512 * 64, 512 * 64, 512, 512, 1.0))
    assert 3.8 < big < 4.0


@given(st.integers(1, 300), st.integers(1, 300), st.integers(1, 64), st.integers(1, 64),
       st.sampled_from([0.25, 0.5, 0.75, 1.0, 0.3]))
@settings(max_examples=200, deadline=None)
def test_grid_properties(w, h, tw, th, s):
    from fractions import Fraction
    zero_step = min(tw, th) * Fraction(str(s)) < 1
    if tw > w or th > h or zero_step:
        with pytest.raises(ConfigurationError):
            plan_grid(w, h, tw, th, s)
        return
    g = plan_grid(w, h, tw, th, s)
    cover = np.zeros((h, w), np.int32)
    seen = []
    for win in g.origins:
        assert (win.w, win.h) == (tw, th)
        assert win.x + tw <= w and win.y + th <= h
        cover[win.y:win.y + th, win.x:win.x + tw] += 1
        seen.append((win.y, win.x))
    assert cover.min() >= 1
    assert seen == sorted(seen) and len(set(seen)) == len(seen)


def test_split_writes_tiles_and_manifest(dataset, scene, geo):
    image, labels = scene
    root = dataset.root
    assert sorted(p.name for p in (root / "images").iterdir()) == sorted(f"{i}.jpg" for i in range(9))
    assert len(list((root / "labels").iterdir())) == 9
    records = read_manifest(root / "manifest.jsonl")
    assert [r.index for r in records] == list(range(9))
    grid_doc = json.loads((root / "grid.json").read_text())
    assert grid_doc["tile_w"] == 512 and grid_doc["stride"] == 0.5
    assert grid_doc["source_dims"] == [1024, 1024]
    for r in records:
        assert r.geo.pixel_to_map(0, 0) == geo.pixel_to_map(r.window.x, r.window.y)
        # labels survive exactly, images are JPEG
        assert np.array_equal(dataset.label(r.index), labels.read_window(r.window)[:, :, 0])
        img = dataset.image(r.index).astype(int)
        assert np.abs(img - image.read_window(r.window)).mean() < 8


def test_jpeg_quality(dataset):
    data = (dataset.root / "images" / "0.jpg").read_bytes()
    assert data[:2] == b"\xff\xd8"


def test_split_without_labels(tmp_path, scene):
    image, _ = scene
    records = split_raster(image, None, plan_grid(1024, 1024, 512), tmp_path / "d")
    assert all(r.label_path == "" for r in records)
    assert not (tmp_path / "d" / "labels").exists()
    assert not Dataset(tmp_path / "d").has_labels


def test_split_dimension_mismatch(tmp_path, scene):
    image, _ = scene
    bad = Raster(np.zeros((1000, 1024), np.uint8))
    with pytest.raises(ShapeError):
        split_raster(image, bad, plan_grid(1024, 1024, 512), tmp_path / "d")


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_split_independent_of_workers(tmp_path, scene):
    image, labels = scene
    grid = plan_grid(1024, 1024, 256, 256, 0.5)
    split_raster(image, labels, grid, tmp_path / "one", workers=1)
    split_raster(image, labels, grid, tmp_path / "two", workers=2)
    assert _tree(tmp_path / "one") == _tree(tmp_path / "two")


def test_split_resume_skips_committed_bands(tmp_path, scene):
    image, labels = scene
    grid = plan_grid(1024, 1024, 512, 512, 0.5)
    split_raster(image, labels, grid, tmp_path / "ref")

    journal = Journal(tmp_path / "j.log")
    cp = TaskCheckpoints(journal, "split")
    split_raster(image, labels, grid, tmp_path / "run", checkpoints=cp)
    # pretend the process died after band 0: drop the later bands' output
    lines = (tmp_path / "j.log").read_text().splitlines(keepends=True)
    (tmp_path / "j.log").write_text(lines[0])
    band0 = tmp_path / "run" / "images" / "0.jpg"
    stamp = band0.stat().st_mtime_ns
    for i in range(3, 9):
        (tmp_path / "run" / "images" / f"{i}.jpg").unlink()
    (tmp_path / "run" / "manifest.jsonl").unlink()

    cp = TaskCheckpoints(Journal(tmp_path / "j.log"), "split")
    assert cp.ids() == ["band-0"]
    split_raster(image, labels, grid, tmp_path / "run", checkpoints=cp)
    assert band0.stat().st_mtime_ns == stamp
    assert _tree(tmp_path / "ref") == _tree(tmp_path / "run")


def test_label_tiles_are_single_band_png(dataset):
    arr = decode_label_tile(dataset.root / "labels" / "4.png")
    assert arr.dtype == np.uint8 and arr.ndim == 2
    assert (dataset.root / "labels" / "4.png").read_bytes()[:4] == b"\x89PNG"
