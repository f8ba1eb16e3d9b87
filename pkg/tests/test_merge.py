import numpy as np
import pytest

from geoseg.errors import ConfigurationError, IncompletePredictionError
from geoseg.journal import Journal, TaskCheckpoints
from geoseg.merge import (crop_bounds, merge, merge_crop, merge_dataset, merge_logits,
                          write_georeferenced)
from geoseg.predict import ArraySource, OracleSource
from geoseg.raster import Raster, open_raster
from geoseg.tiling import plan_grid

from oracles import brute_force_logit_merge


def onehot(labels, grid, class_count):
    eye = np.eye(class_count, dtype=np.float32)
    return ArraySource({i: eye[labels[grid.window(i).slices]] for i in range(len(grid))})


def test_hand_eq():
    # two tiles cover the middle column; per-class maxima [0.9, 0.7] -> class 0
    grid = plan_grid(3, 2, 2, 2, 0.5)
    a = np.tile(np.array([0.9, 0.1], np.float32), (2, 2, 1))
    b = np.tile(np.array([0.2, 0.7], np.float32), (2, 2, 1))
    seg = merge_logits(grid, ArraySource({0: a, 1: b}))
    assert seg.array.tolist() == [[0, 0, 1], [0, 0, 1]]


def test_single_tile_is_pointwise_argmax(rng):
    grid = plan_grid(16, 16, 16, 16, 1.0)
    data = rng.random((16, 16, 4), dtype=np.float32)
    src = ArraySource({0: data})
    for fn in (merge_logits, merge_crop):
        assert np.array_equal(fn(grid, src).array, data.argmax(axis=2))


def test_ties_go_to_lowest_class():
    grid = plan_grid(4, 4, 4, 4, 1.0)
    src = ArraySource({0: np.full((4, 4, 3), 0.5, np.float32)})
    assert (merge_logits(grid, src).array == 0).all()


@pytest.mark.parametrize("stride", [0.25, 0.5, 0.75, 1.0])
@pytest.mark.parametrize("fn", [merge_logits, merge_crop])
def test_oracle_reconstructs_labels(rng, stride, fn):
    labels = rng.integers(0, 3, (203, 157), dtype=np.uint8)
    grid = plan_grid(157, 203, 40, 32, stride)
    assert np.array_equal(fn(grid, onehot(labels, grid, 3)).array, labels)


def test_crop_bounds_partition():
    grid = plan_grid(1025, 1024, 512, 512, 0.5)
    spans = crop_bounds(grid.xs, 512, 1025)
    assert spans == [(0, 384), (384, 640), (640, 768), (768, 1025)]
    spans = crop_bounds((0, 256, 512), 512, 1024)
    assert spans[1] == (384, 640)   # interior tile: central 256


@pytest.mark.parametrize("dims", [(1024, 1024, 512, 0.5), (1000, 777, 96, 0.3), (64, 64, 48, 0.5)])
def test_crop_regions_tessellate(dims):
    w, h, t, s = dims
    grid = plan_grid(w, h, t, t, s)
    hits = np.zeros((h, w), np.int32)
    cols = crop_bounds(grid.xs, t, w)
    rows = crop_bounds(grid.ys, t, h)
    for i in range(len(grid)):
        r, c = divmod(i, grid.cols)
        win = grid.window(i)
        (y0, y1), (x0, x1) = rows[r], cols[c]
        assert win.y <= y0 and y1 <= win.y + t and win.x <= x0 and x1 <= win.x + t
        hits[y0:y1, x0:x1] += 1
    assert (hits == 1).all()


def test_no_overlap_is_naive_stitch(rng):
    grid = plan_grid(64, 64, 32, 32, 1.0)
    tiles = {i: rng.random((32, 32, 3), dtype=np.float32) for i in range(4)}
    naive = np.zeros((64, 64), np.uint8)
    for i, t in tiles.items():
        naive[grid.window(i).slices] = t.argmax(axis=2)
    assert np.array_equal(merge_crop(grid, ArraySource(tiles)).array, naive)


def test_logit_merge_brute_force(rng):
    grid = plan_grid(40, 36, 24, 20, 0.5)
    tiles = {i: rng.random((20, 24, 3), dtype=np.float32) for i in range(len(grid))}
    windows = [grid.window(i).to_list() for i in range(len(grid))]
    expect = brute_force_logit_merge(40, 36, windows, [tiles[i] for i in range(len(grid))])
    assert merge_logits(grid, ArraySource(tiles)).array.tolist() == expect


def test_order_independence(rng):
    grid = plan_grid(64, 64, 32, 32, 0.5)
    tiles = {i: rng.random((32, 32, 2), dtype=np.float32) for i in range(len(grid))}
    reversed_tiles = dict(reversed(list(tiles.items())))
    for fn in (merge_logits, merge_crop):
        assert np.array_equal(fn(grid, ArraySource(tiles)).array,
                              fn(grid, ArraySource(reversed_tiles)).array)


def test_missing_tiles(rng):
    grid = plan_grid(64, 64, 32, 32, 0.5)
    src = ArraySource({0: np.zeros((32, 32, 2), np.float32)})
    for fn in (merge_logits, merge_crop):
        with pytest.raises(IncompletePredictionError) as err:
            fn(grid, src)
        assert err.value.missing == list(range(1, 9))


def test_unknown_strategy():
    with pytest.raises(ConfigurationError):
        merge(plan_grid(4, 4, 4), ArraySource({}), "average")


@pytest.mark.parametrize("strategy", ["logit", "crop"])
def test_dataset_merge_georeferenced(tmp_path, dataset, scene, geo, strategy):
    _, labels = scene
    seg = merge_dataset(dataset, OracleSource(dataset, 3), strategy, tmp_path / "m.bin")
    assert seg.geo == geo
    back = open_raster(tmp_path / "m.bin")
    assert (back.width, back.height) == (1024, 1024)
    assert back.geo.to_gdal() == geo.to_gdal() and back.geo.crs_id == geo.crs_id
    assert np.array_equal(back.data[:, :, 0], labels.data[:, :, 0])


def test_write_georeferenced_tiff(tmp_path, geo):
    seg = merge_crop(plan_grid(8, 8, 8), ArraySource({0: np.zeros((8, 8, 2), np.float32)}),
                     geo=geo)
    back = open_raster(write_georeferenced(seg, tmp_path / "m.tif"))
    assert back.geo == geo


def test_write_without_geo(tmp_path):
    seg = merge_crop(plan_grid(8, 8, 8), ArraySource({0: np.zeros((8, 8, 2), np.float32)}))
    with pytest.raises(ConfigurationError):
        write_georeferenced(seg, tmp_path / "x.bin")


@pytest.mark.parametrize("fn,every", [(merge_logits, 2), (merge_crop, 1)])
def test_resume_from_checkpoints(tmp_path, rng, fn, every):
    grid = plan_grid(120, 200, 32, 32, 0.5)
    tiles = {i: rng.random((32, 32, 3), dtype=np.float32) for i in range(len(grid))}
    ref = fn(grid, ArraySource(tiles)).array

    journal = Journal(tmp_path / "j.log")
    fn(grid, ArraySource(tiles), tmp_path / "m.bin",
       checkpoints=TaskCheckpoints(journal, "merge"), checkpoint_every=every)
    lines = (tmp_path / "j.log").read_text().splitlines(keepends=True)
    assert len(lines) >= 3
    # keep only the first checkpoints and scribble over the rest of the output
    (tmp_path / "j.log").write_text("".join(lines[:2]))
    out = Raster(np.memmap(tmp_path / "m.bin", np.uint8, "r+", shape=(200, 120, 1)))
    out.data[100:] = 255
    out.flush()
    del out
    fetched = []

    class Counting(ArraySource):
        def __getitem__(self, index):
            fetched.append(index)
            return super().__getitem__(index)

    seg = fn(grid, Counting(tiles), tmp_path / "m.bin",
             checkpoints=TaskCheckpoints(Journal(tmp_path / "j.log"), "merge"),
             checkpoint_every=every)
    assert np.array_equal(seg.array, ref)
    assert 0 not in fetched and len(fetched) < len(grid)
