"""Class statistics, oversampling weights and spatially contiguous splits."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError, DataError, InputError, ShapeError

log = logging.getLogger(__name__)

SETS = ("train", "val", "test")


def tile_histogram(label, class_count, name=""):
    label = np.asarray(label)
    if label.size and int(label.max()) >= class_count:
        bad = sorted(set(np.unique(label[label >= class_count]).tolist()))
        raise DataError(f"tile {name}: class ids {bad} >= class count {class_count}")
    return np.bincount(label.ravel(), minlength=class_count).astype(np.int64)


def class_histograms(label_tiles, class_count, names=None):
    """Per-tile class pixel counts and their element-wise total.

    ``label_tiles`` is an iterable of 2-D class-id arrays; ``names`` (same
    length) is used in error messages.
    """
    per_tile = []
    for n, tile in enumerate(label_tiles):
        name = names[n] if names is not None else str(n)
        per_tile.append(tile_histogram(tile, class_count, name))
    total = np.sum(per_tile, axis=0) if per_tile else np.zeros(class_count, np.int64)
    return per_tile, total


def sample_weights(per_tile, totals, exact=False):
    """Oversampling weight of each tile: sum over classes of its share of that class.

    ``weight = sum_i count(i) / total(i)`` over classes with a non-zero total.
    With ``exact=True`` the weights are :class:`fractions.Fraction` values.
    """
    if len(per_tile) == 0:
        return []
    counts = np.asarray(per_tile, dtype=np.int64)
    totals = np.asarray(totals, dtype=np.int64)
    present = totals > 0
    if exact:
        inv = np.array([Fraction(1, int(t)) for t in totals[present]], dtype=object)
        return list((counts[:, present].astype(object) * inv).sum(axis=1))
    return (counts[:, present] / totals[present]).sum(axis=1).tolist()


def dataset_histograms(dataset, indices=None, class_count=None):
    class_count = class_count or dataset.class_count
    if class_count is None:
        raise ConfigurationError("class count unknown; pass class_count")
    indices = range(len(dataset.records)) if indices is None else indices
    names = [dataset.records[i].label_path for i in indices]
    return class_histograms((dataset.label(i) for i in indices), class_count, names)


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitSpec:
    method: str = "horizontal"
    fractions: tuple = (0.7, 0.1, 0.2)
    gap_rows: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("horizontal", "manual"):
            raise ConfigurationError(f"unknown split method {self.method!r}")
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise ConfigurationError("fractions must be three non-negative numbers")
        if abs(sum(self.fractions) - 1) > 1e-9:
            raise ConfigurationError(f"fractions {self.fractions} do not sum to 1")
        if self.gap_rows < 0:
            raise ConfigurationError("gap_rows must be >= 0")

    def to_dict(self):
        return {"method": self.method, "fractions": list(self.fractions),
                "gap_rows": self.gap_rows, "seed": self.seed}


def _round_half_up(x):
    return int(x + Fraction(1, 2)) if x >= 0 else -int(-x + Fraction(1, 2))


def row_allocation(n_rows, fractions, gap_rows):
    """Number of grid rows per set, after reserving the gaps between used sets."""
    fr = [Fraction(str(f)) if isinstance(f, float) else Fraction(f) for f in fractions]
    used = [f > 0 for f in fr]
    usable = n_rows - gap_rows * (sum(used) - 1)
    if usable < sum(used):
        raise ConfigurationError(
            f"{n_rows} grid rows cannot hold {sum(used)} sets with gap {gap_rows}")
    counts = [_round_half_up(f * usable) for f in fr[:2]]
    counts.append(usable - sum(counts))
    if any(u and c <= 0 for u, c in zip(used, counts)) or counts[2] < 0:
        raise ConfigurationError(
            f"fractions {fractions} infeasible for {usable} usable grid rows")
    return counts


def split_horizontal(grid, spec):
    """Contiguous top-to-bottom bands of grid rows: train, gap, val, gap, test.

    Only the train list is shuffled (seeded).  Windows of different sets do not
    intersect only when ``gap_rows >= ceil(1 / stride) - 1`` and the last grid
    row is not clamped into the previous one; a warning is logged otherwise.
    """
    counts = row_allocation(grid.rows, spec.fractions, spec.gap_rows)
    result = {}
    row = 0
    for name, count in zip(SETS, counts):
        if count == 0:
            result[name] = []
            continue
        if row > 0:
            row += spec.gap_rows
        result[name] = [i for r in range(row, row + count) for i in grid.row_indices(r)]
        row += count
    result["train"] = shuffled(result["train"], spec.seed)
    if spec.gap_rows > 0 and not split_is_separated(grid, result):
        log.warning("gap of %d rows leaves overlapping windows between sets",
                    spec.gap_rows)
    return result


def shuffled(indices, seed):
    rng = np.random.default_rng(seed)
    return [indices[i] for i in rng.permutation(len(indices))]


def split_is_separated(grid, split):
    train = [grid.window(i) for i in split["train"]]
    others = [grid.window(i) for i in split["val"] + split["test"]]
    # windows of a set span whole rows; compare row extents only
    if not train or not others:
        return True
    train_rows = {(w.y, w.h) for w in train}
    other_rows = {(w.y, w.h) for w in others}
    return not any(a[0] < b[0] + b[1] and b[0] < a[0] + a[1]
                   for a in train_rows for b in other_rows)


def split_manual(grid, regions, seed=0, unassigned=255):
    """Assign tiles to the set owning a strict majority of their pixels.

    ``regions`` is either a single-band raster of set ids (0 train, 1 val,
    2 test, anything else unassigned) or a sequence of three boolean mask
    rasters.  Tiles without a strict majority are discarded.
    """
    if isinstance(regions, (list, tuple)):
        if len(regions) != 3:
            raise InputError("manual split needs exactly three masks")
        rasters = list(regions)
    else:
        rasters = [regions]
    for r in rasters:
        if (r.width, r.height) != tuple(grid.source_dims):
            raise ShapeError(f"region raster {r.width}x{r.height} does not match "
                             f"source {grid.source_dims}")
    result = {name: [] for name in SETS}
    area = grid.tile_w * grid.tile_h
    for index in range(len(grid)):
        win = grid.window(index)
        if len(rasters) == 1:
            block = rasters[0].read_window(win)[:, :, 0]
            votes = [int(np.count_nonzero(block == k)) for k in range(3)]
        else:
            votes = [int(np.count_nonzero(r.read_window(win)[:, :, 0])) for r in rasters]
        best = int(np.argmax(votes))
        if 2 * votes[best] > area:
            result[SETS[best]].append(index)
    result["train"] = shuffled(result["train"], seed)
    return result


def split_document(split, spec):
    doc = {name: [int(i) for i in split[name]] for name in SETS}
    doc["seed"] = spec.seed
    doc["spec"] = spec.to_dict()
    return doc


def weights_document(indices, weights):
    return [{"index": int(i), "weight": float(w)} for i, w in zip(indices, weights)]


def weighted_draws(weights, n, seed=0):
    """Draw ``n`` tile positions with probability proportional to ``weights``."""
    w = np.asarray(weights, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return rng.choice(len(w), size=n, p=w / w.sum())
