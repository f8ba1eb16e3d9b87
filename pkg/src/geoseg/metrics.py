"""
IoU and Dice from pixel confusion counts.

Two scoring modes are supported: *tile-summed* adds the TP/FP/FN counts of
every test tile before taking ratios, *merged* scores a stitched map against
the source label raster.  Counts are int64 (a 0.6 gigapixel mosaic overflows
32 bits).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, IncompletePredictionError, ShapeError

TILE_SUMMED = "tile-summed"
MERGED = "merged"


@dataclass
class ConfusionAccumulator:
    class_count: int
    tp: np.ndarray = field(default=None)
    fp: np.ndarray = field(default=None)
    fn: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("tp", "fp", "fn"):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(self.class_count, np.int64))

    def __add__(self, other):
        if other.class_count != self.class_count:
            raise ShapeError("cannot add accumulators with different class counts")
        return ConfusionAccumulator(self.class_count, self.tp + other.tp,
                                    self.fp + other.fp, self.fn + other.fn)

    def __eq__(self, other):
        return (isinstance(other, ConfusionAccumulator)
                and self.class_count == other.class_count
                and np.array_equal(self.tp, other.tp)
                and np.array_equal(self.fp, other.fp)
                and np.array_equal(self.fn, other.fn))

    def add(self, pred, gt, valid=None):
        """Count one prediction/ground-truth pair in place and return self."""
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.ndim == 3:
            pred = pred[:, :, 0]
        if gt.ndim == 3:
            gt = gt[:, :, 0]
        if pred.shape != gt.shape:
            raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
        if valid is not None:
            pred, gt = pred[valid], gt[valid]
        c = self.class_count
        if pred.size and (int(pred.max()) >= c or int(gt.max()) >= c):
            raise DataError(f"class ids must be < {c}")
        cm = np.bincount(gt.ravel().astype(np.int64) * c + pred.ravel(),
                         minlength=c * c).reshape(c, c)
        diag = np.diagonal(cm)
        self.tp += diag
        self.fp += cm.sum(axis=0) - diag
        self.fn += cm.sum(axis=1) - diag
        return self


def accumulate(pred, gt, acc):
    return acc.add(pred, gt)


@dataclass
class ScoreReport:
    iou: list
    dice: list
    miou: float
    mdice: float
    mode: str
    present: list
    class_names: list | None = None

    def to_dict(self, digits=4):
        def r(v):
            return None if v is None else round(float(v), digits)
        names = self.class_names or [str(i) for i in range(len(self.iou))]
        return {
            "mode": self.mode,
            "per_class": {n: {"iou": r(i), "dice": r(d)}
                          for n, i, d in zip(names, self.iou, self.dice)},
            "mIoU": r(self.miou),
            "mDice": r(self.mdice),
        }


def finalize(acc, mode=TILE_SUMMED, exclude=(), class_names=None):
    """Ratios per class; classes with an empty denominator are reported as
    ``None`` and, like classes in ``exclude``, left out of the means."""
    iou, dice, present = [], [], []
    for c in range(acc.class_count):
        tp, fp, fn = int(acc.tp[c]), int(acc.fp[c]), int(acc.fn[c])
        denom = tp + fp + fn
        if denom == 0:
            iou.append(None)
            dice.append(None)
            continue
        iou.append(tp / denom)
        dice.append(2 * tp / (2 * tp + fp + fn))
        if c not in exclude:
            present.append(c)
    miou = float(np.mean([iou[c] for c in present])) if present else float("nan")
    mdice = float(np.mean([dice[c] for c in present])) if present else float("nan")
    return ScoreReport(iou, dice, miou, mdice, mode, present, class_names)


def score_tiles(indices, predictor, labels, class_count, exclude=()):
    """Sum confusion counts over tiles, then take ratios.

    ``predictor[i]`` yields logits and ``labels(i)`` (or ``labels.label(i)``)
    the ground-truth tile.
    """
    get_label = labels.label if hasattr(labels, "label") else labels
    missing = predictor.missing(indices)
    if missing:
        raise IncompletePredictionError(missing)
    acc = ConfusionAccumulator(class_count)
    for i in indices:
        acc.add(np.argmax(predictor[i], axis=2), get_label(i))
    return finalize(acc, TILE_SUMMED, exclude)


def coverage_mask(grid, indices):
    """Boolean map of pixels covered by the windows of ``indices``."""
    width, height = grid.source_dims
    mask = np.zeros((height, width), bool)
    for i in indices:
        rows, cols = grid.window(i).slices
        mask[rows, cols] = True
    return mask


def score_merged(seg, gt, class_count=None, exclude=(), region=None, band_rows=1024):
    """Score a merged map against the label raster, optionally within ``region``."""
    pred = seg.raster if hasattr(seg, "raster") else seg
    class_count = class_count or getattr(seg, "class_count", None)
    if class_count is None:
        raise ValueError("class_count required")
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise ShapeError(f"map {pred.width}x{pred.height} vs labels {gt.width}x{gt.height}")
    acc = ConfusionAccumulator(class_count)
    for y0 in range(0, pred.height, band_rows):
        y1 = min(pred.height, y0 + band_rows)
        valid = region[y0:y1] if region is not None else None
        acc.add(pred.read_rows(y0, y1), gt.read_rows(y0, y1), valid)
    return finalize(acc, MERGED, exclude)
