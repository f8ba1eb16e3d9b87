"""
Oversampling weights and spatially separated splits
===================================================

Tiles holding rare classes get larger weights, and the train, validation
and test sets are carved as horizontal bands with a discarded gap row so
overlapping windows do not leak between them.
"""

import tempfile
from pathlib import Path

import numpy as np

from geoseg.sampling import (SplitSpec, dataset_histograms, sample_weights, split_horizontal,
                             split_is_separated, weighted_draws)
from geoseg.synthetic import synthetic_scene
from geoseg.tiling import Dataset, plan_grid, split_raster

work = Path(tempfile.mkdtemp(prefix="geoseg-demo-"))
image, labels = synthetic_scene(2048, 2048, class_count=4, seed=3)

# make class 3 rare
lab = labels.data[:, :, 0]
lab[lab == 3] = 0
lab[1200:1300, 300:420] = 3

grid = plan_grid(2048, 2048, 256, 256, 0.5)
split_raster(image, labels, grid, work / "ds", class_count=4)
ds = Dataset(work / "ds")

split = split_horizontal(ds.grid, SplitSpec("horizontal", (0.7, 0.1, 0.2), gap_rows=1, seed=0))
print({k: len(v) for k, v in split.items()})
print("windows of different sets disjoint:", split_is_separated(ds.grid, split))

train = sorted(split["train"])
per_tile, totals = dataset_histograms(ds, train)
weights = np.array(sample_weights(per_tile, totals))
print("class totals in train:", totals.tolist())

rare = np.array([h[3] > 0 for h in per_tile])
print(f"mean weight, tiles with class 3: {weights[rare].mean():.3f}, "
      f"without: {weights[~rare].mean():.3f}")

share = np.array([h[3] / h.sum() for h in per_tile])
draws = weighted_draws(weights, 100_000, seed=0)
print(f"class-3 pixel share: uniform {share.mean():.5f}, weighted {share[draws].mean():.5f}")
