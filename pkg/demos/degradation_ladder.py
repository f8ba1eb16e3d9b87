"""
Simulating coarser ground sampling distances
============================================

The three degradation methods applied to one dataset, and the output sizes
of the 0.08 m/px survey at every platform rung.
"""

import tempfile
from pathlib import Path

from geoseg.degrade import (DegradeSpec, degrade_dataset, degrade_mosaic_c, ladder_dimensions,
                            ladder_presets)
from geoseg.raster import GeoTransform
from geoseg.synthetic import synthetic_scene
from geoseg.tiling import Dataset, plan_grid, split_raster

for gsd, (w, h) in ladder_dimensions(23662, 25228, 0.08).items():
    platform = {r.gsd: r.platform for r in ladder_presets()}[gsd]
    print(f"{gsd:>5g} m/px  {w:>6d} x {h:<6d} {platform}")

work = Path(tempfile.mkdtemp(prefix="geoseg-demo-"))
geo = GeoTransform(0.0, 0.0, 0.08, -0.08)
image, labels = synthetic_scene(2048, 2048, 3, seed=4, geo=geo)
split_raster(image, labels, plan_grid(2048, 2048, 512, 512, 0.5), work / "ds", class_count=3)
ds = Dataset(work / "ds")

# A: smaller tiles, labels resampled by nearest neighbour
degrade_dataset(ds, DegradeSpec("A", 0.08, 0.16), work / "a")
print("method A tile dims", Dataset(work / "a").tile_dims())

# B: same tile size, pixelated images, labels untouched
degrade_dataset(ds, DegradeSpec("B", 0.08, 0.32), work / "b")
print("method B tile dims", Dataset(work / "b").tile_dims())

# C: the whole mosaic shrinks, so the tile count drops by about r^2
for target in (0.16, 0.32):
    recs = degrade_mosaic_c(image, labels, DegradeSpec("C", 0.08, target), 512, 512, 0.5,
                            work / f"c{target}", class_count=3)
    print(f"method C at {target} m/px: {len(recs)} tiles (was {len(ds)})")
