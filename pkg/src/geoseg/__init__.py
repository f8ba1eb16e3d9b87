"""Tiling, merging, scoring and survey planning for segmentation of large
georeferenced orthomosaics."""

from .errors import GeosegError
from .raster import GeoTransform, Raster, Window, open_raster, save_raster
from .tiling import Dataset, TileGrid, data_gain, plan_grid, split_raster

__version__ = "0.1.0"

__all__ = [
    "Dataset", "GeoTransform", "GeosegError", "Raster", "TileGrid", "Window",
    "data_gain", "open_raster", "plan_grid", "save_raster", "split_raster",
]
