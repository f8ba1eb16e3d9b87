"""Synthetic orthomosaics with blob-shaped class regions, for tests and demos."""

import cv2
import numpy as np

from .raster import GeoTransform, Raster

# one colour per class; cycles for larger class counts
_COLOURS = np.array([[70, 110, 40], [150, 140, 110], [40, 160, 60], [90, 90, 95],
                     [200, 180, 60], [30, 60, 140]], np.uint8)


def label_field(width, height, class_count, seed=0, feature=64):
    """Class-id map made of smooth random blobs roughly ``feature`` px wide."""
    rng = np.random.default_rng(seed)
    gw, gh = max(2, width // feature + 2), max(2, height // feature + 2)
    coarse = rng.random((gh, gw, class_count)).astype(np.float32)
    fine = np.empty((height, width), np.uint8)
    band = 1024
    # upscale in bands to keep peak memory at a few hundred MB for 8192^2
    ys = np.linspace(0, gh - 1, height, dtype=np.float32)
    xs = np.linspace(0, gw - 1, width, dtype=np.float32)
    map_x = np.broadcast_to(xs, (min(band, height), width))
    for y0 in range(0, height, band):
        y1 = min(height, y0 + band)
        mx = np.ascontiguousarray(map_x[:y1 - y0])
        my = np.ascontiguousarray(np.broadcast_to(ys[y0:y1, None], (y1 - y0, width)))
        planes = [cv2.remap(coarse[:, :, c], mx, my, cv2.INTER_LINEAR)
                  for c in range(class_count)]
        fine[y0:y1] = np.argmax(np.stack(planes, axis=2), axis=2)
    return fine


def synthetic_scene(width, height=None, class_count=3, seed=0, geo=None, feature=64):
    """Return ``(image, labels)`` in-memory rasters of the given size."""
    height = width if height is None else height
    labels = label_field(width, height, class_count, seed, feature)
    rng = np.random.default_rng(seed + 1)
    image = _COLOURS[labels % len(_COLOURS)]
    image = image + rng.integers(-12, 13, size=(height, width, 1), dtype=np.int16)
    image = np.clip(image, 0, 255).astype(np.uint8)
    if geo is None:
        geo = GeoTransform(500000.0, 1800000.0, 0.08, -0.08, 0.0, 0.0, "EPSG:32651")
    return Raster(image, geo=geo), Raster(labels[:, :, None], geo=geo)
