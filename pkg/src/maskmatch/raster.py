"""Image loading, saving and the RGB array conventions used everywhere.

Images are numpy uint8 arrays of shape (H, W, 3), RGB channel order.
Grayscale sources are replicated to three channels on load so the rest of
the toolkit only ever sees one layout.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def as_rgb(array: np.ndarray) -> np.ndarray:
    """Coerce a 1- or 3-channel raster to uint8 (H, W, 3)."""
    arr = np.asarray(array)
    if arr.ndim == 2:
        arr = np.stack([arr, arr, arr], axis=-1)
    elif arr.ndim == 3 and arr.shape[2] == 1:
        arr = np.repeat(arr, 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W), (H, W, 1) or (H, W, 3) raster, got {arr.shape}")
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr), 0, 255).astype(np.uint8)
    return arr


def load_image(path) -> np.ndarray:
    """Read a PNG/JPEG file into a uint8 RGB array."""
    with Image.open(path) as im:
        return as_rgb(np.asarray(im.convert("RGB")))


def save_image(image: np.ndarray, path) -> None:
    Image.fromarray(as_rgb(image)).save(path)


def resize_image(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resize to a square (size, size) raster."""
    im = Image.fromarray(as_rgb(image))
    if im.size != (size, size):
        im = im.resize((size, size), Image.BILINEAR)
    return np.asarray(im)
