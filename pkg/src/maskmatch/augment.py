"""Stochastic augmentation recipes for contrastive pretraining.

The default recipe follows the usual contrastive-view family: random
resized crop, horizontal flip, color jitter, random grayscale and
Gaussian blur. Parameters live in the recipe so configs can tone the
pipeline down for tiny desk-scale corpora.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import as_rgb, resize_image


def random_resized_crop(image, rng, out_size, scale=(0.4, 1.0), ratio=(0.75, 1.333)):
    rgb = as_rgb(image)
    h, w = rgb.shape[:2]
    area = h * w
    for _ in range(10):
        target = rng.uniform(*scale) * area
        aspect = np.exp(rng.uniform(np.log(ratio[0]), np.log(ratio[1])))
        cw = int(round(np.sqrt(target * aspect)))
        ch = int(round(np.sqrt(target / aspect)))
        if 0 < cw <= w and 0 < ch <= h:
            x0 = int(rng.integers(0, w - cw + 1))
            y0 = int(rng.integers(0, h - ch + 1))
            crop = rgb[y0: y0 + ch, x0: x0 + cw]
            return resize_image(crop, out_size)
    return resize_image(rgb, out_size)


def color_jitter(image, rng, strength=0.4):
    x = as_rgb(image).astype(np.float64)
    # brightness
    x = x * rng.uniform(1 - strength, 1 + strength)
    # contrast around the mean
    mean = x.mean()
    x = mean + (x - mean) * rng.uniform(1 - strength, 1 + strength)
    # saturation toward grayscale
    gray = x @ np.array([0.299, 0.587, 0.114])
    f = rng.uniform(1 - strength, 1 + strength)
    x = gray[..., None] + (x - gray[..., None]) * f
    return np.clip(x, 0, 255).astype(np.uint8)


def to_grayscale(image):
    x = as_rgb(image).astype(np.float64)
    gray = x @ np.array([0.299, 0.587, 0.114])
    return np.clip(np.stack([gray] * 3, axis=-1), 0, 255).astype(np.uint8)


def gaussian_blur(image, sigma):
    x = as_rgb(image).astype(np.float64)
    out = ndimage.gaussian_filter(x, sigma=(sigma, sigma, 0))
    return np.clip(out, 0, 255).astype(np.uint8)


@dataclass
class AugmentationRecipe:
    name: str
    crop_scale: tuple = (0.4, 1.0)
    flip_probability: float = 0.5
    jitter_probability: float = 0.8
    jitter_strength: float = 0.4
    grayscale_probability: float = 0.2
    blur_probability: float = 0.5
    blur_sigma: tuple = (0.1, 2.0)

    def apply(self, image, rng, out_size: int) -> np.ndarray:
        view = random_resized_crop(image, rng, out_size, scale=self.crop_scale)
        if rng.random() < self.flip_probability:
            view = view[:, ::-1].copy()
        if rng.random() < self.jitter_probability:
            view = color_jitter(view, rng, self.jitter_strength)
        if rng.random() < self.grayscale_probability:
            view = to_grayscale(view)
        if rng.random() < self.blur_probability:
            view = gaussian_blur(view, rng.uniform(*self.blur_sigma))
        return view


RECIPES = {
    "contrastive_default": AugmentationRecipe("contrastive_default"),
    "light": AugmentationRecipe(
        "light",
        crop_scale=(0.7, 1.0),
        jitter_strength=0.2,
        grayscale_probability=0.05,
        blur_probability=0.2,
    ),
    "none": AugmentationRecipe(
        "none",
        crop_scale=(1.0, 1.0),
        flip_probability=0.0,
        jitter_probability=0.0,
        grayscale_probability=0.0,
        blur_probability=0.0,
    ),
}


def get_recipe(name: str) -> AugmentationRecipe:
    if name not in RECIPES:
        raise KeyError(f"unknown augmentation recipe {name!r}; choose from {sorted(RECIPES)}")
    return RECIPES[name]
