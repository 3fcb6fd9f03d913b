"""Backbone presets.

Each preset builds an embedding network ending in a pooled feature
vector. The default is a 50-layer bottleneck-residual network with a
2048-dim embedding; VGG-style and mobile-oriented presets mirror the
lightweight comparison architectures, and two miniature presets exist for
fast tests and toy experiments. All presets are resolution-agnostic above
their minimum size thanks to global average pooling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn import (
    BatchNorm2d,
    BottleneckBlock,
    Conv2d,
    Dense,
    DepthwiseConv2d,
    Flatten,
    GlobalAvgPool,
    MaxPool2d,
    ReLU,
    Sequential,
)


@dataclass
class BackboneSpec:
    architecture_name: str
    embedding_dim: int
    input_resolution: int
    initial_weights: str | None = None

    def __post_init__(self):
        if self.embedding_dim <= 0:
            raise ValueError("embedding_dim must be positive")


def _resnet50(rng, resolution):
    def stage(in_ch, mid, out_ch, blocks, stride):
        layers = [BottleneckBlock(in_ch, mid, out_ch, stride=stride, rng=rng)]
        layers += [BottleneckBlock(out_ch, mid, out_ch, rng=rng) for _ in range(blocks - 1)]
        return layers

    return Sequential(
        Conv2d(3, 64, 7, stride=2, padding=3, bias=False, rng=rng),
        BatchNorm2d(64),
        ReLU(),
        MaxPool2d(3, stride=2, padding=1),
        *stage(64, 64, 256, 3, 1),
        *stage(256, 128, 512, 4, 2),
        *stage(512, 256, 1024, 6, 2),
        *stage(1024, 512, 2048, 3, 2),
        GlobalAvgPool(),
    )


_VGG_CFGS = {
    "vgg16": (2, 2, 3, 3, 3),
    "vgg19": (2, 2, 4, 4, 4),
}


def _vgg(name, rng, resolution):
    counts = _VGG_CFGS[name]
    channels = (64, 128, 256, 512, 512)
    layers = []
    in_ch = 3
    for reps, ch in zip(counts, channels):
        for _ in range(reps):
            layers += [Conv2d(in_ch, ch, 3, padding=1, rng=rng), ReLU()]
            in_ch = ch
        layers.append(MaxPool2d(2))
    layers += [GlobalAvgPool(), Dense(512, 4096, rng=rng), ReLU()]
    return Sequential(*layers)


def _mobile_small(rng, resolution):
    def sep(in_ch, out_ch, stride):
        return [
            DepthwiseConv2d(in_ch, 3, stride=stride, padding=1, bias=False, rng=rng),
            BatchNorm2d(in_ch),
            ReLU(),
            Conv2d(in_ch, out_ch, 1, bias=False, rng=rng),
            BatchNorm2d(out_ch),
            ReLU(),
        ]

    return Sequential(
        Conv2d(3, 16, 3, stride=2, padding=1, bias=False, rng=rng),
        BatchNorm2d(16),
        ReLU(),
        *sep(16, 32, 1),
        *sep(32, 64, 2),
        *sep(64, 128, 2),
        *sep(128, 256, 1),
        GlobalAvgPool(),
    )


def _tiny_cnn(rng, resolution):
    # batch-norm-free so train/eval behavior is identical on tiny corpora
    return Sequential(
        Conv2d(3, 8, 3, stride=2, padding=1, rng=rng),
        ReLU(),
        Conv2d(8, 16, 3, stride=2, padding=1, rng=rng),
        ReLU(),
        Conv2d(16, 32, 3, stride=2, padding=1, rng=rng),
        ReLU(),
        GlobalAvgPool(),
        Dense(32, 64, rng=rng),
    )


def _toy(rng, resolution):
    return Sequential(Flatten(), Dense(3 * resolution * resolution, 1, rng=rng))


# name -> (builder, embedding_dim, default_input_resolution, minimum_resolution)
PRESETS = {
    "resnet50": (_resnet50, 2048, 224, 32),
    "vgg16": (lambda rng, res: _vgg("vgg16", rng, res), 4096, 224, 32),
    "vgg19": (lambda rng, res: _vgg("vgg19", rng, res), 4096, 224, 32),
    "mobile_small": (_mobile_small, 256, 96, 8),
    "tiny_cnn": (_tiny_cnn, 64, 32, 8),
    "toy": (_toy, 1, 2, 2),
}


def make_backbone(name: str, rng: np.random.Generator | None = None,
                  input_resolution: int | None = None):
    """Instantiate a preset; returns (network, BackboneSpec)."""
    if name not in PRESETS:
        raise ConfigError(f"unknown backbone {name!r}; choose from {sorted(PRESETS)}")
    if rng is None:
        rng = np.random.default_rng()
    builder, embedding_dim, default_res, min_res = PRESETS[name]
    resolution = input_resolution or default_res
    if resolution < min_res:
        raise ConfigError(f"{name!r} needs input_resolution >= {min_res}")
    return builder(rng, resolution), BackboneSpec(name, embedding_dim, resolution)
