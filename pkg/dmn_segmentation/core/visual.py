#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Visual Module
=============

Convolutional pyramid encoder producing feature maps I_1..I_N, where I_n has
C_n channels at 1/2^n of the input resolution. Each scale is a stride-2 3x3
convolution followed by (blocks_per_scale - 1) stride-1 3x3 convolutions,
all with ReLU.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import ContractViolation
from .layers import Conv2dLayer
from .tensor import Tensor, as_tensor

logger = logging.getLogger("dmn_segmentation.visual")

DESK_SCALE_CHANNELS = [16, 32, 64, 96, 128]


@dataclass
class BackboneConfig:
    """Pyramid shape: N scales with widths C_1..C_N."""
    num_scales: int = 5
    channels: List[int] = field(default_factory=lambda: list(DESK_SCALE_CHANNELS))
    blocks_per_scale: int = 2
    in_channels: int = 3

    def __post_init__(self):
        self.channels = [int(c) for c in self.channels]
        if self.num_scales < 2:
            raise ContractViolation(f"backbone needs N >= 2 scales, got {self.num_scales}")
        if len(self.channels) != self.num_scales:
            raise ContractViolation(f"backbone channels list has {len(self.channels)} entries, "
                                    f"expected N = {self.num_scales}")
        if any(c < 1 for c in self.channels):
            raise ContractViolation(f"backbone channels must be positive, got {self.channels}")
        if self.blocks_per_scale < 1:
            raise ContractViolation(f"blocks_per_scale must be >= 1, got {self.blocks_per_scale}")

    @property
    def top_channels(self) -> int:
        """C_N, the width seen by the Synthesis Module."""
        return self.channels[-1]

    @property
    def reduction(self) -> int:
        return 2 ** self.num_scales


@dataclass
class FeaturePyramid:
    """Maps I_1..I_N (index 0 holds I_1)."""
    maps: List[Tensor]

    def __len__(self) -> int:
        return len(self.maps)

    def __getitem__(self, n: int) -> Tensor:
        """I_n for 1-based scale ``n``."""
        if not 1 <= n <= len(self.maps):
            raise ContractViolation(f"pyramid scale must be in [1, {len(self.maps)}], got {n}")
        return self.maps[n - 1]

    @property
    def top(self) -> Tensor:
        return self.maps[-1]

    @property
    def shapes(self):
        return [m.shape for m in self.maps]


@dataclass
class VisualModule:
    config: BackboneConfig
    scales: List[List[Conv2dLayer]]

    @classmethod
    def build(cls, config: BackboneConfig, rng: np.random.Generator, dtype=np.float64) -> "VisualModule":
        scales = []
        width = config.in_channels
        for out_channels in config.channels:
            blocks = [Conv2dLayer.initialize(width, out_channels, 3, rng, dtype, stride=2)]
            blocks += [Conv2dLayer.initialize(out_channels, out_channels, 3, rng, dtype)
                       for _ in range(config.blocks_per_scale - 1)]
            scales.append(blocks)
            width = out_channels
        return cls(config=config, scales=scales)

    def __call__(self, image) -> FeaturePyramid:
        return vm_forward(image, self)


def check_image_size(height: int, width: int, config: BackboneConfig) -> None:
    factor = config.reduction
    if height % factor or width % factor:
        raise ContractViolation(f"image {height}x{width} must have height and width divisible by "
                                f"2^N = {factor} (N = {config.num_scales})")


def vm_forward(image, module: VisualModule) -> FeaturePyramid:
    """
    Encode an image into its feature pyramid.

    Args:
        image: Float map (C_in, H, W); H and W divisible by 2^N
        module: Visual Module weights

    Returns:
        FeaturePyramid with I_n of shape (C_n, H / 2^n, W / 2^n)
    """
    x = as_tensor(image)
    config = module.config
    if x.ndim != 3 or x.shape[0] != config.in_channels:
        raise ContractViolation(f"image must be {config.in_channels} x H x W, got shape {x.shape}")
    check_image_size(x.shape[1], x.shape[2], config)

    maps = []
    for blocks in module.scales:
        for layer in blocks:
            x = layer(x)
        maps.append(x)
    logger.debug(f"Pyramid shapes: {[m.shape for m in maps]}")
    return FeaturePyramid(maps=maps)
