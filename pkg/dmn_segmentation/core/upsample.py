#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Upsampling Module
=================

Skip-connected decoder from R_N back to the input resolution. Each stage
concatenates R_n with I_n, applies a 3x3 convolution with ReLU and doubles
the spatial size by bilinear interpolation. A 1x1 head reduces to one channel,
the remaining factor of two (or more, with fewer stages) is interpolated and a
sigmoid turns logits into scores. No transposed convolutions are used.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from .errors import ContractViolation
from .functional import bilinear_upsample_x2, upsample_to
from .layers import Conv2dLayer
from .tensor import Tensor, clip, concat, sigmoid
from .visual import FeaturePyramid

logger = logging.getLogger("dmn_segmentation.upsample")

STAGES_FULL = "full"
STAGES_LOG2 = "log2"


def resolve_stage_count(num_scales: int, setting: Union[str, int] = STAGES_FULL) -> int:
    """
    Number of skip stages for an N-scale pyramid.

    ``"full"`` gives N - 1 (every I_n from N down to 2 is used), ``"log2"``
    gives floor(log2 N); an integer is taken as is.
    """
    if setting == STAGES_FULL:
        count = num_scales - 1
    elif setting == STAGES_LOG2:
        count = int(math.floor(math.log2(num_scales)))
    else:
        count = int(setting)
    if not 0 <= count <= num_scales - 1:
        raise ContractViolation(f"UM stage count must be in [0, {num_scales - 1}] for N = {num_scales}, got {count}")
    return count


def default_decoder_channels(top_channels: int, stages: int) -> List[int]:
    """Widths halving per stage from channels(R_N), never below 1."""
    return [max(1, top_channels >> (i + 1)) for i in range(stages)]


@dataclass
class UmStageWeights:
    """3x3 convolution over [R_n | I_n]; ``skip`` False drops I_n."""
    conv: Conv2dLayer
    skip: bool = True

    @property
    def out_channels(self) -> int:
        return self.conv.out_channels


def um_stage(r_n: Tensor, i_n: Optional[Tensor], w: UmStageWeights) -> Tensor:
    """
    One decoder stage: concat, 3x3 conv + ReLU, bilinear x2.

    Returns:
        R_{n-1} with twice the spatial size of R_n
    """
    if w.skip:
        if i_n is None:
            raise ContractViolation("skip-connected stage needs I_n")
        if r_n.shape[1:] != i_n.shape[1:]:
            raise ContractViolation(f"R_n spatial size {r_n.shape[1:]} != I_n spatial size {i_n.shape[1:]}")
        x = concat([r_n, i_n], axis=0)
    else:
        x = r_n
    if x.shape[0] != w.conv.in_channels:
        raise ContractViolation(f"stage input width {x.shape[0]} != kernel input width {w.conv.in_channels}")
    return bilinear_upsample_x2(w.conv(x))


@dataclass
class UpsamplingModule:
    """
    Attributes:
        stages: Decoder stages for scales N, N-1, ... (first consumes R_N)
        head: 1x1 convolution to a single channel, no activation
        num_scales: N
    """
    stages: List[UmStageWeights]
    head: Conv2dLayer
    num_scales: int

    def __post_init__(self):
        if self.head.out_channels != 1:
            raise ContractViolation(f"UM head must output 1 channel, got {self.head.out_channels}")
        if len(self.stages) > self.num_scales - 1:
            raise ContractViolation(f"UM has {len(self.stages)} stages, at most N - 1 = {self.num_scales - 1} allowed")

    @property
    def trailing_upsamples(self) -> int:
        """Bilinear doublings applied after the head."""
        return self.num_scales - len(self.stages)

    @classmethod
    def build(cls, input_channels: int, pyramid_channels: Sequence[int], rng: np.random.Generator,
              stages: int, decoder_channels: Optional[Sequence[int]] = None, skip: bool = True,
              dtype=np.float64) -> "UpsamplingModule":
        """
        Args:
            input_channels: channels(R_N)
            pyramid_channels: C_1..C_N
            stages: Number of skip stages
            decoder_channels: Output width per stage; defaults to halving
            skip: Concatenate I_n at every stage
        """
        num_scales = len(pyramid_channels)
        widths = list(decoder_channels) if decoder_channels else default_decoder_channels(input_channels, stages)
        if len(widths) != stages:
            raise ContractViolation(f"decoder_channels has {len(widths)} entries, expected {stages}")
        weights = []
        width = input_channels
        for i, out_channels in enumerate(widths):
            skip_channels = pyramid_channels[num_scales - 1 - i] if skip else 0
            conv = Conv2dLayer.initialize(width + skip_channels, out_channels, 3, rng, dtype)
            weights.append(UmStageWeights(conv=conv, skip=skip))
            width = out_channels
        head = Conv2dLayer.initialize(width, 1, 1, rng, dtype, activation=False)
        return cls(stages=weights, head=head, num_scales=num_scales)


def um_logits(r_top: Tensor, pyramid: FeaturePyramid, module: UpsamplingModule) -> Tensor:
    """Pre-sigmoid full-resolution scores (1, H, W)."""
    if len(pyramid) != module.num_scales:
        raise ContractViolation(f"pyramid has {len(pyramid)} scales, UM expects {module.num_scales}")
    if r_top.shape[1:] != pyramid.top.shape[1:]:
        raise ContractViolation(f"R_N spatial size {r_top.shape[1:]} != I_N spatial size {pyramid.top.shape[1:]}")
    x = r_top
    for i, stage in enumerate(module.stages):
        x = um_stage(x, pyramid[module.num_scales - i], stage)
    return upsample_to(module.head(x), module.trailing_upsamples)


def scores_from_logits(logits: Tensor) -> Tensor:
    """Sigmoid held inside [eps, 1 - eps] of the logits' dtype, so scores stay strictly in (0, 1)."""
    eps = float(np.finfo(logits.dtype).eps)
    return clip(sigmoid(logits), eps, 1.0 - eps)


def um_forward(r_top: Tensor, pyramid: FeaturePyramid, module: UpsamplingModule) -> Tensor:
    """Full-resolution heatmap (1, H, W) with values in (0, 1)."""
    return scores_from_logits(um_logits(r_top, pyramid, module))


def binarize(heatmap, threshold: float) -> np.ndarray:
    """
    Binary mask with 1 where heatmap >= threshold.

    Raises:
        ContractViolation: if threshold is outside [0, 1]
    """
    if not 0.0 <= threshold <= 1.0:
        raise ContractViolation(f"threshold must be in [0, 1], got {threshold}")
    values = heatmap.data if isinstance(heatmap, Tensor) else np.asarray(heatmap)
    return (values >= threshold).astype(np.uint8)
