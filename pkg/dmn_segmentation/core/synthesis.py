#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Synthesis Module
================

Fuses the top visual map I_N with the query, one word at a time:

    F_t = dynamic filter responses over [I_N, LOC]
    M_t = ReLU(Conv1x1([I_N, F_t, LOC, r_t tiled]))
    R_N = multimodal recurrent scan over M_1..M_T

Ablations remove the F_t block (no dynamic filters) or the r_t block (no
concatenation of r_t); the fusion width shrinks accordingly.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import ContractViolation
from .language import LanguageOutput
from .layers import Conv2dLayer
from .recurrent import RecurrentStack, msru_scan
from .tensor import Tensor, as_tensor, broadcast_to, concat, matmul

logger = logging.getLogger("dmn_segmentation.synthesis")

LOC_CHANNELS = 8


def make_loc(height: int, width: int, channels: int = LOC_CHANNELS, dtype=np.float64) -> Tensor:
    """
    Parameter-free coordinate map, channels (x, y, x^2, y^2, xy, 1/w, 1/h, 1).

    x at column j is -1 + 2 (j + 0.5) / w, y likewise over rows. ``channels``
    keeps a prefix of that list (0 disables the encoding).
    """
    if height < 1 or width < 1:
        raise ContractViolation(f"LOC needs h, w >= 1, got {height}x{width}")
    if not 0 <= channels <= LOC_CHANNELS:
        raise ContractViolation(f"LOC channels must be in [0, {LOC_CHANNELS}], got {channels}")
    xs = -1.0 + 2.0 * (np.arange(width) + 0.5) / width
    ys = -1.0 + 2.0 * (np.arange(height) + 0.5) / height
    y, x = np.meshgrid(ys, xs, indexing="ij")
    ones = np.ones((height, width))
    planes = [x, y, x * x, y * y, x * y, ones / width, ones / height, ones]
    if channels == 0:
        return Tensor(np.zeros((0, height, width), dtype=dtype))
    return Tensor(np.stack(planes[:channels]).astype(dtype))


def filter_responses(visual_map: Tensor, loc: Optional[Tensor], filters_t: Tensor) -> Tensor:
    """
    Apply K dynamic 1x1 filters to the concatenation of I_N and LOC.

    Args:
        visual_map: I_N (C_N, h, w)
        loc: Coordinate map (C_loc, h, w), or None for filters over I_N only
        filters_t: (K, F) with F == C_N + C_loc

    Returns:
        F_t (K, h, w)
    """
    features = visual_map if loc is None or loc.shape[0] == 0 else concat([visual_map, loc], axis=0)
    channels, height, width = features.shape
    filters_t = as_tensor(filters_t)
    if filters_t.ndim != 2 or filters_t.shape[1] != channels:
        raise ContractViolation(f"filter length {filters_t.shape[-1]} != filtered channels {channels} "
                                f"(C_N = {visual_map.shape[0]}, C_loc = {channels - visual_map.shape[0]})")
    response = matmul(filters_t, features.reshape(channels, height * width))
    return response.reshape(filters_t.shape[0], height, width)


def tile(vector: Tensor, height: int, width: int) -> Tensor:
    """Repeat a (d,) vector at every site of an h x w map."""
    return broadcast_to(vector.reshape(vector.shape[0], 1, 1), (vector.shape[0], height, width))


def merge_step(visual_map: Tensor, responses: Optional[Tensor], loc: Optional[Tensor],
               r_t: Optional[Tensor], fusion: Conv2dLayer) -> Tensor:
    """
    M_t = fusion([I_N | F_t | LOC | r_t tiled]); absent blocks are skipped.

    Raises:
        ContractViolation: if a block's spatial size differs from I_N's or the
            concatenated width differs from the fusion kernel's input width
    """
    height, width = visual_map.shape[1:]
    blocks = [visual_map]
    for label, block in (("F_t", responses), ("LOC", loc)):
        if block is None or block.shape[0] == 0:
            continue
        if block.shape[1:] != (height, width):
            raise ContractViolation(f"{label} spatial size {block.shape[1:]} != I_N spatial size {(height, width)}")
        blocks.append(block)
    if r_t is not None:
        if r_t.ndim != 1:
            raise ContractViolation(f"r_t must be a vector, got shape {r_t.shape}")
        blocks.append(tile(r_t, height, width))

    fused_width = sum(b.shape[0] for b in blocks)
    if fused_width != fusion.in_channels:
        raise ContractViolation(f"fusion input width {fused_width} != fusion kernel input width {fusion.in_channels}")
    return fusion(concat(blocks, axis=0))


@dataclass
class SynthesisModule:
    """
    Fusion kernels and the multimodal recurrent stack.

    Attributes:
        fusion: 1x1 convolution with ReLU producing C_m channels
        msru: Recurrent stack with input size C_m
        use_filters: Include F_t in the fusion input
        use_rt: Include tiled r_t in the fusion input
        filters_see_loc: Dynamic filters span [I_N, LOC] rather than I_N alone
        loc_channels: C_loc
    """
    fusion: Conv2dLayer
    msru: RecurrentStack
    use_filters: bool = True
    use_rt: bool = True
    filters_see_loc: bool = True
    loc_channels: int = LOC_CHANNELS

    def __post_init__(self):
        if self.msru.input_size != self.fusion.out_channels:
            raise ContractViolation(f"mSRU input size {self.msru.input_size} != fusion channels "
                                    f"{self.fusion.out_channels}")

    @property
    def output_channels(self) -> int:
        return self.msru.hidden_size

    @staticmethod
    def fusion_width(visual_channels: int, num_filters: int, loc_channels: int, r_width: int,
                     use_filters: bool = True, use_rt: bool = True) -> int:
        """C_N + K + C_loc + width(r_t), minus the ablated blocks."""
        return (visual_channels + (num_filters if use_filters else 0) + loc_channels
                + (r_width if use_rt else 0))

    def filter_size(self, visual_channels: int) -> int:
        return visual_channels + (self.loc_channels if self.filters_see_loc else 0)

    def __call__(self, visual_map: Tensor, lang: LanguageOutput) -> Tensor:
        loc = make_loc(visual_map.shape[1], visual_map.shape[2], self.loc_channels, visual_map.dtype)
        return sm_forward(visual_map, loc, lang, self)


def sm_forward(visual_map: Tensor, loc: Tensor, lang: LanguageOutput, module: SynthesisModule) -> Tensor:
    """
    Build M_1..M_T and aggregate them into R_N.

    Returns:
        R_N (d_m, h, w) with d_m the multimodal recurrent hidden width
    """
    if lang.length < 1:
        raise ContractViolation("synthesis needs at least one word")
    if module.use_filters and lang.filters is None:
        raise ContractViolation("dynamic filters are enabled but the language output carries none")

    filter_loc = loc if module.filters_see_loc else None
    fused: List[Tensor] = []
    for t in range(lang.length):
        responses = filter_responses(visual_map, filter_loc, lang.filters[t]) if module.use_filters else None
        r_t = lang.r_seq[t] if module.use_rt else None
        fused.append(merge_step(visual_map, responses, loc, r_t, module.fusion))
    return msru_scan(fused, module.msru)
