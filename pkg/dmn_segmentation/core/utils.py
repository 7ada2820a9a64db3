#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Core Utilities
==============

Seeded initialization, dtype resolution and small array helpers shared by the
model, training and CLI code.
"""

import logging
from typing import Tuple, Union

import numpy as np

from .errors import ContractViolation

logger = logging.getLogger("dmn_segmentation.utils")

SUPPORTED_DTYPES = {"float32": np.float32, "float64": np.float64}


def resolve_dtype(name: Union[str, type, np.dtype]) -> np.dtype:
    """Map a config dtype name onto a numpy dtype."""
    if isinstance(name, str):
        if name not in SUPPORTED_DTYPES:
            raise ContractViolation(f"dtype must be one of {sorted(SUPPORTED_DTYPES)}, got {name!r}")
        return np.dtype(SUPPORTED_DTYPES[name])
    return np.dtype(name)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def init_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int,
                 dtype=np.float64) -> np.ndarray:
    """Uniform values in [-s, s] with s = sqrt(1 / fan_in)."""
    if fan_in < 1:
        raise ContractViolation(f"fan_in must be >= 1, got {fan_in}")
    scale = np.sqrt(1.0 / fan_in)
    return rng.uniform(-scale, scale, size=shape).astype(dtype)


def prepare_image(image: np.ndarray, dtype=np.float64) -> np.ndarray:
    """uint8 RGB (3, H, W) -> float map in [-0.5, 0.5]."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ContractViolation(f"image must be 3 x H x W, got shape {image.shape}")
    if image.dtype == np.uint8:
        return (image.astype(dtype) / 255.0 - 0.5).astype(dtype)
    return image.astype(dtype)


def downsample_mask_nearest(mask: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbour subsampling of an H x W binary mask by an integer factor."""
    mask = np.asarray(mask)
    if factor < 1:
        raise ContractViolation(f"downsampling factor must be >= 1, got {factor}")
    height, width = mask.shape
    if height % factor or width % factor:
        raise ContractViolation(f"mask {height}x{width} is not divisible by downsampling factor {factor}")
    offset = factor // 2
    return np.ascontiguousarray(mask[offset::factor, offset::factor])


def side_by_side(image: np.ndarray, heatmap: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """(3, H, 3W) uint8 strip: image | heatmap | ground-truth mask."""
    height, width = heatmap.shape
    heat = np.clip(np.rint(255.0 * heatmap), 0, 255).astype(np.uint8)
    gt = (np.asarray(mask) > 0).astype(np.uint8) * 255
    strip = np.zeros((3, height, 3 * width), dtype=np.uint8)
    strip[:, :, :width] = image
    strip[:, :, width:2 * width] = heat[None]
    strip[:, :, 2 * width:] = gt[None]
    return strip
