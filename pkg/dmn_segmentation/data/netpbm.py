#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
PPM / PGM Image Files
=====================

Binary netpbm I/O through Pillow: RGB images as P6, masks and heatmaps as
8-bit P5. Arrays use the channel-first (3, H, W) layout of the model.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..core.errors import ContractViolation, DatasetIOError

logger = logging.getLogger("dmn_segmentation.netpbm")

PathLike = Union[str, Path]


def _open(path: PathLike, mode: str) -> np.ndarray:
    path = Path(path)
    try:
        if path.stat().st_size == 0:
            raise DatasetIOError(f"image file is empty: {path}")
        with Image.open(path) as img:
            if img.mode != mode:
                img = img.convert(mode)
            return np.asarray(img, dtype=np.uint8).copy()
    except DatasetIOError:
        raise
    except (OSError, UnidentifiedImageError, ValueError) as e:
        raise DatasetIOError(f"cannot read image {path}: {e}") from e


def _save(array: np.ndarray, path: PathLike) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(array).save(path, format="PPM")
    except OSError as e:
        raise DatasetIOError(f"cannot write image {path}: {e}") from e
    return path


def read_ppm(path: PathLike) -> np.ndarray:
    """uint8 (3, H, W) RGB image."""
    return np.ascontiguousarray(_open(path, "RGB").transpose(2, 0, 1))


def write_ppm(image: np.ndarray, path: PathLike) -> Path:
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 3 or image.dtype != np.uint8:
        raise ContractViolation(f"PPM image must be uint8 3 x H x W, got {image.dtype} {image.shape}")
    return _save(np.ascontiguousarray(image.transpose(1, 2, 0)), path)


def read_pgm(path: PathLike) -> np.ndarray:
    """uint8 (H, W) grey image."""
    return _open(path, "L")


def write_pgm(values: np.ndarray, path: PathLike) -> Path:
    values = np.asarray(values)
    if values.ndim != 2 or values.dtype != np.uint8:
        raise ContractViolation(f"PGM image must be uint8 H x W, got {values.dtype} {values.shape}")
    return _save(np.ascontiguousarray(values), path)


def read_mask(path: PathLike) -> np.ndarray:
    """Binary (H, W) mask in {0, 1}; any non-zero pixel counts as foreground."""
    return (read_pgm(path) > 0).astype(np.uint8)


def write_mask(mask: np.ndarray, path: PathLike) -> Path:
    """Store a {0, 1} mask as {0, 255}."""
    return write_pgm((np.asarray(mask) > 0).astype(np.uint8) * 255, path)


def heatmap_to_gray(heatmap: np.ndarray) -> np.ndarray:
    """Probabilities in [0, 1] -> uint8 round(255 p)."""
    return np.clip(np.rint(255.0 * np.asarray(heatmap, dtype=np.float64)), 0, 255).astype(np.uint8)


def write_heatmap(heatmap: np.ndarray, path: PathLike) -> Path:
    return write_pgm(heatmap_to_gray(heatmap), path)
