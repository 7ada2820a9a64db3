#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Spatial and Lookup Operations
=============================

Differentiable operations built on the tensor engine:
- conv2d: zero-padded strided 2-D convolution on C x H x W maps
- bilinear_upsample_x2: half-pixel-center bilinear interpolation, edge clamped
- affine: W x + b on vectors
- embedding: row gather from a V x d table
"""

import logging
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractViolation
from .tensor import Tensor, _result, accumulate, accumulate_at, as_tensor, linear

logger = logging.getLogger("dmn_segmentation.functional")


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None,
           stride: int = 1, pad: int = 0) -> Tensor:
    """
    2-D convolution of a single C_in x H x W map.

    Args:
        x: Input map (C_in, H, W)
        kernel: Kernels (C_out, C_in, kh, kw); odd extents keep "same" padding centred
        bias: Optional (C_out,) vector
        stride: Step in both spatial axes
        pad: Zero padding added on every border

    Returns:
        Map (C_out, H', W') with H' = floor((H + 2 pad - kh) / stride) + 1

    Raises:
        ContractViolation: naming the offending dimension on any shape mismatch
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ContractViolation(f"conv2d input must be C x H x W, got shape {x.shape}")
    if kernel.ndim != 4:
        raise ContractViolation(f"conv2d kernel must be C_out x C_in x kh x kw, got shape {kernel.shape}")
    c_in, height, width = x.shape
    c_out, k_in, kh, kw = kernel.shape
    if k_in != c_in:
        raise ContractViolation(f"conv2d channel mismatch: input C_in={c_in}, kernel C_in={k_in}")
    if stride < 1 or pad < 0:
        raise ContractViolation(f"conv2d needs stride >= 1 and pad >= 0, got stride={stride}, pad={pad}")
    if height + 2 * pad < kh:
        raise ContractViolation(f"conv2d height too small: H + 2*pad = {height + 2 * pad} < kh = {kh}")
    if width + 2 * pad < kw:
        raise ContractViolation(f"conv2d width too small: W + 2*pad = {width + 2 * pad} < kw = {kw}")
    if bias is not None and bias.shape != (c_out,):
        raise ContractViolation(f"conv2d bias must have shape ({c_out},), got {bias.shape}")

    padded = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    windows = sliding_window_view(padded, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    y = np.tensordot(kernel.data, windows, axes=([1, 2, 3], [0, 3, 4]))
    if bias is not None:
        y = y + bias.data[:, None, None]

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    out = _result(y, parents, "conv2d")
    if out.requires_grad:
        def _backward(g):
            if kernel.requires_grad:
                accumulate(kernel, np.tensordot(g, windows, axes=([1, 2], [1, 2])))
            if bias is not None and bias.requires_grad:
                accumulate(bias, g.sum(axis=(1, 2)))
            if x.requires_grad:
                out_h, out_w = g.shape[1:]
                grad_padded = np.zeros(padded.shape, dtype=g.dtype)
                for i in range(kh):
                    for j in range(kw):
                        grad_padded[:, i:i + stride * (out_h - 1) + 1:stride,
                                    j:j + stride * (out_w - 1) + 1:stride] += np.tensordot(
                            kernel.data[:, :, i, j], g, axes=([0], [0]))
                accumulate(x, grad_padded[:, pad:pad + height, pad:pad + width])
        out._backward = _backward
    return out


@lru_cache(maxsize=128)
def interpolation_matrix(size: int) -> np.ndarray:
    """
    (2 size) x size matrix of 1-D bilinear weights.

    Output index i samples source coordinate (i + 0.5) / 2 - 0.5, clamped to
    [0, size - 1].
    """
    matrix = np.zeros((2 * size, size), dtype=np.float64)
    for i in range(2 * size):
        source = min(max((i + 0.5) / 2.0 - 0.5, 0.0), size - 1.0)
        low = int(np.floor(source))
        high = min(low + 1, size - 1)
        frac = source - low
        matrix[i, low] += 1.0 - frac
        matrix[i, high] += frac
    matrix.setflags(write=False)
    return matrix


def bilinear_upsample_x2(x: Tensor) -> Tensor:
    """Double both spatial extents of a C x H x W map (separable bilinear)."""
    x = as_tensor(x)
    if x.ndim != 3 or x.shape[1] < 1 or x.shape[2] < 1:
        raise ContractViolation(f"bilinear_upsample_x2 needs a C x H x W map with H, W >= 1, got {x.shape}")
    rows = interpolation_matrix(x.shape[1]).astype(x.dtype, copy=False)
    cols = interpolation_matrix(x.shape[2]).astype(x.dtype, copy=False)
    out = _result(np.matmul(np.matmul(rows, x.data), cols.T), (x,), "upsample_x2")
    if out.requires_grad:
        out._backward = lambda g: accumulate(x, np.matmul(np.matmul(rows.T, g), cols))
    return out


def upsample_to(x: Tensor, factor_log2: int) -> Tensor:
    """Apply ``bilinear_upsample_x2`` ``factor_log2`` times."""
    for _ in range(factor_log2):
        x = bilinear_upsample_x2(x)
    return x


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """W x + b for a d_in vector x, W (d_out, d_in), b (d_out,)."""
    x = as_tensor(x)
    if x.ndim != 1:
        raise ContractViolation(f"affine input must be a vector, got shape {x.shape}")
    return linear(x, weight, bias)


def embedding(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows ``ids`` of a V x d table into a T x d matrix."""
    index = np.asarray(ids, dtype=np.int64)
    vocab_size = table.shape[0]
    if index.ndim != 1:
        raise ContractViolation(f"token ids must be a flat sequence, got shape {index.shape}")
    bad = index[(index < 0) | (index >= vocab_size)]
    if bad.size:
        raise ContractViolation(f"token id {int(bad[0])} out of range [0, {vocab_size})")
    out = _result(table.data[index], (table,), "embedding")
    if out.requires_grad:
        out._backward = lambda g: accumulate_at(table, index, g)
    return out
