#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Finite-Difference Gradient Verification
=======================================

Compares reverse-mode gradients against central differences
(f(x + eps) - f(x - eps)) / (2 eps), element by element.
"""

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContractViolation, NumericError
from .tensor import Tensor, no_grad

logger = logging.getLogger("dmn_segmentation.gradcheck")


def _scalar(value: Tensor, where: str) -> float:
    if value.size != 1:
        raise ContractViolation(f"grad_check function must return a scalar, got shape {value.shape}")
    result = float(value.data.reshape(-1)[0])
    if not np.isfinite(result):
        raise NumericError(f"non-finite function value {result} during {where}")
    return result


def grad_check(function: Callable[[], Tensor], leaves: Sequence[Tensor], eps: float = 1e-5,
               sample: Optional[int] = None, seed: int = 0) -> float:
    """
    Maximum relative error between analytic and numeric gradients.

    Args:
        function: Deterministic closure recomputing a scalar loss from ``leaves``
        leaves: Double precision tensors with ``requires_grad``
        eps: Central-difference step
        sample: If given, check at most this many randomly chosen elements per leaf
        seed: Seed for element sampling

    Returns:
        max over checked elements of |a - n| / max(1e-8, |a| + |n|)

    Raises:
        ContractViolation: for non-float64 leaves or non-scalar outputs
        NumericError: for non-finite values or gradients
    """
    for leaf in leaves:
        if leaf.dtype != np.float64:
            raise ContractViolation(f"grad_check requires float64 leaves, got {leaf.dtype} for {leaf.name or leaf.shape}")
        if not leaf.requires_grad:
            raise ContractViolation(f"grad_check leaf {leaf.name or leaf.shape} does not require a gradient")
        leaf.grad = None

    loss = function()
    _scalar(loss, "the analytic pass")
    loss.backward()
    analytic = [np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad.copy() for leaf in leaves]
    for leaf, grad in zip(leaves, analytic):
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite analytic gradient for {leaf.name or leaf.shape}")
        leaf.grad = None

    rng = np.random.default_rng(seed)
    worst = 0.0
    with no_grad():
        for leaf, grad in zip(leaves, analytic):
            positions = np.arange(leaf.size)
            if sample is not None and sample < leaf.size:
                positions = np.sort(rng.choice(leaf.size, size=sample, replace=False))
            for flat in positions:
                index = np.unravel_index(flat, leaf.shape)
                original = leaf.data[index]
                leaf.data[index] = original + eps
                upper = _scalar(function(), "a perturbed pass")
                leaf.data[index] = original - eps
                lower = _scalar(function(), "a perturbed pass")
                leaf.data[index] = original
                numeric = (upper - lower) / (2.0 * eps)
                exact = float(grad[index])
                error = abs(exact - numeric) / max(1e-8, abs(exact) + abs(numeric))
                if error > worst:
                    worst = error
                    logger.debug(f"grad_check {leaf.name or leaf.shape}{index}: analytic={exact:.6e} "
                                 f"numeric={numeric:.6e} rel_err={error:.3e}")
    return worst
