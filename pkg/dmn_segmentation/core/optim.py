#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Optimizer and Learning-Rate Schedule
====================================

Adam with bias correction and a reduce-on-plateau scheduler.

Defaults follow the training recipe: initial learning rate 1e-5, the rate is
divided by 10 once the monitored loss has stagnated for 2 epochs.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from .errors import ContractViolation
from .tensor import Tensor

logger = logging.getLogger("dmn_segmentation.optim")

DEFAULT_LEARNING_RATE = 1e-5
DEFAULT_BETAS = (0.9, 0.999)
DEFAULT_EPS = 1e-8


@dataclass
class AdamState:
    """Per-parameter moment estimates plus hyperparameters."""
    learning_rate: float = DEFAULT_LEARNING_RATE
    beta1: float = DEFAULT_BETAS[0]
    beta2: float = DEFAULT_BETAS[1]
    eps: float = DEFAULT_EPS
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], state: AdamState) -> AdamState:
    """
    Apply one Adam update in place and clear the gradients.

    Args:
        params: Named trainable tensors; every one must carry a gradient
        state: Optimizer state, updated in place

    Returns:
        The same state object with the step counter incremented

    Raises:
        ContractViolation: if a parameter has no gradient or moments have the wrong shape
    """
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise ContractViolation(f"missing gradient for parameter '{missing[0]}'"
                                + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step

    for name, param in params.items():
        grad = param.grad
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            v = np.zeros_like(param.data)
        elif m.shape != param.shape:
            raise ContractViolation(f"moment shape {m.shape} does not match parameter '{name}' {param.shape}")

        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m
        state.second_moment[name] = v

        update = (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.data -= (state.learning_rate * update).astype(param.dtype, copy=False)
        param.grad = None

    return state


@dataclass
class PlateauScheduler:
    """
    Reduce-on-plateau learning-rate schedule.

    The rate is divided by ``reduction_factor`` once ``epochs_since_improvement``
    reaches ``patience_epochs`` stagnant epochs; the counter then restarts.
    """
    patience_epochs: int = 2
    reduction_factor: float = 10.0
    best_loss: float = math.inf
    epochs_since_improvement: int = 0

    def __post_init__(self):
        if self.patience_epochs < 1:
            raise ContractViolation(f"patience_epochs must be >= 1, got {self.patience_epochs}")
        if self.reduction_factor <= 1.0:
            raise ContractViolation(f"reduction_factor must be > 1, got {self.reduction_factor}")

    def step(self, loss: float, state: AdamState) -> float:
        """
        Record an epoch loss and possibly lower ``state.learning_rate``.

        Returns:
            The learning rate to use for the next epoch
        """
        if loss < self.best_loss:
            self.best_loss = loss
            self.epochs_since_improvement = 0
            return state.learning_rate

        self.epochs_since_improvement += 1
        if self.epochs_since_improvement >= self.patience_epochs:
            previous = state.learning_rate
            state.learning_rate = previous / self.reduction_factor
            self.epochs_since_improvement = 0
            logger.info(f"Loss stagnated for {self.patience_epochs} epochs; "
                        f"learning rate {previous:.3g} -> {state.learning_rate:.3g}")
        return state.learning_rate
