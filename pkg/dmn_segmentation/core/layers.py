#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Parameter Containers
====================

Weight-holding building blocks shared by the model modules, and the
parameter collection walk that names every trainable tensor.
"""

import dataclasses
import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any, Dict

import numpy as np

from .errors import ContractViolation
from .functional import conv2d
from .tensor import Tensor, relu
from .utils import init_uniform

logger = logging.getLogger("dmn_segmentation.layers")


@dataclass
class Conv2dLayer:
    """Convolution weights plus stride, padding and an optional ReLU."""
    kernel: Tensor
    bias: Tensor
    stride: int = 1
    pad: int = 0
    activation: bool = True

    @classmethod
    def initialize(cls, in_channels: int, out_channels: int, size: int, rng: np.random.Generator,
                   dtype=np.float64, stride: int = 1, activation: bool = True) -> "Conv2dLayer":
        fan_in = in_channels * size * size
        return cls(
            kernel=Tensor.parameter(init_uniform(rng, (out_channels, in_channels, size, size), fan_in, dtype)),
            bias=Tensor.parameter(init_uniform(rng, (out_channels,), fan_in, dtype)),
            stride=stride,
            pad=size // 2,
            activation=activation,
        )

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[1]

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        y = conv2d(x, self.kernel, self.bias, stride=self.stride, pad=self.pad)
        return relu(y) if self.activation else y


def collect_parameters(container: Any, prefix: str = "") -> "OrderedDict[str, Tensor]":
    """
    Walk dataclasses, lists and dicts and return every trainable tensor by dotted name.

    Tensors are named in place (``Tensor.name``) so error messages can refer to them.
    """
    found: "OrderedDict[str, Tensor]" = OrderedDict()

    def visit(node: Any, path: str) -> None:
        if isinstance(node, Tensor):
            if node.requires_grad:
                node.name = path
                found[path] = node
        elif dataclasses.is_dataclass(node) and not isinstance(node, type):
            for f in dataclasses.fields(node):
                visit(getattr(node, f.name), f"{path}.{f.name}" if path else f.name)
        elif isinstance(node, (list, tuple)):
            for i, item in enumerate(node):
                visit(item, f"{path}.{i}" if path else str(i))
        elif isinstance(node, dict):
            for key, item in node.items():
                visit(item, f"{path}.{key}" if path else str(key))

    visit(container, prefix)
    return found


def count_parameters(container: Any) -> int:
    return int(sum(p.size for p in collect_parameters(container).values()))


def load_parameters(target: Dict[str, Tensor], arrays: Dict[str, np.ndarray]) -> None:
    """Copy arrays into same-named tensors; names and shapes must match exactly."""
    missing = [name for name in target if name not in arrays]
    unexpected = [name for name in arrays if name not in target]
    if missing or unexpected:
        raise ContractViolation(f"parameter names differ: missing={missing[:5]}, unexpected={unexpected[:5]}")
    for name, tensor in target.items():
        value = arrays[name]
        if tuple(value.shape) != tensor.shape:
            raise ContractViolation(f"parameter '{name}' shape {tuple(value.shape)} != expected {tensor.shape}")
        tensor.data[...] = value.astype(tensor.dtype)
