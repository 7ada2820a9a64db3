#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Recurrent Kernels
=================

Simple Recurrent Units, stacked scans, the multimodal scan applied per spatial
location, and an LSTM baseline for efficiency comparisons.

SRU recurrence (gate g is the sigmoid):
    x~_t = W x_t
    f'_t = sigmoid(W_f x_t + b_f)
    rho_t = sigmoid(W_r x_t + b_r)
    c_t  = f'_t * c_{t-1} + (1 - f'_t) * x~_t
    h_t  = rho_t * sigmoid(c_t) + (1 - rho_t) * x_t

Every matrix product depends only on x_t, so a scan computes them for all time
steps at once and only the elementwise cell update runs sequentially. The
LSTM needs one recurrent matrix product per step.

Sequences are laid out time-first: (T, ..., d). Any middle axes are treated
as independent sequences sharing the weights (spatial locations for the
multimodal scan).
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractViolation
from .tensor import Tensor, concat, linear, sigmoid, stack, tanh, transpose
from .utils import init_uniform

logger = logging.getLogger("dmn_segmentation.recurrent")

CELL_SRU = "sru"
CELL_LSTM = "lstm"
SUPPORTED_CELLS = (CELL_SRU, CELL_LSTM)


@dataclass
class SruLayerWeights:
    """One SRU layer; the highway term needs d_in == d_h."""
    W: Tensor
    W_f: Tensor
    b_f: Tensor
    W_r: Tensor
    b_r: Tensor

    def __post_init__(self):
        d_h, d_in = self.W.shape
        if d_in != d_h:
            raise ContractViolation(f"SRU layer needs d_in == d_h for the highway term, got d_in={d_in}, d_h={d_h}")
        for label, matrix in (("W_f", self.W_f), ("W_r", self.W_r)):
            if matrix.shape != (d_h, d_in):
                raise ContractViolation(f"SRU {label} must be {(d_h, d_in)}, got {matrix.shape}")
        for label, vector in (("b_f", self.b_f), ("b_r", self.b_r)):
            if vector.shape != (d_h,):
                raise ContractViolation(f"SRU {label} must be ({d_h},), got {vector.shape}")

    @property
    def hidden_size(self) -> int:
        return self.W.shape[0]

    @classmethod
    def initialize(cls, size: int, rng: np.random.Generator, dtype=np.float64) -> "SruLayerWeights":
        def matrix():
            return Tensor.parameter(init_uniform(rng, (size, size), size, dtype))

        def vector():
            return Tensor.parameter(init_uniform(rng, (size,), size, dtype))

        return cls(W=matrix(), W_f=matrix(), b_f=vector(), W_r=matrix(), b_r=vector())


@dataclass
class LstmLayerWeights:
    """One LSTM layer; gate rows ordered input, forget, candidate, output."""
    W: Tensor
    b: Tensor

    def __post_init__(self):
        rows, cols = self.W.shape
        if rows % 4:
            raise ContractViolation(f"LSTM weight rows must be 4 * d_h, got {rows}")
        if self.b.shape != (rows,):
            raise ContractViolation(f"LSTM bias must be ({rows},), got {self.b.shape}")
        if cols <= rows // 4:
            raise ContractViolation(f"LSTM weight columns must be d_in + d_h, got {cols} for d_h={rows // 4}")

    @property
    def hidden_size(self) -> int:
        return self.W.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.W.shape[1] - self.hidden_size

    @classmethod
    def initialize(cls, input_size: int, hidden_size: int, rng: np.random.Generator,
                   dtype=np.float64) -> "LstmLayerWeights":
        fan_in = input_size + hidden_size
        return cls(
            W=Tensor.parameter(init_uniform(rng, (4 * hidden_size, fan_in), fan_in, dtype)),
            b=Tensor.parameter(init_uniform(rng, (4 * hidden_size,), fan_in, dtype)),
        )


@dataclass
class InputProjection:
    """Affine map bringing the stack input to the SRU hidden size."""
    W: Tensor
    b: Tensor


@dataclass(frozen=True)
class RecurrentSpec:
    """Shape description of a recurrent stack, enough to count parameters."""
    cell: str
    input_size: int
    hidden_size: int
    num_layers: int

    def __post_init__(self):
        if self.cell not in SUPPORTED_CELLS:
            raise ContractViolation(f"cell must be one of {SUPPORTED_CELLS}, got {self.cell!r}")
        if min(self.input_size, self.hidden_size, self.num_layers) < 1:
            raise ContractViolation(f"recurrent sizes must be positive, got {self}")


@dataclass
class RecurrentStack:
    """Ordered layers of one cell type; layer i consumes layer i-1's hidden sequence."""
    cell: str
    input_size: int
    hidden_size: int
    layers: List[Union[SruLayerWeights, LstmLayerWeights]] = field(default_factory=list)
    projection: Optional[InputProjection] = None

    def __post_init__(self):
        RecurrentSpec(self.cell, self.input_size, self.hidden_size, max(1, len(self.layers)))
        if not self.layers:
            raise ContractViolation("a recurrent stack needs at least one layer")
        expected_type = SruLayerWeights if self.cell == CELL_SRU else LstmLayerWeights
        width = self.input_size
        if self.cell == CELL_SRU and self.input_size != self.hidden_size:
            if self.projection is None:
                raise ContractViolation(f"SRU stack with input {self.input_size} != hidden {self.hidden_size} "
                                        f"needs an input projection")
            width = self.hidden_size
        for i, layer in enumerate(self.layers):
            if not isinstance(layer, expected_type):
                raise ContractViolation(f"layer {i} is {type(layer).__name__}, expected {expected_type.__name__}")
            layer_in = layer.input_size if isinstance(layer, LstmLayerWeights) else layer.W.shape[1]
            if layer_in != width:
                raise ContractViolation(f"layer {i} input size {layer_in} != previous width {width}")
            if layer.hidden_size != self.hidden_size:
                raise ContractViolation(f"layer {i} hidden size {layer.hidden_size} != stack hidden size {self.hidden_size}")
            width = layer.hidden_size

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def spec(self) -> RecurrentSpec:
        return RecurrentSpec(self.cell, self.input_size, self.hidden_size, self.num_layers)

    @classmethod
    def build(cls, cell: str, input_size: int, hidden_size: int, num_layers: int,
              rng: np.random.Generator, dtype=np.float64) -> "RecurrentStack":
        spec = RecurrentSpec(cell, input_size, hidden_size, num_layers)
        projection = None
        layers: List[Union[SruLayerWeights, LstmLayerWeights]] = []
        if spec.cell == CELL_SRU:
            if input_size != hidden_size:
                projection = InputProjection(
                    W=Tensor.parameter(init_uniform(rng, (hidden_size, input_size), input_size, dtype)),
                    b=Tensor.parameter(init_uniform(rng, (hidden_size,), input_size, dtype)),
                )
            layers = [SruLayerWeights.initialize(hidden_size, rng, dtype) for _ in range(num_layers)]
        else:
            width = input_size
            for _ in range(num_layers):
                layers.append(LstmLayerWeights.initialize(width, hidden_size, rng, dtype))
                width = hidden_size
        logger.debug(f"Built {cell} stack: input={input_size}, hidden={hidden_size}, layers={num_layers}, "
                     f"params={param_count(spec):,}")
        return cls(cell=cell, input_size=input_size, hidden_size=hidden_size, layers=layers,
                   projection=projection)


def param_count(spec: Union[RecurrentSpec, RecurrentStack]) -> int:
    """
    Closed-form trainable parameter count of a recurrent stack.

    SRU layer: 3 d_in d_h + 2 d_h (d_in == d_h; a projection adds d_in d_h + d_h
    when the stack input differs). LSTM layer: 4 (d_in + d_h) d_h + 4 d_h.
    """
    if isinstance(spec, RecurrentStack):
        spec = spec.spec
    d_h = spec.hidden_size
    total = 0
    if spec.cell == CELL_SRU:
        if spec.input_size != d_h:
            total += spec.input_size * d_h + d_h
        total += spec.num_layers * (3 * d_h * d_h + 2 * d_h)
    else:
        width = spec.input_size
        for _ in range(spec.num_layers):
            total += 4 * (width + d_h) * d_h + 4 * d_h
            width = d_h
    return total


# ----------------------------------------------------------------------
# SRU
# ----------------------------------------------------------------------

def sru_step(x_t: Tensor, c_prev: Tensor, w: SruLayerWeights) -> Tuple[Tensor, Tensor]:
    """
    One SRU update.

    Args:
        x_t: Input (..., d)
        c_prev: Previous cell state (..., d)
        w: Layer weights with d_in == d_h == d

    Returns:
        (c_t, h_t)
    """
    d = w.hidden_size
    if x_t.shape[-1] != d or c_prev.shape[-1] != d:
        raise ContractViolation(f"sru_step dimension mismatch: x_t {x_t.shape}, c_prev {c_prev.shape}, d={d}")
    x_tilde = linear(x_t, w.W)
    forget = sigmoid(linear(x_t, w.W_f, w.b_f))
    reset = sigmoid(linear(x_t, w.W_r, w.b_r))
    c_t = forget * c_prev + (1.0 - forget) * x_tilde
    h_t = reset * sigmoid(c_t) + (1.0 - reset) * x_t
    return c_t, h_t


def _sru_layer(seq: Tensor, w: SruLayerWeights) -> Tensor:
    x_tilde = linear(seq, w.W)
    forget = sigmoid(linear(seq, w.W_f, w.b_f))
    reset = sigmoid(linear(seq, w.W_r, w.b_r))
    gated_input = (1.0 - forget) * x_tilde
    highway = (1.0 - reset) * seq

    c = Tensor.zeros(seq.shape[1:], dtype=seq.dtype)
    hidden = []
    for t in range(seq.shape[0]):
        c = forget[t] * c + gated_input[t]
        hidden.append(reset[t] * sigmoid(c))
    return stack(hidden, axis=0) + highway


def _check_sequence(seq: Tensor, stack_: RecurrentStack, expected_cell: Optional[str]) -> None:
    if expected_cell is not None and stack_.cell != expected_cell:
        raise ContractViolation(f"expected a {expected_cell} stack, got {stack_.cell}")
    if seq.ndim < 2 or seq.shape[0] < 1:
        raise ContractViolation(f"recurrent scan needs a non-empty T x ... x d sequence, got shape {seq.shape}")
    if seq.shape[-1] != stack_.input_size:
        raise ContractViolation(f"sequence feature size {seq.shape[-1]} != stack input size {stack_.input_size}")


def sru_scan(seq: Tensor, stack_: RecurrentStack) -> Tensor:
    """
    Run a stacked SRU over a time-first sequence from zero cell states.

    Args:
        seq: (T, ..., d_in), T >= 1
        stack_: SRU stack

    Returns:
        Top-layer hidden sequence (T, ..., d_h)
    """
    _check_sequence(seq, stack_, CELL_SRU)
    x = seq
    if stack_.projection is not None:
        x = linear(x, stack_.projection.W, stack_.projection.b)
    for layer in stack_.layers:
        x = _sru_layer(x, layer)
    return x


# ----------------------------------------------------------------------
# LSTM baseline
# ----------------------------------------------------------------------

def lstm_step(x_t: Tensor, h_prev: Tensor, c_prev: Tensor, w: LstmLayerWeights) -> Tuple[Tensor, Tensor]:
    """
    One LSTM update with sigmoid gates and a tanh candidate.

    Returns:
        (h_t, c_t)
    """
    d = w.hidden_size
    if x_t.shape[-1] != w.input_size or h_prev.shape[-1] != d or c_prev.shape[-1] != d:
        raise ContractViolation(f"lstm_step dimension mismatch: x_t {x_t.shape}, h_prev {h_prev.shape}, "
                                f"c_prev {c_prev.shape}, d_in={w.input_size}, d_h={d}")
    z = linear(concat([x_t, h_prev], axis=-1), w.W, w.b)
    input_gate = sigmoid(z[..., 0:d])
    forget_gate = sigmoid(z[..., d:2 * d])
    candidate = tanh(z[..., 2 * d:3 * d])
    output_gate = sigmoid(z[..., 3 * d:4 * d])
    c_t = forget_gate * c_prev + input_gate * candidate
    h_t = output_gate * tanh(c_t)
    return h_t, c_t


def lstm_scan(seq: Tensor, stack_: RecurrentStack) -> Tensor:
    """Stacked LSTM over (T, ..., d_in) from zero states; returns (T, ..., d_h)."""
    _check_sequence(seq, stack_, CELL_LSTM)
    x = seq
    for layer in stack_.layers:
        state_shape = x.shape[1:-1] + (layer.hidden_size,)
        h = Tensor.zeros(state_shape, dtype=x.dtype)
        c = Tensor.zeros(state_shape, dtype=x.dtype)
        hidden = []
        for t in range(x.shape[0]):
            h, c = lstm_step(x[t], h, c, layer)
            hidden.append(h)
        x = stack(hidden, axis=0)
    return x


def recurrent_scan(seq: Tensor, stack_: RecurrentStack) -> Tensor:
    """Dispatch to ``sru_scan`` or ``lstm_scan`` by the stack's cell type."""
    if stack_.cell == CELL_SRU:
        return sru_scan(seq, stack_)
    return lstm_scan(seq, stack_)


# ----------------------------------------------------------------------
# Multimodal scan
# ----------------------------------------------------------------------

def msru_scan(m_seq: Sequence[Tensor], stack_: RecurrentStack) -> Tensor:
    """
    Scan every spatial location of a sequence of C x H x W maps independently.

    One weight set is shared by all locations and time steps (the 1x1
    convolutional form). With an LSTM stack this is the mLSTM baseline.

    Args:
        m_seq: T >= 1 maps of identical shape (C, H, W), C == stack input size
        stack_: Recurrent stack

    Returns:
        Final-time top-layer hidden states gathered into a (d_h, H, W) map
    """
    if not m_seq:
        raise ContractViolation("multimodal scan needs at least one time step")
    shape = m_seq[0].shape
    if len(shape) != 3:
        raise ContractViolation(f"multimodal scan inputs must be C x H x W, got {shape}")
    for t, m in enumerate(m_seq):
        if m.shape != shape:
            raise ContractViolation(f"multimodal input at t={t} has shape {m.shape}, expected {shape}")
    channels, height, width = shape
    if channels != stack_.input_size:
        raise ContractViolation(f"multimodal channels {channels} != stack input size {stack_.input_size}")

    seq = transpose(stack(list(m_seq), axis=0), (0, 2, 3, 1)).reshape(len(m_seq), height * width, channels)
    hidden = recurrent_scan(seq, stack_)
    final = hidden[len(m_seq) - 1]
    return transpose(final, (1, 0)).reshape(stack_.hidden_size, height, width)
