#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Language Module
===============

Query encoding: tokenization, word embeddings, a recurrent scan, enriched
per-word features r_t = [e_t, h_t] and per-word dynamic filter banks

    f_{k,t} = sigmoid(W_{f_k} r_t + b_{f_k}),  k = 1..K

Each filter has one entry per channel of the map it is applied to (I_N, plus
the LOC channels when filters see coordinates).
"""

import logging
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from .errors import ContractViolation, DmnIOError
from .functional import embedding
from .recurrent import RecurrentStack, recurrent_scan
from .tensor import Tensor, concat, linear, sigmoid
from .utils import init_uniform

logger = logging.getLogger("dmn_segmentation.language")

PAD_TOKEN = "<pad>"
OOV_TOKEN = "<unk>"
PAD_ID = 0
OOV_ID = 1

_TOKEN_PATTERN = re.compile(r"[^\W_]+")


def normalize(query: str) -> List[str]:
    """Lowercase and split on whitespace and punctuation."""
    return _TOKEN_PATTERN.findall(query.lower())


class Vocabulary:
    """
    Dense token ids with reserved padding (0) and out-of-vocabulary (1) entries.

    The on-disk form is one token per line; the line number is the id.
    """

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tokens[:2] != [PAD_TOKEN, OOV_TOKEN]:
            raise ContractViolation(f"vocabulary must start with {PAD_TOKEN!r}, {OOV_TOKEN!r}, got {tokens[:2]}")
        if len(set(tokens)) != len(tokens):
            raise ContractViolation("vocabulary tokens must be unique")
        self.tokens: List[str] = tokens
        self.index: Dict[str, int] = {token: i for i, token in enumerate(tokens)}

    @classmethod
    def build(cls, corpus: Iterable[str], min_count: int = 1) -> "Vocabulary":
        """Vocabulary of every token seen at least ``min_count`` times, most frequent first."""
        counts = Counter()
        for query in corpus:
            counts.update(normalize(query))
        ranked = sorted((t for t, c in counts.items() if c >= min_count), key=lambda t: (-counts[t], t))
        vocab = cls([PAD_TOKEN, OOV_TOKEN] + ranked)
        logger.info(f"Vocabulary built: {len(vocab)} tokens from {sum(counts.values())} words")
        return vocab

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def id_of(self, token: str) -> int:
        return self.index.get(token, OOV_ID)

    def save(self, path: Union[str, Path]) -> None:
        try:
            Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")
        except OSError as e:
            raise DmnIOError(f"cannot write vocabulary {path}: {e}") from e

    @classmethod
    def load(cls, path: Union[str, Path]) -> "Vocabulary":
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise DmnIOError(f"cannot read vocabulary {path}: {e}") from e
        return cls(lines)


def tokenize(query: str, vocab: Vocabulary) -> List[int]:
    """
    Map a query onto token ids; unknown words become the OOV id.

    Raises:
        ContractViolation: if nothing is left after normalization
    """
    words = normalize(query)
    if not words:
        raise ContractViolation(f"query {query!r} is empty after normalization")
    return [vocab.id_of(w) for w in words]


@dataclass
class EmbeddingTable:
    weight: Tensor

    @property
    def vocab_size(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def initialize(cls, vocab_size: int, dim: int, rng: np.random.Generator, dtype=np.float64) -> "EmbeddingTable":
        return cls(weight=Tensor.parameter(init_uniform(rng, (vocab_size, dim), 1, dtype)))


@dataclass
class FilterGenerator:
    """
    K affine maps from r_t to filter vectors, stored as one stacked matrix.

    Rows k*F .. (k+1)*F - 1 of ``weight`` are W_{f_k}.
    """
    weight: Tensor
    bias: Tensor
    num_filters: int

    def __post_init__(self):
        if self.num_filters < 1:
            raise ContractViolation(f"K must be >= 1, got {self.num_filters}")
        rows = self.weight.shape[0]
        if rows % self.num_filters:
            raise ContractViolation(f"filter generator rows {rows} not divisible by K = {self.num_filters}")
        if self.bias.shape != (rows,):
            raise ContractViolation(f"filter generator bias must be ({rows},), got {self.bias.shape}")

    @property
    def filter_size(self) -> int:
        return self.weight.shape[0] // self.num_filters

    @property
    def input_size(self) -> int:
        return self.weight.shape[1]

    @classmethod
    def initialize(cls, num_filters: int, filter_size: int, input_size: int, rng: np.random.Generator,
                   dtype=np.float64) -> "FilterGenerator":
        rows = num_filters * filter_size
        return cls(
            weight=Tensor.parameter(init_uniform(rng, (rows, input_size), input_size, dtype)),
            bias=Tensor.parameter(init_uniform(rng, (rows,), input_size, dtype)),
            num_filters=num_filters,
        )

    def __call__(self, r_seq: Tensor) -> Tensor:
        """(T, R) features -> (T, K, F) filters in (0, 1)."""
        out = sigmoid(linear(r_seq, self.weight, self.bias))
        return out.reshape(r_seq.shape[0], self.num_filters, self.filter_size)


@dataclass
class LanguageOutput:
    """
    Attributes:
        r_seq: (T, width) enriched features, width = d_e + d_h (or d_h when r_t := h_t)
        filters: (T, K, F) dynamic filters, or None when no generator is attached
        hidden: (T, d_h) recurrent states
    """
    r_seq: Tensor
    filters: Optional[Tensor]
    hidden: Tensor

    @property
    def length(self) -> int:
        return self.r_seq.shape[0]


@dataclass
class LanguageModule:
    embeddings: EmbeddingTable
    stack: RecurrentStack
    generator: Optional[FilterGenerator] = None
    r_is_h: bool = False

    def __post_init__(self):
        if self.stack.input_size != self.embeddings.dim:
            raise ContractViolation(f"recurrent input size {self.stack.input_size} != embedding size "
                                    f"{self.embeddings.dim}")
        if self.generator is not None and self.generator.input_size != self.feature_size:
            raise ContractViolation(f"filter generator input {self.generator.input_size} != r_t width "
                                    f"{self.feature_size}")

    @property
    def feature_size(self) -> int:
        """Width of r_t."""
        if self.r_is_h:
            return self.stack.hidden_size
        return self.embeddings.dim + self.stack.hidden_size

    def __call__(self, ids: Sequence[int]) -> LanguageOutput:
        return lm_forward(ids, self)


def lm_forward(ids: Sequence[int], module: LanguageModule) -> LanguageOutput:
    """
    Encode token ids into enriched features and dynamic filters.

    Raises:
        ContractViolation: for an empty sequence or an id outside the vocabulary
    """
    if len(ids) == 0:
        raise ContractViolation("a query needs at least one token")
    words = embedding(module.embeddings.weight, ids)
    hidden = recurrent_scan(words, module.stack)
    r_seq = hidden if module.r_is_h else concat([words, hidden], axis=-1)
    filters = module.generator(r_seq) if module.generator is not None else None
    return LanguageOutput(r_seq=r_seq, filters=filters, hidden=hidden)
