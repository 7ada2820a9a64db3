#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
DMN Referring-Expression Segmentation
=====================================

Segments the image region described by a natural-language query with a
Dynamic Multimodal Network, built on a small numpy autodiff core.

This package provides:
- Tensor engine with reverse-mode differentiation and gradient checking
- SRU / mSRU recurrent kernels and an LSTM baseline
- Visual, Language, Synthesis and Upsampling modules
- Two-stage training, cumulative mIoU / Pr@X evaluation, ablations
- Synthetic shapes-and-queries datasets and manifest I/O
"""

__version__ = "1.0.0"

from .core import *

__all__ = []
__all__.extend(getattr(__import__(f"{__name__}.core"), "core").__all__)
