#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Dataset Sources
===============

Example sources behind one interface:
- synthetic: deterministic shapes-and-queries scenes
- manifest: image/mask/query directories described by manifest.jsonl
"""

from .base import COLORS, SHAPES, SIDES, Example, ExampleSource, SceneObject
from .manifest import ManifestSource, load_dataset, write_dataset
from .netpbm import read_mask, read_pgm, read_ppm, write_heatmap, write_mask, write_pgm, write_ppm
from .synthetic import SceneSpec, SyntheticSource, build_example, generate_example, generate_examples

__all__ = [
    "COLORS", "SHAPES", "SIDES", "Example", "ExampleSource", "SceneObject",
    "ManifestSource", "load_dataset", "write_dataset",
    "read_mask", "read_pgm", "read_ppm", "write_heatmap", "write_mask", "write_pgm", "write_ppm",
    "SceneSpec", "SyntheticSource", "build_example", "generate_example", "generate_examples",
]
