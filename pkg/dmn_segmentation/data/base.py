#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Dataset Interfaces
==================

Example records and the abstract source interface shared by the synthetic
generator and the manifest loader.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Iterator, List, Optional

import numpy as np

SHAPES = ("circle", "square", "triangle")

COLORS = {
    "red": (220, 40, 40),
    "green": (40, 180, 60),
    "blue": (40, 80, 220),
    "yellow": (230, 210, 40),
}

SIDES = ("left", "right", "top", "bottom")

BACKGROUND = (0, 0, 0)


@dataclass(frozen=True)
class SceneObject:
    """One rendered object; ``radius`` is half its bounding-box side."""
    shape: str
    color: str
    cx: int
    cy: int
    radius: int

    @property
    def bbox(self):
        """(top, left, bottom, right), inclusive."""
        return (self.cy - self.radius, self.cx - self.radius, self.cy + self.radius, self.cx + self.radius)

    def to_dict(self) -> dict:
        return {"shape": self.shape, "color": self.color, "cx": self.cx, "cy": self.cy, "radius": self.radius}


@dataclass
class Example:
    """
    One image-query pair.

    Attributes:
        image: uint8 RGB (3, H, W)
        query: Referring expression
        mask: uint8 (H, W) in {0, 1}, the referred object's pixels
        objects: Scene metadata (empty for external datasets)
        example_id: Stable name used for file names
    """
    image: np.ndarray
    query: str
    mask: np.ndarray
    objects: List[SceneObject] = field(default_factory=list)
    example_id: Optional[str] = None

    @property
    def size(self):
        return self.mask.shape


class ExampleSource(ABC):
    """Anything that yields examples in a fixed order."""

    @abstractmethod
    def __len__(self) -> int:
        pass

    @abstractmethod
    def __iter__(self) -> Iterator[Example]:
        pass

    def to_list(self) -> List[Example]:
        return list(iter(self))
