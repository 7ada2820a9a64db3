#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Synthetic Referring-Expression Scenes
=====================================

Deterministic generator of shapes-and-queries examples. A scene holds 2-4
non-overlapping objects (circle, square, triangle; red, green, blue, yellow)
and one query in one of three forms:

    "<color> <shape>"
    "<shape> on the <side>"
    "<color> <shape> on the <side>"

Distractors share the target's color or shape so that the attribute alone is
often ambiguous. Every emitted query is checked against ``resolve_query`` and
refers to exactly one object. Rasterization has no anti-aliasing, so masks
are exact.
"""

import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..core.errors import ContractViolation, GenerationError
from .base import BACKGROUND, COLORS, SHAPES, SIDES, Example, ExampleSource, SceneObject

logger = logging.getLogger("dmn_segmentation.synthetic")

# Extremes closer than this (pixels) do not establish "on the <side>"
SIDE_MARGIN = 2

QUERY_FORMS = ("color_shape", "shape_side", "color_shape_side")

SeedLike = Union[int, np.random.SeedSequence]


@dataclass
class SceneSpec:
    """
    Attributes:
        height / width: Canvas size
        min_objects / max_objects: Object count range
        min_separation: Minimum gap between object bounding boxes
        min_radius / max_radius: Half-side range; None derives it from the canvas
        distractor_probability: Chance that a non-target copies the target's color or shape
        max_retries: Scene attempts before giving up
    """
    height: int = 32
    width: int = 32
    min_objects: int = 2
    max_objects: int = 4
    shapes: Tuple[str, ...] = SHAPES
    colors: Tuple[str, ...] = tuple(COLORS)
    min_separation: int = 2
    min_radius: Optional[int] = None
    max_radius: Optional[int] = None
    distractor_probability: float = 0.7
    max_retries: int = 100

    def __post_init__(self):
        self.shapes = tuple(self.shapes)
        self.colors = tuple(self.colors)
        short_side = min(self.height, self.width)
        if self.min_radius is None:
            self.min_radius = max(2, short_side // 12)
        if self.max_radius is None:
            self.max_radius = max(self.min_radius, short_side // 6)
        if self.height < 4 or self.width < 4:
            raise ContractViolation(f"canvas must be at least 4x4, got {self.height}x{self.width}")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ContractViolation(f"object count range must satisfy 1 <= min <= max, "
                                    f"got [{self.min_objects}, {self.max_objects}]")
        if not 1 <= self.min_radius <= self.max_radius:
            raise ContractViolation(f"radius range must satisfy 1 <= min <= max, "
                                    f"got [{self.min_radius}, {self.max_radius}]")
        if 2 * self.max_radius + 1 > short_side:
            raise GenerationError(f"objects of radius {self.max_radius} do not fit a {self.height}x{self.width} canvas")
        for shape in self.shapes:
            if shape not in SHAPES:
                raise ContractViolation(f"unknown shape {shape!r}; expected one of {SHAPES}")
        for color in self.colors:
            if color not in COLORS:
                raise ContractViolation(f"unknown color {color!r}; expected one of {tuple(COLORS)}")


# ----------------------------------------------------------------------
# Rasterization
# ----------------------------------------------------------------------

def rasterize(obj: SceneObject, height: int, width: int) -> np.ndarray:
    """Boolean (H, W) footprint of one object."""
    ys, xs = np.mgrid[0:height, 0:width]
    dx = xs - obj.cx
    dy = ys - obj.cy
    r = obj.radius
    if obj.shape == "circle":
        return dx * dx + dy * dy <= r * r
    if obj.shape == "square":
        return (np.abs(dx) <= r) & (np.abs(dy) <= r)
    if obj.shape == "triangle":
        # Apex at the top, base on the bottom row of the bounding box.
        depth = dy + r
        return (depth >= 0) & (depth <= 2 * r) & (2 * np.abs(dx) <= depth)
    raise ContractViolation(f"unknown shape {obj.shape!r}")


def render_scene(objects: Sequence[SceneObject], height: int, width: int) -> np.ndarray:
    """uint8 RGB (3, H, W) with objects painted over the background."""
    image = np.empty((3, height, width), dtype=np.uint8)
    image[:] = np.asarray(BACKGROUND, dtype=np.uint8)[:, None, None]
    for obj in objects:
        footprint = rasterize(obj, height, width)
        for channel, value in enumerate(COLORS[obj.color]):
            image[channel][footprint] = value
    return image


# ----------------------------------------------------------------------
# Query interpretation
# ----------------------------------------------------------------------

def format_query(color: Optional[str], shape: str, side: Optional[str]) -> str:
    words = ([color] if color else []) + [shape]
    if side:
        words += ["on", "the", side]
    return " ".join(words)


def parse_query(query: str) -> Tuple[Optional[str], str, Optional[str]]:
    """Inverse of ``format_query``: (color, shape, side)."""
    words = query.lower().split()
    color = words.pop(0) if words and words[0] in COLORS else None
    if not words or words[0] not in SHAPES:
        raise ContractViolation(f"query {query!r} does not name a shape")
    shape = words.pop(0)
    side = None
    if words:
        if len(words) != 3 or words[:2] != ["on", "the"] or words[2] not in SIDES:
            raise ContractViolation(f"query {query!r} has an unrecognized spatial phrase")
        side = words[2]
    return color, shape, side


def _side_key(obj: SceneObject, side: str) -> int:
    """Larger is further towards ``side``."""
    return {"left": -obj.cx, "right": obj.cx, "top": -obj.cy, "bottom": obj.cy}[side]


def _on_half(obj: SceneObject, side: str, height: int, width: int) -> bool:
    # Pixel centres sit at +0.5; compare doubled coordinates to stay in integers.
    x2, y2 = 2 * obj.cx + 1, 2 * obj.cy + 1
    margin2 = 2 * SIDE_MARGIN
    return {"left": x2 < width - margin2, "right": x2 > width + margin2,
            "top": y2 < height - margin2, "bottom": y2 > height + margin2}[side]


def resolve_query(objects: Sequence[SceneObject], color: Optional[str], shape: str, side: Optional[str],
                  height: int, width: int) -> List[SceneObject]:
    """
    Every object the query could refer to (exactly one for a valid query).

    Among several attribute matches, a side picks the extreme object, which
    must lead the runner-up by more than SIDE_MARGIN pixels; otherwise all
    tied objects are returned. A single match must lie on that half of the
    canvas.
    """
    candidates = [o for o in objects if o.shape == shape and (color is None or o.color == color)]
    if side is None or not candidates:
        return candidates
    if len(candidates) == 1:
        return candidates if _on_half(candidates[0], side, height, width) else []
    ranked = sorted(candidates, key=lambda o: _side_key(o, side), reverse=True)
    lead = _side_key(ranked[0], side) - _side_key(ranked[1], side)
    if lead > SIDE_MARGIN:
        return [ranked[0]]
    return [o for o in ranked if _side_key(ranked[0], side) - _side_key(o, side) <= SIDE_MARGIN]


def is_unambiguous(example: Example) -> bool:
    color, shape, side = parse_query(example.query)
    height, width = example.mask.shape
    return len(resolve_query(example.objects, color, shape, side, height, width)) == 1


# ----------------------------------------------------------------------
# Generation
# ----------------------------------------------------------------------

def build_example(objects: Sequence[SceneObject], query: str, height: int, width: int,
                  example_id: Optional[str] = None) -> Example:
    """
    Render a scene and the mask of the query's unique referent.

    Raises:
        ContractViolation: if the query matches zero or several objects
    """
    color, shape, side = parse_query(query)
    referents = resolve_query(objects, color, shape, side, height, width)
    if len(referents) != 1:
        raise ContractViolation(f"query {query!r} matches {len(referents)} objects; exactly one is required")
    mask = rasterize(referents[0], height, width).astype(np.uint8)
    return Example(image=render_scene(objects, height, width), query=query, mask=mask,
                   objects=list(objects), example_id=example_id)


def _attributes(rng: np.random.Generator, spec: SceneSpec, count: int) -> List[Tuple[str, str]]:
    target = (spec.colors[rng.integers(len(spec.colors))], spec.shapes[rng.integers(len(spec.shapes))])
    attributes = [target]
    for _ in range(count - 1):
        color = spec.colors[rng.integers(len(spec.colors))]
        shape = spec.shapes[rng.integers(len(spec.shapes))]
        if rng.random() < spec.distractor_probability:
            if rng.random() < 0.5:
                color = target[0]
            else:
                shape = target[1]
        attributes.append((color, shape))
    return attributes


def _separated(a: SceneObject, b: SceneObject, gap: int) -> bool:
    reach = a.radius + b.radius + gap
    return abs(a.cx - b.cx) > reach or abs(a.cy - b.cy) > reach


def _place(rng: np.random.Generator, spec: SceneSpec,
           attributes: Sequence[Tuple[str, str]], attempts: int = 200) -> Optional[List[SceneObject]]:
    placed: List[SceneObject] = []
    for color, shape in attributes:
        for _ in range(attempts):
            radius = int(rng.integers(spec.min_radius, spec.max_radius + 1))
            cx = int(rng.integers(radius, spec.width - radius))
            cy = int(rng.integers(radius, spec.height - radius))
            candidate = SceneObject(shape=shape, color=color, cx=cx, cy=cy, radius=radius)
            if all(_separated(candidate, other, spec.min_separation) for other in placed):
                placed.append(candidate)
                break
        else:
            return None
    return placed


def _choose_query(rng: np.random.Generator, target: SceneObject, objects: Sequence[SceneObject],
                  spec: SceneSpec) -> Optional[str]:
    for form in [str(f) for f in rng.permutation(QUERY_FORMS)]:
        color = target.color if form != "shape_side" else None
        sides = [None] if form == "color_shape" else [str(s) for s in rng.permutation(SIDES)]
        for side in sides:
            referents = resolve_query(objects, color, target.shape, side, spec.height, spec.width)
            if referents == [target]:
                return format_query(color, target.shape, side)
    return None


def generate_example(seed: SeedLike, spec: Optional[SceneSpec] = None, example_id: Optional[str] = None) -> Example:
    """
    One scene and an unambiguous query, fully determined by ``seed``.

    Raises:
        GenerationError: if no valid scene is found within ``spec.max_retries`` attempts
    """
    spec = spec or SceneSpec()
    rng = np.random.default_rng(seed)
    for attempt in range(spec.max_retries):
        count = int(rng.integers(spec.min_objects, spec.max_objects + 1))
        objects = _place(rng, spec, _attributes(rng, spec, count))
        if objects is None:
            continue
        target = objects[0]
        query = _choose_query(rng, target, objects, spec)
        if query is None:
            continue
        order = rng.permutation(len(objects))
        objects = [objects[i] for i in order]
        if attempt:
            logger.debug(f"Scene {example_id or seed} needed {attempt + 1} attempts")
        return build_example(objects, query, spec.height, spec.width, example_id)
    raise GenerationError(f"no unambiguous {spec.height}x{spec.width} scene with "
                          f"{spec.min_objects}-{spec.max_objects} objects after {spec.max_retries} attempts")


def generate_examples(count: int, spec: Optional[SceneSpec] = None, master_seed: int = 0) -> List[Example]:
    """``count`` examples, each seeded by a child of ``SeedSequence(master_seed)``."""
    if count < 0:
        raise ContractViolation(f"count must be >= 0, got {count}")
    children = np.random.SeedSequence(master_seed).spawn(count)
    examples = [generate_example(child, spec, f"ex_{i:05d}") for i, child in enumerate(children)]
    logger.info(f"Generated {count} synthetic examples (master seed {master_seed})")
    return examples


@dataclass
class SyntheticSource(ExampleSource):
    """Lazily generated examples; index i always yields the same example."""
    count: int
    spec: SceneSpec = field(default_factory=SceneSpec)
    master_seed: int = 0

    def __post_init__(self):
        self._children = np.random.SeedSequence(self.master_seed).spawn(self.count)

    def __len__(self) -> int:
        return self.count

    def __getitem__(self, index: int) -> Example:
        return generate_example(self._children[index], self.spec, f"ex_{index:05d}")

    def __iter__(self) -> Iterator[Example]:
        for i in range(self.count):
            yield self[i]
