#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Manifest Datasets
=================

On-disk layout:

    DIR/images/<id>.ppm      RGB image (P6)
    DIR/masks/<id>.pgm       ground truth, {0, 255} (P5)
    DIR/manifest.jsonl       {"image": path, "query": text, "mask": path} per line

Paths in the manifest are relative to DIR (absolute paths are accepted), so
exports of other referring-expression datasets load the same way.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Sequence, Union

from ..core.errors import DatasetIOError
from .base import Example, ExampleSource
from .netpbm import read_mask, read_ppm, write_mask, write_ppm

logger = logging.getLogger("dmn_segmentation.manifest")

MANIFEST_NAME = "manifest.jsonl"
REQUIRED_KEYS = ("image", "query", "mask")


def write_dataset(examples: Sequence[Example], directory: Union[str, Path]) -> Path:
    """
    Write images, masks and the manifest; returns the manifest path.
    """
    directory = Path(directory)
    records = []
    for i, example in enumerate(examples):
        name = example.example_id or f"ex_{i:05d}"
        image_rel = f"images/{name}.ppm"
        mask_rel = f"masks/{name}.pgm"
        write_ppm(example.image, directory / image_rel)
        write_mask(example.mask, directory / mask_rel)
        records.append({"image": image_rel, "query": example.query, "mask": mask_rel})

    manifest = directory / MANIFEST_NAME
    try:
        with open(manifest, "w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(record) + "\n")
    except OSError as e:
        raise DatasetIOError(f"cannot write manifest {manifest}: {e}") from e
    logger.info(f"Wrote {len(records)} examples to {directory}")
    return manifest


def _resolve(directory: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else directory / path


def _parse_line(line: str, number: int, manifest: Path) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise DatasetIOError(f"{manifest} line {number}: malformed JSON ({e.msg})") from e
    if not isinstance(record, dict):
        raise DatasetIOError(f"{manifest} line {number}: expected an object")
    missing = [key for key in REQUIRED_KEYS if not isinstance(record.get(key), str)]
    if missing:
        raise DatasetIOError(f"{manifest} line {number}: missing or non-string field '{missing[0]}'")
    return record


def load_dataset(directory: Union[str, Path]) -> List[Example]:
    """
    Read every manifest record in order.

    Raises:
        DatasetIOError: unreadable manifest, malformed line (with its number),
            missing or empty image/mask file (with its path), size mismatch
    """
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    try:
        lines = manifest.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise DatasetIOError(f"cannot read manifest {manifest}: {e}") from e

    examples = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        record = _parse_line(line, number, manifest)
        image_path = _resolve(directory, record["image"])
        mask_path = _resolve(directory, record["mask"])
        image = read_ppm(image_path)
        mask = read_mask(mask_path)
        if image.shape[1:] != mask.shape:
            raise DatasetIOError(f"{manifest} line {number}: image {image_path} is {image.shape[1:]} "
                                 f"but mask {mask_path} is {mask.shape}")
        examples.append(Example(image=image, query=record["query"], mask=mask, example_id=image_path.stem))
    logger.info(f"Loaded {len(examples)} examples from {directory}")
    return examples


@dataclass
class ManifestSource(ExampleSource):
    """Examples of a manifest directory, read once on first use."""
    directory: Union[str, Path]
    _examples: List[Example] = field(default=None, init=False, repr=False)

    def _load(self) -> List[Example]:
        if self._examples is None:
            self._examples = load_dataset(self.directory)
        return self._examples

    def __len__(self) -> int:
        return len(self._load())

    def __iter__(self) -> Iterator[Example]:
        return iter(self._load())
