#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Parameter Checkpoints
=====================

File layout: one line of JSON text (the header) terminated by a newline,
followed by raw little-endian float32 payloads in header order.

Header fields:
- format / version: file identification
- metadata: free-form JSON (configuration, vocabulary, training stage)
- tensors: list of {"name", "shape", "offset"}; offsets are byte offsets
  into the payload that follows the header line
"""

import json
import logging
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np

from .errors import CheckpointIOError
from .tensor import Tensor

logger = logging.getLogger("dmn_segmentation.checkpoint")

CHECKPOINT_FORMAT = "dmn-checkpoint"
CHECKPOINT_VERSION = 1
PAYLOAD_DTYPE = np.dtype("<f4")


def save_checkpoint(path: Union[str, Path], params: Mapping[str, Union[Tensor, np.ndarray]],
                    metadata: Dict[str, Any] = None) -> Path:
    """
    Write named parameters (in mapping order) to ``path``.

    Returns:
        The written path
    """
    path = Path(path)
    entries = []
    payloads = []
    offset = 0
    for name, value in params.items():
        array = value.data if isinstance(value, Tensor) else np.asarray(value)
        payload = np.ascontiguousarray(array, dtype=PAYLOAD_DTYPE).tobytes()
        entries.append({"name": name, "shape": list(array.shape), "offset": offset})
        payloads.append(payload)
        offset += len(payload)

    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "metadata": metadata or {},
        "tensors": entries,
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(json.dumps(header, sort_keys=False).encode("utf-8"))
            f.write(b"\n")
            for payload in payloads:
                f.write(payload)
    except OSError as e:
        raise CheckpointIOError(f"cannot write checkpoint {path}: {e}") from e

    logger.info(f"Checkpoint written: {path} ({len(entries)} tensors, {offset} payload bytes)")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple["OrderedDict[str, np.ndarray]", Dict[str, Any]]:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Returns:
        (ordered name -> float32 array mapping, metadata dict)

    Raises:
        CheckpointIOError: if the file is missing, truncated or not a checkpoint
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            header_line = f.readline()
            payload = f.read()
    except OSError as e:
        raise CheckpointIOError(f"cannot read checkpoint {path}: {e}") from e

    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointIOError(f"malformed checkpoint header in {path}: {e}") from e
    if not isinstance(header, dict) or header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointIOError(f"{path} is not a {CHECKPOINT_FORMAT} file")

    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for index, entry in enumerate(header.get("tensors", [])):
        try:
            name = str(entry["name"])
            shape = tuple(int(s) for s in entry["shape"])
            offset = int(entry["offset"])
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointIOError(f"malformed tensor entry {index} in {path}: {e!r}") from e
        if offset < 0 or any(s < 0 for s in shape):
            raise CheckpointIOError(f"malformed tensor entry {index} in {path}: negative offset or shape")
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * PAYLOAD_DTYPE.itemsize
        if end > len(payload):
            raise CheckpointIOError(f"checkpoint {path} truncated while reading '{name}'")
        tensors[name] = np.frombuffer(payload, dtype=PAYLOAD_DTYPE, count=count,
                                     offset=offset).reshape(shape).copy()

    logger.debug(f"Checkpoint loaded: {path} ({len(tensors)} tensors)")
    return tensors, header.get("metadata", {})
