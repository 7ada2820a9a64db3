#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Ablation Suite
==============

Trains the full network and each reduced variant on the same data with the
same seed, calibrates a threshold on the training split and scores the
held-out split. Produces one comparison row per variant.
"""

import logging
from typing import Dict, List, Optional, Sequence

import pandas as pd

from ..data.base import Example
from .config import STAGE_HIGH, AblationFlags, ABLATION_MODES, DmnConfig
from .errors import ContractViolation
from .metrics import PRECISION_LEVELS, EvalReport, calibrate_threshold, evaluate
from .training import train_two_stage

logger = logging.getLogger("dmn_segmentation.ablation")

FULL_MODEL = "dmn"
ALL_MODES = (FULL_MODEL,) + ABLATION_MODES

MODE_LABELS = {
    FULL_MODEL: "Full DMN",
    "only_vm": "Only VM",
    "r_is_h": "Only h_t in LM and SM",
    "no_skip": "No skip connections in UM",
    "no_filters": "No dynamic filters",
    "no_rt_concat": "No concatenation of r_t",
}


def run_variant(config: DmnConfig, mode: str, train_set: Sequence[Example],
                eval_set: Sequence[Example], workers: int = 1) -> EvalReport:
    variant = config.replace(ablation=AblationFlags.for_mode(mode))
    logger.info(f"Ablation variant {mode}: training both stages")
    _, high = train_two_stage(variant, train_set)
    threshold = calibrate_threshold(high.model, train_set, STAGE_HIGH, workers)
    return evaluate(high.model, eval_set, threshold, STAGE_HIGH, workers)


def run_ablation(config: DmnConfig, train_set: Sequence[Example], eval_set: Sequence[Example],
                 modes: Optional[Sequence[str]] = None, workers: int = 1) -> pd.DataFrame:
    """
    Returns:
        DataFrame with columns mode, variant, cumulative_miou, mean_iou,
        Pr@0.5 .. Pr@0.9, threshold
    """
    modes = list(modes or ALL_MODES)
    unknown = [m for m in modes if m not in ALL_MODES]
    if unknown:
        raise ContractViolation(f"unknown ablation mode {unknown[0]!r}; expected one of {ALL_MODES}")
    if not train_set or not eval_set:
        raise ContractViolation("ablation needs non-empty training and evaluation splits")

    rows: List[Dict[str, object]] = []
    for mode in modes:
        report = run_variant(config, mode, train_set, eval_set, workers)
        row: Dict[str, object] = {"mode": mode, "variant": MODE_LABELS[mode],
                                  "cumulative_miou": report.cumulative_miou, "mean_iou": report.mean_iou}
        row.update({f"Pr@{x:.1f}": report.precision_at[x] for x in PRECISION_LEVELS})
        row["threshold"] = report.threshold
        rows.append(row)
    return pd.DataFrame(rows)
