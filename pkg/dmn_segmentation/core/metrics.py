#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Segmentation Metrics
====================

Cumulative mIoU (total intersection over total union across the set),
Pr@X (percentage of examples whose IoU is strictly higher than X) and
threshold calibration by sweeping {0.01 k : k = 1..99}.

Examples whose prediction and ground truth are both empty have union 0; they
are excluded from every sum and from the Pr@X denominator.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..data.base import Example
from .config import STAGE_LOW
from .errors import ContractViolation
from .functional import upsample_to
from .model import DmnModel
from .tensor import Tensor, no_grad
from .upsample import binarize

logger = logging.getLogger("dmn_segmentation.metrics")

PRECISION_LEVELS = (0.5, 0.6, 0.7, 0.8, 0.9)
CALIBRATION_GRID = tuple(k / 100.0 for k in range(1, 100))


@dataclass
class EvalReport:
    """
    Attributes:
        cumulative_miou: sum(I) / sum(U) over the set
        mean_iou: Per-example IoU averaged (reported alongside, not the headline)
        precision_at: X -> percentage of examples with IoU > X
        threshold: Binarization threshold used
        per_example_iou: IoU per example, NaN where the union is empty
    """
    cumulative_miou: float
    mean_iou: float
    precision_at: Dict[float, float]
    threshold: float
    per_example_iou: List[float] = field(default_factory=list)
    intersection_total: int = 0
    union_total: int = 0
    excluded: int = 0

    @property
    def count(self) -> int:
        return len(self.per_example_iou)

    def summary_rows(self) -> List[Tuple[str, str]]:
        rows = [("Cumulative mIoU", f"{self.cumulative_miou:.4f}"),
                ("Mean per-example IoU", f"{self.mean_iou:.4f}")]
        rows += [(f"Pr@{x:.1f}", f"{p:.2f}%") for x, p in self.precision_at.items()]
        rows += [("Threshold", f"{self.threshold:.2f}"),
                 ("Examples", f"{self.count} ({self.excluded} excluded, empty union)")]
        return rows

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"example": range(self.count), "iou": self.per_example_iou})


def intersection_union(prediction: np.ndarray, gt: np.ndarray) -> Tuple[int, int]:
    prediction = np.asarray(prediction).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if prediction.shape != gt.shape:
        raise ContractViolation(f"prediction shape {prediction.shape} != ground truth shape {gt.shape}")
    return int(np.count_nonzero(prediction & gt)), int(np.count_nonzero(prediction | gt))


def compute_report(pairs: Sequence[Tuple[int, int]], threshold: float) -> EvalReport:
    """
    Aggregate per-example (intersection, union) pairs.

    Raises:
        ContractViolation: for an empty list
    """
    if len(pairs) == 0:
        raise ContractViolation("cannot evaluate an empty dataset")
    intersections = np.array([p[0] for p in pairs], dtype=np.int64)
    unions = np.array([p[1] for p in pairs], dtype=np.int64)
    valid = unions > 0
    ious = np.full(len(pairs), np.nan)
    ious[valid] = intersections[valid] / unions[valid]

    union_total = int(unions.sum())
    intersection_total = int(intersections.sum())
    if not valid.any():
        logger.warning("Every example has an empty union; reporting mIoU 0.0")
        cumulative = 0.0
        mean_iou = 0.0
        precision = {x: 0.0 for x in PRECISION_LEVELS}
    else:
        cumulative = intersection_total / union_total
        scored = ious[valid]
        mean_iou = float(scored.mean())
        precision = {x: 100.0 * float(np.count_nonzero(scored > x)) / scored.size for x in PRECISION_LEVELS}

    return EvalReport(cumulative_miou=float(cumulative), mean_iou=mean_iou, precision_at=precision,
                      threshold=float(threshold), per_example_iou=[float(v) for v in ious],
                      intersection_total=intersection_total, union_total=union_total,
                      excluded=int(np.count_nonzero(~valid)))


def full_resolution_heatmap(model: DmnModel, image: np.ndarray, query: str,
                            stage: Optional[str] = None) -> np.ndarray:
    """Heatmap at image resolution; low-stage scores are bilinearly upsampled."""
    stage = stage or model.config.stage
    heatmap = model.predict_heatmap(image, query, stage)
    if stage == STAGE_LOW:
        steps = model.config.backbone.num_scales
        with no_grad():
            heatmap = upsample_to(Tensor(heatmap[None]), steps).data[0]
    return heatmap


def predict_heatmaps(model: DmnModel, dataset: Sequence[Example], stage: Optional[str] = None,
                     workers: int = 1) -> List[np.ndarray]:
    """Heatmaps in dataset order; ``workers`` > 1 fans out over a thread pool."""
    if workers <= 1:
        return [full_resolution_heatmap(model, ex.image, ex.query, stage) for ex in dataset]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ex: full_resolution_heatmap(model, ex.image, ex.query, stage), dataset))


def report_from_heatmaps(heatmaps: Sequence[np.ndarray], masks: Sequence[np.ndarray],
                         threshold: float) -> EvalReport:
    pairs = [intersection_union(binarize(h, threshold), m) for h, m in zip(heatmaps, masks)]
    return compute_report(pairs, threshold)


def evaluate(model: DmnModel, dataset: Sequence[Example], threshold: float = 0.5,
             stage: Optional[str] = None, workers: int = 1) -> EvalReport:
    """
    Score a model on a dataset at a fixed threshold.

    Raises:
        ContractViolation: empty dataset or threshold outside [0, 1]
    """
    if not dataset:
        raise ContractViolation("cannot evaluate an empty dataset")
    if not 0.0 <= threshold <= 1.0:
        raise ContractViolation(f"threshold must be in [0, 1], got {threshold}")
    heatmaps = predict_heatmaps(model, dataset, stage, workers)
    report = report_from_heatmaps(heatmaps, [ex.mask for ex in dataset], threshold)
    logger.info(f"Evaluated {report.count} examples at threshold {threshold:.2f}: "
                f"cumulative mIoU={report.cumulative_miou:.4f}, "
                + ", ".join(f"Pr@{x:.1f}={p:.1f}%" for x, p in report.precision_at.items()))
    return report


def sweep_thresholds(heatmaps: Sequence[np.ndarray], masks: Sequence[np.ndarray],
                     grid: Sequence[float] = CALIBRATION_GRID) -> pd.DataFrame:
    """Cumulative mIoU at every grid threshold."""
    if len(heatmaps) == 0:
        raise ContractViolation("cannot calibrate on an empty split")
    grid = np.asarray(grid, dtype=np.float64)
    intersections = np.zeros(grid.size, dtype=np.int64)
    unions = np.zeros(grid.size, dtype=np.int64)
    for heatmap, mask in zip(heatmaps, masks):
        values = np.asarray(heatmap).reshape(-1)
        gt = np.asarray(mask).reshape(-1).astype(bool)
        if values.size != gt.size:
            raise ContractViolation(f"heatmap size {np.shape(heatmap)} != mask size {np.shape(mask)}")
        predicted = values[None, :] >= grid[:, None]
        intersections += np.count_nonzero(predicted & gt[None, :], axis=1)
        unions += np.count_nonzero(predicted | gt[None, :], axis=1)
    miou = np.where(unions > 0, intersections / np.maximum(unions, 1), 0.0)
    return pd.DataFrame({"threshold": grid, "intersection": intersections, "union": unions, "miou": miou})


def calibrate_from_heatmaps(heatmaps: Sequence[np.ndarray], masks: Sequence[np.ndarray]) -> float:
    """Grid threshold maximizing cumulative mIoU; ties go to the smallest threshold."""
    sweep = sweep_thresholds(heatmaps, masks)
    for row in sweep.itertuples(index=False):
        logger.debug(f"calibration theta={row.threshold:.2f}: mIoU={row.miou:.5f}")
    best = int(np.argmax(sweep["miou"].to_numpy()))
    theta = float(sweep["threshold"].iloc[best])
    logger.info(f"Calibrated threshold {theta:.2f} (cumulative mIoU {sweep['miou'].iloc[best]:.4f})")
    return theta


def calibrate_threshold(model: DmnModel, split: Sequence[Example], stage: Optional[str] = None,
                        workers: int = 1) -> float:
    if not split:
        raise ContractViolation("cannot calibrate on an empty split")
    heatmaps = predict_heatmaps(model, split, stage, workers)
    return calibrate_from_heatmaps(heatmaps, [ex.mask for ex in split])
