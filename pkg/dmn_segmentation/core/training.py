#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Two-Stage Training
==================

Stage "low" trains the Visual, Language and Synthesis modules against ground
truth masks downsampled to 1/2^N (nearest neighbour). Stage "high" loads the
stage-low checkpoint and trains the Upsampling Module at full resolution,
optionally end to end.

One image-query pair per optimizer step; Adam with a reduce-on-plateau
schedule monitored on the validation loss (training loss without a
validation split). Loss curves are written next to the checkpoint as CSV.
"""

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..data.base import Example
from .config import STAGE_HIGH, STAGE_LOW, DmnConfig
from .errors import ContractViolation
from .language import Vocabulary
from .model import DmnModel
from .optim import AdamState, PlateauScheduler, adam_step
from .tensor import Tensor, as_tensor, clip, log, log_sigmoid, no_grad
from .utils import downsample_mask_nearest, make_rng, prepare_image, resolve_dtype

logger = logging.getLogger("dmn_segmentation.training")

PROBABILITY_EPS = 1e-7


def bce_loss(scores, gt: np.ndarray, pos_weight: float = 1.0, from_logits: bool = False) -> Tensor:
    """
    Mean per-pixel weighted binary cross-entropy.

        loss = -mean(pos_weight * y log p + (1 - y) log(1 - p))

    Args:
        scores: Probabilities in [0, 1] (clipped to [eps, 1 - eps]) or logits
            when ``from_logits``; shape (h, w) or (1, h, w)
        gt: Binary mask at the same resolution
        pos_weight: Multiplier of the positive-pixel term
        from_logits: Interpret ``scores`` as pre-sigmoid values

    Raises:
        ContractViolation: on resolution mismatch or a non-binary mask
    """
    scores = as_tensor(scores)
    target = np.asarray(gt)
    if target.ndim == 2 and scores.ndim == 3:
        target = target[None]
    if scores.shape != target.shape:
        hint = ""
        if target.ndim >= 2 and scores.ndim >= 2 and target.shape[-1] > scores.shape[-1]:
            factor = target.shape[-1] // max(1, scores.shape[-1])
            hint = (f"; low-resolution scores need the ground truth downsampled by {factor} "
                    f"(nearest neighbour) first")
        raise ContractViolation(f"score map shape {scores.shape} != ground truth shape {target.shape}{hint}")
    if not np.isin(target, (0, 1)).all():
        raise ContractViolation("ground truth mask must be binary (0/1)")
    if pos_weight <= 0:
        raise ContractViolation(f"pos_weight must be > 0, got {pos_weight}")

    y = target.astype(scores.dtype)
    if from_logits:
        log_p = log_sigmoid(scores)
        log_not_p = log_sigmoid(-scores)
    else:
        p = clip(scores, PROBABILITY_EPS, 1.0 - PROBABILITY_EPS)
        log_p = log(p)
        log_not_p = log(1.0 - p)
    per_pixel = log_p * (pos_weight * y) + log_not_p * (1.0 - y)
    return -per_pixel.mean()


@dataclass
class PreparedExample:
    image: np.ndarray
    ids: List[int]
    target: np.ndarray


@dataclass
class TrainingResult:
    model: DmnModel
    curve: pd.DataFrame
    checkpoint: Optional[Path] = None


@dataclass
class EpochRecord:
    epoch: int
    stage: str
    train_loss: float
    val_loss: Optional[float]
    learning_rate: float
    seconds: float


class DmnTrainer:
    """
    Runs epochs of single-example Adam steps for one stage.

    The shuffle order comes from a generator seeded by ``config.seed`` so a
    run is bit-reproducible.
    """

    def __init__(self, model: DmnModel, stage: Optional[str] = None):
        self.model = model
        self.config = model.config
        self.stage = stage or self.config.stage
        opt = self.config.optimizer
        self.params = model.trainable_parameters(self.stage)
        self.state = AdamState(learning_rate=opt.learning_rate, beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps)
        self.scheduler = PlateauScheduler(patience_epochs=opt.patience_epochs,
                                          reduction_factor=opt.reduction_factor)
        self.rng = make_rng(self.config.seed)
        self.records: List[EpochRecord] = []
        self._cache: Dict[int, PreparedExample] = {}
        self.logger = logging.getLogger("dmn_segmentation.training.trainer")
        self.logger.info(f"Trainer for stage {self.stage}: {len(self.params)} tensors, "
                         f"{sum(p.size for p in self.params.values()):,} trainable values")

    def prepare(self, example: Example) -> PreparedExample:
        key = id(example)
        if key not in self._cache:
            image = prepare_image(example.image, resolve_dtype(self.config.dtype))
            target = np.asarray(example.mask, dtype=np.uint8)
            if self.stage == STAGE_LOW:
                target = downsample_mask_nearest(target, self.model.reduction)
            self._cache[key] = PreparedExample(image=image, ids=self.model.encode_query(example.query),
                                               target=target)
        return self._cache[key]

    def example_loss(self, example: Example) -> Tensor:
        prepared = self.prepare(example)
        logits = self.model.forward_logits(prepared.image, prepared.ids, self.stage)
        return bce_loss(logits, prepared.target, self.config.optimizer.pos_weight, from_logits=True)

    def train_epoch(self, examples: Sequence[Example]) -> float:
        order = self.rng.permutation(len(examples))
        total = 0.0
        for index in order:
            loss = self.example_loss(examples[index])
            loss.backward()
            adam_step(self.params, self.state)
            value = loss.item()
            total += value
            self.logger.debug(f"step {self.state.step} (example {index}): loss={value:.6f}")
        return total / len(examples)

    def mean_loss(self, examples: Sequence[Example]) -> float:
        with no_grad():
            return float(np.mean([self.example_loss(ex).item() for ex in examples]))

    def fit(self, train_set: Sequence[Example], val_set: Optional[Sequence[Example]] = None,
            epochs: Optional[int] = None) -> pd.DataFrame:
        """
        Train for ``epochs`` (default: the stage's configured count).

        Returns:
            Loss curve, one row per epoch
        """
        if not train_set:
            raise ContractViolation("training set is empty")
        opt = self.config.optimizer
        if epochs is None:
            epochs = opt.epochs_low if self.stage == STAGE_LOW else opt.epochs_high
        for epoch in range(1, epochs + 1):
            started = time.perf_counter()
            lr = self.state.learning_rate
            train_loss = self.train_epoch(train_set)
            val_loss = self.mean_loss(val_set) if val_set else None
            monitored = val_loss if val_loss is not None else train_loss
            self.scheduler.step(monitored, self.state)
            record = EpochRecord(epoch=epoch, stage=self.stage, train_loss=train_loss, val_loss=val_loss,
                                 learning_rate=lr, seconds=time.perf_counter() - started)
            self.records.append(record)
            val_text = f", val_loss={val_loss:.5f}" if val_loss is not None else ""
            self.logger.info(f"[{self.stage}] epoch {epoch}/{epochs}: train_loss={train_loss:.5f}{val_text}, "
                             f"lr={lr:.3g} ({record.seconds:.1f}s)")
        return self.curve()

    def curve(self) -> pd.DataFrame:
        return pd.DataFrame([r.__dict__ for r in self.records],
                            columns=["epoch", "stage", "train_loss", "val_loss", "learning_rate", "seconds"])


def loss_curve_path(checkpoint: Union[str, Path]) -> Path:
    checkpoint = Path(checkpoint)
    return checkpoint.with_name(checkpoint.stem + ".loss.csv")


def train(config: DmnConfig, train_set: Sequence[Example], val_set: Optional[Sequence[Example]] = None,
          resume: Optional[Union[str, Path]] = None, out: Optional[Union[str, Path]] = None,
          epochs: Optional[int] = None) -> TrainingResult:
    """
    Run one training stage.

    Stage "low" builds a fresh model (vocabulary from the training queries)
    unless ``resume`` is given. Stage "high" requires the stage-low checkpoint
    in ``resume``; its architecture must match ``config``.

    Raises:
        ContractViolation: empty training set, or stage high without a checkpoint
        CheckpointMismatchError: checkpoint architecture differs from ``config``
    """
    if not train_set:
        raise ContractViolation("training set is empty")
    if config.stage == STAGE_HIGH and resume is None:
        raise ContractViolation("stage 'high' needs --resume pointing at the stage 'low' checkpoint")

    if resume is not None:
        model = DmnModel.from_checkpoint(resume, config)
    else:
        vocab = Vocabulary.build(ex.query for ex in train_set)
        model = DmnModel.build(config, vocab)

    logger.info(f"Training stage {config.stage} on {len(train_set)} examples"
                + (f" (validation: {len(val_set)})" if val_set else ""))
    trainer = DmnTrainer(model, config.stage)
    curve = trainer.fit(train_set, val_set, epochs)

    checkpoint = None
    if out is not None:
        checkpoint = model.save(out, {"stage": config.stage, "epochs": len(curve)})
        curve_file = loss_curve_path(checkpoint)
        curve.to_csv(curve_file, index=False)
        logger.info(f"Loss curve written: {curve_file}")
    return TrainingResult(model=model, curve=curve, checkpoint=checkpoint)


def train_two_stage(config: DmnConfig, train_set: Sequence[Example],
                    val_set: Optional[Sequence[Example]] = None,
                    out_dir: Optional[Union[str, Path]] = None) -> Tuple[TrainingResult, TrainingResult]:
    """
    Low-resolution stage followed by UM training; returns both results.

    Without ``out_dir`` the stage-low model is handed to stage high in memory.
    """
    low_config = config.replace(stage=STAGE_LOW)
    high_config = config.replace(stage=STAGE_HIGH)
    if out_dir is not None:
        out_dir = Path(out_dir)
        low = train(low_config, train_set, val_set, out=out_dir / "dmn_low.ckpt")
        high = train(high_config, train_set, val_set, resume=low.checkpoint, out=out_dir / "dmn_high.ckpt")
        return low, high

    low = train(low_config, train_set, val_set)
    model = low.model
    model.config = high_config
    trainer = DmnTrainer(model, STAGE_HIGH)
    high = TrainingResult(model=model, curve=trainer.fit(train_set, val_set))
    return low, high
