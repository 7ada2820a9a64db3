#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Core Segmentation Logic
=======================

- tensor / functional / optim / gradcheck / checkpoint: numeric core
- recurrent: SRU, LSTM and the multimodal scan
- visual / language / synthesis / upsample / model: the network
- training / metrics / benchmark / ablation: experiments
"""

# Always available imports
from .errors import (CheckpointIOError, CheckpointMismatchError, ContractViolation, DatasetIOError,
                     DmnError, DmnIOError, GenerationError, NumericError)
from .tensor import Tensor, no_grad

__all__ = [
    "CheckpointIOError", "CheckpointMismatchError", "ContractViolation", "DatasetIOError",
    "DmnError", "DmnIOError", "GenerationError", "NumericError", "Tensor", "no_grad",
]

# Numeric core and model modules
try:
    from .functional import affine, bilinear_upsample_x2, conv2d, embedding
    from .optim import AdamState, PlateauScheduler, adam_step
    from .gradcheck import grad_check
    from .checkpoint import load_checkpoint, save_checkpoint
    from .recurrent import (LstmLayerWeights, RecurrentSpec, RecurrentStack, SruLayerWeights, lstm_scan,
                            lstm_step, msru_scan, param_count, sru_scan, sru_step)
    from .visual import BackboneConfig, FeaturePyramid, VisualModule, vm_forward
    from .language import FilterGenerator, LanguageOutput, Vocabulary, lm_forward, tokenize
    from .synthesis import SynthesisModule, filter_responses, make_loc, merge_step, sm_forward
    from .upsample import UmStageWeights, UpsamplingModule, binarize, scores_from_logits, um_forward, um_stage
    from .config import AblationFlags, DmnConfig, OptimizerConfig, load_config
    from .model import DmnModel
    __all__.extend([
        "affine", "bilinear_upsample_x2", "conv2d", "embedding",
        "AdamState", "PlateauScheduler", "adam_step", "grad_check", "load_checkpoint", "save_checkpoint",
        "LstmLayerWeights", "RecurrentSpec", "RecurrentStack", "SruLayerWeights", "lstm_scan", "lstm_step",
        "msru_scan", "param_count", "sru_scan", "sru_step",
        "BackboneConfig", "FeaturePyramid", "VisualModule", "vm_forward",
        "FilterGenerator", "LanguageOutput", "Vocabulary", "lm_forward", "tokenize",
        "SynthesisModule", "filter_responses", "make_loc", "merge_step", "sm_forward",
        "UmStageWeights", "UpsamplingModule", "binarize", "scores_from_logits", "um_forward", "um_stage",
        "AblationFlags", "DmnConfig", "OptimizerConfig", "load_config", "DmnModel",
    ])
except ImportError as e:
    import logging
    logger = logging.getLogger(__name__)
    logger.warning(f"Model modules unavailable due to missing dependencies: {e}")

# Training, evaluation and reports (need pandas and Pillow)
try:
    from .training import bce_loss, train, train_two_stage, DmnTrainer
    from .metrics import EvalReport, calibrate_threshold, evaluate
    from .benchmark import BenchmarkReport, bench_recurrent
    from .ablation import run_ablation
    __all__.extend(["bce_loss", "train", "train_two_stage", "DmnTrainer", "EvalReport", "calibrate_threshold",
                    "evaluate", "BenchmarkReport", "bench_recurrent", "run_ablation"])
except ImportError as e:
    import logging
    logger = logging.getLogger(__name__)
    logger.warning(f"Training and evaluation unavailable due to missing dependencies: {e}")
