#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Model and Training Configuration
================================

All hyperparameters of a DMN run in one dataclass tree. A configuration plus
a seed reproduces a model exactly; configurations round-trip through JSON
field for field and are stored in checkpoint metadata.

Key Features:
- Presets: desk_scale (default), tiny (fast tests), full_scale
- Ablation flags for the five reduced variants
- Environment overrides (DMN_*) read from the process environment or .env
"""

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from .errors import CheckpointMismatchError, ContractViolation, DmnIOError
from .recurrent import SUPPORTED_CELLS
from .synthesis import LOC_CHANNELS
from .upsample import STAGES_FULL, STAGES_LOG2
from .utils import SUPPORTED_DTYPES
from .visual import BackboneConfig

logger = logging.getLogger("dmn_segmentation.config")

STAGE_LOW = "low"
STAGE_HIGH = "high"
STAGES = (STAGE_LOW, STAGE_HIGH)

ABLATION_MODES = ("only_vm", "r_is_h", "no_skip", "no_filters", "no_rt_concat")

# Environment overrides: variable -> (config path, parser)
ENV_OVERRIDES = {
    "DMN_SEED": ("seed", int),
    "DMN_LEARNING_RATE": ("optimizer.learning_rate", float),
    "DMN_EPOCHS_LOW": ("optimizer.epochs_low", int),
    "DMN_EPOCHS_HIGH": ("optimizer.epochs_high", int),
    "DMN_POS_WEIGHT": ("optimizer.pos_weight", float),
    "DMN_DTYPE": ("dtype", str),
}

# Fields that change parameter shapes or the forward computation
ARCHITECTURE_FIELDS = (
    "backbone", "embedding_size", "hidden_size", "language_layers", "num_filters",
    "loc_channels", "filters_see_loc", "fusion_channels", "msru_layers", "msru_hidden",
    "decoder_channels", "um_stages", "cell", "ablation",
)


@dataclass
class AblationFlags:
    """Reduced variants of the full network."""
    only_vm: bool = False        # segment from I_N alone, query ignored
    r_is_h: bool = False         # r_t := h_t in the language and synthesis modules
    no_skip: bool = False        # decoder ignores I_n
    no_filters: bool = False     # fusion input drops F_t
    no_rt_concat: bool = False   # fusion input drops tiled r_t

    @classmethod
    def for_mode(cls, mode: str) -> "AblationFlags":
        if mode in ("dmn", "full", ""):
            return cls()
        if mode not in ABLATION_MODES:
            raise ContractViolation(f"unknown ablation mode {mode!r}; expected one of {('dmn',) + ABLATION_MODES}")
        return cls(**{mode: True})

    @property
    def active(self) -> List[str]:
        return [name for name in ABLATION_MODES if getattr(self, name)]


@dataclass
class OptimizerConfig:
    learning_rate: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience_epochs: int = 2
    reduction_factor: float = 10.0
    epochs_low: int = 10
    epochs_high: int = 5
    pos_weight: float = 1.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ContractViolation(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.pos_weight <= 0:
            raise ContractViolation(f"pos_weight must be > 0, got {self.pos_weight}")
        if self.epochs_low < 0 or self.epochs_high < 0:
            raise ContractViolation(f"epoch counts must be >= 0, got low={self.epochs_low}, high={self.epochs_high}")


@dataclass
class DmnConfig:
    """
    Complete DMN configuration.

    Attributes:
        backbone: Visual pyramid shape (N, C_1..C_N)
        embedding_size: d_e
        hidden_size: d_h of the language recurrent stack
        language_layers: Language stack depth
        num_filters: K dynamic filters per word
        loc_channels: C_loc
        filters_see_loc: Dynamic filters span [I_N, LOC] (False: I_N only)
        fusion_channels: C_m, number of 1x1 fusion kernels
        msru_layers / msru_hidden: Multimodal recurrent stack shape
        decoder_channels: UM stage widths, None for halving
        um_stages: "full" (N - 1), "log2" or an explicit count
        cell: "sru" or "lstm" for both recurrent stacks
        stage: Training stage, "low" (no UM) or "high"
        end_to_end: Stage "high" also updates VM, LM and SM
    """
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    embedding_size: int = 64
    hidden_size: int = 64
    language_layers: int = 2
    num_filters: int = 10
    loc_channels: int = LOC_CHANNELS
    filters_see_loc: bool = True
    fusion_channels: int = 64
    msru_layers: int = 3
    msru_hidden: int = 64
    decoder_channels: Optional[List[int]] = None
    um_stages: Union[str, int] = STAGES_FULL
    cell: str = "sru"
    ablation: AblationFlags = field(default_factory=AblationFlags)
    stage: str = STAGE_LOW
    end_to_end: bool = False
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        for name in ("embedding_size", "hidden_size", "language_layers", "num_filters",
                     "fusion_channels", "msru_layers", "msru_hidden"):
            if getattr(self, name) < 1:
                raise ContractViolation(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0 <= self.loc_channels <= LOC_CHANNELS:
            raise ContractViolation(f"loc_channels must be in [0, {LOC_CHANNELS}], got {self.loc_channels}")
        if self.cell not in SUPPORTED_CELLS:
            raise ContractViolation(f"cell must be one of {SUPPORTED_CELLS}, got {self.cell!r}")
        if self.stage not in STAGES:
            raise ContractViolation(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.dtype not in SUPPORTED_DTYPES:
            raise ContractViolation(f"dtype must be one of {sorted(SUPPORTED_DTYPES)}, got {self.dtype!r}")
        if isinstance(self.um_stages, str) and self.um_stages not in (STAGES_FULL, STAGES_LOG2):
            raise ContractViolation(f"um_stages must be 'full', 'log2' or an integer, got {self.um_stages!r}")

    @property
    def r_width(self) -> int:
        """Width of the enriched word feature r_t."""
        return self.hidden_size if self.ablation.r_is_h else self.embedding_size + self.hidden_size

    def replace(self, **changes) -> "DmnConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DmnConfig":
        """Build from a JSON mapping; unknown keys are rejected by name."""
        return _from_dict(cls, data, "")

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def save(self, path: Union[str, Path]) -> None:
        try:
            Path(path).write_text(self.to_json() + "\n", encoding="utf-8")
        except OSError as e:
            raise DmnIOError(f"cannot write config {path}: {e}") from e

    @classmethod
    def load(cls, path: Union[str, Path]) -> "DmnConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise DmnIOError(f"cannot read config {path}: {e}") from e
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ContractViolation(f"config {path} is not valid JSON: {e}") from e
        return cls.from_dict(data)

    def architecture(self) -> Dict[str, Any]:
        full = self.to_dict()
        return {name: full[name] for name in ARCHITECTURE_FIELDS}


def _from_dict(cls, data: Dict[str, Any], prefix: str):
    if not isinstance(data, dict):
        raise ContractViolation(f"config section '{prefix or 'root'}' must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = [key for key in data if key not in fields]
    if unknown:
        raise ContractViolation(f"unknown config key '{prefix}{unknown[0]}'")
    kwargs = {}
    for key, value in data.items():
        nested = _NESTED.get((cls, key))
        kwargs[key] = _from_dict(nested, value, f"{prefix}{key}.") if nested else value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ContractViolation(f"invalid config section '{prefix or 'root'}': {e}") from e


_NESTED = {
    (DmnConfig, "backbone"): BackboneConfig,
    (DmnConfig, "ablation"): AblationFlags,
    (DmnConfig, "optimizer"): OptimizerConfig,
}


def diff_architecture(expected: Dict[str, Any], actual: Dict[str, Any]) -> List[str]:
    """Human-readable list of differing architecture fields."""
    differences = []
    for name in ARCHITECTURE_FIELDS:
        if expected.get(name) != actual.get(name):
            differences.append(f"{name}: checkpoint={actual.get(name)!r} config={expected.get(name)!r}")
    return differences


def check_compatible(config: DmnConfig, checkpoint_config: Dict[str, Any]) -> None:
    """
    Raises:
        CheckpointMismatchError: listing every architecture field that differs
    """
    differences = diff_architecture(config.architecture(), DmnConfig.from_dict(checkpoint_config).architecture())
    if differences:
        raise CheckpointMismatchError(differences)


def apply_env_overrides(config: DmnConfig, environ: Optional[Dict[str, str]] = None) -> DmnConfig:
    """
    Apply DMN_* environment variables; invalid values are ignored with a warning.
    """
    environ = os.environ if environ is None else environ
    for variable, (path, parser) in ENV_OVERRIDES.items():
        raw = environ.get(variable)
        if raw is None or raw == "":
            continue
        section_name, _, attribute = path.rpartition(".")
        section = getattr(config, section_name) if section_name else config
        previous = getattr(section, attribute)
        try:
            value = parser(raw)
            setattr(section, attribute, value)
            section.__post_init__()
            if section is not config:
                config.__post_init__()
        except (ValueError, ContractViolation) as e:
            setattr(section, attribute, previous)
            logger.warning(f"Ignoring invalid {variable}={raw!r}: {e}; keeping {previous!r}")
            continue
        logger.info(f"Config override from {variable}: {path} = {value!r}")
    return config


# ----------------------------------------------------------------------
# Presets
# ----------------------------------------------------------------------

def desk_scale() -> DmnConfig:
    """Default configuration sized for CPU training on synthetic 64x64 scenes."""
    return DmnConfig()


def tiny() -> DmnConfig:
    """Small configuration for 32x32 scenes and fast tests."""
    return DmnConfig(
        backbone=BackboneConfig(num_scales=3, channels=[8, 16, 32]),
        embedding_size=32,
        hidden_size=32,
        language_layers=1,
        num_filters=4,
        fusion_channels=32,
        msru_layers=1,
        msru_hidden=32,
        optimizer=OptimizerConfig(learning_rate=1e-3),
    )


def full_scale() -> DmnConfig:
    """Full-size widths: d_e = d_h = 1000, K = 10, C_m = 1000, 3-layer mSRU of width 1000."""
    return DmnConfig(
        backbone=BackboneConfig(num_scales=5, channels=[64, 128, 256, 512, 1024]),
        embedding_size=1000,
        hidden_size=1000,
        language_layers=2,
        num_filters=10,
        fusion_channels=1000,
        msru_layers=3,
        msru_hidden=1000,
    )


PRESETS = {
    "desk_scale": desk_scale,
    "tiny": tiny,
    "full_scale": full_scale,
}


def load_config(source: Optional[str] = None, apply_env: bool = True) -> DmnConfig:
    """
    Resolve a config from a preset name or a JSON file (default: desk_scale).
    """
    if source is None:
        config = desk_scale()
    elif source in PRESETS:
        config = PRESETS[source]()
    else:
        config = DmnConfig.load(source)
    return apply_env_overrides(config) if apply_env else config
