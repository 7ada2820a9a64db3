#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Dynamic Multimodal Network
==========================

Assembles the four modules into one model:

    image --VM--> I_1..I_N
    query --LM--> r_t, f_{k,t}
    I_N, r_t, f_{k,t} --SM--> R_N
    R_N, I_1..I_N --UM--> heatmap

Stage "low" replaces the UM with a 1x1 head applied directly to R_N
(scores at 1/2^N resolution); stage "high" decodes to full resolution.
"""

import logging
from collections import OrderedDict
from contextlib import nullcontext
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import STAGE_HIGH, STAGE_LOW, STAGES, DmnConfig, check_compatible
from .errors import CheckpointIOError, ContractViolation
from .language import EmbeddingTable, FilterGenerator, LanguageModule, LanguageOutput, Vocabulary, tokenize
from .layers import Conv2dLayer, collect_parameters, load_parameters
from .recurrent import RecurrentStack
from .synthesis import SynthesisModule
from .tensor import Tensor, no_grad
from .upsample import UpsamplingModule, resolve_stage_count, scores_from_logits, um_logits
from .utils import make_rng, prepare_image, resolve_dtype
from .visual import VisualModule

logger = logging.getLogger("dmn_segmentation.model")

COMPONENTS = ("visual", "language", "synthesis", "lowres_head", "upsampling")
UPSTREAM_COMPONENTS = ("visual", "language", "synthesis")


@dataclass
class DmnModel:
    """
    Attributes:
        config: Architecture and training configuration
        vocab: Token vocabulary built from the training split
        visual: Visual Module
        language: Language Module, None when the query features are unused
        synthesis: Synthesis Module, None for the only_vm ablation
        lowres_head: 1x1 convolution scoring R_N at low resolution
        upsampling: Upsampling Module
    """
    config: DmnConfig
    vocab: Vocabulary
    visual: VisualModule
    language: Optional[LanguageModule]
    synthesis: Optional[SynthesisModule]
    lowres_head: Conv2dLayer
    upsampling: UpsamplingModule

    @classmethod
    def build(cls, config: DmnConfig, vocab: Vocabulary) -> "DmnModel":
        """Initialize every weight from ``config.seed``."""
        rng = make_rng(config.seed)
        dtype = resolve_dtype(config.dtype)
        flags = config.ablation
        backbone = config.backbone
        visual = VisualModule.build(backbone, rng, dtype)

        language = None
        synthesis = None
        top_channels = backbone.top_channels
        if not flags.only_vm:
            use_filters = not flags.no_filters
            use_rt = not flags.no_rt_concat
            synthesis_fusion_width = SynthesisModule.fusion_width(
                backbone.top_channels, config.num_filters, config.loc_channels, config.r_width,
                use_filters=use_filters, use_rt=use_rt)
            if use_filters or use_rt:
                embeddings = EmbeddingTable.initialize(len(vocab), config.embedding_size, rng, dtype)
                stack = RecurrentStack.build(config.cell, config.embedding_size, config.hidden_size,
                                             config.language_layers, rng, dtype)
                generator = None
                if use_filters:
                    filter_size = backbone.top_channels + (config.loc_channels if config.filters_see_loc else 0)
                    generator = FilterGenerator.initialize(config.num_filters, filter_size, config.r_width, rng, dtype)
                language = LanguageModule(embeddings=embeddings, stack=stack, generator=generator,
                                          r_is_h=flags.r_is_h)
            fusion = Conv2dLayer.initialize(synthesis_fusion_width, config.fusion_channels, 1, rng, dtype)
            msru = RecurrentStack.build(config.cell, config.fusion_channels, config.msru_hidden,
                                        config.msru_layers, rng, dtype)
            synthesis = SynthesisModule(fusion=fusion, msru=msru, use_filters=use_filters, use_rt=use_rt,
                                        filters_see_loc=config.filters_see_loc,
                                        loc_channels=config.loc_channels)
            top_channels = config.msru_hidden

        lowres_head = Conv2dLayer.initialize(top_channels, 1, 1, rng, dtype, activation=False)
        stages = resolve_stage_count(backbone.num_scales, config.um_stages)
        upsampling = UpsamplingModule.build(top_channels, backbone.channels, rng, stages,
                                            decoder_channels=config.decoder_channels,
                                            skip=not flags.no_skip, dtype=dtype)
        model = cls(config=config, vocab=vocab, visual=visual, language=language, synthesis=synthesis,
                    lowres_head=lowres_head, upsampling=upsampling)
        logger.info(f"Built DMN ({config.cell}, ablations={flags.active or 'none'}): "
                    + ", ".join(f"{k}={v:,}" for k, v in model.parameter_report().items()))
        return model

    # ------------------------------------------------------------------
    # Forward
    # ------------------------------------------------------------------

    @property
    def reduction(self) -> int:
        return self.config.backbone.reduction

    def encode_query(self, query: str) -> List[int]:
        return tokenize(query, self.vocab)

    def _language_output(self, ids: Sequence[int]) -> LanguageOutput:
        if self.language is not None:
            return self.language(ids)
        if len(ids) == 0:
            raise ContractViolation("a query needs at least one token")
        # Neither filters nor r_t are fused: only the word count drives the scan.
        empty = Tensor(np.zeros((len(ids), 0), dtype=resolve_dtype(self.config.dtype)))
        return LanguageOutput(r_seq=empty, filters=None, hidden=empty)

    def forward_logits(self, image, ids: Sequence[int], stage: Optional[str] = None) -> Tensor:
        """
        Pre-sigmoid scores for one image-query pair.

        Args:
            image: Float map (3, H, W) or a Tensor
            ids: Token ids of the query
            stage: "low" for (1, H/2^N, W/2^N), "high" for (1, H, W)

        Returns:
            Logit map
        """
        stage = stage or self.config.stage
        if stage not in STAGES:
            raise ContractViolation(f"stage must be one of {STAGES}, got {stage!r}")
        frozen = stage == STAGE_HIGH and not self.config.end_to_end
        with no_grad() if frozen else nullcontext():
            pyramid = self.visual(image)
            if self.synthesis is None:
                r_top = pyramid.top
            else:
                r_top = self.synthesis(pyramid.top, self._language_output(ids))
        if stage == STAGE_LOW:
            return self.lowres_head(r_top)
        return um_logits(r_top, pyramid, self.upsampling)

    def forward(self, image, ids: Sequence[int], stage: Optional[str] = None) -> Tensor:
        """Heatmap in (0, 1) at the stage's resolution."""
        return scores_from_logits(self.forward_logits(image, ids, stage))

    def predict_heatmap(self, image: np.ndarray, query: str, stage: Optional[str] = None) -> np.ndarray:
        """
        Inference on a raw uint8 (3, H, W) image; no graph is recorded.

        Returns:
            (h, w) probability map
        """
        ids = self.encode_query(query)
        x = prepare_image(image, resolve_dtype(self.config.dtype))
        with no_grad():
            heatmap = self.forward(x, ids, stage)
        return heatmap.data[0]

    # ------------------------------------------------------------------
    # Parameters
    # ------------------------------------------------------------------

    def _component_parameters(self, names: Sequence[str]) -> "OrderedDict[str, Tensor]":
        params: "OrderedDict[str, Tensor]" = OrderedDict()
        for name in names:
            component = getattr(self, name)
            if component is not None:
                params.update(collect_parameters(component, name))
        return params

    def parameters(self) -> "OrderedDict[str, Tensor]":
        return self._component_parameters(COMPONENTS)

    def trainable_parameters(self, stage: Optional[str] = None,
                             end_to_end: Optional[bool] = None) -> "OrderedDict[str, Tensor]":
        """
        Parameters updated in a stage: low trains everything except the UM;
        high trains the UM, plus the upstream modules when end-to-end.
        """
        stage = stage or self.config.stage
        end_to_end = self.config.end_to_end if end_to_end is None else end_to_end
        if stage == STAGE_LOW:
            return self._component_parameters(UPSTREAM_COMPONENTS + ("lowres_head",))
        names = (UPSTREAM_COMPONENTS if end_to_end else ()) + ("upsampling",)
        return self._component_parameters(names)

    def parameter_report(self) -> Dict[str, int]:
        """Trainable parameter counts per module."""
        report = {}
        for label, name in (("VM", "visual"), ("LM", "language"), ("SM", "synthesis"),
                            ("head", "lowres_head"), ("UM", "upsampling")):
            report[label] = int(sum(p.size for p in self._component_parameters((name,)).values()))
        report["total"] = int(sum(report.values()))
        return report

    # ------------------------------------------------------------------
    # Persistence
    # ------------------------------------------------------------------

    def save(self, path: Union[str, Path], extra: Optional[Dict[str, Any]] = None) -> Path:
        metadata = {"config": self.config.to_dict(), "vocab": list(self.vocab.tokens)}
        metadata.update(extra or {})
        return save_checkpoint(path, self.parameters(), metadata)

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path], config: Optional[DmnConfig] = None) -> "DmnModel":
        """
        Rebuild a saved model. With ``config`` given, its architecture must match.

        Raises:
            CheckpointMismatchError: listing differing architecture fields
            CheckpointIOError: if the file lacks config or vocabulary metadata
        """
        arrays, metadata = load_checkpoint(path)
        if "config" not in metadata or "vocab" not in metadata:
            raise CheckpointIOError(f"checkpoint {path} carries no config/vocabulary metadata")
        saved = DmnConfig.from_dict(metadata["config"])
        if config is None:
            config = saved
        else:
            check_compatible(config, metadata["config"])
        model = cls.build(config, Vocabulary(metadata["vocab"]))
        load_parameters(model.parameters(), arrays)
        logger.info(f"Loaded checkpoint {path} (trained stage: {metadata.get('stage', 'unknown')})")
        return model
