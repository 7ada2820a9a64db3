#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Model and Configuration Test Suite
==================================

Config round-trips, environment overrides, assembly of the four modules,
ablation variants, stage-dependent parameter sets and checkpoints.
"""

import json
import os
import sys
import logging

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from dmn_segmentation.core.config import (AblationFlags, DmnConfig, OptimizerConfig, apply_env_overrides,
                                          check_compatible, load_config, tiny)
from dmn_segmentation.core.errors import CheckpointMismatchError, ContractViolation
from dmn_segmentation.core.gradcheck import grad_check
from dmn_segmentation.core.language import Vocabulary
from dmn_segmentation.core.model import DmnModel
from dmn_segmentation.core.tensor import Tensor
from dmn_segmentation.core.visual import BackboneConfig

logging.basicConfig(level=logging.WARNING)

QUERIES = ["red circle on the left", "blue square", "green triangle on the top"]


def small_config(**changes):
    """Two-scale network small enough for finite differences."""
    config = DmnConfig(
        backbone=BackboneConfig(num_scales=2, channels=[2, 3]),
        embedding_size=3,
        hidden_size=3,
        language_layers=1,
        num_filters=2,
        fusion_channels=3,
        msru_layers=1,
        msru_hidden=3,
        seed=3,
    )
    return config.replace(**changes)


class TestConfig:
    """JSON round-trips, presets and overrides."""

    def test_dict_round_trip(self):
        config = tiny().replace(um_stages="log2", ablation=AblationFlags(no_skip=True))
        assert DmnConfig.from_dict(json.loads(config.to_json())) == config

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "config.json"
        config = small_config(cell="lstm")
        config.save(path)
        assert DmnConfig.load(path) == config

    def test_unknown_key_is_named(self):
        with pytest.raises(ContractViolation, match="unknown config key 'embeding_size'"):
            DmnConfig.from_dict({"embeding_size": 8})
        with pytest.raises(ContractViolation, match="unknown config key 'optimizer.lr'"):
            DmnConfig.from_dict({"optimizer": {"lr": 0.1}})

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ContractViolation, match="not valid JSON"):
            DmnConfig.load(path)

    def test_presets(self):
        assert load_config(apply_env=False) == DmnConfig()
        assert load_config("tiny", apply_env=False).backbone.num_scales == 3
        assert load_config("full_scale", apply_env=False).hidden_size == 1000

    def test_validation(self):
        with pytest.raises(ContractViolation, match="cell must be one of"):
            DmnConfig(cell="gru")
        with pytest.raises(ContractViolation, match="stage must be one of"):
            DmnConfig(stage="mid")
        with pytest.raises(ContractViolation, match="um_stages"):
            DmnConfig(um_stages="half")
        with pytest.raises(ContractViolation, match="pos_weight"):
            OptimizerConfig(pos_weight=0.0)

    def test_env_overrides(self):
        config = apply_env_overrides(tiny(), {"DMN_SEED": "7", "DMN_LEARNING_RATE": "0.01",
                                              "DMN_EPOCHS_LOW": ""})
        assert config.seed == 7
        assert config.optimizer.learning_rate == 0.01
        assert config.optimizer.epochs_low == OptimizerConfig().epochs_low

    def test_invalid_env_override_is_ignored(self):
        config = apply_env_overrides(tiny(), {"DMN_LEARNING_RATE": "-1", "DMN_DTYPE": "float16",
                                              "DMN_SEED": "seven"})
        assert config.optimizer.learning_rate == 1e-3
        assert config.dtype == "float64"
        assert config.seed == 0

    def test_ablation_modes(self):
        assert AblationFlags.for_mode("dmn").active == []
        assert AblationFlags.for_mode("no_skip").active == ["no_skip"]
        with pytest.raises(ContractViolation, match="unknown ablation mode"):
            AblationFlags.for_mode("no_lm")

    def test_r_width(self):
        config = small_config(embedding_size=4, hidden_size=5)
        assert config.r_width == 9
        assert config.replace(ablation=AblationFlags(r_is_h=True)).r_width == 5

    def test_compatibility_lists_fields(self):
        saved = small_config().to_dict()
        with pytest.raises(CheckpointMismatchError) as excinfo:
            check_compatible(small_config(num_filters=4, msru_hidden=5), saved)
        assert len(excinfo.value.differences) == 2
        assert "num_filters" in str(excinfo.value)
        check_compatible(small_config(seed=99, stage="high"), saved)


class TestModelForward:
    def setup_method(self):
        self.vocab = Vocabulary.build(QUERIES)
        self.rng = np.random.default_rng(60)

    def image(self, height=8, width=8):
        return self.rng.uniform(-0.5, 0.5, (3, height, width))

    def test_stage_resolutions(self):
        model = DmnModel.build(small_config(), self.vocab)
        ids = model.encode_query("red circle")
        assert model.forward_logits(self.image(), ids, "low").shape == (1, 2, 2)
        assert model.forward_logits(self.image(), ids, "high").shape == (1, 8, 8)
        with pytest.raises(ContractViolation):
            model.forward_logits(self.image(), ids, "mid")

    def test_predict_heatmap_on_raw_image(self):
        model = DmnModel.build(small_config(), self.vocab)
        image = self.rng.integers(0, 256, (3, 16, 8), dtype=np.uint8)
        heatmap = model.predict_heatmap(image, "Blue square!", stage="high")
        assert heatmap.shape == (16, 8)
        assert np.all((heatmap > 0.0) & (heatmap < 1.0))

    def test_same_seed_same_model(self):
        a = DmnModel.build(small_config(), self.vocab)
        b = DmnModel.build(small_config(), self.vocab)
        for (name_a, p_a), (name_b, p_b) in zip(a.parameters().items(), b.parameters().items()):
            assert name_a == name_b
            np.testing.assert_array_equal(p_a.data, p_b.data)
        image = self.image()
        np.testing.assert_array_equal(a.forward(image, [2, 3], "high").data, b.forward(image, [2, 3], "high").data)

    def test_query_changes_prediction(self):
        model = DmnModel.build(small_config(), self.vocab)
        image = self.image()
        left = model.forward(image, model.encode_query("red circle on the left"), "low").data
        top = model.forward(image, model.encode_query("green triangle on the top"), "low").data
        assert not np.allclose(left, top)

    def test_parameter_report(self):
        model = DmnModel.build(small_config(), self.vocab)
        report = model.parameter_report()
        assert list(report) == ["VM", "LM", "SM", "head", "UM", "total"]
        assert report["total"] == sum(report[k] for k in ("VM", "LM", "SM", "head", "UM"))
        assert report["total"] == sum(p.size for p in model.parameters().values())
        assert report["head"] == 3 + 1

    def test_stage_parameter_sets(self):
        model = DmnModel.build(small_config(), self.vocab)
        low = model.trainable_parameters("low")
        high = model.trainable_parameters("high", end_to_end=False)
        joint = model.trainable_parameters("high", end_to_end=True)
        assert not any(name.startswith("upsampling") for name in low)
        assert any(name.startswith("lowres_head") for name in low)
        assert all(name.startswith("upsampling") for name in high)
        assert set(joint) == set(model.parameters()) - {n for n in low if n.startswith("lowres_head")}

    def test_high_stage_freezes_upstream(self):
        model = DmnModel.build(small_config(), self.vocab)
        loss = model.forward(self.image(), [2, 3, 4], "high").sum()
        loss.backward()
        assert all(p.grad is None for name, p in model.parameters().items() if name.startswith("visual"))
        assert all(p.grad is not None for p in model.trainable_parameters("high").values())

    def test_full_network_grad_check(self):
        config = small_config(stage="high", end_to_end=True)
        model = DmnModel.build(config, self.vocab)
        image = Tensor(self.image(16, 16))
        ids = model.encode_query("red circle on the left")
        assert len(ids) == 5
        ids = ids[:4]
        readout = Tensor(self.rng.standard_normal((1, 16, 16)))

        def loss():
            return (model.forward(image, ids) * readout).sum()

        leaves = list(model.trainable_parameters().values())
        assert grad_check(loss, leaves, sample=4) <= 1e-4


class TestAblationVariants:
    def setup_method(self):
        self.vocab = Vocabulary.build(QUERIES)
        self.image = np.random.default_rng(61).uniform(-0.5, 0.5, (3, 8, 8))

    def build(self, mode):
        return DmnModel.build(small_config(ablation=AblationFlags.for_mode(mode)), self.vocab)

    def test_only_vm_ignores_query(self):
        model = self.build("only_vm")
        assert model.language is None and model.synthesis is None
        report = model.parameter_report()
        assert report["LM"] == 0 and report["SM"] == 0
        a = model.forward(self.image, [2], "high").data
        b = model.forward(self.image, [3, 4, 5], "high").data
        np.testing.assert_array_equal(a, b)

    def test_no_filters_drops_generator(self):
        model = self.build("no_filters")
        assert model.language.generator is None
        assert model.synthesis.fusion.in_channels == 3 + 8 + 6
        assert model.forward(self.image, [2, 3], "low").shape == (1, 2, 2)

    def test_no_rt_concat_narrows_fusion(self):
        model = self.build("no_rt_concat")
        assert model.synthesis.fusion.in_channels == 3 + 2 + 8
        assert model.forward(self.image, [2, 3], "high").shape == (1, 8, 8)

    def test_both_language_blocks_removed(self):
        config = small_config(ablation=AblationFlags(no_filters=True, no_rt_concat=True))
        model = DmnModel.build(config, self.vocab)
        assert model.language is None
        assert model.forward(self.image, [2, 3], "low").shape == (1, 2, 2)

    @pytest.mark.parametrize("mode", ["no_rt_concat", "no_skip"])
    def test_filters_unchanged_by_unrelated_ablation(self, mode):
        default_model = self.build("dmn")
        ids = default_model.encode_query("green triangle on the top")
        default = default_model.language(ids)
        ablated = self.build(mode).language(ids)
        np.testing.assert_array_equal(ablated.filters.data, default.filters.data)
        np.testing.assert_array_equal(ablated.r_seq.data, default.r_seq.data)

    def test_r_is_h_generator_width(self):
        model = self.build("r_is_h")
        assert model.language.feature_size == 3
        assert model.language.generator.input_size == 3

    def test_no_skip_decoder(self):
        model = self.build("no_skip")
        stage = model.upsampling.stages[0]
        assert not stage.skip
        assert stage.conv.in_channels == 3
        assert model.forward(self.image, [2], "high").shape == (1, 8, 8)


class TestModelCheckpoint:
    def setup_method(self):
        self.vocab = Vocabulary.build(QUERIES)

    def test_round_trip_preserves_predictions(self, tmp_path):
        model = DmnModel.build(small_config(dtype="float32"), self.vocab)
        path = model.save(tmp_path / "model.ckpt", {"stage": "low"})
        restored = DmnModel.from_checkpoint(path)
        assert restored.vocab.tokens == self.vocab.tokens
        assert restored.config == model.config
        image = np.random.default_rng(62).integers(0, 256, (3, 8, 8), dtype=np.uint8)
        np.testing.assert_array_equal(model.predict_heatmap(image, "red circle", "high"),
                                      restored.predict_heatmap(image, "red circle", "high"))

    def test_mismatched_config(self, tmp_path):
        path = DmnModel.build(small_config(), self.vocab).save(tmp_path / "model.ckpt")
        with pytest.raises(CheckpointMismatchError, match="num_filters"):
            DmnModel.from_checkpoint(path, small_config(num_filters=5))
