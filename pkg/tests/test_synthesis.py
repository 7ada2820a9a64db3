#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Synthesis Module Test Suite
===========================

Coordinate maps, dynamic filter responses, the per-word merge and the
multimodal aggregation into R_N.
"""

import os
import sys
import logging

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from dmn_segmentation.core.errors import ContractViolation
from dmn_segmentation.core.gradcheck import grad_check
from dmn_segmentation.core.language import LanguageOutput
from dmn_segmentation.core.layers import Conv2dLayer, collect_parameters
from dmn_segmentation.core.recurrent import RecurrentStack, sru_step
from dmn_segmentation.core.synthesis import (SynthesisModule, filter_responses, make_loc, merge_step,
                                             sm_forward)
from dmn_segmentation.core.tensor import Tensor

logging.basicConfig(level=logging.WARNING)


def build_synthesis(visual_channels, num_filters, r_width, fused, hidden, rng, use_filters=True, use_rt=True,
                    filters_see_loc=True, loc_channels=8):
    width = SynthesisModule.fusion_width(visual_channels, num_filters, loc_channels, r_width,
                                         use_filters=use_filters, use_rt=use_rt)
    return SynthesisModule(
        fusion=Conv2dLayer.initialize(width, fused, 1, rng),
        msru=RecurrentStack.build("sru", fused, hidden, 1, rng),
        use_filters=use_filters,
        use_rt=use_rt,
        filters_see_loc=filters_see_loc,
        loc_channels=loc_channels,
    )


def language_output(rng, length, r_width, num_filters, filter_size, requires_grad=False):
    r_seq = Tensor(rng.standard_normal((length, r_width)), requires_grad=requires_grad)
    filters = Tensor(rng.uniform(0.05, 0.95, (length, num_filters, filter_size)), requires_grad=requires_grad)
    return LanguageOutput(r_seq=r_seq, filters=filters, hidden=r_seq)


class TestLocationMap:
    def test_eight_channel_layout(self):
        loc = make_loc(2, 4).data
        assert loc.shape == (8, 2, 4)
        np.testing.assert_array_equal(loc[0, 0], [-0.75, -0.25, 0.25, 0.75])
        np.testing.assert_array_equal(loc[1, :, 0], [-0.5, 0.5])
        np.testing.assert_allclose(loc[4], loc[0] * loc[1])
        assert np.all(loc[5] == 0.25)
        assert np.all(loc[6] == 0.5)
        assert np.all(loc[7] == 1.0)

    def test_single_cell_is_centred(self):
        loc = make_loc(1, 1).data
        assert loc[0, 0, 0] == 0.0
        assert loc[1, 0, 0] == 0.0
        assert loc[5, 0, 0] == 1.0

    def test_horizontal_flip_negates_x(self):
        loc = make_loc(3, 5).data
        np.testing.assert_allclose(loc[0][:, ::-1], -loc[0], rtol=0, atol=1e-15)
        np.testing.assert_allclose(loc[2][:, ::-1], loc[2], rtol=0, atol=1e-15)

    def test_channel_prefix(self):
        assert make_loc(2, 2, channels=2).shape == (2, 2, 2)
        assert make_loc(2, 2, channels=0).shape == (0, 2, 2)
        with pytest.raises(ContractViolation):
            make_loc(2, 2, channels=9)


class TestFilterResponses:
    def test_single_site_example(self):
        visual_map = Tensor(np.array([1.0, 2.0]).reshape(2, 1, 1))
        out = filter_responses(visual_map, None, Tensor(np.array([[0.5, 0.25]])))
        assert out.shape == (1, 1, 1)
        assert out.data[0, 0, 0] == 1.0

    def test_matches_loop(self):
        rng = np.random.default_rng(40)
        visual_map = Tensor(rng.standard_normal((4, 3, 3)))
        loc = make_loc(3, 3)
        filters = rng.uniform(0, 1, (3, 12))
        out = filter_responses(visual_map, loc, Tensor(filters)).data

        features = np.concatenate([visual_map.data, loc.data], axis=0)
        for k in range(3):
            for i in range(3):
                for j in range(3):
                    assert out[k, i, j] == pytest.approx(float(np.dot(filters[k], features[:, i, j])), abs=1e-12)

    def test_grad_check(self):
        rng = np.random.default_rng(43)
        visual_map = Tensor(rng.standard_normal((3, 2, 3)), requires_grad=True)
        filters = Tensor(rng.uniform(0.05, 0.95, (2, 3 + 8)), requires_grad=True)
        loc = make_loc(2, 3)
        readout = Tensor(rng.standard_normal((2, 2, 3)))

        def loss():
            return (filter_responses(visual_map, loc, filters) * readout).sum()

        assert grad_check(loss, [visual_map, filters]) <= 1e-6

    def test_filter_length_mismatch(self):
        visual_map = Tensor(np.zeros((4, 2, 2)))
        with pytest.raises(ContractViolation, match="filter length 4 != filtered channels 12"):
            filter_responses(visual_map, make_loc(2, 2), Tensor(np.zeros((2, 4))))


class TestMergeStep:
    def setup_method(self):
        self.rng = np.random.default_rng(41)
        self.visual_map = Tensor(self.rng.standard_normal((3, 4, 4)))
        self.loc = make_loc(4, 4)
        self.responses = Tensor(self.rng.standard_normal((2, 4, 4)))
        self.r_t = Tensor(self.rng.standard_normal(5))

    def test_rt_block_alone_is_spatially_constant(self):
        kernel = np.zeros((4, 18, 1, 1))
        kernel[:, 13:, 0, 0] = self.rng.uniform(0.1, 1.0, (4, 5))
        fusion = Conv2dLayer(kernel=Tensor(kernel), bias=Tensor(np.zeros(4)))
        out = merge_step(self.visual_map, self.responses, self.loc, self.r_t, fusion).data
        assert out.shape == (4, 4, 4)
        np.testing.assert_allclose(out, np.broadcast_to(out[:, :1, :1], out.shape), rtol=0, atol=1e-12)

    def test_fusion_output_is_rectified(self):
        fusion = Conv2dLayer.initialize(18, 6, 1, self.rng)
        out = merge_step(self.visual_map, self.responses, self.loc, self.r_t, fusion).data
        assert out.min() >= 0.0

    def test_width_mismatch(self):
        fusion = Conv2dLayer.initialize(17, 4, 1, self.rng)
        with pytest.raises(ContractViolation, match="fusion input width 18 != fusion kernel input width 17"):
            merge_step(self.visual_map, self.responses, self.loc, self.r_t, fusion)

    def test_spatial_mismatch(self):
        fusion = Conv2dLayer.initialize(18, 4, 1, self.rng)
        with pytest.raises(ContractViolation, match="F_t spatial size"):
            merge_step(self.visual_map, Tensor(np.zeros((2, 2, 2))), self.loc, self.r_t, fusion)

    def test_ablated_blocks_are_skipped(self):
        fusion = Conv2dLayer.initialize(3 + 8, 4, 1, self.rng)
        assert merge_step(self.visual_map, None, self.loc, None, fusion).shape == (4, 4, 4)

    def test_grad_check(self):
        visual_map = Tensor(self.rng.standard_normal((3, 2, 2)), requires_grad=True)
        responses = Tensor(self.rng.standard_normal((2, 2, 2)), requires_grad=True)
        r_t = Tensor(self.rng.standard_normal(5), requires_grad=True)
        loc = make_loc(2, 2)
        fusion = Conv2dLayer.initialize(18, 4, 1, self.rng)
        readout = Tensor(self.rng.standard_normal((4, 2, 2)))

        def loss():
            return (merge_step(visual_map, responses, loc, r_t, fusion) * readout).sum()

        leaves = [visual_map, responses, r_t] + list(collect_parameters(fusion).values())
        assert grad_check(loss, leaves) <= 1e-4


class TestSynthesisForward:
    def setup_method(self):
        self.rng = np.random.default_rng(42)

    def test_fusion_width(self):
        assert SynthesisModule.fusion_width(128, 10, 8, 1500) == 1646
        assert SynthesisModule.fusion_width(128, 10, 8, 1500, use_filters=False) == 1636
        assert SynthesisModule.fusion_width(128, 10, 8, 1500, use_rt=False) == 146

    def test_single_word_matches_one_step_per_location(self):
        module = build_synthesis(3, 2, 5, fused=4, hidden=4, rng=self.rng)
        visual_map = Tensor(self.rng.standard_normal((3, 2, 3)))
        loc = make_loc(2, 3)
        lang = language_output(self.rng, 1, 5, 2, module.filter_size(3))
        r_top = sm_forward(visual_map, loc, lang, module).data
        assert r_top.shape == (4, 2, 3)

        responses = filter_responses(visual_map, loc, lang.filters[0])
        m_1 = merge_step(visual_map, responses, loc, lang.r_seq[0], module.fusion).data
        for i in range(2):
            for j in range(3):
                _, h = sru_step(Tensor(m_1[:, i, j]), Tensor(np.zeros(4)), module.msru.layers[0])
                np.testing.assert_allclose(r_top[:, i, j], h.data, rtol=1e-12, atol=1e-12)

    def test_word_order_matters(self):
        module = build_synthesis(3, 2, 5, fused=4, hidden=4, rng=self.rng)
        visual_map = Tensor(self.rng.standard_normal((3, 2, 2)))
        loc = make_loc(2, 2)
        lang = language_output(self.rng, 2, 5, 2, module.filter_size(3))
        swapped = LanguageOutput(r_seq=lang.r_seq[[1, 0]], filters=lang.filters[[1, 0]], hidden=lang.r_seq)
        a = sm_forward(visual_map, loc, lang, module).data
        b = sm_forward(visual_map, loc, swapped, module).data
        assert not np.allclose(a, b)

    @staticmethod
    def permute_sites(array, order):
        channels, height, width = array.shape
        return array.reshape(channels, height * width)[:, order].reshape(channels, height, width)

    def test_permuting_sites_without_loc_permutes_output(self):
        module = build_synthesis(3, 2, 5, fused=4, hidden=4, rng=self.rng, loc_channels=0)
        visual_map = self.rng.standard_normal((3, 3, 4))
        loc = make_loc(3, 4, channels=0)
        lang = language_output(self.rng, 3, 5, 2, module.filter_size(3))
        order = self.rng.permutation(12)

        original = sm_forward(Tensor(visual_map), loc, lang, module).data
        permuted = sm_forward(Tensor(self.permute_sites(visual_map, order)), loc, lang, module).data
        np.testing.assert_allclose(permuted, self.permute_sites(original, order), rtol=1e-12, atol=1e-12)

    def test_permuting_sites_with_loc_permutes_output(self):
        module = build_synthesis(3, 2, 5, fused=4, hidden=4, rng=self.rng)
        visual_map = self.rng.standard_normal((3, 3, 4))
        loc = make_loc(3, 4)
        lang = language_output(self.rng, 2, 5, 2, module.filter_size(3))
        order = self.rng.permutation(12)

        original = sm_forward(Tensor(visual_map), loc, lang, module).data
        permuted = sm_forward(Tensor(self.permute_sites(visual_map, order)),
                              Tensor(self.permute_sites(loc.data, order)), lang, module).data
        np.testing.assert_allclose(permuted, self.permute_sites(original, order), rtol=1e-12, atol=1e-12)

    def test_filters_over_visual_channels_only(self):
        module = build_synthesis(3, 2, 5, fused=4, hidden=4, rng=self.rng, filters_see_loc=False)
        assert module.filter_size(3) == 3
        lang = language_output(self.rng, 2, 5, 2, 3)
        out = module(Tensor(self.rng.standard_normal((3, 2, 2))), lang)
        assert out.shape == (4, 2, 2)

    def test_ablation_without_filters(self):
        module = build_synthesis(3, 2, 5, fused=4, hidden=4, rng=self.rng, use_filters=False)
        lang = LanguageOutput(r_seq=Tensor(self.rng.standard_normal((3, 5))), filters=None,
                              hidden=Tensor(np.zeros((3, 5))))
        assert module(Tensor(self.rng.standard_normal((3, 2, 2))), lang).shape == (4, 2, 2)

    def test_filters_required_when_enabled(self):
        module = build_synthesis(3, 2, 5, fused=4, hidden=4, rng=self.rng)
        lang = LanguageOutput(r_seq=Tensor(np.zeros((1, 5))), filters=None, hidden=Tensor(np.zeros((1, 5))))
        with pytest.raises(ContractViolation, match="carries none"):
            module(Tensor(np.zeros((3, 2, 2))), lang)

    def test_grad_check(self):
        module = build_synthesis(2, 2, 3, fused=3, hidden=3, rng=self.rng)
        visual_map = Tensor(self.rng.standard_normal((2, 2, 2)), requires_grad=True)
        lang = language_output(self.rng, 3, 3, 2, module.filter_size(2), requires_grad=True)
        loc = make_loc(2, 2)
        readout = Tensor(self.rng.standard_normal((3, 2, 2)))

        def loss():
            return (sm_forward(visual_map, loc, lang, module) * readout).sum()

        leaves = [visual_map, lang.r_seq, lang.filters] + list(collect_parameters(module).values())
        assert grad_check(loss, leaves) <= 1e-4
