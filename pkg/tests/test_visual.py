#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Visual Module Test Suite
========================

Pyramid shape law, fully convolutional behaviour and gradients.
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
from dmn_segmentation.core.layers import collect_parameters
from dmn_segmentation.core.tensor import Tensor
from dmn_segmentation.core.visual import BackboneConfig, VisualModule, vm_forward

logging.basicConfig(level=logging.WARNING)


class TestPyramidShapes:
    """I_n has C_n channels at 1/2^n resolution."""

    def setup_method(self):
        self.rng = np.random.default_rng(20)

    def image(self, height, width):
        return Tensor(self.rng.uniform(-0.5, 0.5, (3, height, width)))

    def test_desk_scale_top_is_two_by_two(self):
        module = VisualModule.build(BackboneConfig(), self.rng)
        pyramid = vm_forward(self.image(64, 64), module)
        assert len(pyramid) == 5
        assert pyramid[5].shape == (128, 2, 2)
        assert pyramid.top is pyramid[5]

    def test_three_scale_shapes(self):
        module = VisualModule.build(BackboneConfig(num_scales=3, channels=[8, 16, 32]), self.rng)
        pyramid = module(self.image(32, 32))
        assert pyramid.shapes == [(8, 16, 16), (16, 8, 8), (32, 4, 4)]

    def test_doubling_input_doubles_every_scale(self):
        module = VisualModule.build(BackboneConfig(num_scales=3, channels=[4, 6, 8]), self.rng)
        small = module(self.image(16, 24)).shapes
        large = module(self.image(32, 48)).shapes
        for (c_s, h_s, w_s), (c_l, h_l, w_l) in zip(small, large):
            assert c_s == c_l
            assert (h_l, w_l) == (2 * h_s, 2 * w_s)

    def test_indivisible_size_states_requirement(self):
        module = VisualModule.build(BackboneConfig(num_scales=3, channels=[4, 4, 4]), self.rng)
        with pytest.raises(ContractViolation, match="divisible by 2\\^N = 8"):
            module(self.image(20, 16))

    def test_wrong_channel_count(self):
        module = VisualModule.build(BackboneConfig(num_scales=2, channels=[4, 4]), self.rng)
        with pytest.raises(ContractViolation, match="3 x H x W"):
            module(Tensor(np.zeros((1, 8, 8))))

    def test_scale_index_is_one_based(self):
        module = VisualModule.build(BackboneConfig(num_scales=2, channels=[4, 5]), self.rng)
        pyramid = module(self.image(8, 8))
        assert pyramid[1].shape[0] == 4
        with pytest.raises(ContractViolation):
            pyramid[0]


class TestBackboneConfig:
    def test_needs_two_scales(self):
        with pytest.raises(ContractViolation, match="N >= 2"):
            BackboneConfig(num_scales=1, channels=[8])

    def test_channel_list_length(self):
        with pytest.raises(ContractViolation, match="expected N = 3"):
            BackboneConfig(num_scales=3, channels=[8, 16])

    def test_reduction(self):
        assert BackboneConfig().reduction == 32
        assert BackboneConfig().top_channels == 128


class TestVisualGradients:
    def test_deterministic_for_fixed_seed(self):
        config = BackboneConfig(num_scales=2, channels=[3, 4])
        image = Tensor(np.random.default_rng(0).uniform(-0.5, 0.5, (3, 8, 8)))
        a = VisualModule.build(config, np.random.default_rng(5))(image).top.data
        b = VisualModule.build(config, np.random.default_rng(5))(image).top.data
        np.testing.assert_array_equal(a, b)

    def test_grad_check_small_pyramid(self):
        rng = np.random.default_rng(21)
        module = VisualModule.build(BackboneConfig(num_scales=2, channels=[2, 3]), rng)
        image = Tensor(rng.uniform(-0.5, 0.5, (3, 8, 8)), requires_grad=True)
        readout_1 = Tensor(rng.standard_normal((2, 4, 4)))
        readout_2 = Tensor(rng.standard_normal((3, 2, 2)))

        def loss():
            pyramid = vm_forward(image, module)
            return (pyramid[1] * readout_1).sum() + (pyramid[2] * readout_2).sum()

        leaves = [image] + list(collect_parameters(module).values())
        assert grad_check(loss, leaves) <= 1e-4
