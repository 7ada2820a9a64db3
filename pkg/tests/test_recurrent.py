#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Recurrent Kernel Test Suite
===========================

SRU cell identities, stacked scans against step-by-step oracles, the LSTM
baseline, the multimodal scan and closed-form parameter counts.
"""

import os
import sys
import logging

import numpy as np
import pytest
from scipy.special import expit

# Add project root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from dmn_segmentation.core.errors import ContractViolation
from dmn_segmentation.core.gradcheck import grad_check
from dmn_segmentation.core.layers import collect_parameters, count_parameters
from dmn_segmentation.core.recurrent import (LstmLayerWeights, RecurrentSpec, RecurrentStack, SruLayerWeights,
                                             lstm_scan, lstm_step, msru_scan, param_count, sru_scan, sru_step)
from dmn_segmentation.core.tensor import Tensor

logging.basicConfig(level=logging.WARNING)


def sru_weights(d, rng, **fixed):
    values = {
        "W": rng.standard_normal((d, d)) * 0.5,
        "W_f": rng.standard_normal((d, d)) * 0.5,
        "b_f": rng.standard_normal(d) * 0.5,
        "W_r": rng.standard_normal((d, d)) * 0.5,
        "b_r": rng.standard_normal(d) * 0.5,
    }
    values.update({k: np.asarray(v, dtype=np.float64) for k, v in fixed.items()})
    return SruLayerWeights(**{k: Tensor.parameter(v) for k, v in values.items()})


def lstm_oracle(seq, W, b, d):
    h = np.zeros(d)
    c = np.zeros(d)
    outputs = []
    for x in seq:
        z = W @ np.concatenate([x, h]) + b
        i = 1.0 / (1.0 + np.exp(-z[0:d]))
        f = 1.0 / (1.0 + np.exp(-z[d:2 * d]))
        g = np.tanh(z[2 * d:3 * d])
        o = 1.0 / (1.0 + np.exp(-z[3 * d:4 * d]))
        c = f * c + i * g
        h = o * np.tanh(c)
        outputs.append(h)
    return np.array(outputs)


class TestSruCell:
    """Single-step SRU behaviour."""

    def setup_method(self):
        self.rng = np.random.default_rng(10)
        self.d = 5

    def test_saturated_forget_gate_keeps_cell(self):
        w = sru_weights(self.d, self.rng, W_f=np.zeros((self.d, self.d)), b_f=np.full(self.d, 50.0))
        x = Tensor(self.rng.standard_normal(self.d))
        c_prev = Tensor(self.rng.standard_normal(self.d))
        c_t, _ = sru_step(x, c_prev, w)
        np.testing.assert_allclose(c_t.data, c_prev.data, rtol=0, atol=1e-12)

    def test_closed_reset_gate_passes_input(self):
        w = sru_weights(self.d, self.rng, W_r=np.zeros((self.d, self.d)), b_r=np.full(self.d, -50.0))
        x = Tensor(self.rng.standard_normal(self.d))
        _, h_t = sru_step(x, Tensor(self.rng.standard_normal(self.d)), w)
        np.testing.assert_allclose(h_t.data, x.data, rtol=0, atol=1e-15)

    def test_scalar_hand_evaluation(self):
        w = sru_weights(1, self.rng, W=[[1.0]], W_f=[[0.0]], b_f=[0.0], W_r=[[0.0]], b_r=[0.0])
        c_t, h_t = sru_step(Tensor([1.0]), Tensor([0.0]), w)
        assert c_t.data[0] == pytest.approx(0.5)
        assert h_t.data[0] == pytest.approx(0.811230, abs=1e-6)

    def test_convex_combination_bounds(self):
        w = sru_weights(self.d, self.rng)
        x = self.rng.standard_normal((1000, self.d)) * 3.0
        c_prev = self.rng.standard_normal((1000, self.d)) * 3.0
        c_t, h_t = sru_step(Tensor(x), Tensor(c_prev), w)
        x_tilde = x @ w.W.data.T
        slack = 1e-12
        assert np.all(c_t.data >= np.minimum(c_prev, x_tilde) - slack)
        assert np.all(c_t.data <= np.maximum(c_prev, x_tilde) + slack)
        squashed = expit(c_t.data)
        assert np.all(h_t.data >= np.minimum(squashed, x) - slack)
        assert np.all(h_t.data <= np.maximum(squashed, x) + slack)

    def test_dimension_mismatch(self):
        w = sru_weights(self.d, self.rng)
        with pytest.raises(ContractViolation, match="sru_step"):
            sru_step(Tensor(np.zeros(self.d + 1)), Tensor(np.zeros(self.d)), w)

    def test_layer_requires_square_weights(self):
        with pytest.raises(ContractViolation, match="d_in == d_h"):
            SruLayerWeights(W=Tensor(np.zeros((3, 4))), W_f=Tensor(np.zeros((3, 4))), b_f=Tensor(np.zeros(3)),
                            W_r=Tensor(np.zeros((3, 4))), b_r=Tensor(np.zeros(3)))

    def test_gradients(self):
        w = sru_weights(3, self.rng)
        x = Tensor(self.rng.standard_normal(3), requires_grad=True)
        c_prev = Tensor(self.rng.standard_normal(3), requires_grad=True)
        readout_c, readout_h = Tensor(self.rng.standard_normal(3)), Tensor(self.rng.standard_normal(3))

        def loss():
            c_t, h_t = sru_step(x, c_prev, w)
            return (c_t * readout_c).sum() + (h_t * readout_h).sum()

        leaves = [x, c_prev] + list(collect_parameters(w).values())
        assert grad_check(loss, leaves) <= 1e-4


class TestSruScan:
    """Stacked scans."""

    def setup_method(self):
        self.rng = np.random.default_rng(11)
        self.stack = RecurrentStack.build("sru", 4, 4, 2, self.rng)

    def manual(self, seq):
        x = [Tensor(v) for v in seq]
        for layer in self.stack.layers:
            c = Tensor(np.zeros(4))
            hidden = []
            for x_t in x:
                c, h = sru_step(x_t, c, layer)
                hidden.append(h)
            x = hidden
        return np.array([h.data for h in x])

    def test_single_step_sequence(self):
        seq = self.rng.standard_normal((1, 4))
        np.testing.assert_allclose(sru_scan(Tensor(seq), self.stack).data, self.manual(seq), rtol=1e-12, atol=1e-12)

    def test_two_layers_three_steps_match_manual_composition(self):
        seq = self.rng.standard_normal((3, 4))
        np.testing.assert_allclose(sru_scan(Tensor(seq), self.stack).data, self.manual(seq), rtol=1e-12, atol=1e-12)

    def test_order_matters(self):
        seq = self.rng.standard_normal((3, 4))
        swapped = seq[[1, 0, 2]]
        a = sru_scan(Tensor(seq), self.stack).data
        b = sru_scan(Tensor(swapped), self.stack).data
        assert not np.allclose(a[-1], b[-1])

    def test_empty_sequence(self):
        with pytest.raises(ContractViolation, match="non-empty"):
            sru_scan(Tensor(np.zeros((0, 4))), self.stack)

    def test_projection_when_sizes_differ(self):
        stack = RecurrentStack.build("sru", 6, 4, 1, self.rng)
        assert stack.projection is not None
        assert sru_scan(Tensor(self.rng.standard_normal((2, 6))), stack).shape == (2, 4)

    def test_rejects_lstm_stack(self):
        lstm = RecurrentStack.build("lstm", 4, 4, 1, self.rng)
        with pytest.raises(ContractViolation, match="sru"):
            sru_scan(Tensor(np.zeros((2, 4))), lstm)


class TestLstm:
    """LSTM baseline."""

    def setup_method(self):
        self.rng = np.random.default_rng(12)

    def test_zero_weights_zero_inputs(self):
        stack = RecurrentStack(cell="lstm", input_size=3, hidden_size=3,
                               layers=[LstmLayerWeights(W=Tensor(np.zeros((12, 6))), b=Tensor(np.zeros(12)))])
        np.testing.assert_array_equal(lstm_scan(Tensor(np.zeros((4, 3))), stack).data, 0.0)

    def test_saturated_gates_keep_cell(self):
        d = 3
        bias = np.zeros(4 * d)
        bias[0:d] = -50.0
        bias[d:2 * d] = 50.0
        w = LstmLayerWeights(W=Tensor(np.zeros((4 * d, 2 * d))), b=Tensor(bias))
        c = Tensor(self.rng.standard_normal(d))
        h = Tensor(np.zeros(d))
        start = c.data.copy()
        for _ in range(5):
            h, c = lstm_step(Tensor(self.rng.standard_normal(d)), h, c, w)
        np.testing.assert_allclose(c.data, start, rtol=0, atol=1e-12)

    def test_matches_gate_oracle(self):
        d = 4
        stack = RecurrentStack.build("lstm", d, d, 1, self.rng)
        layer = stack.layers[0]
        seq = self.rng.standard_normal((3, d))
        expected = lstm_oracle(seq, layer.W.data, layer.b.data, d)
        np.testing.assert_allclose(lstm_scan(Tensor(seq), stack).data, expected, rtol=0, atol=1e-12)

    def test_gradients(self):
        w = LstmLayerWeights.initialize(3, 2, self.rng)
        x = Tensor(self.rng.standard_normal(3), requires_grad=True)
        h = Tensor(self.rng.standard_normal(2), requires_grad=True)
        c = Tensor(self.rng.standard_normal(2), requires_grad=True)

        def loss():
            h_t, c_t = lstm_step(x, h, c, w)
            return (h_t * 1.3).sum() + (c_t * c_t).sum()

        assert grad_check(loss, [x, h, c, w.W, w.b]) <= 1e-4


class TestMultimodalScan:
    """Per-location scans with shared weights."""

    def setup_method(self):
        self.rng = np.random.default_rng(13)
        self.stack = RecurrentStack.build("sru", 4, 4, 2, self.rng)

    def maps(self, T=3, h=2, w=2):
        return [Tensor(self.rng.standard_normal((4, h, w))) for _ in range(T)]

    def test_single_location_equals_sru_scan(self):
        m_seq = self.maps(h=1, w=1)
        seq = np.stack([m.data[:, 0, 0] for m in m_seq])
        expected = sru_scan(Tensor(seq), self.stack).data[-1]
        np.testing.assert_allclose(msru_scan(m_seq, self.stack).data[:, 0, 0], expected, rtol=1e-12, atol=1e-12)

    def test_identical_locations_identical_outputs(self):
        m_seq = self.maps()
        for m in m_seq:
            m.data[:, 1, 1] = m.data[:, 0, 0]
        out = msru_scan(m_seq, self.stack).data
        np.testing.assert_allclose(out[:, 0, 0], out[:, 1, 1], rtol=0, atol=1e-14)

    def test_matches_four_independent_scans(self):
        m_seq = self.maps()
        out = msru_scan(m_seq, self.stack).data
        assert out.shape == (4, 2, 2)
        for y in range(2):
            for x in range(2):
                seq = np.stack([m.data[:, y, x] for m in m_seq])
                expected = sru_scan(Tensor(seq), self.stack).data[-1]
                np.testing.assert_allclose(out[:, y, x], expected, rtol=1e-12, atol=1e-12)

    def test_spatial_permutation_equivariance(self):
        m_seq = self.maps(h=3, w=3)
        perm = self.rng.permutation(9)
        permuted = [Tensor(m.data.reshape(4, 9)[:, perm].reshape(4, 3, 3)) for m in m_seq]
        out = msru_scan(m_seq, self.stack).data.reshape(4, 9)
        out_permuted = msru_scan(permuted, self.stack).data.reshape(4, 9)
        np.testing.assert_allclose(out_permuted, out[:, perm], rtol=1e-12, atol=1e-12)

    def test_inconsistent_shapes(self):
        m_seq = self.maps()
        m_seq.append(Tensor(np.zeros((4, 3, 2))))
        with pytest.raises(ContractViolation, match="t=3"):
            msru_scan(m_seq, self.stack)

    def test_lstm_variant(self):
        lstm = RecurrentStack.build("lstm", 4, 5, 1, self.rng)
        assert msru_scan(self.maps(), lstm).shape == (5, 2, 2)

    def test_gradients(self):
        stack = RecurrentStack.build("sru", 4, 3, 1, self.rng)
        m_seq = [Tensor(self.rng.standard_normal((4, 2, 2)), requires_grad=True) for _ in range(3)]
        readout = Tensor(self.rng.standard_normal((3, 2, 2)))
        leaves = m_seq + list(collect_parameters(stack).values())
        assert grad_check(lambda: (msru_scan(m_seq, stack) * readout).sum(), leaves) <= 1e-4


class TestParameterCounts:
    """Closed-form counts."""

    def test_full_width_single_layer(self):
        assert param_count(RecurrentSpec("sru", 1000, 1000, 1)) == 3_002_000
        assert param_count(RecurrentSpec("lstm", 1000, 1000, 1)) == 8_004_000

    def test_full_width_two_layers(self):
        assert param_count(RecurrentSpec("sru", 1000, 1000, 2)) == 6_004_000
        assert param_count(RecurrentSpec("lstm", 1000, 1000, 2)) == 16_008_000

    def test_ratio_tends_to_eight_thirds(self):
        d = 100_000
        ratio = param_count(RecurrentSpec("lstm", d, d, 1)) / param_count(RecurrentSpec("sru", d, d, 1))
        assert ratio == pytest.approx(8 / 3, rel=1e-4)

    @pytest.mark.parametrize("cell,d_in,d_h,layers", [("sru", 4, 4, 2), ("sru", 6, 4, 1), ("lstm", 5, 3, 2)])
    def test_matches_built_stack(self, cell, d_in, d_h, layers):
        stack = RecurrentStack.build(cell, d_in, d_h, layers, np.random.default_rng(0))
        assert param_count(stack) == count_parameters(stack)

    def test_invalid_spec(self):
        with pytest.raises(ContractViolation):
            RecurrentSpec("gru", 4, 4, 1)
