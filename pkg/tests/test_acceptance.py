#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Desk-Scale Acceptance Runs
==========================

Long-running checks: learning on the synthetic set, the only_vm gap and the
SRU/LSTM timing direction. Skipped unless DMN_RUN_SLOW=true.

    DMN_RUN_SLOW=true pytest tests/test_acceptance.py -s
"""

import os
import sys
import time
import logging

import pytest

# Add project root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from dmn_segmentation.core.benchmark import bench_recurrent
from dmn_segmentation.core.config import AblationFlags, tiny
from dmn_segmentation.core.metrics import calibrate_threshold, evaluate
from dmn_segmentation.core.training import train, train_two_stage
from dmn_segmentation.data import SceneSpec, generate_examples

logging.basicConfig(level=logging.INFO)

RUN_SLOW = os.getenv("DMN_RUN_SLOW", "false").lower() == "true"

pytestmark = pytest.mark.skipif(not RUN_SLOW, reason="set DMN_RUN_SLOW=true to run acceptance checks")


@pytest.fixture(scope="module")
def splits():
    spec = SceneSpec(height=32, width=32)
    return generate_examples(500, spec, master_seed=0), generate_examples(100, spec, master_seed=1)


def trained_miou(config, train_set, test_set):
    _, high = train_two_stage(config, train_set)
    threshold = calibrate_threshold(high.model, train_set[:100], "high")
    return evaluate(high.model, test_set, threshold, "high").cumulative_miou


class TestDeskScaleLearning:
    def test_single_example_overfit(self):
        example = generate_examples(1, SceneSpec(height=32, width=32), master_seed=7)
        curve = train(tiny(), example, epochs=200).curve
        losses = curve["train_loss"].to_numpy()
        assert losses.min() < 0.05
        # 20-step window means after warm-up
        window_means = [losses[i:i + 20].mean() for i in range(3, 183, 20)]
        assert all(a >= b - 1e-3 for a, b in zip(window_means, window_means[1:]))

    def test_full_model_beats_only_vm(self, splits):
        train_set, test_set = splits
        started = time.perf_counter()
        full = trained_miou(tiny(), train_set, test_set)
        elapsed = time.perf_counter() - started
        only_vm = trained_miou(tiny().replace(ablation=AblationFlags(only_vm=True)), train_set, test_set)
        print(f"\ncumulative mIoU: full={full:.4f}, only_vm={only_vm:.4f} ({elapsed:.0f}s for the full model)")
        assert full >= 0.6
        assert full - only_vm >= 0.10
        assert elapsed <= 600


class TestRecurrentEfficiency:
    def test_sru_faster_than_lstm(self):
        report = bench_recurrent(256, 64, 20)
        print("\n" + report.to_text())
        assert report.sru_median_seconds < report.lstm_median_seconds
        assert report.param_ratio == pytest.approx(8 / 3, rel=1e-2)

    def test_median_is_stable(self):
        short = bench_recurrent(64, 32, 10, layers=1)
        long = bench_recurrent(64, 32, 100, layers=1)
        for a, b in ((short.sru_median_seconds, long.sru_median_seconds),
                     (short.lstm_median_seconds, long.lstm_median_seconds)):
            assert abs(a - b) <= 0.25 * max(a, b)
