#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Recurrent Kernel Benchmark
==========================

Median forward+backward wall-clock of a stacked SRU scan against a stacked
LSTM scan of identical shape, in single precision, with closed-form
parameter counts. BLAS threading should be pinned to one thread by the
caller (the CLI sets the thread environment variables before numpy loads).
"""

import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .errors import ContractViolation
from .layers import collect_parameters
from .recurrent import CELL_LSTM, CELL_SRU, RecurrentStack, param_count, recurrent_scan
from .tensor import Tensor

logger = logging.getLogger("dmn_segmentation.benchmark")

MIN_REPETITIONS = 10


@dataclass
class BenchmarkReport:
    hidden_size: int
    sequence_length: int
    repetitions: int
    layers: int
    sru_median_seconds: float
    lstm_median_seconds: float
    sru_params: int
    lstm_params: int

    @property
    def speedup(self) -> float:
        """LSTM time divided by SRU time."""
        return self.lstm_median_seconds / self.sru_median_seconds if self.sru_median_seconds > 0 else float("inf")

    @property
    def param_ratio(self) -> float:
        return self.lstm_params / self.sru_params

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for cell, seconds, params in ((CELL_SRU, self.sru_median_seconds, self.sru_params),
                                      (CELL_LSTM, self.lstm_median_seconds, self.lstm_params)):
            rows.append({"cell": cell, "d": self.hidden_size, "T": self.sequence_length,
                         "layers": self.layers, "reps": self.repetitions,
                         "median_seconds": seconds, "params": params})
        return pd.DataFrame(rows)

    def to_text(self) -> str:
        return "\n".join([
            f"Recurrent benchmark: d={self.hidden_size}, T={self.sequence_length}, "
            f"layers={self.layers}, reps={self.repetitions} (float32, forward+backward)",
            f"  SRU  median {self.sru_median_seconds * 1e3:10.3f} ms   params {self.sru_params:>12,}",
            f"  LSTM median {self.lstm_median_seconds * 1e3:10.3f} ms   params {self.lstm_params:>12,}",
            f"  LSTM/SRU time ratio {self.speedup:.2f}x, parameter ratio {self.param_ratio:.3f}",
        ])

    def write(self, csv_path: Union[str, Path]) -> Tuple[Path, Path]:
        """Write the CSV and a sibling .txt report; returns both paths."""
        csv_path = Path(csv_path)
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(csv_path, index=False)
        text_path = csv_path.with_suffix(".txt")
        text_path.write_text(self.to_text() + "\n", encoding="utf-8")
        logger.info(f"Benchmark report written: {csv_path}, {text_path}")
        return csv_path, text_path


def _time_scan(stack: RecurrentStack, seq: np.ndarray, repetitions: int) -> List[float]:
    params = list(collect_parameters(stack).values())

    def run() -> None:
        x = Tensor(seq, requires_grad=True)
        recurrent_scan(x, stack).sum().backward()
        for p in params:
            p.grad = None

    run()  # warm-up
    timings = []
    for _ in range(repetitions):
        started = time.perf_counter()
        run()
        timings.append(time.perf_counter() - started)
    return timings


def bench_recurrent(d: int, T: int, reps: int, layers: int = 2, seed: int = 0,
                    clock: Optional[Callable[[RecurrentStack, np.ndarray, int], List[float]]] = None
                    ) -> BenchmarkReport:
    """
    Time SRU and LSTM stacks on the same random (T, d) sequence.

    Args:
        d: Input and hidden size
        T: Sequence length
        reps: Timed repetitions (>= 10), after one untimed warm-up
        layers: Stack depth
        seed: Seed for weights and input
        clock: Replacement timing function (tests)

    Raises:
        ContractViolation: if reps < 10 or sizes are not positive
    """
    if reps < MIN_REPETITIONS:
        raise ContractViolation(f"reps must be >= {MIN_REPETITIONS}, got {reps}")
    if d < 1 or T < 1 or layers < 1:
        raise ContractViolation(f"d, T and layers must be positive, got d={d}, T={T}, layers={layers}")
    clock = clock or _time_scan
    rng = np.random.default_rng(seed)
    seq = rng.standard_normal((T, d)).astype(np.float32)
    medians = {}
    counts = {}
    for cell in (CELL_SRU, CELL_LSTM):
        stack = RecurrentStack.build(cell, d, d, layers, np.random.default_rng(seed), np.float32)
        timings = clock(stack, seq, reps)
        medians[cell] = float(np.median(timings))
        counts[cell] = param_count(stack)
        logger.info(f"{cell}: median {medians[cell] * 1e3:.3f} ms over {reps} reps")
    report = BenchmarkReport(hidden_size=d, sequence_length=T, repetitions=reps, layers=layers,
                             sru_median_seconds=medians[CELL_SRU], lstm_median_seconds=medians[CELL_LSTM],
                             sru_params=counts[CELL_SRU], lstm_params=counts[CELL_LSTM])
    logger.info(f"LSTM/SRU time ratio {report.speedup:.2f}x")
    return report
