#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Report Output Formatting
========================

Plain-text tables and summary boxes for evaluation, benchmark and ablation
reports, plus a dual output channel (console + dedicated report log file).
"""

import logging
import os
from datetime import datetime
from typing import Optional, Sequence, Tuple

import pandas as pd

logger = logging.getLogger("dmn_segmentation.report_formatter")


class TableFormatter:
    """ASCII box tables for structured results."""

    @staticmethod
    def create_table(headers: Sequence[str], rows: Sequence[Sequence[object]], title: Optional[str] = None) -> str:
        """
        Args:
            headers: Column headers
            rows: Table rows; cells are rendered with ``str``
            title: Optional title line above the headers

        Returns:
            Table text, or "" when there is nothing to show
        """
        if not headers or not rows:
            return ""
        cells = [[str(c) for c in row] + [""] * (len(headers) - len(row)) for row in rows]
        widths = [max(len(h), *(len(r[i]) for r in cells)) + 2 for i, h in enumerate(headers)]
        inner = sum(widths) + len(widths) - 1

        def line(values: Sequence[str]) -> str:
            return "│" + "│".join(f" {v:<{w - 1}}" for v, w in zip(values, widths)) + "│"

        lines = []
        if title:
            lines.append("┌" + "─" * inner + "┐")
            lines.append("│" + title.center(inner) + "│")
            lines.append("├" + "┬".join("─" * w for w in widths) + "┤")
        else:
            lines.append("┌" + "┬".join("─" * w for w in widths) + "┐")
        lines.append(line(headers))
        lines.append("├" + "┼".join("─" * w for w in widths) + "┤")
        lines.extend(line(r) for r in cells)
        lines.append("└" + "┴".join("─" * w for w in widths) + "┘")
        return "\n".join(lines)

    @staticmethod
    def frame_table(frame: pd.DataFrame, title: Optional[str] = None, float_format: str = "{:.4f}") -> str:
        """Render a DataFrame; floats use ``float_format``."""
        def render(value) -> str:
            if isinstance(value, float):
                return "n/a" if pd.isna(value) else float_format.format(value)
            return str(value)

        rows = [[render(v) for v in record] for record in frame.itertuples(index=False)]
        return TableFormatter.create_table([str(c) for c in frame.columns], rows, title)

    @staticmethod
    def create_summary_box(title: str, items: Sequence[Tuple[str, str]], width: int = 60) -> str:
        """Bordered key/value box."""
        label_width = max((len(k) for k, _ in items), default=0)
        lines = [f"┌─ {title} " + "─" * max(0, width - len(title) - 5) + "┐"]
        for key, value in items:
            text = f"{key:<{label_width}} : {value}"
            if len(text) > width - 4:
                text = text[:width - 7] + "..."
            lines.append(f"│ {text:<{width - 4}} │")
        lines.append("└" + "─" * (width - 2) + "┘")
        return "\n".join(lines)


class ReportOutput:
    """Writes report text to stdout and, optionally, a timestamped file under ``logs/``."""

    def __init__(self, command: str, log_to_file: bool = True, logs_dir: str = "logs"):
        self.command = command
        self.report_logger: Optional[logging.Logger] = None
        self.path: Optional[str] = None
        if log_to_file:
            self._setup(logs_dir)

    def _setup(self, logs_dir: str) -> None:
        try:
            os.makedirs(logs_dir, exist_ok=True)
            timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
            self.path = os.path.join(logs_dir, f"report_{self.command}_{timestamp}.log")
            self.report_logger = logging.getLogger(f"dmn_segmentation.report.{self.command}.{timestamp}")
            if not self.report_logger.handlers:
                handler = logging.FileHandler(self.path, mode="w", encoding="utf-8")
                handler.setFormatter(logging.Formatter("%(message)s"))
                self.report_logger.addHandler(handler)
                self.report_logger.setLevel(logging.INFO)
                self.report_logger.propagate = False
            logger.info(f"Report output also written to {self.path}")
        except OSError as e:
            logger.warning(f"Report file logging disabled: {e}")
            self.report_logger = None
            self.path = None

    def output(self, message: str) -> None:
        print(message)
        if self.report_logger is not None:
            self.report_logger.info(message)

    def section_header(self, title: str, width: int = 72) -> str:
        header = f"\n{'=' * width}\n{f' {title} '.center(width, '=')}\n{'=' * width}"
        self.output(header)
        return header

    def close(self) -> None:
        if self.report_logger is not None:
            for handler in list(self.report_logger.handlers):
                handler.close()
                self.report_logger.removeHandler(handler)

