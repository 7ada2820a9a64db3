#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Error Types
===========

Exception hierarchy shared by every module. The command-line entry point maps
these onto exit codes: contract violations exit with 1, I/O failures with 2.
"""


class DmnError(Exception):
    """Base class for all errors raised by the package."""


class ContractViolation(DmnError, ValueError):
    """A precondition on shapes, dimensions or argument ranges was violated."""


class CheckpointMismatchError(ContractViolation):
    """A checkpoint was produced under a configuration that differs from the requested one."""

    def __init__(self, differences):
        self.differences = list(differences)
        listing = "; ".join(self.differences)
        super().__init__(f"checkpoint/config mismatch in {len(self.differences)} field(s): {listing}")


class GenerationError(ContractViolation):
    """A scene specification could not be satisfied within the retry budget."""


class NumericError(ContractViolation):
    """Non-finite values were produced where finite values are required."""


class DmnIOError(DmnError, OSError):
    """Reading or writing an artifact on disk failed."""


class DatasetIOError(DmnIOError):
    """A dataset manifest, image or mask could not be read or written."""


class CheckpointIOError(DmnIOError):
    """A checkpoint file is missing or malformed."""
