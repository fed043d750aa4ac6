"""Exception hierarchy shared by all modules and mapped to CLI exit codes."""
from __future__ import annotations


class EntroqError(Exception):
    exit_code = 1


class ValidationError(EntroqError, ValueError):
    """Malformed input: wrong shapes, non-Hermitian matrices, bad parameters."""

    exit_code = 2


class DomainError(EntroqError, ValueError):
    """Input is well-formed but outside the mathematical domain (supports, spectra)."""

    exit_code = 3


class EstimationError(EntroqError, RuntimeError):
    """A variational estimate could not be produced."""

    exit_code = 4

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = [] if trace is None else trace


class TrainingError(EstimationError):
    """Non-finite loss during training; ``trace`` holds the losses seen so far."""
