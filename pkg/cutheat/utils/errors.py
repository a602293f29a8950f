"""Exception types shared by the solver modules."""
from __future__ import annotations

from typing import Optional, Sequence


class CutHeatError(RuntimeError):
    """Base class for solver failures."""

    step: Optional[int] = None


class InvalidArgumentError(CutHeatError, ValueError):
    """Raised when an operation receives arguments outside its domain."""


class ConfigError(CutHeatError, ValueError):
    """Raised when a configuration text cannot be parsed or validated."""

    def __init__(self, message: str, *, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class ExtensionCoverageError(CutHeatError):
    """Raised when a cell needed at step n was not active at step n-1."""

    def __init__(self, message: str, *, step: Optional[int] = None, cells: Sequence[int] = ()):
        self.step = step
        self.cells = [int(c) for c in cells]
        super().__init__(message)


class SolverDivergence(CutHeatError):
    """Raised when the linear solver misses its residual tolerance."""

    def __init__(self, message: str, *, residual: float, iterations: Optional[int] = None):
        self.residual = float(residual)
        self.iterations = iterations
        super().__init__(f"{message} (relative residual {self.residual:.3e})")


__all__ = [
    "CutHeatError",
    "InvalidArgumentError",
    "ConfigError",
    "ExtensionCoverageError",
    "SolverDivergence",
]
