"""Exceptions raised by the numerical library.

Everything derives from HmmError so the CLI can turn any library failure into a
one-line diagnostic.
"""

from __future__ import annotations


class HmmError(Exception):
    """Base class for all hmmwave errors."""


class ConfigError(HmmError):
    pass


class CoefficientError(HmmError):
    """Unknown catalog name or a tensor structure the solvers do not handle."""


class ValidationFailure(HmmError):
    def __init__(
        self,
        message: str,
        x: tuple[float, ...] | None = None,
        y: tuple[float, ...] | None = None,
    ):
        super().__init__(message)
        self.x = x
        self.y = y


class KernelConstructionError(HmmError):
    pass


class CflViolation(HmmError):
    pass


class BoxTooSmall(HmmError):
    pass


class SolverNonConvergence(HmmError):
    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class FluxError(HmmError):
    def __init__(self, message: str, location: tuple[float, ...] | None = None):
        if location is not None:
            message = f"{message} at edge {tuple(round(v, 12) for v in location)}"
        super().__init__(message)
        self.location = location


class MetadataMismatch(HmmError):
    pass


class HorizonTooShort(HmmError):
    pass


class RateFitError(HmmError):
    def __init__(self, message: str, reason: str):
        super().__init__(message)
        self.reason = reason


class SweepFailure(HmmError):
    pass
