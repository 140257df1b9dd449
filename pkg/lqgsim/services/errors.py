"""Exception hierarchy shared by the simulation services."""
from __future__ import annotations

from typing import Optional


class LQGError(Exception):
    """Base class for every error raised by lqgsim."""


class DomainError(LQGError, ValueError):
    """An argument lies outside the domain of the requested operation."""


class ResourceError(LQGError):
    def __init__(self, message: str, required_bytes: int, limit_bytes: int):
        super().__init__(f"{message} (requires {required_bytes} bytes, limit {limit_bytes} bytes)")
        self.required_bytes = required_bytes
        self.limit_bytes = limit_bytes


class NumericError(LQGError):
    def __init__(self, message: str, achieved_tolerance: Optional[float] = None):
        if achieved_tolerance is not None:
            message = f"{message} (achieved tolerance {achieved_tolerance:.3g})"
        super().__init__(message)
        self.achieved_tolerance = achieved_tolerance


class InsufficientDataError(LQGError):
    """Too few usable points for a fit."""


class ExperimentFailure(LQGError):
    """An experiment as a whole could not produce a trustworthy result."""


class InvariantViolation(LQGError):
    """Internal consistency check failed; indicates a bug, never bad input."""
