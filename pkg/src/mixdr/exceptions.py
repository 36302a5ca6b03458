"""Exception types raised across the package.

All errors derive from ``MixdrError`` so callers can catch them as a group. The
CLI maps them onto exit codes.
"""


class MixdrError(Exception):
    """Base class for package errors."""


class ConfigError(MixdrError, ValueError):
    """Invalid model, penalty or training configuration."""


class DataError(MixdrError, ValueError):
    """Input data does not match what the model expects."""


class DomainError(DataError):
    """A distribution parameter lies outside its domain."""

    def __init__(self, parameter, message=None):
        self.parameter = parameter
        super().__init__(message or f"parameter {parameter!r} outside its domain")


class SupportError(DataError):
    """An observation lies outside the support of a family."""


class NumericError(MixdrError, ArithmeticError):
    """Non-finite input or a numerically singular system."""


class StateError(MixdrError, RuntimeError):
    """An object was used before a required setup step."""


class DivergenceError(MixdrError, RuntimeError):
    """Training produced a non-finite gradient or risk.

    Carries the epoch/batch position and the risk trajectory recorded so far.
    """

    def __init__(self, message, epoch=None, batch=None, trajectory=None):
        self.epoch = epoch
        self.batch = batch
        self.trajectory = list(trajectory) if trajectory is not None else []
        super().__init__(message)
