"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes, so library code raises the most specific
class that applies.
"""


class CascadeError(Exception):
    """Base class for all package errors."""


class ValidationError(CascadeError, ValueError):
    """Bad input, bad configuration or violated precondition."""


class NoFeaturesError(CascadeError):
    """A fitted selector keeps no features."""


class DivergenceError(CascadeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None, stage=None):
        super().__init__(message)
        self.epoch = epoch
        self.stage = stage
