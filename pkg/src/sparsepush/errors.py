"""Exception hierarchy shared by every module."""

from __future__ import annotations


class SparsePushError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgument(SparsePushError, ValueError):
    """A caller supplied an argument outside the documented domain."""


class NumericalFailure(SparsePushError, ArithmeticError):
    """An iterative routine diverged or a push-sum weight collapsed."""


class DecodeError(SparsePushError, ValueError):
    """A serialized payload is corrupt or internally inconsistent."""


class FormatError(SparsePushError, ValueError):
    """An input file does not follow the expected format."""


class ConfigError(SparsePushError, ValueError):
    """A configuration value failed validation.

    ``path`` is the dotted location of the offending field, e.g. ``train.eta``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)
