"""Exception types shared across the package."""


class DunesError(Exception):
    """Base class for all package errors."""


class ConfigError(DunesError, ValueError):
    """A parameter or configuration value violates its documented bound."""


class FormatError(DunesError, ValueError):
    """A binary file could not be parsed.

    ``offset`` is the byte position at which parsing failed.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ShapeError(DunesError, ValueError):
    """Array dimensions or channel counts do not match what was expected."""

    def __init__(self, message, expected=None, actual=None):
        super().__init__(message)
        self.expected = expected
        self.actual = actual


class UnsupportedConfiguration(ConfigError):
    """An export configuration that this package deliberately does not build."""


class NonFiniteLoss(DunesError, FloatingPointError):
    """Training produced a NaN or infinite loss."""

    def __init__(self, message, sample_index=None, history=None):
        super().__init__(message)
        self.sample_index = sample_index
        self.history = list(history or [])


class UndefinedDisplacement(DunesError, ValueError):
    """Cross-correlation is undefined because a frame has zero variance."""


class ValidationError(DunesError, ValueError):
    """A file parsed correctly but its metadata fails validation."""
