"""Shared exception types.

The CLI maps these onto exit codes: ValueError subclasses (bad parameters,
bad configuration, unusable data) -> 2, OSError subclasses (missing or
malformed files) -> 3, anything else -> 4.
"""


class ConfigError(ValueError):
    """A parameter or configuration value is invalid or inconsistent."""


class DataError(ValueError):
    """The dataset contents cannot support the requested operation."""


class FormatError(OSError):
    """An on-disk artifact violates its declared byte layout."""
