"""Exception types shared across the package.

The CLI maps these onto exit codes: ValidationError -> 1, anything
else -> 2.
"""


class XferError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(XferError):
    """Bad user input: malformed files, contract violations, invalid config."""


class FormatError(ValidationError):
    """A file does not conform to its declared on-disk format."""
