"""Exception types shared across the toolkit.

The CLI maps these to exit code 1; argument parsing problems exit 2.
"""


class SemsplatError(Exception):
    """Base class for all toolkit errors."""


class FormatError(SemsplatError):
    """A file does not conform to its declared on-disk format."""


class DataError(SemsplatError):
    """File content is structurally valid but numerically unusable."""


class ContractError(SemsplatError):
    """An operation was called with arguments violating its contract."""


class IOFailure(SemsplatError):
    """Reading or writing a file failed at the OS level."""
