"""Exception types shared across the package.

The CLI maps these onto exit codes: :class:`UsageError` -> 1,
:class:`DataError` -> 2, :class:`SizeCapError` -> 3.
"""


class DesignCoverError(Exception):
    """Base class for all package errors."""


class UsageError(DesignCoverError, ValueError):
    """Inconsistent modes or parameters supplied by the caller."""


class DataError(DesignCoverError, ValueError):
    """Malformed, inconsistent or unreadable input data."""


class SizeCapError(DesignCoverError):
    """An exhaustive routine refused an instance above its size cap."""
