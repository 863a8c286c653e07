"""Exception types shared across the package."""


class CirError(Exception):
    """Base class for package errors."""


class DomainError(CirError, ValueError):
    """A value left the region where a scheme is defined (e.g. negative radicand)."""


class UsageError(CirError, ValueError):
    """An operation was called with arguments it does not support."""
