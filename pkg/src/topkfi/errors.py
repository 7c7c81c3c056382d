"""Exception hierarchy shared by the library and the CLI."""

from __future__ import annotations


class TopKError(Exception):
    """Base class for all errors raised by :mod:`topkfi`."""


class ParameterError(TopKError, ValueError):
    """A parameter is outside its valid range."""


class DataError(TopKError, ValueError):
    """Malformed or empty input data."""


class ResourceLimitError(TopKError):
    """An operation would exceed a configured resource guard."""
