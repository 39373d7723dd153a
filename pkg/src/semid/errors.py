"""Exception hierarchy shared by the library and the CLI.

Each branch maps to a distinct CLI exit code so scripted callers can tell
configuration mistakes, bad input data, wire-level failures and plain I/O
problems apart.
"""

from __future__ import annotations


class SemIdError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(SemIdError):
    """Invalid parameter or option combination."""

    exit_code = 2


class DataError(SemIdError):
    """Malformed or inconsistent input data (feature files, identities)."""

    exit_code = 3

    def __init__(self, message: str, record_index: int | None = None):
        if record_index is not None:
            message = f"record {record_index}: {message}"
        super().__init__(message)
        self.record_index = record_index


class ProtocolError(SemIdError):
    """Violation of the wire protocol or the identification dialogue."""

    exit_code = 4


class IOFailure(SemIdError):
    """Filesystem or network transport failure."""

    exit_code = 5
