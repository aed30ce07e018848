"""Exception hierarchy shared by all modules and mapped to CLI exit codes."""

from __future__ import annotations


class SepsimError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(SepsimError):
    """Rejected input: out-of-range parameter, malformed point set, bad flag."""

    exit_code = 2


class NumericError(SepsimError):
    """A solver or integrator failed to converge or left its stable regime."""

    exit_code = 3


class ResourceError(SepsimError):
    """Request exceeds a configured size or memory cap."""

    exit_code = 4
