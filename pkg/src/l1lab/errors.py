"""Exception taxonomy, mirrored by the CLI exit codes."""

from __future__ import annotations


class LabError(Exception):
    """Base class for all package errors."""


class ValidationError(LabError):
    """A precondition or input validation failed (CLI exit code 2)."""


class BudgetError(LabError):
    """A configured resource budget would be exceeded (CLI exit code 3)."""


class VerificationError(LabError):
    """A certificate or map failed re-verification (CLI exit code 4)."""
