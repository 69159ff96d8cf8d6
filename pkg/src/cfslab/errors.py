"""Shared exception types.

Every module raises these rather than bare ValueError so that the CLI can map
failure classes onto exit codes (2 for validation, 3 for numerical failure).
"""

from __future__ import annotations


class CfsError(Exception):
    """Base class for all package errors."""


class ValidationError(CfsError):
    """Bad inputs: rejected before any numerics run (CLI exit code 2)."""


class NumericalError(CfsError):
    """Numerics failed or a verdict check did not pass (CLI exit code 3)."""


# -- validation ---------------------------------------------------------------

class NotHermitian(ValidationError):
    pass


class SignatureViolation(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class EmptyMeasure(ValidationError):
    pass


class ScheduleInvalid(ValidationError):
    pass


class NotUnitVector(ValidationError):
    pass


class UnknownFixture(ValidationError):
    pass


class UnsupportedMode(ValidationError):
    pass


class InvalidParams(ValidationError):
    pass


class BoxTooSmall(ValidationError):
    pass


class SupportNotCompact(ValidationError):
    pass


class DegenerateSeparation(ValidationError):
    pass


# -- numerical ----------------------------------------------------------------

class NonConvergent(NumericalError):
    pass


class SymmetryViolation(NumericalError):
    pass


class NotASolution(NumericalError):
    pass


class WindowExhausted(NumericalError):
    pass
