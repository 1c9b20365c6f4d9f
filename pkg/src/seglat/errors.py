"""Exception types raised by seglat.

Every error derives from :class:`SeglatError` and from the closest builtin,
so callers may catch either ``SeglatError`` or e.g. ``ValueError``.
"""

from __future__ import annotations


class SeglatError(Exception):
    """Base class for all seglat errors."""


class DimensionError(SeglatError, ValueError):
    """Operand shapes are incompatible."""


class ConfigurationError(SeglatError, ValueError):
    """A configuration value is invalid or inconsistent."""


class DataError(SeglatError, ValueError):
    """Input data violates a precondition (labels, lengths, finiteness)."""


class UnsupportedInputError(DataError):
    """Input rank or layout is not supported by the tokenizer."""


class RangeError(SeglatError, ValueError):
    """A value lies outside its permitted range."""


class FormatError(SeglatError, ValueError):
    """A container, checkpoint or manifest file is malformed."""


class UsageError(SeglatError, ValueError):
    """An API was called outside its contract (e.g. backward on a non-scalar)."""


class VerificationError(SeglatError, AssertionError):
    """A verification harness detected an inconsistency."""


class ContractViolation(SeglatError, RuntimeError):
    """An internal invariant was broken."""


class NonFiniteError(SeglatError, FloatingPointError):
    """An operation produced NaN or Inf."""


class TrainingAborted(SeglatError, RuntimeError):
    """Training stopped because a gradient or loss became non-finite."""
