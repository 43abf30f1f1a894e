"""Exception types raised across fibergof.

Each concrete error also derives from the matching builtin so callers that
only care about the category (``ValueError``, ``OverflowError``...) can keep
catching that.
"""


class FiberGofError(Exception):
    """Base class for all fibergof errors."""


class InvalidGraphError(FiberGofError, ValueError):
    """Graph violates the codec rules (self-loop, multiplicity, bad endpoint)."""


class InvalidTableError(FiberGofError, ValueError):
    """Cell vector is not a valid table for its mode."""


class DimensionMismatchError(FiberGofError, ValueError):
    """Matrix and vector shapes disagree."""


class InvalidModelError(FiberGofError, ValueError):
    """Model parameters are inconsistent with the family."""


class StatisticOverflowError(FiberGofError, OverflowError):
    """Integer statistic would not fit in 64 bits."""


class KernelOverflowError(FiberGofError, OverflowError):
    """Integer elimination grew entries past the configured bit budget."""


class TruncatedFiberError(FiberGofError, RuntimeError):
    """Operation needs a complete fiber but enumeration hit its cap."""


class NotConvergedError(FiberGofError, RuntimeError):
    """Operation needs a converged fit."""


class InputFileError(FiberGofError, OSError):
    """Input file is missing, unreadable or malformed."""


class UsageError(FiberGofError):
    """Command-line arguments are invalid or inconsistent."""
