"""Exception types shared across the package.

Validation failures (bad shapes, broken invariants, malformed configs) and
numerical failures (singular matrices, non-convergence, truncation caps) are
kept distinct so the CLI can map them to different exit codes.
"""


class QestError(Exception):
    """Base class for all package errors."""


class ValidationError(QestError):
    """Input violates a documented precondition or invariant."""


class NumericalError(QestError):
    """A computation failed numerically (singularity, cap, non-convergence)."""
