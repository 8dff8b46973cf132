"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures without a
lookup table: 2 for malformed input, 1 for a check that ran and failed.
"""

from __future__ import annotations


class DyneqError(Exception):
    exit_code = 1


class ParseError(DyneqError):
    """Expression text does not conform to the grammar."""

    exit_code = 2

    def __init__(self, message: str, position: int | None = None, text: str | None = None):
        self.position = position
        self.text = text
        if position is not None:
            message = f"{message} at position {position}"
            if text is not None:
                message += f" in {text!r}"
        super().__init__(message)


class UnknownIdentifier(ParseError):
    pass


class ProblemFileError(DyneqError):
    """Problem file is malformed or has a dangling cross-reference."""

    exit_code = 2


class SingularPoint(DyneqError):
    """Evaluation hit a pole (zero denominator or undefined atan2)."""


class DegenerateSampling(DyneqError):
    """Every sample point was singular, so nothing could be decided."""


class NotAControlSystem(DyneqError):
    """The control Jacobian of the dynamics is generically rank deficient."""


class ControlCountMismatch(DyneqError):
    """Dynamically equivalent systems must have the same number of controls."""


class ContactResidualError(DyneqError):
    """A pulled-back contact form has a nonzero dt component."""


class PropertyViolation(DyneqError):
    """A structural property of the block family failed (band, leading blocks, rank budget)."""

    def __init__(self, message: str, indices: tuple | None = None):
        self.indices = indices
        super().__init__(message)


class PreconditionError(DyneqError):
    """Operation is undefined for this input (e.g. rank matrix at p = 0)."""


class InvariantViolation(DyneqError):
    """A computed rank matrix failed one of its invariants."""

    def __init__(self, message: str, failures: list | None = None):
        self.failures = failures or []
        super().__init__(message)


class WindowTooSmall(DyneqError):
    exit_code = 2


class InvalidQuery(DyneqError):
    """Height query violates its own invariants (e.g. r1 + r2 > m)."""

    exit_code = 2
