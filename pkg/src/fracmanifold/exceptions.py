"""Exception hierarchy.

Input problems derive from :class:`InvalidInputError` (a ``ValueError``);
numerical breakdowns derive from :class:`NumericalFailure` (an
``ArithmeticError``).  The CLI maps the two families to exit codes 2 and 1.
"""

from __future__ import annotations


class FracManifoldError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(FracManifoldError, ValueError):
    """Parameters that fail validation before any computation starts."""


class NumericalFailure(FracManifoldError, ArithmeticError):
    """A computation started but could not deliver a trustworthy result."""


class DomainError(InvalidInputError):
    pass


class SectorError(InvalidInputError):
    """An eigenvalue lies in the wrong sector for the requested expansion."""


class NonHyperbolic(InvalidInputError):
    """An eigenvalue sits on the stability boundary ``|arg lambda| = p*pi/2``."""


class NonConvergence(NumericalFailure):
    pass


class TailNotDecaying(NumericalFailure):
    pass


class DivergedTrajectory(NumericalFailure):
    pass


class NoContraction(NumericalFailure):
    pass


class StepOverflow(NumericalFailure):
    """The integrated trajectory escaped; ``time`` records where."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time
