"""Exception types shared across the package."""

from __future__ import annotations


class FastcuError(Exception):
    """Base class for every error raised by this package."""


class NotAssociative(FastcuError):
    pass


class NoIdentity(FastcuError):
    pass


class NoInverse(FastcuError):
    pass


class NotProjectiveRep(FastcuError):
    pass


class NotRightQuasigroup(FastcuError):
    pass


class DimensionMismatch(FastcuError):
    pass


class MissingFactorSystem(FastcuError):
    pass


class UnsupportedInput(FastcuError):
    pass


class NonOrthogonalProjectors(FastcuError):
    pass


class NetTooLarge(FastcuError):
    pass


class NotUnitary(FastcuError):
    pass


class NotSpecial(FastcuError):
    pass


class TooLarge(FastcuError):
    pass


class AxiomViolation(FastcuError):
    pass


class BudgetExhausted(FastcuError):
    """Compilation ran out of net budget. Carries the best attempt seen."""

    def __init__(self, message: str, best: object | None = None):
        super().__init__(message)
        self.best = best


class BlockOverlap(FastcuError):
    pass


class UnknownExample(FastcuError):
    pass


class SchemaMismatch(FastcuError):
    pass
