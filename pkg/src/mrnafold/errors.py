"""Exception types shared across the package."""

from __future__ import annotations


class MrnafoldError(Exception):
    """Base class for all package errors."""


class EmptySequenceError(MrnafoldError):
    """Raised when a sequence contains no bases."""


class IllegalCharacterError(MrnafoldError):
    """Raised when a sequence contains a character outside {A,C,G,U}."""

    def __init__(self, position: int, char: str):
        self.position = position
        self.char = char
        super().__init__(f"illegal character {char!r} at position {position}")


class UnknownStackContextError(MrnafoldError):
    """Raised when a stack context is missing from the energy table."""

    def __init__(self, context: str):
        self.context = context
        super().__init__(f"stack context {context!r} not present in energy table")


class InvalidPenaltyError(MrnafoldError):
    """Raised when the crossing penalty is not strictly positive."""


class EmptyProblemError(MrnafoldError):
    """Raised when a sequence yields no decision variables."""


class KappaTooLargeError(MrnafoldError):
    """Raised when the free part of the eliminated-variable subproblem
    exceeds the exact-enumeration cap."""

    def __init__(self, size: int, cap: int):
        self.size = size
        self.cap = cap
        super().__init__(f"free eliminated-variable subproblem has {size} variables, cap is {cap}")


class LengthMismatchError(MrnafoldError):
    """Raised when a bitstring or mask length disagrees with the qubit count."""


class EmptySampleSetError(MrnafoldError):
    """Raised when a statistic is requested over zero samples."""


class BadAlphaError(MrnafoldError):
    """Raised when the CVaR fraction is outside (0, 1]."""


class TooLargeError(MrnafoldError):
    """Raised when an exact-enumeration routine is asked to exceed its cap."""

    def __init__(self, n: int, cap: int):
        self.n = n
        self.cap = cap
        super().__init__(f"exact enumeration over {n} variables exceeds cap of {cap}")


class OverlappingLinksError(MrnafoldError):
    """Raised when entangler links in one layer touch a common qubit."""


class SizeMismatchError(MrnafoldError):
    """Raised when tensor-network operands have different site counts."""


class IndexOutOfRangeError(MrnafoldError):
    """Raised when a (layer, qubit) parameter index does not exist."""


class ConfigError(MrnafoldError):
    """Raised when an experiment configuration is missing or inconsistent."""
