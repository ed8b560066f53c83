"""Exception types shared across the engine."""

from __future__ import annotations


class MbnasError(Exception):
    """Base class for engine errors."""


class StructureMismatch(MbnasError):
    """Genome grids do not match the space configuration."""


class MalformedEncoding(MbnasError):
    """One-hot vector has the wrong length or an invalid group."""


class ConstraintViolation(MbnasError):
    """Operation requires a constraint-valid genome but got violations."""

    def __init__(self, message: str, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class NoLegalNeighbor(MbnasError):
    """Every single-gene edit of the genome violates a constraint."""


class OddSpatialDim(MbnasError):
    """Operator requires even spatial dims for its strided path."""


class InfeasibleSpace(MbnasError):
    """Search cannot draw enough feasible candidates (e.g. latency cap too low)."""


class EmptyFront(MbnasError):
    """A front was requested from an empty candidate set."""


class LengthMismatch(MbnasError):
    """Paired sequences have different lengths."""


class ZeroVariance(MbnasError):
    """Correlation undefined: an input column is constant."""


class EvaluatorFailure(MbnasError):
    """Base class for external evaluator failures."""


class EvaluationTimeout(EvaluatorFailure):
    """External evaluator did not answer within the deadline."""


class ProtocolError(EvaluatorFailure):
    """External evaluator sent a malformed or mismatched message."""


class EvaluatorCrash(EvaluatorFailure):
    """External evaluator process exited or closed its stream mid-request."""
