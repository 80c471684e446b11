"""Exception hierarchy shared by every module.

Each error carries the CLI exit code it maps to so ``pyrkv.cli`` can translate
failures without a lookup table.
"""

from __future__ import annotations


class PyrkvError(Exception):
    exit_code = 2


class TraceFormatError(PyrkvError, ValueError):
    """Malformed or inconsistent trace file."""


class BadMagic(TraceFormatError):
    pass


class VersionMismatch(TraceFormatError):
    pass


class Truncated(TraceFormatError):
    pass


class ExtentOverflow(TraceFormatError):
    pass


class EmptyHistory(PyrkvError, ValueError):
    pass


class ClassificationError(PyrkvError, ValueError):
    pass


class EmptySequence(ClassificationError):
    pass


class InsufficientHistory(ClassificationError):
    pass


class AllZero(ClassificationError):
    """The first-differenced, demeaned signal carries no energy."""


class NonDivisible(PyrkvError, ValueError):
    pass


class AttentionError(PyrkvError, ValueError):
    pass


class ShapeMismatch(AttentionError):
    pass


class NonFinite(AttentionError):
    pass


class EmptySegment(AttentionError):
    pass


class CorruptOffsets(AttentionError):
    pass


class VerificationFailure(PyrkvError):
    exit_code = 3
