"""Exception hierarchy.

Every error raised on purpose derives from :class:`EtrnnError`.  The CLI maps
:class:`InputError` subclasses to exit status 2 and :class:`InvariantViolation`
to exit status 3.
"""

from __future__ import annotations


class EtrnnError(Exception):
    """Base class for all library errors."""


class InputError(EtrnnError):
    """Malformed or unusable input supplied by the caller."""


class InvariantViolation(EtrnnError):
    """An internal consistency check failed."""


class FormulaSyntaxError(InputError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class UnsupportedConstraint(FormulaSyntaxError):
    pass


class MissingVariable(InputError):
    pass


class BudgetExceeded(EtrnnError):
    pass


class DivisionByZero(InputError):
    pass


class SchemaError(InputError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path or '/'}: {message}")
        self.path = path or "/"


class IdMismatch(InputError):
    pass


class SlotCollision(InputError):
    pass


class UnfixableMiddle(InputError):
    pass


class AmbiguousIncomingFix(InputError):
    pass


class NonUnitFixedWeight(InputError):
    pass


class PassOrderError(InputError):
    """A lowering pass was applied to an instance in the wrong stage."""


class IncompatibleDimensions(InputError):
    pass


class LengthMismatch(InputError):
    pass


class ModeMismatch(InputError):
    pass


class UnsatisfyingAssignment(InputError):
    pass


class ZeroInverse(InputError):
    pass


class NonIdentityActivation(InputError):
    pass


class ZeroScalingWeight(InputError):
    pass


class NotZeroCost(InputError):
    pass


class NonFiniteCost(EtrnnError):
    pass
