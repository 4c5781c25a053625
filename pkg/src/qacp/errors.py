"""Exception hierarchy for the qacp toolkit.

Every error raised by the package derives from QacpError so the CLI can
map failures onto exit code 2 with the error name in the JSON payload.
"""

from __future__ import annotations


class QacpError(Exception):
    """Base class for all toolkit errors."""

    @property
    def name(self) -> str:
        return type(self).__name__


class ParseError(QacpError):
    """Syntax error in a spec file or term expression."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


class UndeclaredAction(QacpError):
    pass


class DuplicateDefinition(QacpError):
    pass


class NonSquareKraus(QacpError):
    pass


class KrausNotTracePreserving(QacpError):
    pass


class UnguardedRecursion(QacpError):
    pass


class GammaOnQuantumAction(QacpError):
    pass


class GammaConflict(QacpError):
    pass


class RegisterMismatch(QacpError):
    pass


class NonPhysicalResult(QacpError):
    pass


class DimensionCap(QacpError):
    pass


class StateSpaceExceeded(QacpError):
    pass


class DepthExceeded(QacpError):
    pass


class HiddenActionDisturbsPublicState(QacpError):
    pass


class UnboundVariable(QacpError):
    pass


class UnsupportedOperator(QacpError):
    """Term uses an operator outside the selected transition-rule set."""


class ModelMismatch(QacpError):
    pass


class TauDivergence(QacpError):
    pass


class SpecNotLinear(QacpError):
    pass


class BudgetExceeded(QacpError):
    pass


class OperatorNotEliminable(QacpError):
    pass


class RenameKindMismatch(QacpError):
    """Rename maps must send quantum actions to quantum actions and
    classical actions to classical actions."""
