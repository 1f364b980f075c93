"""Error taxonomy shared by every module.

Each exception carries ``code``, the taxonomy name the CLI prints, so
callers can match on it without importing the class.
"""

from __future__ import annotations


class MomError(Exception):
    code = "MomError"

    def __init__(self, message: str = "", *, line: int | None = None, column: int | None = None):
        super().__init__(message)
        self.message = message
        self.line = line
        self.column = column

    def location(self) -> str | None:
        if self.line is None:
            return None
        if self.column is None:
            return f"{self.line}"
        return f"{self.line}:{self.column}"

    def __str__(self) -> str:
        loc = self.location()
        return f"{loc}: {self.message}" if loc else self.message


# kernel-store

class UnknownElement(MomError):
    """Referenced element id does not exist."""

    code = "UnknownElement"


class CycleViolation(MomError):
    """Edge would close an IsA/InstanceOf cycle."""

    code = "CycleViolation"


class LevelViolation(MomError):
    """Edge violates the kind/level constraints of its edge kind."""

    code = "LevelViolation"


class SnapshotError(MomError):
    """Snapshot document is malformed or has an unknown format."""

    code = "SnapshotError"


# method-engine

class ArityMismatch(MomError):
    """Argument count or role names do not match the method."""

    code = "ArityMismatch"


class TypeInadmissible(MomError):
    """Argument is outside the declared class or of the wrong value type."""

    code = "TypeInadmissible"


class DivisionByZero(MomError):
    """Div primitive with a zero divisor."""

    code = "DivisionByZero"


class DomainError(MomError):
    """Numeric primitive applied outside its domain (e.g. log of 0)."""

    code = "DomainError"


class NonTermination(MomError):
    """Evaluation exhausted its primitive step budget."""

    code = "NonTermination"


class NotAdmissible(MomError):
    """Action is not admissible for its participants."""

    code = "NotAdmissible"


class MalformedMethod(MomError):
    """Method definition violates a structural rule."""

    code = "MalformedMethod"


# abstraction

class MixedKinds(MomError):
    """Members do not share one element kind."""

    code = "MixedKinds"


class MixedLevels(MomError):
    """Members do not share one abstraction level."""

    code = "MixedLevels"


class TooFewMembers(MomError):
    """Not enough members for the operation."""

    code = "TooFewMembers"


class UnknownClass(MomError):
    """Target is missing or not a class (level >= 1)."""

    code = "UnknownClass"


class UnknownAttributeInBinding(MomError):
    """Binding names an attribute the class does not have."""

    code = "UnknownAttributeInBinding"


class CriterionUnsatisfied(MomError):
    """Grouping criterion does not hold for every member."""

    code = "CriterionUnsatisfied"


class WillMonotonicity(MomError):
    """Will significance decreases up an IsA chain."""

    code = "WillMonotonicity"


# consolidation / story-engine

class ReplayFailure(MomError):
    """An episode could not be replayed."""

    code = "ReplayFailure"


class DslSyntaxError(MomError):
    """Story DSL text does not match the grammar."""

    code = "SyntaxError"


class UnknownReference(MomError):
    """Story DSL names an undeclared object."""

    code = "UnknownReference"


class DuplicateObject(MomError):
    """Object declared twice in one story."""

    code = "DuplicateObject"


# planner

class NoGoalCandidates(MomError):
    """Goal scorer is undefined on every state outside the problem region."""

    code = "NoGoalCandidates"


class EmptyProblemRegion(MomError):
    """Problem predicate holds on no state."""

    code = "EmptyProblemRegion"


class InvalidPartition(MomError):
    """Coarsening is not a partition of the level's states."""

    code = "InvalidPartition"


class Unsolvable(MomError):
    """No ground path connects the problem region to the goal region."""

    code = "Unsolvable"


class NoReachableStart(MomError):
    """No scored state reaches the goal region."""

    code = "NoReachableStart"


class SpaceFormatError(MomError):
    """State-space file is malformed."""

    code = "SpaceFormatError"
