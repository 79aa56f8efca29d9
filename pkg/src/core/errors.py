from enum import Enum
from typing import Optional


class GBendersError(Exception):
    """Base class for every error raised by the solver stack."""


class DimensionMismatch(GBendersError):
    """Vector or matrix shapes do not agree with the problem data."""


class NumericalBreakdown(GBendersError):
    """The simplex basis became singular or the pivot limit was reached."""


class NotOptimal(GBendersError):
    """An operation needed an optimal certificate and got something else."""


class EmptyTree(GBendersError):
    """A dual function was requested from a tree with no usable leaves."""


class BadRange(GBendersError):
    """A sampling grid was empty or had a non-positive step."""


class BoxTooLarge(GBendersError):
    """The first-stage lattice exceeds the enumeration cap."""


class AssumptionViolated(GBendersError):
    """The instance breaks a boundedness or integrality assumption."""


class InstanceError(GBendersError):
    """
    An instance file failed to parse or validate.

    Args:
        message (str): Human readable description.
        field (str, optional): Dotted path of the offending field.
        line (int, optional): Line number for syntax errors.
    """

    def __init__(
        self, message: str, field: Optional[str] = None, line: Optional[int] = None
    ):
        self.message = message
        self.field = field
        self.line = line
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class MilpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ABORTED = "aborted"


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"
    STALLED = "stalled"


class ReactionStatus(str, Enum):
    OPTIMAL = "optimal"
    SECOND_STAGE_INFEASIBLE = "second_stage_infeasible"
    LINK_INFEASIBLE = "link_infeasible"
