import logging
from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..errors import SolveStatus

logger = logging.getLogger(__name__)

OPTIMALITY = "optimality"
FEASIBILITY = "feasibility"
NO_GOOD = "no-good"
NO_CUT = "none"


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    lower_bound: float
    upper_bound: float
    x: Tuple[float, ...]
    cut_type: str
    extras: Tuple[Tuple[str, Any], ...] = ()


@dataclass
class BendersTrace:
    """Per-iteration record of a Benders run: iterate, bounds and cut emitted."""

    rows: List[TraceRow] = field(default_factory=list)

    def record(
        self,
        iteration: int,
        lower_bound: float,
        upper_bound: float,
        x: Sequence[float],
        cut_type: str,
        **extras: Any,
    ) -> TraceRow:
        row = TraceRow(
            iteration=iteration,
            lower_bound=float(lower_bound),
            upper_bound=float(upper_bound),
            x=tuple(float(v) for v in x),
            cut_type=cut_type,
            extras=tuple(extras.items()),
        )
        self.rows.append(row)
        logger.info(
            "iter %d  LB %.6g  UB %.6g  x=%s  cut=%s",
            iteration,
            row.lower_bound,
            row.upper_bound,
            _format_vector(row.x),
            cut_type,
        )
        return row

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def lower_bounds(self) -> List[float]:
        return [row.lower_bound for row in self.rows]

    @property
    def upper_bounds(self) -> List[float]:
        return [row.upper_bound for row in self.rows]

    def frame(self) -> pd.DataFrame:
        """Columns iter, LB, UB, x, cut_type followed by driver-specific extras."""
        records = []
        for row in self.rows:
            record = {
                "iter": row.iteration,
                "LB": row.lower_bound,
                "UB": row.upper_bound,
                "x": _format_vector(row.x),
                "cut_type": row.cut_type,
            }
            record.update(dict(row.extras))
            records.append(record)
        columns = ["iter", "LB", "UB", "x", "cut_type"]
        for row in self.rows:
            for key, _ in row.extras:
                if key not in columns:
                    columns.append(key)
        return pd.DataFrame.from_records(records, columns=columns)

    def to_csv(self, path: str) -> None:
        self.frame().to_csv(path, index=False)


def _format_vector(values: Sequence[float]) -> str:
    return ";".join(f"{v:.10g}" for v in values)


@dataclass(frozen=True)
class BendersResult:
    """
    Outcome of a driver run. y is the second-stage solution at x (a tuple
    of per-scenario vectors for the stochastic driver).
    """

    status: SolveStatus
    x: Optional[np.ndarray]
    y: Any
    value: float
    lower_bound: float
    upper_bound: float
    trace: BendersTrace
    cuts: Tuple[dict, ...] = ()

    @property
    def iterations(self) -> int:
        return len(self.trace)

    def summary(self) -> dict:
        """A JSON-ready description of the result."""

        def plain(vector):
            if vector is None:
                return None
            if isinstance(vector, tuple):
                return [plain(v) for v in vector]
            return [float(v) for v in np.asarray(vector).reshape(-1)]

        return {
            "status": self.status.value,
            "value": _finite_or_text(self.value),
            "lower_bound": _finite_or_text(self.lower_bound),
            "upper_bound": _finite_or_text(self.upper_bound),
            "iterations": self.iterations,
            "x": plain(self.x),
            "y": plain(self.y),
        }


def _finite_or_text(value: float):
    if np.isfinite(value):
        return float(value)
    return "inf" if value > 0 else "-inf"
