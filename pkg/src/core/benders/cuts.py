"""
Pieces shared by the master problems: a small MILP model builder, interval
bounds of affine functions over the first-stage box, Farkas feasibility
rows and integer no-good rows.
"""
import logging
import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..branch_bound import MilpProblem
from ..simplex import EQ, GE, LE, LpCertificate, LpProblem, solve_lp
from ..settings import LpTolerances

logger = logging.getLogger(__name__)


class ModelBuilder:
    """Accumulates a MILP variable by variable and row by row."""

    def __init__(self):
        self._cost: List[float] = []
        self._lower: List[float] = []
        self._upper: List[float] = []
        self._integer: List[bool] = []
        self._rows: List[Dict[int, float]] = []
        self._senses: List[str] = []
        self._rhs: List[float] = []

    @property
    def num_cols(self) -> int:
        return len(self._cost)

    @property
    def num_rows(self) -> int:
        return len(self._rows)

    def add_variable(
        self,
        cost: float = 0.0,
        lower: float = 0.0,
        upper: float = math.inf,
        integer: bool = False,
    ) -> int:
        self._cost.append(float(cost))
        self._lower.append(float(lower))
        self._upper.append(float(upper))
        self._integer.append(bool(integer))
        return len(self._cost) - 1

    def add_variables(
        self,
        cost: Sequence[float],
        lower: Sequence[float],
        upper: Sequence[float],
        integer: Sequence[bool],
    ) -> List[int]:
        return [
            self.add_variable(c, lo, hi, flag)
            for c, lo, hi, flag in zip(cost, lower, upper, integer)
        ]

    def add_binary(self) -> int:
        return self.add_variable(0.0, 0.0, 1.0, True)

    def add_row(self, coeffs: Mapping[int, float], sense: str, rhs: float) -> int:
        row: Dict[int, float] = {}
        for col, value in coeffs.items():
            if value != 0.0:
                row[col] = row.get(col, 0.0) + float(value)
        self._rows.append(row)
        self._senses.append(sense)
        self._rhs.append(float(rhs))
        return len(self._rows) - 1

    def add_linear_row(
        self, cols: Sequence[int], coeffs: Sequence[float], sense: str, rhs: float
    ) -> int:
        return self.add_row(dict(zip(cols, coeffs)), sense, rhs)

    def build(self) -> MilpProblem:
        n, m = self.num_cols, self.num_rows
        A = np.zeros((m, n))
        for i, row in enumerate(self._rows):
            for col, value in row.items():
                A[i, col] = value
        return MilpProblem.build(
            self._cost, A, self._rhs, self._senses, self._lower, self._upper, self._integer
        )


def affine_range(
    coeffs: np.ndarray, constant: float, lower: np.ndarray, upper: np.ndarray
) -> Tuple[float, float]:
    """Min and max of coeffs^T x + constant over the box [lower, upper]."""
    coeffs = np.asarray(coeffs, dtype=float)
    low = constant + float(np.sum(np.minimum(coeffs * lower, coeffs * upper)))
    high = constant + float(np.sum(np.maximum(coeffs * lower, coeffs * upper)))
    return low, high


def rhs_range(
    A: np.ndarray, b: np.ndarray, lower: np.ndarray, upper: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Componentwise range of b - A x over the box."""
    low = np.empty(b.size)
    high = np.empty(b.size)
    for i in range(b.size):
        low[i], high[i] = affine_range(-A[i], b[i], lower, upper)
    return low, high


def relaxation_floor(
    cost: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
    senses: Sequence[str],
    lower: np.ndarray,
    upper: np.ndarray,
    lp_tol: Optional[LpTolerances] = None,
) -> LpCertificate:
    """LP relaxation used as a valid floor for a recourse variable."""
    return solve_lp(LpProblem.build(cost, A, b, senses, lower, upper), lp_tol)


def farkas_row(
    sigma: np.ndarray,
    G: np.ndarray,
    y_lower: np.ndarray,
    y_upper: np.ndarray,
    A: np.ndarray,
    b: np.ndarray,
) -> Optional[Tuple[np.ndarray, float]]:
    """
    Feasibility cut sigma^T (b - A x) <= max_{y in box} sigma^T G y, written
    as (sigma^T A) x >= sigma^T b - h. Returns None when h is infinite.
    """
    weights = G.T @ sigma
    h = 0.0
    for j, w in enumerate(weights):
        if abs(w) <= 1e-9:
            continue
        bound = y_upper[j] if w > 0 else y_lower[j]
        if not math.isfinite(bound):
            return None
        h += w * bound
    return sigma @ A, float(sigma @ b - h)


def add_no_good(
    builder: ModelBuilder,
    x_cols: Sequence[int],
    point: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
) -> None:
    """
    Excludes one integer point of the box: some coordinate must move up or
    down by at least one, each direction switched on by its own binary.
    """
    switches = []
    for j, col in enumerate(x_cols):
        p, lo, hi = float(point[j]), float(lower[j]), float(upper[j])
        if p + 1 <= hi:
            up = builder.add_binary()
            builder.add_row({col: 1.0, up: -(p + 1 - lo)}, GE, lo)
            switches.append(up)
        if p - 1 >= lo:
            down = builder.add_binary()
            builder.add_row({col: 1.0, down: hi - p + 1}, LE, hi)
            switches.append(down)
    builder.add_row({w: 1.0 for w in switches}, GE, 1.0)


def add_min_affine_block(
    builder: ModelBuilder,
    z_col: int,
    rows: Sequence[Tuple[Dict[int, float], float]],
    big_m: float,
) -> None:
    """
    z >= min_t (row_t), where row_t is (coeffs over columns, constant).

    One binary per term selects the active term; the others are relaxed by
    big_m. A single term is added as a plain inequality.
    """
    if len(rows) == 1:
        coeffs, constant = rows[0]
        builder.add_row(_shift({z_col: 1.0}, coeffs, -1.0), GE, constant)
        return
    selectors = [builder.add_binary() for _ in rows]
    builder.add_row({u: 1.0 for u in selectors}, EQ, 1.0)
    for u, (coeffs, constant) in zip(selectors, rows):
        row = _shift({z_col: 1.0}, coeffs, -1.0)
        row[u] = row.get(u, 0.0) - big_m
        builder.add_row(row, GE, constant - big_m)


def _shift(base: Dict[int, float], coeffs: Mapping[int, float], scale: float) -> Dict[int, float]:
    row = dict(base)
    for col, value in coeffs.items():
        row[col] = row.get(col, 0.0) + scale * value
    return row


def big_m_from_range(highest: float, floor: float, slack: float, fallback: float) -> float:
    """slack * (highest - floor) + 1, or the fallback when not finite."""
    if not (math.isfinite(highest) and math.isfinite(floor)):
        logger.warning("Big-M range is unbounded; using fallback %.3g", fallback)
        return fallback
    return max(slack * (highest - floor) + 1.0, 1.0)
