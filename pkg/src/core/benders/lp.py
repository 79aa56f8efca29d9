"""
Classical Benders decomposition of min c^T x + d^T y s.t. A x + G y >= b.

The master is an LP over (x, z) with x in [0, x_upper] and z bounded below
by an LP floor; each subproblem solve adds z >= eta^T (b - A x) + alpha or
a Farkas feasibility row.
"""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from ..errors import LpStatus, NumericalBreakdown, SolveStatus
from ..instances import LpBendersInstance
from ..settings import Settings
from ..simplex import GE, LpProblem, bound_product, solve_lp
from .cuts import farkas_row, relaxation_floor, rhs_range
from .trace import FEASIBILITY, OPTIMALITY, BendersResult, BendersTrace

logger = logging.getLogger(__name__)


def subproblem(instance: LpBendersInstance, x: np.ndarray) -> LpProblem:
    """min d^T y s.t. G y >= b - A x, y >= 0."""
    m = instance.b.size
    return LpProblem.build(instance.d, instance.G, instance.b - instance.A @ x, (GE,) * m)


def _master(
    instance: LpBendersInstance,
    floor: float,
    optimality: List[Tuple[np.ndarray, float]],
    feasibility: List[Tuple[np.ndarray, float]],
) -> LpProblem:
    n1 = instance.c.size
    rows, rhs = [], []
    for coeffs, constant in optimality:
        rows.append(np.concatenate([coeffs, [1.0]]))
        rhs.append(constant)
    for coeffs, constant in feasibility:
        rows.append(np.concatenate([coeffs, [0.0]]))
        rhs.append(constant)
    A = np.array(rows).reshape(len(rows), n1 + 1)
    return LpProblem.build(
        np.concatenate([instance.c, [1.0]]),
        A,
        rhs,
        (GE,) * len(rows),
        np.concatenate([np.zeros(n1), [floor]]),
        np.concatenate([instance.x_upper, [math.inf]]),
    )


def solve_lp_benders(
    instance: LpBendersInstance,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    settings: Optional[Settings] = None,
) -> BendersResult:
    """
    Runs the Benders loop until UB - LB <= tol.

    Args:
        instance (LpBendersInstance): The LP.
        tol (float, optional): Absolute gap tolerance.
        max_iters (int, optional): Iteration limit.
        settings (Settings, optional): Solver settings.

    Returns:
        BendersResult: Status, incumbent (x, y), bounds and trace.
    """
    settings = settings or Settings()
    tol = settings.benders.tol if tol is None else tol
    max_iters = settings.benders.max_iters if max_iters is None else max_iters
    lp_tol = settings.lp
    n1, n2, m = instance.c.size, instance.d.size, instance.b.size
    trace = BendersTrace()

    beta_min, _ = rhs_range(instance.A, instance.b, np.zeros(n1), instance.x_upper)
    floor_cert = relaxation_floor(
        instance.d, instance.G, beta_min, (GE,) * m, np.zeros(n2), np.full(n2, math.inf), lp_tol
    )
    if floor_cert.status == LpStatus.INFEASIBLE:
        logger.info("Second stage infeasible for every x in the box")
        return BendersResult(SolveStatus.INFEASIBLE, None, None, math.inf, math.inf, math.inf, trace)
    if floor_cert.status == LpStatus.UNBOUNDED:
        floor = -settings.benders.big_m_fallback
        logger.warning("Recourse floor is unbounded; using %.3g", floor)
    else:
        floor = floor_cert.objective

    optimality: List[Tuple[np.ndarray, float]] = []
    feasibility: List[Tuple[np.ndarray, float]] = []
    lower_bound, upper_bound = -math.inf, math.inf
    best_x, best_y = None, None
    status = SolveStatus.ITERATION_LIMIT

    for iteration in range(1, max_iters + 1):
        master = solve_lp(_master(instance, floor, optimality, feasibility), lp_tol)
        if master.status != LpStatus.OPTIMAL:
            if best_x is None:
                status = SolveStatus.INFEASIBLE
            else:
                logger.warning(
                    "Master is infeasible although the incumbent x=%s satisfies it", best_x
                )
                status = SolveStatus.STALLED
            break
        x = master.x[:n1]
        lower_bound = max(lower_bound, master.objective)

        sub = solve_lp(subproblem(instance, x), lp_tol)
        if sub.status == LpStatus.UNBOUNDED:
            logger.info("Subproblem unbounded below at x=%s", x)
            trace.record(iteration, lower_bound, -math.inf, x, OPTIMALITY, subproblem=-math.inf)
            status = SolveStatus.UNBOUNDED
            best_x, upper_bound = x, -math.inf
            break
        if sub.status == LpStatus.INFEASIBLE:
            row = farkas_row(
                sub.farkas, instance.G, np.zeros(n2), np.full(n2, math.inf), instance.A, instance.b
            )
            if row is None:
                raise NumericalBreakdown("Farkas multiplier gives no finite feasibility cut")
            feasibility.append(row)
            cut = FEASIBILITY
            value = math.inf
        else:
            alpha = bound_product(sub.eta_lower, sub.eta_upper, np.zeros(n2), np.full(n2, math.inf))
            optimality.append((instance.A.T @ sub.eta, float(sub.eta @ instance.b) + alpha))
            cut = OPTIMALITY
            value = sub.objective
            candidate = float(instance.c @ x) + value
            if candidate < upper_bound:
                upper_bound, best_x, best_y = candidate, x.copy(), sub.x.copy()

        trace.record(iteration, lower_bound, upper_bound, x, cut, subproblem=value)
        if upper_bound - lower_bound <= tol:
            status = SolveStatus.OPTIMAL
            break

    return BendersResult(
        status=status,
        x=best_x,
        y=best_y,
        value=upper_bound if best_x is not None else math.inf,
        lower_bound=lower_bound,
        upper_bound=upper_bound,
        trace=trace,
    )
