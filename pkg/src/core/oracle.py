"""
Brute-force verifiers for the Benders drivers.

They reuse the simplex and branch-and-bound code but run under
Settings.oracle_view(), whose integrality and optimality tolerances are
tighter than the drivers' defaults.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .benders.cuts import ModelBuilder
from .benders.reaction import evaluate_reaction, follower_problem, follower_rhs, leader_rhs
from .benders.two_stage import active_scenarios
from .branch_bound import solve_milp
from .errors import BoxTooLarge, LpStatus, MilpStatus, NotOptimal, ReactionStatus, SolveStatus
from .instances import LpBendersInstance, MiblpInstance, MilpInstance, TwoStageInstance
from .parallel import map_ordered
from .piecewise import NEG_INF, POS_INF, ExtendedReal, MinAffineDual, eval_dual
from .settings import Settings
from .simplex import GE, LpProblem, solve_lp

logger = logging.getLogger(__name__)

_STATUS = {
    MilpStatus.OPTIMAL: SolveStatus.OPTIMAL,
    MilpStatus.INFEASIBLE: SolveStatus.INFEASIBLE,
    MilpStatus.UNBOUNDED: SolveStatus.UNBOUNDED,
    MilpStatus.ABORTED: SolveStatus.ITERATION_LIMIT,
}


@dataclass(frozen=True)
class OracleResult:
    status: SolveStatus
    value: float
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None

    def summary(self) -> dict:
        def plain(vector):
            if vector is None:
                return None
            if isinstance(vector, tuple):
                return [plain(v) for v in vector]
            return [float(v) for v in np.asarray(vector).reshape(-1)]

        value = self.value if math.isfinite(self.value) else str(ExtendedReal.of(self.value))
        return {"status": self.status.value, "value": value, "x": plain(self.x), "y": plain(self.y)}


def _view(settings: Optional[Settings]) -> Settings:
    return (settings or Settings()).oracle_view()


def oracle_lp(instance: LpBendersInstance, settings: Optional[Settings] = None) -> OracleResult:
    """The Benders LP solved in one piece."""
    settings = _view(settings)
    n1, n2 = instance.c.size, instance.d.size
    problem = LpProblem.build(
        np.concatenate([instance.c, instance.d]),
        np.hstack([instance.A, instance.G]),
        instance.b,
        (GE,) * instance.b.size,
        np.zeros(n1 + n2),
        np.concatenate([instance.x_upper, np.full(n2, math.inf)]),
    )
    cert = solve_lp(problem, settings.lp)
    if cert.status == LpStatus.INFEASIBLE:
        return OracleResult(SolveStatus.INFEASIBLE, math.inf)
    if cert.status == LpStatus.UNBOUNDED:
        return OracleResult(SolveStatus.UNBOUNDED, -math.inf)
    return OracleResult(SolveStatus.OPTIMAL, cert.objective, cert.x[:n1], cert.x[n1:])


def oracle_2ssmilp(instance: TwoStageInstance, settings: Optional[Settings] = None) -> OracleResult:
    """
    Extensive form: one copy of the second-stage variables per scenario
    with positive probability, all in a single MILP.

    Returns:
        OracleResult: y is a tuple with one vector per scenario of the
        instance (None for zero-probability scenarios).
    """
    settings = _view(settings)
    builder = ModelBuilder()
    x_cols = builder.add_variables(instance.c, instance.x_lower, instance.x_upper, instance.x_integer)
    for i in range(instance.b1.size):
        builder.add_linear_row(x_cols, instance.A1[i], GE, instance.b1[i])
    y_cols = {}
    for index, scenario in active_scenarios(instance):
        cols = builder.add_variables(
            scenario.probability * instance.d2, instance.y_lower, instance.y_upper, instance.y_integer
        )
        y_cols[index] = cols
        for i in range(scenario.b2.size):
            row = {col: scenario.A2[i, j] for j, col in enumerate(x_cols)}
            for j, col in enumerate(cols):
                row[col] = row.get(col, 0.0) + instance.G2[i, j]
            builder.add_row(row, GE, scenario.b2[i])

    result = solve_milp(builder.build(), settings.bnb, settings.lp)
    status = _STATUS[result.status]
    if result.y is None:
        return OracleResult(status, result.value)
    y = tuple(
        result.y[y_cols[k]] if k in y_cols else None for k in range(len(instance.scenarios))
    )
    return OracleResult(status, result.value, result.y[x_cols], y)


def box_points(
    instance: MiblpInstance, cap: int
) -> List[np.ndarray]:
    """
    Integer points of the x-box that satisfy the rows involving x alone.

    Raises:
        BoxTooLarge: If the box holds more than cap points.
    """
    lower = np.ceil(instance.x_lower - 1e-9).astype(int)
    upper = np.floor(instance.x_upper + 1e-9).astype(int)
    sizes = np.maximum(upper - lower + 1, 0)
    total = int(np.prod(sizes, dtype=float)) if sizes.size else 1
    if total > cap:
        raise BoxTooLarge(f"x-box holds {total} points, cap is {cap}")
    rows = instance.first_stage_rows()
    A, b = instance.A1[rows], instance.b1[rows]
    points = []
    for values in itertools.product(*(range(lo, hi + 1) for lo, hi in zip(lower, upper))):
        x = np.array(values, dtype=float)
        if np.all(A @ x >= b - 1e-9):
            points.append(x)
    return points


def _reaction_at(instance: MiblpInstance, settings: Settings, x: np.ndarray):
    return evaluate_reaction(instance, leader_rhs(instance, x), follower_rhs(instance, x), settings)


def oracle_miblp(
    instance: MiblpInstance,
    settings: Optional[Settings] = None,
    show_progress: Optional[bool] = None,
) -> OracleResult:
    """
    min over the x-box of c^T x + rho(b1 - A1 x, b2 - A2 x).

    Points without a reaction are skipped; ties go to the first point in
    lexicographic order.

    Raises:
        BoxTooLarge: If the box exceeds settings.oracle.box_cap points.
    """
    settings = _view(settings)
    progress = settings.cli.show_progress if show_progress is None else show_progress
    points = box_points(instance, settings.oracle.box_cap)
    certs = map_ordered(
        partial(_reaction_at, instance, settings),
        points,
        settings.oracle.workers,
        progress=progress,
        desc="x-box",
    )
    best = OracleResult(SolveStatus.INFEASIBLE, math.inf)
    for x, cert in zip(points, certs):
        if cert.status != ReactionStatus.OPTIMAL:
            continue
        value = float(instance.c @ x) + cert.rho_value
        if value < best.value:
            best = OracleResult(SolveStatus.OPTIMAL, value, x, cert.y)
    logger.info("Enumerated %d first-stage points, best %s", len(points), best.value)
    return best


def _milp_value(instance: MilpInstance, settings: Settings, beta: float) -> ExtendedReal:
    result = solve_milp(instance.problem_at(beta), settings.bnb, settings.lp)
    if result.status == MilpStatus.INFEASIBLE:
        return POS_INF
    if result.status == MilpStatus.UNBOUNDED:
        return NEG_INF
    if result.status == MilpStatus.ABORTED:
        raise NotOptimal(f"Value function solve at {beta} hit the node limit")
    return ExtendedReal.of(result.value)


def oracle_vf_grid(
    instance: MilpInstance,
    grid: Sequence[float],
    settings: Optional[Settings] = None,
    show_progress: Optional[bool] = None,
) -> List[Tuple[float, ExtendedReal]]:
    """The value function of the MILP along its parametric row, one solve per point."""
    settings = _view(settings)
    progress = settings.cli.show_progress if show_progress is None else show_progress
    values = map_ordered(
        partial(_milp_value, instance, settings),
        list(grid),
        settings.oracle.workers,
        progress=progress,
        desc="value function",
    )
    return list(zip(grid, values))


def _rho_value(instance: MiblpInstance, settings: Settings, beta: float) -> ExtendedReal:
    cert = evaluate_reaction(instance, [], [beta], settings)
    return ExtendedReal.of(cert.rho_value)


def oracle_reaction_grid(
    instance: MiblpInstance,
    grid: Sequence[float],
    settings: Optional[Settings] = None,
    show_progress: Optional[bool] = None,
) -> List[Tuple[float, ExtendedReal]]:
    """
    rho along a scalar follower rhs; the instance must have one follower
    row and no leader rows involving y.
    """
    settings = _view(settings)
    progress = settings.cli.show_progress if show_progress is None else show_progress
    values = map_ordered(
        partial(_rho_value, instance, settings),
        list(grid),
        settings.oracle.workers,
        progress=progress,
        desc="reaction",
    )
    return list(zip(grid, values))


def follower_value(
    instance: MiblpInstance, beta2: Sequence[float], settings: Optional[Settings] = None
) -> ExtendedReal:
    """phi(beta2) by branch-and-bound; +inf when the follower is infeasible."""
    settings = _view(settings)
    result = solve_milp(follower_problem(instance, beta2), settings.bnb, settings.lp)
    if result.status == MilpStatus.INFEASIBLE:
        return POS_INF
    if result.status == MilpStatus.UNBOUNDED:
        return NEG_INF
    if result.status == MilpStatus.ABORTED:
        raise NotOptimal("Follower solve hit the node limit")
    return ExtendedReal.of(result.value)


def exact_reaction_dual(
    dual: MinAffineDual,
    instance: MiblpInstance,
    beta1: Sequence[float],
    beta2: Sequence[float],
    settings: Optional[Settings] = None,
) -> ExtendedReal:
    """The reaction dual evaluated with the exact follower value in place of phi."""
    return eval_dual(dual, beta1, beta2, follower_value(instance, beta2, settings))
