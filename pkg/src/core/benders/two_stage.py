"""
Benders decomposition of a two-stage stochastic MILP.

Each scenario subproblem is solved by branch-and-bound; the leaf duals give
a min-of-affine function of the scenario rhs that is added to the master
as a big-M block over selector binaries.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..branch_bound import MilpProblem, extract_dual_function, solve_milp
from ..errors import AssumptionViolated, LpStatus, MilpStatus, SolveStatus
from ..instances import Scenario, TwoStageInstance
from ..parallel import map_ordered
from ..piecewise import MinAffineDual
from ..settings import Settings
from ..simplex import GE, solve_lp
from .cuts import (
    ModelBuilder,
    add_min_affine_block,
    add_no_good,
    affine_range,
    big_m_from_range,
    farkas_row,
    relaxation_floor,
    rhs_range,
)
from .trace import FEASIBILITY, NO_GOOD, OPTIMALITY, BendersResult, BendersTrace

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScenarioOutcome:
    index: int
    status: MilpStatus
    value: float
    y: Optional[np.ndarray]
    dual: Optional[MinAffineDual]


@dataclass(frozen=True)
class _Block:
    scenario: int
    dual: MinAffineDual
    big_m: float


def scenario_problem(instance: TwoStageInstance, scenario: Scenario, x: np.ndarray) -> MilpProblem:
    """min d2^T y s.t. G2 y >= b2 - A2 x over the second-stage box."""
    rhs = scenario.b2 - scenario.A2 @ x
    return MilpProblem.build(
        instance.d2,
        instance.G2,
        rhs,
        (GE,) * rhs.size,
        instance.y_lower,
        instance.y_upper,
        instance.y_integer,
    )


def active_scenarios(instance: TwoStageInstance) -> List[Tuple[int, Scenario]]:
    """Scenarios with positive probability, in file order."""
    kept = [(k, s) for k, s in enumerate(instance.scenarios) if s.probability > 0.0]
    dropped = len(instance.scenarios) - len(kept)
    if dropped:
        logger.info("Ignoring %d zero-probability scenario(s)", dropped)
    return kept


def _solve_scenario(args) -> ScenarioOutcome:
    instance, index, scenario, x, settings = args
    result = solve_milp(scenario_problem(instance, scenario, x), settings.bnb, settings.lp)
    dual = None
    if result.status == MilpStatus.OPTIMAL:
        dual = extract_dual_function(result.tree)
    return ScenarioOutcome(index, result.status, result.value, result.y, dual)


def _block_rows(block: _Block, scenario: Scenario, x_cols: Sequence[int]):
    rows = []
    for term in block.dual.terms:
        eta = term.coeff_beta2
        coeffs = -(scenario.A2.T @ eta)
        constant = float(eta @ scenario.b2) + term.constant
        rows.append(({col: coeffs[j] for j, col in enumerate(x_cols)}, constant))
    return rows


def _block_big_m(
    dual: MinAffineDual, scenario: Scenario, instance: TwoStageInstance, floor: float, settings: Settings
) -> float:
    if instance.big_m.M_D is not None:
        return instance.big_m.M_D
    highest = -math.inf
    for term in dual.terms:
        eta = term.coeff_beta2
        _, high = affine_range(
            -(scenario.A2.T @ eta),
            float(eta @ scenario.b2) + term.constant,
            instance.x_lower,
            instance.x_upper,
        )
        highest = max(highest, high)
    return big_m_from_range(
        highest, floor, settings.benders.big_m_slack, settings.benders.big_m_fallback
    )


def _scenario_floor(
    instance: TwoStageInstance, scenario: Scenario, settings: Settings
) -> Optional[float]:
    """LP floor on the recourse value over the whole box; None if infeasible."""
    beta_min, _ = rhs_range(scenario.A2, scenario.b2, instance.x_lower, instance.x_upper)
    cert = relaxation_floor(
        instance.d2,
        instance.G2,
        beta_min,
        (GE,) * beta_min.size,
        instance.y_lower,
        instance.y_upper,
        settings.lp,
    )
    if cert.status == LpStatus.INFEASIBLE:
        return None
    if cert.status == LpStatus.UNBOUNDED:
        logger.warning("Recourse floor unbounded; using -%.3g", settings.benders.big_m_fallback)
        return -settings.benders.big_m_fallback
    return cert.objective


def _feasibility_cut(instance: TwoStageInstance, scenario: Scenario, x: np.ndarray, settings: Settings):
    relaxation = scenario_problem(instance, scenario, x).lp
    cert = solve_lp(relaxation, settings.lp)
    if cert.status != LpStatus.INFEASIBLE:
        return None
    row = farkas_row(cert.farkas, instance.G2, instance.y_lower, instance.y_upper, scenario.A2, scenario.b2)
    if row is None or float(row[0] @ x) >= row[1] - 1e-9:
        return None
    return row


def solve_2ssmilp(
    instance: TwoStageInstance,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    settings: Optional[Settings] = None,
) -> BendersResult:
    """
    Runs the scenario-decomposed Benders loop.

    Returns:
        BendersResult: y is a tuple with one second-stage vector per
        scenario of the instance (None for dropped scenarios).
    """
    settings = settings or Settings()
    tol = settings.benders.tol if tol is None else tol
    max_iters = settings.benders.max_iters if max_iters is None else max_iters
    master_bnb = replace(settings.bnb, integrality=min(settings.bnb.integrality, 1e-9))
    trace = BendersTrace()
    scenarios = active_scenarios(instance)

    floors = {}
    for index, scenario in scenarios:
        floor = _scenario_floor(instance, scenario, settings)
        if floor is None:
            logger.info("Scenario %d is infeasible for every first-stage point", index)
            return BendersResult(SolveStatus.INFEASIBLE, None, None, math.inf, math.inf, math.inf, trace)
        floors[index] = floor

    blocks: List[_Block] = []
    feasibility_rows: List[Tuple[np.ndarray, float]] = []
    excluded: List[np.ndarray] = []
    lower_bound, upper_bound = -math.inf, math.inf
    best_x, best_y = None, None
    status = SolveStatus.ITERATION_LIMIT
    by_index = dict(scenarios)

    for iteration in range(1, max_iters + 1):
        builder = ModelBuilder()
        x_cols = builder.add_variables(
            instance.c, instance.x_lower, instance.x_upper, instance.x_integer
        )
        z_cols = {
            index: builder.add_variable(scenario.probability, floors[index], math.inf)
            for index, scenario in scenarios
        }
        for i in range(instance.b1.size):
            builder.add_linear_row(x_cols, instance.A1[i], GE, instance.b1[i])
        for coeffs, rhs in feasibility_rows:
            builder.add_linear_row(x_cols, coeffs, GE, rhs)
        for point in excluded:
            add_no_good(builder, x_cols, point, instance.x_lower, instance.x_upper)
        for block in blocks:
            rows = _block_rows(block, by_index[block.scenario], x_cols)
            add_min_affine_block(builder, z_cols[block.scenario], rows, block.big_m)

        master = solve_milp(builder.build(), master_bnb, settings.lp)
        if master.status == MilpStatus.INFEASIBLE:
            if best_x is None:
                status = SolveStatus.INFEASIBLE
            else:
                logger.warning(
                    "Master is infeasible although the incumbent x=%s satisfies it", best_x
                )
                status = SolveStatus.STALLED
            break
        if master.status != MilpStatus.OPTIMAL:
            status = SolveStatus.ITERATION_LIMIT
            break
        x = master.y[x_cols]
        lower_bound = max(lower_bound, master.value)

        work = [(instance, index, scenario, x, settings) for index, scenario in scenarios]
        outcomes = map_ordered(_solve_scenario, work, settings.benders.workers)

        if any(o.status == MilpStatus.UNBOUNDED for o in outcomes):
            raise AssumptionViolated("A scenario subproblem is unbounded below")
        if any(o.status == MilpStatus.ABORTED for o in outcomes):
            status = SolveStatus.ITERATION_LIMIT
            break

        cut = OPTIMALITY
        for outcome in outcomes:
            scenario = by_index[outcome.index]
            if outcome.status == MilpStatus.OPTIMAL:
                blocks.append(
                    _Block(
                        outcome.index,
                        outcome.dual,
                        _block_big_m(outcome.dual, scenario, instance, floors[outcome.index], settings),
                    )
                )
                continue
            row = _feasibility_cut(instance, scenario, x, settings)
            if row is not None:
                feasibility_rows.append(row)
                cut = FEASIBILITY if cut != NO_GOOD else cut
            elif instance.x_integer.all():
                if not any(np.array_equal(x, p) for p in excluded):
                    excluded.append(x.copy())
                cut = NO_GOOD
            else:
                raise AssumptionViolated(
                    "Scenario infeasible at a first-stage point with continuous components"
                )

        values = {f"phi_{o.index}": o.value for o in outcomes}
        if all(o.status == MilpStatus.OPTIMAL for o in outcomes):
            candidate = float(instance.c @ x) + sum(
                by_index[o.index].probability * o.value for o in outcomes
            )
            if candidate < upper_bound:
                upper_bound, best_x = candidate, x.copy()
                solutions = {o.index: o.y for o in outcomes}
                best_y = tuple(solutions.get(k) for k in range(len(instance.scenarios)))

        trace.record(iteration, lower_bound, upper_bound, x, cut, **values)
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
        cuts=tuple(
            {"scenario": b.scenario, "M_D": b.big_m, "dual": b.dual.to_dict()} for b in blocks
        ),
    )
