"""
Benders decomposition of an optimistic mixed integer bilevel program.

The master works over the leader variables x and an epigraph variable z.
Every reaction evaluation contributes a block that bounds z from below by
the reaction dual, in which the follower value phi is replaced by the
restricted primal function. Its polyhedral domain is tracked by binaries;
outside it the primal value is pushed up by M_P, which switches the
block's phi terms off.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..branch_bound import MilpProblem, solve_milp
from ..errors import (
    AssumptionViolated,
    LpStatus,
    MilpStatus,
    NotOptimal,
    ReactionStatus,
    SolveStatus,
)
from ..instances import MiblpInstance
from ..piecewise import MinAffineDual, RestrictedPrimal
from ..settings import Settings
from ..simplex import EQ, GE, LE, LpProblem, solve_lp
from .cuts import (
    ModelBuilder,
    add_min_affine_block,
    add_no_good,
    affine_range,
    big_m_from_range,
    farkas_row,
    rhs_range,
)
from .reaction import (
    ReactionCertificate,
    evaluate_reaction,
    follower_problem,
    follower_rhs,
    leader_rhs,
)
from .trace import FEASIBILITY, NO_CUT, NO_GOOD, OPTIMALITY, BendersResult, BendersTrace

logger = logging.getLogger(__name__)

Affine = Tuple[np.ndarray, float]


@dataclass(frozen=True)
class CutBlock:
    """
    The master data contributed by one reaction evaluation.

    terms holds (x coefficients, constant, phi coefficient) per dual term;
    primal_affine and domain_rows describe the primal function as affine
    functions of x.
    """

    iteration: int
    x: np.ndarray
    dual: MinAffineDual
    primal: RestrictedPrimal
    terms: Tuple[Tuple[np.ndarray, float, float], ...]
    primal_affine: Affine
    domain_rows: Tuple[Affine, ...]
    M_D: float
    M_P: float
    M_lower: np.ndarray
    M_upper: np.ndarray

    @property
    def uses_phi(self) -> bool:
        return any(phi != 0.0 for _, _, phi in self.terms)

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "x": [float(v) for v in self.x],
            "dual": self.dual.to_dict(),
            "primal": self.primal.to_dict(),
            "big_m": {
                "M_D": self.M_D,
                "M_P": self.M_P,
                "M_lower": self.M_lower.tolist(),
                "M_upper": self.M_upper.tolist(),
            },
        }


@dataclass
class MasterState:
    """Everything the master accumulates between iterations."""

    floor: float
    blocks: List[CutBlock] = field(default_factory=list)
    feasibility: List[Affine] = field(default_factory=list)
    excluded: List[np.ndarray] = field(default_factory=list)


def miblp_floor(instance: MiblpInstance, settings: Optional[Settings] = None) -> Optional[float]:
    """
    A lower bound on d1^T y over every reaction in the x-box.

    The reaction y at any x satisfies G1 y >= beta1_min, G2 y >= beta2_min
    and, since the follower value is nondecreasing in its rhs,
    d2^T y <= phi(beta2_max). The LP relaxation of those rows gives the bound.
    Returns None when that LP is infeasible, i.e. no x has a reaction.

    Raises:
        AssumptionViolated: If the follower is unbounded at beta2_max.
    """
    settings = settings or Settings()
    rows = instance.leader_rows()
    beta1_min, _ = rhs_range(instance.A1[rows], instance.b1[rows], instance.x_lower, instance.x_upper)
    beta2_min, beta2_max = rhs_range(instance.A2, instance.b2, instance.x_lower, instance.x_upper)

    matrices = [instance.G1[rows], instance.G2]
    rhs = [beta1_min, beta2_min]
    top = solve_milp(follower_problem(instance, beta2_max), settings.bnb, settings.lp)
    if top.status == MilpStatus.UNBOUNDED:
        raise AssumptionViolated("The follower problem is unbounded below")
    if top.status == MilpStatus.OPTIMAL:
        matrices.append(-instance.d2.reshape(1, -1))
        rhs.append([-top.value])
    else:
        logger.debug("Follower has no optimum at beta2_max; floor drops the value row")

    A = np.vstack(matrices)
    b = np.concatenate([np.asarray(r, dtype=float).reshape(-1) for r in rhs])
    cert = solve_lp(
        LpProblem.build(instance.d1, A, b, (GE,) * b.size, instance.y_lower, instance.y_upper),
        settings.lp,
    )
    if cert.status == LpStatus.INFEASIBLE:
        return None
    if cert.status == LpStatus.UNBOUNDED:
        logger.warning("Leader objective floor unbounded; using -%.3g", settings.benders.big_m_fallback)
        return -settings.benders.big_m_fallback
    return cert.objective


def _upper(affine: Affine, instance: MiblpInstance) -> float:
    return affine_range(affine[0], affine[1], instance.x_lower, instance.x_upper)[1]


def cut_block(
    instance: MiblpInstance,
    cert: ReactionCertificate,
    iteration: int,
    x: np.ndarray,
    floor: float,
    settings: Optional[Settings] = None,
) -> CutBlock:
    """Translates a reaction certificate into affine master data and big-Ms."""
    settings = settings or Settings()
    slack = settings.benders.big_m_slack
    fallback = settings.benders.big_m_fallback
    epsilon = instance.epsilon if instance.epsilon is not None else settings.benders.epsilon
    overrides = instance.big_m
    rows = instance.leader_rows()
    A1, b1 = instance.A1[rows], instance.b1[rows]
    A2, b2 = instance.A2, instance.b2

    primal = cert.primal
    residual = b2 - primal.offset
    primal_affine: Affine = (-(A2.T @ primal.eta), float(primal.eta @ residual) + primal.kappa)

    terms = []
    for term in cert.dual.terms:
        coeffs = -(A1.T @ term.coeff_beta1) - (A2.T @ term.coeff_beta2)
        constant = float(term.coeff_beta1 @ b1 + term.coeff_beta2 @ b2) + term.constant
        terms.append((coeffs, constant, term.coeff_phi))

    combined = [
        (coeffs + phi * primal_affine[0], constant + phi * primal_affine[1])
        for coeffs, constant, phi in terms
    ]
    highest = max(_upper(affine, instance) for affine in combined)
    M_D = overrides.M_D or big_m_from_range(highest, floor, slack, fallback)

    if overrides.M_P is not None:
        M_P = overrides.M_P
    else:
        needed = 0.0
        for (_, _, phi), affine in zip(terms, combined):
            if phi < 0.0:
                needed = max(needed, (_upper(affine, instance) - floor) / abs(phi))
        M_P = max(slack * needed + 1.0, 1.0) if math.isfinite(needed) else fallback

    domain_rows = []
    lows, highs = [], []
    for k in range(primal.domain_rhs.size):
        D = primal.domain_matrix[k]
        affine = (-(A2.T @ D), float(D @ residual) - primal.domain_rhs[k])
        low, high = affine_range(affine[0], affine[1], instance.x_lower, instance.x_upper)
        domain_rows.append(affine)
        lows.append(low)
        highs.append(high)
    if overrides.M_lower is not None:
        M_lower = np.full(len(lows), overrides.M_lower)
    else:
        M_lower = np.array([slack * max(0.0, -low) + 1.0 for low in lows])
    if overrides.M_upper is not None:
        M_upper = np.full(len(highs), overrides.M_upper)
    else:
        M_upper = np.array([slack * max(0.0, high) + 1.0 + epsilon for high in highs])

    return CutBlock(
        iteration=iteration,
        x=np.asarray(x, dtype=float).copy(),
        dual=cert.dual,
        primal=primal,
        terms=tuple(terms),
        primal_affine=primal_affine,
        domain_rows=tuple(domain_rows),
        M_D=float(M_D),
        M_P=float(M_P),
        M_lower=M_lower,
        M_upper=M_upper,
    )


def _add_block(
    builder: ModelBuilder, block: CutBlock, x_cols: Sequence[int], z_col: int, epsilon: float
) -> None:
    phi_col = None
    if block.uses_phi:
        # phi_bar = primal(x) + M_P * v, v = 1 exactly when x leaves the domain
        phi_col = builder.add_variable(0.0, -math.inf, math.inf)
        outside = builder.add_binary()
        coeffs, constant = block.primal_affine
        row: Dict[int, float] = {phi_col: 1.0, outside: -block.M_P}
        for j, col in enumerate(x_cols):
            row[col] = row.get(col, 0.0) - coeffs[j]
        builder.add_row(row, EQ, constant)

        violated = []
        for k, (coeffs, constant) in enumerate(block.domain_rows):
            flag = builder.add_binary()
            violated.append(flag)
            low_row = {col: coeffs[j] for j, col in enumerate(x_cols)}
            low_row[flag] = block.M_lower[k]
            builder.add_row(low_row, GE, -constant)
            high_row = {col: coeffs[j] for j, col in enumerate(x_cols)}
            high_row[flag] = block.M_upper[k]
            builder.add_row(high_row, LE, block.M_upper[k] - epsilon - constant)
        if violated:
            any_row = {flag: 1.0 for flag in violated}
            any_row[outside] = -float(len(violated))
            builder.add_row(any_row, LE, 0.0)
            some_row = {flag: 1.0 for flag in violated}
            some_row[outside] = -1.0
            builder.add_row(some_row, GE, 0.0)
        else:
            builder.add_row({outside: 1.0}, EQ, 0.0)

    rows = []
    for coeffs, constant, phi in block.terms:
        term_row = {col: coeffs[j] for j, col in enumerate(x_cols)}
        if phi != 0.0:
            term_row[phi_col] = phi
        rows.append((term_row, constant))
    add_min_affine_block(builder, z_col, rows, block.M_D)


def build_master(
    instance: MiblpInstance, state: MasterState, epsilon: float
) -> Tuple[MilpProblem, List[int], int]:
    """
    The master MILP over (x, z) and the auxiliary columns of every block.

    Returns:
        Tuple: the problem, the x column indices and the z column index.
    """
    builder = ModelBuilder()
    x_cols = builder.add_variables(
        instance.c, instance.x_lower, instance.x_upper, np.ones(instance.n1, dtype=bool)
    )
    z_col = builder.add_variable(1.0, state.floor, math.inf)
    for i in instance.first_stage_rows():
        builder.add_linear_row(x_cols, instance.A1[i], GE, instance.b1[i])
    for coeffs, rhs in state.feasibility:
        builder.add_linear_row(x_cols, coeffs, GE, rhs)
    for point in state.excluded:
        add_no_good(builder, x_cols, point, instance.x_lower, instance.x_upper)
    for block in state.blocks:
        _add_block(builder, block, x_cols, z_col, epsilon)
    return builder.build(), x_cols, z_col


def _feasibility_row(
    instance: MiblpInstance, cert: ReactionCertificate, x: np.ndarray, settings: Settings
) -> Optional[Affine]:
    """Farkas row of the LP relaxation that failed at x, or None if x is not cut off."""
    if cert.status == ReactionStatus.SECOND_STAGE_INFEASIBLE:
        G, A, b, beta = instance.G2, instance.A2, instance.b2, cert.beta2
    else:
        rows = instance.leader_rows()
        G = np.vstack([instance.G1[rows], instance.G2])
        A = np.vstack([instance.A1[rows], instance.A2])
        b = np.concatenate([instance.b1[rows], instance.b2])
        beta = np.concatenate([cert.beta1, cert.beta2])
    relaxation = LpProblem.build(
        np.zeros(instance.n2), G, beta, (GE,) * beta.size, instance.y_lower, instance.y_upper
    )
    lp = solve_lp(relaxation, settings.lp)
    if lp.status != LpStatus.INFEASIBLE:
        return None
    row = farkas_row(lp.farkas, G, instance.y_lower, instance.y_upper, A, b)
    if row is None or float(row[0] @ x) >= row[1] - 1e-9:
        return None
    return row


def exhausted_status(best_x: Optional[np.ndarray], settled: List[np.ndarray]) -> SolveStatus:
    """
    Status once the master has no feasible point left. Every excluded point
    is either infeasible or settled at or above the upper bound, so the
    incumbent is optimal only if it was itself excluded as settled.
    """
    if best_x is None:
        return SolveStatus.INFEASIBLE
    if any(np.array_equal(best_x, point) for point in settled):
        return SolveStatus.OPTIMAL
    logger.warning("Master is infeasible although the incumbent x=%s satisfies it", best_x)
    return SolveStatus.STALLED


def solve_miblp(
    instance: MiblpInstance,
    tol: Optional[float] = None,
    max_iters: Optional[int] = None,
    settings: Optional[Settings] = None,
) -> BendersResult:
    """
    Runs the bilevel Benders loop.

    Each iteration solves the master for x and a lower bound, stops when
    the gap is closed, and otherwise evaluates the reaction at x to update
    the upper bound and add an optimality block, a Farkas feasibility row
    or a no-good row.

    Args:
        instance (MiblpInstance): The bilevel program.
        tol (float, optional): Absolute gap tolerance.
        max_iters (int, optional): Iteration limit.
        settings (Settings, optional): Solver settings.

    Returns:
        BendersResult: cuts holds CutBlock.to_dict() of every block.

    Raises:
        AssumptionViolated: If the follower or reaction problem is unbounded.
    """
    settings = settings or Settings()
    tol = settings.benders.tol if tol is None else tol
    max_iters = settings.benders.max_iters if max_iters is None else max_iters
    epsilon = instance.epsilon if instance.epsilon is not None else settings.benders.epsilon
    master_bnb = replace(settings.bnb, integrality=min(settings.bnb.integrality, 1e-9))
    trace = BendersTrace()

    floor = miblp_floor(instance, settings)
    if floor is None:
        logger.info("No first-stage point admits a reaction")
        return BendersResult(SolveStatus.INFEASIBLE, None, None, math.inf, math.inf, math.inf, trace)
    logger.info("Master floor on z: %.6g", floor)

    state = MasterState(floor=floor)
    visited: List[np.ndarray] = []
    settled: List[np.ndarray] = []
    lower_bound, upper_bound = -math.inf, math.inf
    best_x, best_y = None, None
    status = SolveStatus.ITERATION_LIMIT

    for iteration in range(1, max_iters + 1):
        problem, x_cols, _ = build_master(instance, state, epsilon)
        master = solve_milp(problem, master_bnb, settings.lp)
        if master.status == MilpStatus.INFEASIBLE:
            status = exhausted_status(best_x, settled)
            if status == SolveStatus.OPTIMAL:
                lower_bound = upper_bound
            break
        if master.status != MilpStatus.OPTIMAL:
            logger.warning("Master problem stopped at the node limit")
            break
        x = np.round(master.y[x_cols])
        if state.blocks:
            # settled points are worth at least the upper bound
            bound = min(master.value, upper_bound) if settled else master.value
            lower_bound = max(lower_bound, bound)

        if upper_bound - lower_bound <= tol:
            trace.record(iteration, lower_bound, upper_bound, x, NO_CUT)
            status = SolveStatus.OPTIMAL
            break
        if any(np.array_equal(x, seen) for seen in visited):
            logger.warning(
                "Master proposed x=%s again with gap %.3g; excluding it",
                x,
                upper_bound - lower_bound,
            )
            settled.append(x.copy())
            state.excluded.append(x.copy())
            trace.record(iteration, lower_bound, upper_bound, x, NO_GOOD)
            continue
        visited.append(x.copy())

        try:
            cert = evaluate_reaction(
                instance, leader_rhs(instance, x), follower_rhs(instance, x), settings
            )
        except NotOptimal as exc:
            logger.warning("Reaction evaluation stopped: %s", exc)
            break

        if cert.status == ReactionStatus.OPTIMAL:
            block = cut_block(instance, cert, iteration, x, floor, settings)
            state.blocks.append(block)
            cut = OPTIMALITY
            candidate = float(instance.c @ x) + cert.rho_value
            if candidate < upper_bound:
                upper_bound, best_x, best_y = candidate, x.copy(), cert.y.copy()
        else:
            row = _feasibility_row(instance, cert, x, settings)
            if row is not None:
                state.feasibility.append(row)
                cut = FEASIBILITY
            else:
                state.excluded.append(x.copy())
                cut = NO_GOOD

        trace.record(
            iteration,
            lower_bound,
            upper_bound,
            x,
            cut,
            phi=cert.phi_value,
            rho=cert.rho_value,
            terms=len(cert.dual.terms) if cert.dual is not None else 0,
        )
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
        cuts=tuple(block.to_dict() for block in state.blocks),
    )
