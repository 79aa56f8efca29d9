"""
Evaluation of the follower's reaction function at a given right-hand side.

Step one solves the follower MILP for its value phi; step two minimises the
leader objective over the follower's optimal set (leader rows, follower
rows and d2^T y <= phi). The step-two tree gives a dual function with a phi
coefficient per leaf; the continuous restriction of the step-one solution
gives a primal function that stands in for phi inside the master.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..branch_bound import BnbTree, MilpProblem, MilpResult, solve_milp
from ..errors import (
    AssumptionViolated,
    DimensionMismatch,
    EmptyTree,
    LpStatus,
    MilpStatus,
    NotOptimal,
    ReactionStatus,
)
from ..instances import MiblpInstance
from ..piecewise import AffineTerm, MinAffineDual, RestrictedPrimal
from ..settings import Settings
from ..simplex import GE, LpProblem, basis_inverse_rows, solve_lp

logger = logging.getLogger(__name__)

# Relative slack on the optimal-set row d2^T y <= phi.
PHI_SLACK = 1e-9


@dataclass(frozen=True)
class ReactionCertificate:
    """Everything one reaction evaluation proves about the point (beta1, beta2)."""

    status: ReactionStatus
    beta1: np.ndarray
    beta2: np.ndarray
    phi_value: float
    rho_value: float
    y: Optional[np.ndarray]
    follower: MilpResult
    reaction: Optional[MilpResult]
    primal: Optional[RestrictedPrimal]
    dual: Optional[MinAffineDual]


def leader_rhs(instance: MiblpInstance, x: np.ndarray) -> np.ndarray:
    """b1 - A1 x over the rows that involve y."""
    rows = instance.leader_rows()
    return instance.b1[rows] - instance.A1[rows] @ x


def follower_rhs(instance: MiblpInstance, x: np.ndarray) -> np.ndarray:
    return instance.b2 - instance.A2 @ x


def follower_problem(instance: MiblpInstance, beta2: Sequence[float]) -> MilpProblem:
    """min d2^T y s.t. G2 y >= beta2, y in Y."""
    beta2 = np.asarray(beta2, dtype=float).reshape(-1)
    return MilpProblem.build(
        instance.d2,
        instance.G2,
        beta2,
        (GE,) * beta2.size,
        instance.y_lower,
        instance.y_upper,
        instance.y_integer,
    )


def reaction_problem(
    instance: MiblpInstance, beta1: Sequence[float], beta2: Sequence[float], phi: float
) -> MilpProblem:
    """
    min d1^T y over the follower's optimal set at beta2, written with rows
    [G1_leader; G2; -d2] y >= [beta1; beta2; -phi].
    """
    beta1 = np.asarray(beta1, dtype=float).reshape(-1)
    beta2 = np.asarray(beta2, dtype=float).reshape(-1)
    G1 = instance.G1[instance.leader_rows()]
    A = np.vstack([G1, instance.G2, -instance.d2.reshape(1, -1)])
    b = np.concatenate([beta1, beta2, [-phi]])
    return MilpProblem.build(
        instance.d1,
        A,
        b,
        (GE,) * b.size,
        instance.y_lower,
        instance.y_upper,
        instance.y_integer,
    )


def build_reaction_dual(tree: BnbTree, num_leader_rows: int) -> MinAffineDual:
    """
    One term per leaf of the step-two tree:
    beta1^T eta1 + beta2^T eta2 + phi * eta_phi + alpha.

    eta_phi is the negated multiplier of the -d2^T y >= -phi row, so it is
    nonpositive.

    Raises:
        EmptyTree: If the tree has no leaves or no finite value.
    """
    if not tree.leaves or not math.isfinite(tree.incumbent_value):
        raise EmptyTree("Reaction dual needs a solved step-two tree")
    m1 = num_leader_rows
    terms = []
    for leaf in tree.leaves:
        eta = leaf.eta
        terms.append(
            AffineTerm.build(
                coeff_beta1=eta[:m1],
                coeff_beta2=eta[m1:-1],
                coeff_phi=-max(float(eta[-1]), 0.0),
                constant=leaf.alpha,
            )
        )
    return MinAffineDual.build(terms, anchor_beta1=tree.rhs[:m1], anchor_beta2=tree.rhs[m1:-1])


def build_primal(
    instance: MiblpInstance,
    beta2: Sequence[float],
    y_star: np.ndarray,
    settings: Optional[Settings] = None,
) -> RestrictedPrimal:
    """
    Primal function from the continuous restriction at the follower optimum.

    The integer part of y_star stays fixed; the restriction LP over the
    continuous columns is solved at beta2 - G2_I y_I. With B its optimal
    basis and g the part of the rhs absorbed by fixed and nonbasic columns,
    the basic values are B^-1 (beta - g), so the function is
    eta^T (beta - g) + kappa wherever those values stay within their bounds.
    """
    settings = settings or Settings()
    beta2 = np.asarray(beta2, dtype=float).reshape(-1)
    y_star = np.asarray(y_star, dtype=float).reshape(-1)
    m2 = beta2.size
    integer = np.flatnonzero(instance.y_integer)
    continuous = np.flatnonzero(~instance.y_integer)

    fixed_rhs = instance.G2[:, integer] @ y_star[integer]
    kappa = float(instance.d2[integer] @ y_star[integer])
    restriction = LpProblem.build(
        instance.d2[continuous],
        instance.G2[:, continuous].reshape(m2, continuous.size),
        beta2 - fixed_rhs,
        (GE,) * m2,
        instance.y_lower[continuous],
        instance.y_upper[continuous],
    )
    cert = solve_lp(restriction, settings.lp)
    if cert.status != LpStatus.OPTIMAL:
        raise NotOptimal(f"Continuous restriction is {cert.status.value} at the follower optimum")

    n = continuous.size
    basic = set(cert.basis)
    offset = fixed_rhs.copy()
    for j in range(n):
        if j not in basic and cert.x[j] != 0.0:
            offset += restriction.A[:, j] * cert.x[j]
            kappa += float(restriction.c[j] * cert.x[j])

    inverse = basis_inverse_rows(cert, restriction)
    rows, rhs = [], []
    for position, column in enumerate(cert.basis):
        if column < n:
            lo, hi = restriction.lower[column], restriction.upper[column]
        elif column < n + m2:
            lo, hi = 0.0, math.inf
        else:
            lo, hi = 0.0, 0.0
        if math.isfinite(lo):
            rows.append(inverse[position])
            rhs.append(lo)
        if math.isfinite(hi):
            rows.append(-inverse[position])
            rhs.append(-hi)

    return RestrictedPrimal.build(
        eta=cert.eta,
        kappa=kappa,
        offset=offset,
        domain_matrix=np.array(rows).reshape(len(rows), m2),
        domain_rhs=rhs,
        anchor=beta2,
        fixed=y_star[integer],
    )


def _checked(result: MilpResult, step: str) -> MilpResult:
    if result.status == MilpStatus.UNBOUNDED:
        raise AssumptionViolated(f"The {step} problem is unbounded below")
    if result.status == MilpStatus.ABORTED:
        raise NotOptimal(f"The {step} problem hit the node limit")
    return result


def evaluate_reaction(
    instance: MiblpInstance,
    beta1: Sequence[float],
    beta2: Sequence[float],
    settings: Optional[Settings] = None,
) -> ReactionCertificate:
    """
    Evaluates rho(beta1, beta2) by the two-step lexicographic solve.

    Args:
        instance (MiblpInstance): The bilevel instance.
        beta1 (Sequence[float]): Rhs of the leader rows that involve y.
        beta2 (Sequence[float]): Rhs of the follower rows.
        settings (Settings, optional): Solver settings.

    Returns:
        ReactionCertificate: OPTIMAL with the primal and dual functions,
        or one of the infeasible statuses with infinite values.

    Raises:
        AssumptionViolated: If either step is unbounded below.
        NotOptimal: If either step stops at the node limit.
    """
    settings = settings or Settings()
    beta1 = np.asarray(beta1, dtype=float).reshape(-1)
    beta2 = np.asarray(beta2, dtype=float).reshape(-1)
    num_leader = instance.leader_rows().size
    if beta1.size != num_leader or beta2.size != instance.b2.size:
        raise DimensionMismatch(
            f"Reaction rhs sizes ({beta1.size}, {beta2.size}) do not match "
            f"({num_leader}, {instance.b2.size})"
        )

    follower = _checked(
        solve_milp(follower_problem(instance, beta2), settings.bnb, settings.lp), "follower"
    )
    if follower.status == MilpStatus.INFEASIBLE:
        logger.debug("Follower infeasible at beta2=%s", beta2)
        return ReactionCertificate(
            ReactionStatus.SECOND_STAGE_INFEASIBLE,
            beta1, beta2, math.inf, math.inf, None, follower, None, None, None,
        )
    phi = follower.value
    primal = build_primal(instance, beta2, follower.y, settings)

    bound = phi + PHI_SLACK * (1.0 + abs(phi))
    reaction = _checked(
        solve_milp(reaction_problem(instance, beta1, beta2, bound), settings.bnb, settings.lp),
        "reaction",
    )
    if reaction.status == MilpStatus.INFEASIBLE:
        logger.debug("Leader rows infeasible over the follower's optimal set")
        return ReactionCertificate(
            ReactionStatus.LINK_INFEASIBLE,
            beta1, beta2, phi, math.inf, None, follower, reaction, primal, None,
        )
    dual = build_reaction_dual(reaction.tree, num_leader)
    logger.debug("phi=%.9g rho=%.9g with %d dual terms", phi, reaction.value, len(dual.terms))
    return ReactionCertificate(
        ReactionStatus.OPTIMAL,
        beta1,
        beta2,
        phi,
        reaction.value,
        reaction.y,
        follower,
        reaction,
        primal,
        dual,
    )
