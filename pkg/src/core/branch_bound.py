"""
LP-based branch-and-bound that keeps the certificate of every leaf.

The leaves of a finished tree give a dual function of the MILP value
function: each leaf contributes beta^T eta^t + alpha^t where alpha^t is the
product of the leaf's reduced costs with its node bounds.
"""
import heapq
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import DimensionMismatch, EmptyTree, LpStatus, MilpStatus
from .piecewise import AffineTerm, MinAffineDual
from .settings import BnbSettings, LpTolerances
from .simplex import (
    GE,
    LE,
    LpCertificate,
    LpProblem,
    bound_product,
    farkas_violation,
    lagrangian_bound,
    solve_lp,
)

logger = logging.getLogger(__name__)

_PRUNE_TOL = 1e-9


@dataclass(frozen=True)
class MilpProblem:
    """An LpProblem plus an integrality mask."""

    lp: LpProblem
    integer: np.ndarray

    @classmethod
    def build(
        cls,
        c,
        A,
        b,
        senses=None,
        lower=None,
        upper=None,
        integer: Optional[Sequence[bool]] = None,
    ) -> "MilpProblem":
        lp = LpProblem.build(c, A, b, senses, lower, upper)
        return cls.from_lp(lp, integer)

    @classmethod
    def from_lp(cls, lp: LpProblem, integer: Optional[Sequence[bool]] = None) -> "MilpProblem":
        mask = (
            np.zeros(lp.num_cols, dtype=bool)
            if integer is None
            else np.array(integer, dtype=bool).reshape(-1)
        )
        if mask.size != lp.num_cols:
            raise DimensionMismatch(
                f"Integrality mask has {mask.size} entries for {lp.num_cols} columns"
            )
        mask.setflags(write=False)
        return cls(lp=lp, integer=mask)

    def with_rhs(self, b) -> "MilpProblem":
        return MilpProblem(lp=self.lp.with_rhs(b), integer=self.integer)

    @property
    def num_cols(self) -> int:
        return self.lp.num_cols

    @property
    def num_rows(self) -> int:
        return self.lp.num_rows


@dataclass(frozen=True)
class BnbLeaf:
    """
    Certificate of one leaf node.

    status is OPTIMAL when the node LP was solved (integral, pruned or left
    open at a node limit) and INFEASIBLE when the node LP had no solution.
    An infeasible leaf carries its parent's duals moved along the node's
    Farkas ray; ray_weight is the step taken along the ray.
    """

    lower: np.ndarray
    upper: np.ndarray
    status: LpStatus
    eta: np.ndarray
    eta_lower: np.ndarray
    eta_upper: np.ndarray
    alpha: float
    bound: float
    ray_weight: Optional[float] = None

    def value(self, beta: np.ndarray) -> float:
        return float(np.asarray(beta, dtype=float) @ self.eta) + self.alpha


@dataclass(frozen=True)
class BnbTree:
    leaves: Tuple[BnbLeaf, ...]
    incumbent: Optional[np.ndarray]
    incumbent_value: float
    lower_bound: float
    rhs: np.ndarray
    root_lower: np.ndarray
    root_upper: np.ndarray
    node_count: int


@dataclass(frozen=True)
class MilpResult:
    status: MilpStatus
    y: Optional[np.ndarray]
    value: float
    tree: BnbTree

    def __iter__(self):
        return iter((self.status, self.y, self.value, self.tree))


@dataclass
class _Node:
    lower: np.ndarray
    upper: np.ndarray
    cert: LpCertificate
    depth: int = 0
    ident: int = 0
    parent_eta: Optional[np.ndarray] = None


@dataclass
class _Search:
    """Mutable bookkeeping of one tree search."""

    problem: MilpProblem
    lp_tol: LpTolerances
    bnb: BnbSettings
    counter: "itertools.count" = field(default_factory=itertools.count)
    heap: list = field(default_factory=list)
    finished: List[_Node] = field(default_factory=list)
    infeasible: List[_Node] = field(default_factory=list)
    incumbent: Optional[np.ndarray] = None
    incumbent_value: float = math.inf
    node_count: int = 0

    def evaluate(
        self,
        lower: np.ndarray,
        upper: np.ndarray,
        depth: int,
        parent_eta: Optional[np.ndarray] = None,
    ) -> _Node:
        self.node_count += 1
        cert = solve_lp(self.problem.lp.with_bounds(lower, upper), self.lp_tol)
        node = _Node(lower, upper, cert, depth, next(self.counter), parent_eta)
        logger.debug(
            "node %d depth %d: %s %.9g", node.ident, depth, cert.status.value, cert.objective
        )
        return node

    def enqueue(self, node: _Node) -> None:
        if node.cert.status == LpStatus.INFEASIBLE:
            self.infeasible.append(node)
        else:
            heapq.heappush(self.heap, (node.cert.objective, node.ident, node))


def _round_integer_bounds(
    problem: MilpProblem, tol: float
) -> Tuple[np.ndarray, np.ndarray]:
    lower = problem.lp.lower.copy()
    upper = problem.lp.upper.copy()
    for j in np.flatnonzero(problem.integer):
        if np.isfinite(lower[j]):
            lower[j] = math.ceil(lower[j] - tol)
        if np.isfinite(upper[j]):
            upper[j] = math.floor(upper[j] + tol)
    return lower, upper


def _dominated(bound: float, incumbent_value: float) -> bool:
    if not math.isfinite(incumbent_value):
        return False
    return bound >= incumbent_value - _PRUNE_TOL * (1.0 + abs(incumbent_value))


def _fractional_index(x: np.ndarray, integer: np.ndarray, tol: float) -> Optional[int]:
    for j in np.flatnonzero(integer):
        if abs(x[j] - round(x[j])) > tol:
            return int(j)
    return None


def _snap(x: np.ndarray, integer: np.ndarray) -> np.ndarray:
    y = x.copy()
    y[integer] = np.round(y[integer])
    return y


def row_violation(lp: LpProblem, y: np.ndarray) -> float:
    """Largest amount by which y violates a row of lp; 0 when feasible."""
    if lp.num_rows == 0:
        return 0.0
    residual = lp.A @ y - lp.b
    senses = np.array(lp.senses, dtype=object)
    excess = np.where(
        senses == GE, -residual, np.where(senses == LE, residual, np.abs(residual))
    )
    return max(float(excess.max()), 0.0)


def _integral_point(
    lp: LpProblem, integer: np.ndarray, node: _Node, x: np.ndarray, lp_tol: LpTolerances
) -> Tuple[Optional[np.ndarray], Optional[int]]:
    """
    Rounds an integral-within-tolerance node solution.

    When the rounded point violates a row by more than the LP infeasibility
    tolerance, the continuous columns are re-solved with the integer
    columns fixed at their rounded values. If that LP is infeasible the
    node is branched on its least integral column instead.

    Returns:
        tuple: The point and None, or (None, column to branch on).
    """
    y = _snap(x, integer)
    violation = row_violation(lp, y)
    if violation <= lp_tol.infeasibility:
        return y, None
    lower = np.where(integer, y, node.lower)
    upper = np.where(integer, y, node.upper)
    fixed = solve_lp(lp.with_bounds(lower, upper), lp_tol)
    if fixed.status == LpStatus.OPTIMAL:
        logger.debug("Rounded point off by %.3g; re-solved with integers fixed", violation)
        polished = fixed.x.copy()
        polished[integer] = y[integer]
        return polished, None
    gaps = np.where(integer, np.abs(x - y), 0.0)
    if gaps.max() > 0.0:
        return None, int(np.argmax(gaps))
    logger.warning("Integral node point violates a row by %.3g", violation)
    return y, None


def branch_boxes(lower: np.ndarray, upper: np.ndarray, branch: int, v: float):
    """Down and up boxes split at v on column branch; empty boxes are skipped."""
    down_upper = upper.copy()
    down_upper[branch] = math.floor(v)
    up_lower = lower.copy()
    up_lower[branch] = math.ceil(v)
    boxes = []
    if down_upper[branch] >= lower[branch]:
        boxes.append((lower, down_upper))
    if up_lower[branch] <= upper[branch]:
        boxes.append((up_lower, upper))
    return boxes


def _leaf_from_certificate(node: _Node) -> BnbLeaf:
    cert = node.cert
    alpha = bound_product(cert.eta_lower, cert.eta_upper, node.lower, node.upper)
    return BnbLeaf(
        lower=node.lower,
        upper=node.upper,
        status=LpStatus.OPTIMAL,
        eta=cert.eta,
        eta_lower=cert.eta_lower,
        eta_upper=cert.eta_upper,
        alpha=alpha,
        bound=cert.objective,
    )


def infeasible_leaf(
    lp: LpProblem,
    lower: np.ndarray,
    upper: np.ndarray,
    parent_eta: Optional[np.ndarray],
    farkas: Optional[np.ndarray],
    target: float,
    bnb: BnbSettings,
) -> Optional[BnbLeaf]:
    """
    Dual certificate for a node whose LP is infeasible.

    Branching only tightens bounds, so the parent's optimal row duals stay
    feasible for the node's dual LP, and so does any nonnegative step along
    the node's Farkas ray. The step is the smallest one that lifts the
    term's value at the solved rhs to target; without a finite target the
    configured weight is used. Returns None for a root node, which has no
    parent duals.
    """
    if parent_eta is None:
        logger.debug("Infeasible node without parent duals; no leaf term")
        return None
    node_lp = lp.with_bounds(lower, upper)
    base, _, _, _ = lagrangian_bound(node_lp, parent_eta)
    sigma = np.zeros(lp.num_rows) if farkas is None else np.asarray(farkas, dtype=float)
    senses = np.array(lp.senses, dtype=object)
    sigma = np.where(senses == GE, np.maximum(sigma, 0.0), sigma)
    sigma = np.where(senses == LE, np.minimum(sigma, 0.0), sigma)
    violation = farkas_violation(node_lp, sigma)
    if not (math.isfinite(violation) and violation > 1e-12):
        logger.warning("Farkas ray of an infeasible node is unusable; keeping parent duals")
        weight = 0.0
    elif math.isfinite(target) and math.isfinite(base):
        margin = 1e-9 * (1.0 + abs(target))
        weight = max(0.0, target - base + margin) / violation
    else:
        weight = bnb.infeasible_leaf_weight
    value, eta, eta_lower, eta_upper = lagrangian_bound(node_lp, parent_eta + weight * sigma)
    if not math.isfinite(value):
        logger.warning("Infeasible leaf term is unbounded over the node box; leaf dropped")
        return None
    if math.isfinite(target) and value < target - 1e-6 * (1.0 + abs(target)):
        logger.warning("Infeasible leaf term %.6g stays below target %.6g", value, target)
    return BnbLeaf(
        lower=lower,
        upper=upper,
        status=LpStatus.INFEASIBLE,
        eta=eta,
        eta_lower=eta_lower,
        eta_upper=eta_upper,
        alpha=bound_product(eta_lower, eta_upper, lower, upper),
        bound=math.inf,
        ray_weight=weight,
    )


def solve_milp(
    problem: MilpProblem,
    bnb: Optional[BnbSettings] = None,
    lp_tol: Optional[LpTolerances] = None,
) -> MilpResult:
    """
    Solves a MILP by best-bound branch-and-bound and keeps the leaf tree.

    Branching is on the lowest-index fractional integer variable with the
    down child evaluated first; ties in the node queue go to the older node.

    Args:
        problem (MilpProblem): The MILP.
        bnb (BnbSettings, optional): Tree settings.
        lp_tol (LpTolerances, optional): Node LP tolerances.

    Returns:
        MilpResult: status, incumbent, value and the retained tree.
    """
    bnb = bnb or BnbSettings()
    lp_tol = lp_tol or LpTolerances()
    lp = problem.lp
    search = _Search(problem=problem, lp_tol=lp_tol, bnb=bnb)
    root_lower, root_upper = _round_integer_bounds(problem, bnb.integrality)

    def tree(leaves, lower_bound) -> BnbTree:
        return BnbTree(
            leaves=tuple(leaves),
            incumbent=search.incumbent,
            incumbent_value=search.incumbent_value,
            lower_bound=lower_bound,
            rhs=lp.b,
            root_lower=root_lower,
            root_upper=root_upper,
            node_count=search.node_count,
        )

    if np.any(root_lower > root_upper):
        logger.debug("Integer bounds leave an empty box")
        return MilpResult(MilpStatus.INFEASIBLE, None, math.inf, tree([], math.inf))

    root = search.evaluate(root_lower, root_upper, 0)
    if root.cert.status == LpStatus.UNBOUNDED:
        return MilpResult(MilpStatus.UNBOUNDED, None, -math.inf, tree([], -math.inf))
    search.enqueue(root)

    aborted = False
    while search.heap:
        bound, _, node = heapq.heappop(search.heap)
        if _dominated(bound, search.incumbent_value):
            search.finished.append(node)
            continue
        x = np.clip(node.cert.x, node.lower, node.upper)
        branch = _fractional_index(x, problem.integer, bnb.integrality)
        if branch is None:
            y, branch = _integral_point(lp, problem.integer, node, x, lp_tol)
        if branch is None:
            value = float(lp.c @ y)
            if value < search.incumbent_value:
                search.incumbent, search.incumbent_value = y, value
                logger.debug("New incumbent %.9g at node %d", value, node.ident)
            search.finished.append(node)
            continue
        if search.node_count + 2 > bnb.node_limit:
            heapq.heappush(search.heap, (bound, node.ident, node))
            aborted = True
            break
        for lower, upper in branch_boxes(node.lower, node.upper, branch, x[branch]):
            search.enqueue(search.evaluate(lower, upper, node.depth + 1, node.cert.eta))

    open_nodes = [entry[2] for entry in sorted(search.heap, key=lambda e: (e[0], e[1]))]
    evaluated = sorted(search.finished + open_nodes, key=lambda n: n.ident)
    leaves = [_leaf_from_certificate(n) for n in evaluated]
    for node in sorted(search.infeasible, key=lambda n: n.ident):
        leaf = infeasible_leaf(
            lp,
            node.lower,
            node.upper,
            node.parent_eta,
            node.cert.farkas,
            search.incumbent_value,
            bnb,
        )
        if leaf is not None:
            leaves.append(leaf)

    if aborted:
        lower_bound = min([n.cert.objective for n in open_nodes] + [search.incumbent_value])
        logger.warning(
            "Node limit %d reached, best bound %.6g, incumbent %.6g",
            bnb.node_limit,
            lower_bound,
            search.incumbent_value,
        )
        return MilpResult(
            MilpStatus.ABORTED, search.incumbent, search.incumbent_value, tree(leaves, lower_bound)
        )
    if search.incumbent is None:
        return MilpResult(MilpStatus.INFEASIBLE, None, math.inf, tree(leaves, math.inf))
    return MilpResult(
        MilpStatus.OPTIMAL,
        search.incumbent,
        search.incumbent_value,
        tree(leaves, search.incumbent_value),
    )


def extract_dual_function(tree: BnbTree) -> MinAffineDual:
    """
    min over leaves t of beta^T eta^t + alpha^t, strong at the solved rhs.

    Raises:
        EmptyTree: If the tree has no leaves or no finite value.
    """
    if not tree.leaves or not math.isfinite(tree.incumbent_value):
        raise EmptyTree("Dual function needs a solved tree with a finite value")
    terms = tuple(
        AffineTerm.build(coeff_beta2=leaf.eta, constant=leaf.alpha) for leaf in tree.leaves
    )
    return MinAffineDual.build(terms, anchor_beta2=tree.rhs)
