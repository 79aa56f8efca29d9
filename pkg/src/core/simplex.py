"""
Dense bounded-variable primal simplex.

Bounds are handled implicitly (nonbasic variables sit at a bound), so
tightening a bound never adds a row. Every row gets one slack column:
``A_i x - s_i = b_i`` for ``>=`` rows, ``A_i x + s_i = b_i`` for ``<=`` and
``=`` rows, with ``s_i`` in ``[0, inf)`` or ``[0, 0]`` respectively.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import DimensionMismatch, LpStatus, NotOptimal, NumericalBreakdown
from .settings import LpTolerances

logger = logging.getLogger(__name__)

GE = ">="
LE = "<="
EQ = "="
SENSES = (GE, LE, EQ)

_BASIC = 0
_AT_LOWER = 1
_AT_UPPER = 2
_FREE = 3


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class LpProblem:
    """
    min c^T x  s.t.  A x (senses) b,  lower <= x <= upper.

    Use LpProblem.build to construct; it validates and freezes the arrays.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: Tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def build(
        cls,
        c: Sequence[float],
        A: Sequence[Sequence[float]],
        b: Sequence[float],
        senses: Optional[Sequence[str]] = None,
        lower: Optional[Sequence[float]] = None,
        upper: Optional[Sequence[float]] = None,
    ) -> "LpProblem":
        """
        Validates the data and returns an immutable problem.

        Args:
            c: Objective coefficients (n).
            A: Constraint matrix (m x n); an empty sequence when m = 0.
            b: Right-hand side (m).
            senses: One of ">=", "<=", "=" per row; all ">=" by default.
            lower: Lower bounds, 0 by default; -inf allowed.
            upper: Upper bounds, +inf by default.

        Raises:
            DimensionMismatch: If shapes disagree or lower > upper.
        """
        c = np.array(c, dtype=float).reshape(-1)
        b = np.array(b, dtype=float).reshape(-1)
        n, m = c.size, b.size
        A = np.array(A, dtype=float)
        if A.size != m * n:
            raise DimensionMismatch(
                f"A has {A.size} entries, expected {m}x{n} = {m * n}"
            )
        A = A.reshape(m, n)
        senses = tuple(senses) if senses is not None else (GE,) * m
        if len(senses) != m:
            raise DimensionMismatch(f"{len(senses)} senses for {m} rows")
        for sense in senses:
            if sense not in SENSES:
                raise DimensionMismatch(f"Unknown row sense {sense!r}")
        lower = (
            np.zeros(n) if lower is None else np.array(lower, dtype=float).reshape(-1)
        )
        upper = (
            np.full(n, np.inf)
            if upper is None
            else np.array(upper, dtype=float).reshape(-1)
        )
        if lower.size != n or upper.size != n:
            raise DimensionMismatch("Bound vectors must have one entry per column")
        if np.any(lower > upper):
            bad = int(np.flatnonzero(lower > upper)[0])
            raise DimensionMismatch(
                f"Variable {bad} has lower bound {lower[bad]} > upper {upper[bad]}"
            )
        if np.isnan(A).any() or np.isnan(b).any() or np.isnan(c).any():
            raise DimensionMismatch("Problem data contains NaN")
        if not (np.isfinite(A).all() and np.isfinite(b).all() and np.isfinite(c).all()):
            raise DimensionMismatch("Objective, matrix and rhs must be finite")
        return cls(
            c=_frozen(c),
            A=_frozen(A),
            b=_frozen(b),
            senses=senses,
            lower=_frozen(lower),
            upper=_frozen(upper),
        )

    @property
    def num_rows(self) -> int:
        return self.b.size

    @property
    def num_cols(self) -> int:
        return self.c.size

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "LpProblem":
        """Same problem over a different bound box (branching)."""
        return LpProblem.build(self.c, self.A, self.b, self.senses, lower, upper)

    def with_rhs(self, b: Sequence[float]) -> "LpProblem":
        b = np.array(b, dtype=float).reshape(-1)
        if b.size != self.num_rows:
            raise DimensionMismatch(f"rhs has {b.size} entries, expected {self.num_rows}")
        return replace(self, b=_frozen(b))


@dataclass(frozen=True)
class LpCertificate:
    """
    Everything one LP solve proves.

    At OPTIMAL: c^T x = eta^T b + sum(eta_lower * lower) + sum(eta_upper * upper)
    over finite bounds. eta_lower holds the reduced costs of variables
    nonbasic at their lower bound, eta_upper those at their upper bound.
    At INFEASIBLE: farkas is a row multiplier sigma with
    sigma^T b - max_{box} sigma^T A x > 0. At UNBOUNDED: ray is a primal
    recession direction with c^T ray < 0.
    """

    status: LpStatus
    x: Optional[np.ndarray]
    objective: float
    eta: Optional[np.ndarray]
    eta_lower: Optional[np.ndarray]
    eta_upper: Optional[np.ndarray]
    basis: Tuple[int, ...]
    basis_matrix: Optional[np.ndarray]
    farkas: Optional[np.ndarray] = None
    ray: Optional[np.ndarray] = None
    pivots: int = 0


class _BoundedSimplex:
    """Working state of one solve: column data, basis and nonbasic positions."""

    def __init__(
        self,
        M: np.ndarray,
        b: np.ndarray,
        lo: np.ndarray,
        hi: np.ndarray,
        tol: LpTolerances,
    ):
        self.M = M
        self.b = b
        self.lo = lo
        self.hi = hi
        self.tol = tol
        self.m, self.total = M.shape
        self.status = np.full(self.total, _AT_LOWER, dtype=int)
        self.value = np.zeros(self.total)
        self.basis = [0] * self.m
        self.pivots = 0
        self._lu = None

    # --- linear algebra -------------------------------------------------

    def factor(self) -> None:
        if self.m == 0:
            self._lu = None
            return
        B = self.M[:, self.basis]
        scale = max(1.0, float(np.abs(B).max()))
        lu, piv = lu_factor(B, check_finite=False)
        if np.min(np.abs(np.diag(lu))) <= 1e-13 * scale:
            raise NumericalBreakdown(
                f"Singular basis after {self.pivots} pivots: {self.basis}"
            )
        self._lu = (lu, piv)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return np.zeros(0)
        return lu_solve(self._lu, rhs, check_finite=False)

    def solve_transposed(self, rhs: np.ndarray) -> np.ndarray:
        if self.m == 0:
            return np.zeros(0)
        return lu_solve(self._lu, rhs, trans=1, check_finite=False)

    def basic_values(self) -> np.ndarray:
        nonbasic = self.status != _BASIC
        rhs = self.b - self.M[:, nonbasic] @ self.value[nonbasic]
        return self.solve(rhs)

    def full_values(self) -> np.ndarray:
        values = self.value.copy()
        if self.m:
            values[self.basis] = self.basic_values()
        return values

    # --- pivoting -------------------------------------------------------

    def _entering(self, d: np.ndarray, bland: bool) -> Tuple[Optional[int], int]:
        opt = self.tol.optimality
        movable = (self.status != _BASIC) & (self.hi - self.lo > 0.0)
        from_lower = movable & (self.status == _AT_LOWER) & (d < -opt)
        from_upper = movable & (self.status == _AT_UPPER) & (d > opt)
        from_free = movable & (self.status == _FREE) & (np.abs(d) > opt)
        eligible = from_lower | from_upper | from_free
        if not eligible.any():
            return None, 0
        if bland:
            q = int(np.flatnonzero(eligible)[0])
        else:
            q = int(np.argmax(np.where(eligible, np.abs(d), -np.inf)))
        if from_lower[q]:
            return q, 1
        if from_upper[q]:
            return q, -1
        return q, (-1 if d[q] > 0 else 1)

    def _ratio_test(
        self, q: int, direction: int, alpha: np.ndarray, x_B: np.ndarray
    ) -> Tuple[float, Optional[int], bool]:
        """
        Longest step before a basic variable hits a bound. A bound flip of
        the entering column wins ties; among blocking rows within the
        feasibility tolerance of the minimum the lowest column leaves.
        """
        feas, piv = self.tol.feasibility, self.tol.pivot
        flip = self.hi[q] - self.lo[q]
        if self.m == 0:
            return flip, None, False
        basis = np.asarray(self.basis)
        lo_b, hi_b = self.lo[basis], self.hi[basis]
        rate = direction * alpha
        down = (rate > piv) & np.isfinite(lo_b)
        up = (rate < -piv) & np.isfinite(hi_b)
        blocking = down | up
        if not blocking.any():
            return flip, None, False
        ratios = np.full(self.m, np.inf)
        ratios[down] = (x_B[down] - lo_b[down]) / rate[down]
        ratios[up] = (hi_b[up] - x_B[up]) / -rate[up]
        ratios = np.maximum(ratios, 0.0)
        step = float(ratios[blocking].min())
        if not step < flip - feas:
            return flip, None, False
        ties = np.flatnonzero(blocking & (ratios <= step + feas))
        leave = int(ties[np.argmin(basis[ties])])
        return step, leave, bool(up[leave])

    def iterate(self, cost: np.ndarray):
        """
        Runs primal simplex pivots from the current basis.

        Returns:
            tuple: ("optimal", pi, d) or ("unbounded", q, direction, alpha).
        """
        stall, bland = 0, False
        while self.pivots < self.tol.max_pivots:
            self.factor()
            x_B = self.basic_values()
            pi = self.solve_transposed(cost[self.basis])
            d = cost - self.M.T @ pi
            q, direction = self._entering(d, bland)
            if q is None:
                return "optimal", pi, d
            alpha = self.solve(self.M[:, q])
            step, leave, to_upper = self._ratio_test(q, direction, alpha, x_B)
            if not np.isfinite(step):
                return "unbounded", q, direction, alpha
            self.pivots += 1
            if leave is None:
                # bound flip, basis unchanged
                self.status[q] = _AT_UPPER if direction > 0 else _AT_LOWER
                self.value[q] = self.hi[q] if direction > 0 else self.lo[q]
            else:
                out = self.basis[leave]
                self.basis[leave] = q
                self.status[q] = _BASIC
                self.status[out] = _AT_UPPER if to_upper else _AT_LOWER
                self.value[out] = self.hi[out] if to_upper else self.lo[out]
            if step <= self.tol.feasibility:
                stall += 1
                if stall >= self.tol.stall_limit and not bland:
                    logger.debug("Degenerate stall, switching to Bland's rule")
                    bland = True
            else:
                stall = 0
        raise NumericalBreakdown(f"Pivot limit {self.tol.max_pivots} reached")

    def pivot_out(self, position: int, candidates: Sequence[int]) -> bool:
        """Degenerate pivot replacing the basic column at position."""
        self.factor()
        for j in candidates:
            if self.status[j] == _BASIC:
                continue
            alpha = self.solve(self.M[:, j])
            if abs(alpha[position]) > 1e-9:
                out = self.basis[position]
                self.basis[position] = j
                self.status[j] = _BASIC
                self.status[out] = _AT_LOWER
                self.value[out] = 0.0
                self.pivots += 1
                return True
        return False


def _initial_position(lo: float, hi: float) -> Tuple[int, float]:
    if np.isfinite(lo):
        return _AT_LOWER, lo
    if np.isfinite(hi):
        return _AT_UPPER, hi
    return _FREE, 0.0


def solve_lp(problem: LpProblem, tol: Optional[LpTolerances] = None) -> LpCertificate:
    """
    Solves an LP and returns its certificate.

    Phase 1 starts from slack columns wherever they are feasible at the
    initial nonbasic point and artificial columns elsewhere. Pivoting is
    Dantzig's rule with lowest-index ties, falling back to Bland's rule
    after a run of degenerate pivots, so identical inputs always produce
    identical certificates.

    Args:
        problem (LpProblem): The LP.
        tol (LpTolerances, optional): Tolerances; defaults when omitted.

    Returns:
        LpCertificate: Status plus primal/dual data or a ray.

    Raises:
        NumericalBreakdown: If the basis becomes singular or pivots run out.
    """
    tol = tol or LpTolerances()
    n, m = problem.num_cols, problem.num_rows
    A, b = problem.A, problem.b
    slack_sign = np.array([-1.0 if s == GE else 1.0 for s in problem.senses])
    slack_hi = np.array([0.0 if s == EQ else np.inf for s in problem.senses])

    x0 = np.zeros(n)
    states = np.empty(n, dtype=int)
    for j in range(n):
        states[j], x0[j] = _initial_position(problem.lower[j], problem.upper[j])
    residual = b - A @ x0

    art_rows, art_signs, basic_of_row = [], [], [None] * m
    for i in range(m):
        needed = residual[i] / slack_sign[i]
        if -tol.feasibility <= needed <= slack_hi[i] + tol.feasibility:
            basic_of_row[i] = n + i
        else:
            art_rows.append(i)
            art_signs.append(1.0 if residual[i] >= 0 else -1.0)
    k = len(art_rows)
    art_cols = np.zeros((m, k))
    for pos, (row, sign) in enumerate(zip(art_rows, art_signs)):
        art_cols[row, pos] = sign
        basic_of_row[row] = n + m + pos

    M = np.hstack([A, np.diag(slack_sign) if m else np.zeros((0, 0)), art_cols])
    M = M.reshape(m, n + m + k)
    lo = np.concatenate([problem.lower, np.zeros(m), np.zeros(k)])
    hi = np.concatenate([problem.upper, slack_hi, np.full(k, np.inf)])

    engine = _BoundedSimplex(M, b, lo, hi, tol)
    engine.status[:n] = states
    engine.value[:n] = x0
    engine.basis = list(basic_of_row)
    engine.status[engine.basis] = _BASIC

    if k:
        phase_one_cost = np.concatenate([np.zeros(n + m), np.ones(k)])
        outcome = engine.iterate(phase_one_cost)
        pi = outcome[1]
        infeasibility = float(engine.full_values()[n + m:].sum())
        if infeasibility > tol.infeasibility:
            logger.debug("LP infeasible, phase-one residual %.3g", infeasibility)
            return LpCertificate(
                status=LpStatus.INFEASIBLE,
                x=None,
                objective=np.inf,
                eta=None,
                eta_lower=None,
                eta_upper=None,
                basis=tuple(engine.basis),
                basis_matrix=None,
                farkas=pi.copy(),
                pivots=engine.pivots,
            )
        real_columns = list(range(n + m))
        for position in range(m):
            if engine.basis[position] >= n + m:
                engine.pivot_out(position, [n + position] + real_columns)
        engine.hi[n + m:] = 0.0
        for j in range(n + m, n + m + k):
            if engine.status[j] != _BASIC:
                engine.status[j] = _AT_LOWER
                engine.value[j] = 0.0

    cost = np.concatenate([problem.c, np.zeros(m + k)])
    outcome = engine.iterate(cost)
    if outcome[0] == "unbounded":
        _, q, direction, alpha = outcome
        ray = np.zeros(n + m + k)
        ray[q] = direction
        for i, j in enumerate(engine.basis):
            ray[j] -= direction * alpha[i]
        return LpCertificate(
            status=LpStatus.UNBOUNDED,
            x=None,
            objective=-np.inf,
            eta=None,
            eta_lower=None,
            eta_upper=None,
            basis=tuple(engine.basis),
            basis_matrix=None,
            ray=ray[:n],
            pivots=engine.pivots,
        )

    _, pi, d = outcome
    values = engine.full_values()
    x = values[:n]
    eta_lower = np.zeros(n)
    eta_upper = np.zeros(n)
    for j in range(n):
        state = engine.status[j]
        if state in (_BASIC, _FREE):
            continue
        if problem.lower[j] == problem.upper[j]:
            if d[j] >= 0:
                eta_lower[j] = d[j]
            else:
                eta_upper[j] = d[j]
        elif state == _AT_LOWER:
            eta_lower[j] = d[j]
        else:
            eta_upper[j] = d[j]
    objective = float(problem.c @ x)
    dual_objective = float(pi @ b) + _bound_product(
        eta_lower, eta_upper, problem.lower, problem.upper
    )
    if abs(objective - dual_objective) > 1e-6 * (1.0 + abs(objective)):
        logger.warning(
            "Duality gap %.3g exceeds tolerance (primal %.9g, dual %.9g)",
            objective - dual_objective,
            objective,
            dual_objective,
        )
    return LpCertificate(
        status=LpStatus.OPTIMAL,
        x=x,
        objective=objective,
        eta=pi.copy(),
        eta_lower=eta_lower,
        eta_upper=eta_upper,
        basis=tuple(engine.basis),
        basis_matrix=M[:, engine.basis].copy(),
        pivots=engine.pivots,
    )


def _bound_product(
    eta_lower: np.ndarray, eta_upper: np.ndarray, lower: np.ndarray, upper: np.ndarray
) -> float:
    total = 0.0
    for j in range(lower.size):
        if eta_lower[j] != 0.0 and np.isfinite(lower[j]):
            total += eta_lower[j] * lower[j]
        if eta_upper[j] != 0.0 and np.isfinite(upper[j]):
            total += eta_upper[j] * upper[j]
    return total


def bound_product(
    eta_lower: np.ndarray, eta_upper: np.ndarray, lower: np.ndarray, upper: np.ndarray
) -> float:
    """
    Sum of reduced costs times the bounds they are attached to.

    Reduced costs on infinite bounds are zero in any dual-feasible
    certificate, so those terms are skipped.
    """
    return _bound_product(eta_lower, eta_upper, lower, upper)


def farkas_violation(problem: LpProblem, sigma: np.ndarray) -> float:
    """
    sigma^T b - max over the bound box of sigma^T A x.

    Positive values certify infeasibility. Sign-inconsistent multipliers
    (negative on >= rows, positive on <= rows) give -inf, as do directions
    unbounded over the box.
    """
    sigma = np.asarray(sigma, dtype=float).reshape(-1)
    if sigma.size != problem.num_rows:
        raise DimensionMismatch("Farkas multiplier has wrong length")
    slack = 1e-12
    for sense, value in zip(problem.senses, sigma):
        if (sense == GE and value < -slack) or (sense == LE and value > slack):
            return -np.inf
    weights = problem.A.T @ sigma
    total = float(sigma @ problem.b)
    for j, w in enumerate(weights):
        if abs(w) <= slack:
            continue
        bound = problem.upper[j] if w > 0 else problem.lower[j]
        if not np.isfinite(bound):
            return -np.inf
        total -= w * bound
    return total


def basis_inverse_rows(cert: LpCertificate, problem: LpProblem) -> np.ndarray:
    """
    Inverse of the optimal basis matrix (structural and slack columns).

    Row i applied to the rhs gives the value of the i-th basic variable when
    every nonbasic variable sits at zero.

    Raises:
        NotOptimal: If the certificate is not optimal.
        DimensionMismatch: If it belongs to a problem of another size.
    """
    if cert.status != LpStatus.OPTIMAL or cert.basis_matrix is None:
        raise NotOptimal(f"Basis inverse needs an optimal certificate, got {cert.status}")
    m = problem.num_rows
    if cert.basis_matrix.shape != (m, m):
        raise DimensionMismatch(
            f"Basis is {cert.basis_matrix.shape}, problem has {m} rows"
        )
    if m == 0:
        return np.zeros((0, 0))
    return np.linalg.inv(cert.basis_matrix)


def lagrangian_bound(
    problem: LpProblem, eta: np.ndarray
) -> Tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """
    eta^T b + min over the bound box of (c - A^T eta)^T x.

    Row multipliers of the wrong sign are clipped to zero and reduced costs
    below 1e-9 in magnitude are dropped.

    Returns:
        tuple: The bound (-inf when a reduced cost points at an infinite
        bound), the clipped multiplier, and the reduced costs split into the
        parts attached to the lower and upper bounds.
    """
    eta = np.asarray(eta, dtype=float).reshape(-1).copy()
    if eta.size != problem.num_rows:
        raise DimensionMismatch("Row multiplier has wrong length")
    senses = np.array(problem.senses, dtype=object)
    eta[(senses == GE) & (eta < 0.0)] = 0.0
    eta[(senses == LE) & (eta > 0.0)] = 0.0
    reduced = problem.c - problem.A.T @ eta
    reduced[np.abs(reduced) <= 1e-9] = 0.0
    eta_lower = np.where(reduced > 0.0, reduced, 0.0)
    eta_upper = np.where(reduced < 0.0, reduced, 0.0)
    if np.any((eta_lower > 0.0) & ~np.isfinite(problem.lower)) or np.any(
        (eta_upper < 0.0) & ~np.isfinite(problem.upper)
    ):
        return -np.inf, eta, eta_lower, eta_upper
    value = float(eta @ problem.b) + _bound_product(
        eta_lower, eta_upper, problem.lower, problem.upper
    )
    return value, eta, eta_lower, eta_upper
