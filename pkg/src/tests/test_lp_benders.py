import math
import os

import numpy as np
import pytest

from src.core.benders import solve_lp_benders
from src.core.benders.lp import subproblem
from src.core.benders.trace import FEASIBILITY, OPTIMALITY
from src.core.errors import LpStatus, SolveStatus
from src.core.instances import LpBendersInstance, load_instance, random_lp_benders
from src.core.oracle import oracle_lp
from src.core.simplex import solve_lp

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "..", "fixtures")


@pytest.fixture
def instance():
    return load_instance(os.path.join(FIXTURES, "lp_benders.json"))


def test_fixture_optimum(instance):
    """
    GIVEN min x1 + x2 + 2y1 + 3y2 with x + y covering (2, 3, 4)
    WHEN the Benders loop runs
    THEN all the cover comes from x at cost 5
    """
    result = solve_lp_benders(instance)

    assert result.status == SolveStatus.OPTIMAL
    assert result.value == pytest.approx(5.0)
    assert result.x == pytest.approx([2.0, 3.0])
    assert result.y == pytest.approx([0.0, 0.0])


def test_bounds_bracket_and_converge(instance):
    result = solve_lp_benders(instance)
    trace = result.trace

    assert trace.lower_bounds == sorted(trace.lower_bounds)
    assert all(lb <= ub + 1e-9 for lb, ub in zip(trace.lower_bounds, trace.upper_bounds))
    assert trace.rows[-1].upper_bound - trace.rows[-1].lower_bound <= 1e-6
    assert all(row.cut_type == OPTIMALITY for row in trace)


def test_subproblem_at_point(instance):
    cert = solve_lp(subproblem(instance, np.array([0.0, 0.0])))

    assert cert.status == LpStatus.OPTIMAL
    assert cert.objective == pytest.approx(13.0)


def test_infeasible_instance():
    """No y can satisfy a row whose G coefficients are all zero."""
    impossible = LpBendersInstance(
        c=np.array([1.0]),
        d=np.array([1.0]),
        A=np.array([[1.0]]),
        G=np.array([[0.0]]),
        b=np.array([20.0]),
        x_upper=np.array([10.0]),
    )
    result = solve_lp_benders(impossible)

    assert result.status == SolveStatus.INFEASIBLE
    assert result.value == math.inf
    assert oracle_lp(impossible).status == SolveStatus.INFEASIBLE


def test_feasibility_cut():
    """
    GIVEN a row only x can cover, next to one that y covers
    WHEN the first master proposes x = 0
    THEN a feasibility cut moves x up to the row
    """
    instance = LpBendersInstance(
        c=np.array([1.0]),
        d=np.array([1.0]),
        A=np.array([[1.0], [0.0]]),
        G=np.array([[0.0], [1.0]]),
        b=np.array([3.0, 1.0]),
        x_upper=np.array([10.0]),
    )
    result = solve_lp_benders(instance)

    assert FEASIBILITY in [row.cut_type for row in result.trace]
    assert result.status == SolveStatus.OPTIMAL
    assert result.value == pytest.approx(4.0)


def test_iteration_limit(instance):
    result = solve_lp_benders(instance, max_iters=1)

    assert result.status in (SolveStatus.ITERATION_LIMIT, SolveStatus.OPTIMAL)
    assert result.iterations == 1


@pytest.mark.parametrize("seed", range(50))
def test_matches_monolithic_lp(seed):
    """
    GIVEN a random feasible LP
    WHEN it is solved by decomposition and in one piece
    THEN the objective values agree
    """
    instance = random_lp_benders(seed)
    result = solve_lp_benders(instance)
    expected = oracle_lp(instance)

    assert result.status == SolveStatus.OPTIMAL
    assert expected.status == SolveStatus.OPTIMAL
    assert result.value == pytest.approx(expected.value, abs=1e-6)
    assert result.lower_bound <= result.upper_bound + 1e-6
