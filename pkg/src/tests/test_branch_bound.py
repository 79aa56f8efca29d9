import os

import numpy as np
import pytest

from src.core.branch_bound import (
    MilpProblem,
    branch_boxes,
    extract_dual_function,
    row_violation,
    solve_milp,
)
from src.core.errors import DimensionMismatch, EmptyTree, LpStatus, MilpStatus
from src.core.instances import load_instance
from src.core.settings import BnbSettings
from src.core.simplex import EQ, GE, LE

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "..", "fixtures")


@pytest.fixture
def ip():
    """min 2y1 + 4y2 + 3y3 + 4y4 s.t. 2y1 + 5y2 + 2y3 + 2y4 >= beta, y4 continuous."""
    return load_instance(os.path.join(FIXTURES, "ip.json"))


def value_at(instance, beta):
    result = solve_milp(instance.problem_at(beta))
    assert result.status == MilpStatus.OPTIMAL
    return result.value


@pytest.mark.parametrize("beta,expected", [(0, 0.0), (2, 2.0), (4, 4.0), (5, 4.0)])
def test_value_function_anchors(ip, beta, expected):
    assert value_at(ip, beta) == pytest.approx(expected)


def test_dual_at_five_is_single_term(ip):
    """
    GIVEN the IP at beta = 5
    WHEN its tree is turned into a dual function
    THEN the root LP is integral and the dual is 0.8 * beta
    """
    result = solve_milp(ip.problem_at(5))
    dual = extract_dual_function(result.tree)

    assert result.y == pytest.approx([0, 1, 0, 0])
    assert len(dual.terms) == 1
    assert dual.terms[0].coeff_beta2 == pytest.approx([0.8])
    assert dual.terms[0].constant == pytest.approx(0.0)
    assert float(dual(10.0)) == pytest.approx(8.0)


def test_dual_at_two_is_min_of_beta_and_four(ip):
    """
    GIVEN the IP at beta = 2, whose root LP sets y2 = 0.4
    WHEN the tree is branched on y2
    THEN the two leaves give min{beta, 4}
    """
    result = solve_milp(ip.problem_at(2))
    dual = extract_dual_function(result.tree)

    pairs = sorted(
        (round(float(t.coeff_beta2[0]), 9), round(t.constant, 9)) for t in dual.terms
    )
    assert pairs == [(0.0, 4.0), (1.0, 0.0)]
    for beta in (-1.0, 0.0, 2.0, 3.5, 4.0, 7.0):
        assert float(dual(beta)) == pytest.approx(min(beta, 4.0))


def test_dual_at_zero_is_zero(ip):
    result = solve_milp(ip.problem_at(0))
    dual = extract_dual_function(result.tree)

    for beta in (-3.0, 0.0, 6.0):
        assert float(dual(beta)) == pytest.approx(0.0)


@pytest.mark.parametrize("anchor", [1.0, 2.0, 3.0, 5.0, 8.0])
def test_dual_is_valid_and_strong(ip, anchor):
    """
    GIVEN the dual function extracted at an anchor rhs
    WHEN it is evaluated along a grid
    THEN it never exceeds the value function and meets it at the anchor
    """
    dual = extract_dual_function(solve_milp(ip.problem_at(anchor)).tree)

    assert float(dual(anchor)) == pytest.approx(value_at(ip, anchor), abs=1e-6)
    for beta in np.arange(-2.0, 10.25, 0.5):
        assert float(dual(beta)) <= value_at(ip, beta) + 1e-6


def test_infeasible_leaves_step_along_farkas_ray():
    """
    GIVEN 2 y1 + 2 y2 = 3 with y integer, which has no integer point
    WHEN it is solved
    THEN every leaf is infeasible and no dual can be extracted
    """
    problem = MilpProblem.build([1, 1], [[2, 2]], [3], (EQ,), integer=[True, True])
    result = solve_milp(problem)

    assert result.status == MilpStatus.INFEASIBLE
    assert result.y is None
    assert result.tree.leaves
    assert all(leaf.status == LpStatus.INFEASIBLE for leaf in result.tree.leaves)
    assert all(leaf.ray_weight is not None for leaf in result.tree.leaves)
    with pytest.raises(EmptyTree):
        extract_dual_function(result.tree)


def test_infeasible_leaf_keeps_dual_valid(ip):
    """
    GIVEN an upper bound that makes one branch infeasible at beta = 8
    WHEN the dual is evaluated
    THEN it is still below the value function everywhere on the grid
    """
    base = ip.problem_at(8)
    bounded = MilpProblem.build(
        base.lp.c, base.lp.A, base.lp.b, base.lp.senses, base.lp.lower, [1, 1, 1, 1], base.integer
    )
    result = solve_milp(bounded)
    dual = extract_dual_function(result.tree)

    assert result.status == MilpStatus.OPTIMAL
    for beta in np.arange(-2.0, 11.0, 0.5):
        exact = solve_milp(bounded.with_rhs([beta]))
        if exact.status == MilpStatus.OPTIMAL:
            assert float(dual(beta)) <= exact.value + 1e-6


def test_node_limit_aborts(ip):
    result = solve_milp(ip.problem_at(2), BnbSettings(node_limit=1))

    assert result.status == MilpStatus.ABORTED
    assert result.y is None
    assert len(result.tree.leaves) == 1


def test_unbounded_root():
    problem = MilpProblem.build([-1, 0], [[1, -1]], [0], (GE,), integer=[True, False])

    assert solve_milp(problem).status == MilpStatus.UNBOUNDED


def test_empty_integer_box():
    problem = MilpProblem.build([1], [[1]], [0], (GE,), [0.2], [0.8], [True])
    result = solve_milp(problem)

    assert result.status == MilpStatus.INFEASIBLE
    assert result.tree.node_count == 0


def test_integrality_mask_size_checked():
    with pytest.raises(DimensionMismatch):
        MilpProblem.build([1, 1], [[1, 1]], [1], integer=[True])


def test_result_unpacks(ip):
    status, y, value, tree = solve_milp(ip.problem_at(4))

    assert status == MilpStatus.OPTIMAL
    assert value == pytest.approx(4.0)
    assert tree.incumbent_value == pytest.approx(value)


def test_rounded_incumbent_is_resolved_against_big_m_row():
    """
    GIVEN y <= 1000 z with 1e4 z <= 1, so the LP sets z = 1e-4 and y = 0.1
    WHEN z counts as integral under a loose integrality tolerance
    THEN the incumbent is re-solved with z = 0 and satisfies every row
    """
    problem = MilpProblem.build(
        [-1, 0],
        [[1, -1000], [0, 1e4]],
        [0, 1],
        (LE, LE),
        [0, 0],
        [np.inf, 1],
        [False, True],
    )
    result = solve_milp(problem, BnbSettings(integrality=1e-3))

    assert result.status == MilpStatus.OPTIMAL
    assert result.y == pytest.approx([0.0, 0.0])
    assert result.value == pytest.approx(0.0)
    assert row_violation(problem.lp, result.y) <= 1e-7


def test_row_violation():
    lp = MilpProblem.build([0, 0], [[1, 1], [1, -1], [1, 0]], [2, 0, 1], (GE, LE, EQ)).lp

    assert row_violation(lp, np.array([1.0, 1.0])) == pytest.approx(0.0)
    assert row_violation(lp, np.array([0.5, 0.5])) == pytest.approx(1.0)
    assert row_violation(lp, np.array([3.0, 0.0])) == pytest.approx(3.0)


def test_branch_value_beyond_upper_bound_gives_one_child():
    """
    GIVEN a node box with upper bound 3 and a value a hair above it
    WHEN the node is split on that column
    THEN only the down box is produced and it keeps the bound at 3
    """
    lower, upper = np.array([0.0, 0.0]), np.array([3.0, 5.0])

    boxes = branch_boxes(lower, upper, 0, 3.0 + 1e-10)

    assert len(boxes) == 1
    assert boxes[0][1].tolist() == [3.0, 5.0]
    assert boxes[0][0].tolist() == [0.0, 0.0]


def test_branch_splits_fractional_value():
    lower, upper = np.array([0.0]), np.array([4.0])

    boxes = branch_boxes(lower, upper, 0, 2.5)

    assert [(lo.tolist(), hi.tolist()) for lo, hi in boxes] == [([0.0], [2.0]), ([3.0], [4.0])]


def test_infeasible_leaf_reaches_incumbent_at_anchor():
    """
    GIVEN min y1 + y2 s.t. 2 y1 + 2 y2 >= 3 over binaries, where two nodes are infeasible
    WHEN the infeasible leaves are built from the parent duals and the Farkas ray
    THEN each leaf term is at least the optimal value at the anchor
    AND the dual stays below the value function on a grid
    """
    problem = MilpProblem.build([1, 1], [[2, 2]], [3], (GE,), [0, 0], [1, 1], [True, True])
    result = solve_milp(problem)
    dual = extract_dual_function(result.tree)
    infeasible = [leaf for leaf in result.tree.leaves if leaf.status == LpStatus.INFEASIBLE]

    assert result.value == pytest.approx(2.0)
    assert len(infeasible) == 2
    for leaf in infeasible:
        assert leaf.value(np.array([3.0])) >= 2.0 - 1e-6
        assert np.abs(leaf.eta).max() < 100.0
        assert leaf.ray_weight > 0.0
    assert float(dual(3.0)) == pytest.approx(2.0)
    for beta in np.arange(-1.0, 4.25, 0.25):
        exact = solve_milp(problem.with_rhs([beta]))
        assert float(dual(beta)) <= exact.value + 1e-6
