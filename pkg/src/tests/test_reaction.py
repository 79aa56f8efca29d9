import os
from dataclasses import replace

import numpy as np
import pytest

from src.core.benders.reaction import (
    build_primal,
    build_reaction_dual,
    evaluate_reaction,
    follower_problem,
    reaction_problem,
)
from src.core.errors import AssumptionViolated, DimensionMismatch, EmptyTree, ReactionStatus
from src.core.instances import load_instance
from src.core.oracle import exact_reaction_dual, follower_value, oracle_reaction_grid
from src.core.piecewise import GlobalDual, eval_dual, eval_global, eval_primal, grid_points
from src.core.simplex import solve_lp

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "..", "fixtures")
GRID = grid_points(-2.0, 10.0, 0.25)


@pytest.fixture(scope="module")
def toy():
    """Follower min 2y1 + 4y2 + 3y3 + 4y4 s.t. 2y1 + 5y2 + 2y3 + 2y4 >= beta; leader d1 = (-1, 1, -5, 1)."""
    return load_instance(os.path.join(FIXTURES, "toy_reaction.json"))


@pytest.fixture(scope="module")
def rho_on_grid(toy):
    return dict(oracle_reaction_grid(toy, GRID))


@pytest.mark.parametrize(
    "beta,phi,rho,y",
    [
        (5.0, 4.0, 1.0, [0, 1, 0, 0]),
        (2.0, 2.0, -1.0, [1, 0, 0, 0]),
        (0.0, 0.0, 0.0, [0, 0, 0, 0]),
    ],
)
def test_reaction_anchors(toy, beta, phi, rho, y):
    cert = evaluate_reaction(toy, [], [beta])

    assert cert.status == ReactionStatus.OPTIMAL
    assert cert.phi_value == pytest.approx(phi)
    assert cert.rho_value == pytest.approx(rho)
    assert cert.y == pytest.approx(y)


@pytest.mark.parametrize(
    "beta,rho", [(1.0, -1.0), (3.0, -2.0), (4.0, -2.0), (8.0, -4.0)]
)
def test_reaction_values(toy, beta, rho):
    assert evaluate_reaction(toy, [], [beta]).rho_value == pytest.approx(rho)


def test_primal_at_five(toy):
    """
    GIVEN the follower optimum y = (0, 1, 0, 0) at beta = 5
    WHEN the continuous restriction is built around it
    THEN the primal function is 4 for beta <= 5 and +inf beyond
    """
    primal = evaluate_reaction(toy, [], [5.0]).primal

    assert primal.fixed.tolist() == [0.0, 1.0, 0.0]
    for beta in (-2.0, 0.0, 3.0, 5.0):
        assert float(eval_primal(primal, [beta])) == pytest.approx(4.0)
    assert not eval_primal(primal, [5.5]).is_finite


def test_primal_at_zero(toy):
    primal = evaluate_reaction(toy, [], [0.0]).primal

    assert float(eval_primal(primal, [-1.0])) == pytest.approx(0.0)
    assert float(eval_primal(primal, [0.0])) == pytest.approx(0.0)
    assert not eval_primal(primal, [0.5]).is_finite


def test_primal_at_one(toy):
    """
    GIVEN beta = 1, where y1 = 1 and y4 = 0.5 tie at cost 2
    WHEN the tree settles on y1 = 1
    THEN the primal function is 2 up to beta = 2
    """
    cert = evaluate_reaction(toy, [], [1.0])

    assert cert.phi_value == pytest.approx(2.0)
    assert cert.primal.fixed.tolist() == [1.0, 0.0, 0.0]
    assert float(eval_primal(cert.primal, [2.0])) == pytest.approx(2.0)
    assert not eval_primal(cert.primal, [2.5]).is_finite


def test_primal_with_basic_continuous_variable(toy):
    """With y4 = 0.5 basic in the restriction the primal is 2 * beta for beta >= 0."""
    primal = build_primal(toy, [1.0], np.array([0.0, 0.0, 0.0, 0.5]))

    assert primal.eta == pytest.approx([2.0])
    assert float(eval_primal(primal, [1.5])) == pytest.approx(3.0)
    assert float(eval_primal(primal, [0.0])) == pytest.approx(0.0)
    assert not eval_primal(primal, [-0.5]).is_finite


def test_dual_at_five_is_single_leaf(toy):
    """
    GIVEN the step-two problem at beta = 5, whose LP optimum y = (0, 1, 0, 0) is integral
    WHEN its dual function is read off the tree
    THEN it is the single term 23/7 beta - 27/7 phi
    """
    dual = evaluate_reaction(toy, [], [5.0]).dual

    assert len(dual.terms) == 1
    term = dual.terms[0]
    assert term.coeff_beta2 == pytest.approx([23 / 7])
    assert term.coeff_phi == pytest.approx(-27 / 7)
    assert term.constant == pytest.approx(0.0, abs=1e-9)
    assert float(eval_dual(dual, [], [5.0], 4.0)) == pytest.approx(1.0)


def test_dual_at_eight_has_branch_leaf(toy):
    """
    GIVEN the step-two problem at beta = 8
    WHEN the tree is branched
    THEN the y2 >= 2 leaf contributes -5/3 phi + 46/3 and the dual is strong
    """
    cert = evaluate_reaction(toy, [], [8.0])
    dual = cert.dual

    assert cert.rho_value == pytest.approx(-4.0)
    assert any(
        t.coeff_beta2[0] == pytest.approx(0.0, abs=1e-9)
        and t.coeff_phi == pytest.approx(-5 / 3)
        and t.constant == pytest.approx(46 / 3)
        for t in dual.terms
    )
    assert float(eval_dual(dual, [], [8.0], cert.phi_value)) == pytest.approx(-4.0, abs=1e-6)


def test_lowest_index_branching_at_eight_splits_y2_again(toy):
    """
    GIVEN the step-two LP at beta = 8 restricted to y2 <= 1 and y1 >= 1
    WHEN it is solved
    THEN its unique optimum is y = (1, 6/7, 6/7, 0), so y2 is the first fractional column
    """
    problem = reaction_problem(toy, [], [8.0], 8.0).lp
    lower = np.array([1.0, 0.0, 0.0, 0.0])
    upper = np.array([np.inf, 1.0, np.inf, np.inf])

    cert = solve_lp(problem.with_bounds(lower, upper))

    assert cert.x == pytest.approx([1.0, 6 / 7, 6 / 7, 0.0])
    assert cert.objective == pytest.approx(-31 / 7)
    assert cert.eta == pytest.approx([23 / 7, 27 / 7])


def test_tabulated_leaf_terms_form_a_valid_dual(toy, rho_on_grid):
    """
    GIVEN the four leaf terms 46/3 - 5/3 phi, 11 beta - 9 phi - 18, 3 beta - 3.5 phi
    and 13 beta - 16 phi + 22 from a tree that branches on y3 at depth three
    WHEN their minimum is evaluated with the follower value for phi
    THEN it stays below the reaction value and meets it at beta = 8
    """
    terms = [(0.0, -5 / 3, 46 / 3), (11.0, -9.0, -18.0), (3.0, -3.5, 0.0), (13.0, -16.0, 22.0)]

    def bound(beta):
        phi = float(follower_value(toy, [beta]))
        return min(a * beta + b * phi + c for a, b, c in terms)

    for beta in GRID:
        assert bound(beta) <= float(rho_on_grid[beta]) + 1e-6
    assert bound(8.0) == pytest.approx(-4.0)
    assert [a * 8 + b * 8 + c for a, b, c in terms] == pytest.approx([2.0, -2.0, -4.0, -2.0])


def test_phi_coefficients_are_nonpositive(toy):
    for beta in (0.0, 2.0, 5.0, 8.0):
        dual = evaluate_reaction(toy, [], [beta]).dual
        assert all(t.coeff_phi <= 0.0 for t in dual.terms)


@pytest.mark.parametrize("anchor", [0.0, 2.0, 3.0, 5.0, 8.0])
def test_dual_and_primal_bracket_the_reaction(toy, rho_on_grid, anchor):
    """
    GIVEN the functions produced by one reaction evaluation
    WHEN they are evaluated along the grid
    THEN the dual (with phi from the primal) stays below rho, the primal
    stays above phi where defined, and both are exact at the anchor
    """
    cert = evaluate_reaction(toy, [], [anchor])
    members = GlobalDual().add(cert.dual, cert.primal)

    for beta in GRID:
        rho = rho_on_grid[beta]
        lower = eval_global(members, [], [beta])
        assert float(lower) <= float(rho) + 1e-6
        assert float(exact_reaction_dual(cert.dual, toy, [], [beta])) <= float(rho) + 1e-6
        upper = eval_primal(cert.primal, [beta])
        if upper.is_finite:
            assert float(upper) >= float(follower_value(toy, [beta])) - 1e-6

    assert float(eval_global(members, [], [anchor])) == pytest.approx(cert.rho_value, abs=1e-6)
    assert float(eval_primal(cert.primal, [anchor])) == pytest.approx(cert.phi_value, abs=1e-6)


def test_follower_infeasible(toy):
    """With y bounded above the follower cannot reach a large rhs."""
    bounded = replace(toy, y_upper=np.ones(4))
    cert = evaluate_reaction(bounded, [], [20.0])

    assert cert.status == ReactionStatus.SECOND_STAGE_INFEASIBLE
    assert cert.rho_value == float("inf")
    assert cert.dual is None and cert.primal is None


def test_leader_rows_can_be_infeasible(toy):
    """
    GIVEN a leader row y3 >= 1 the follower never picks at beta = 5
    WHEN the reaction is evaluated
    THEN the step-two problem is infeasible
    """
    linked = replace(
        toy, A1=np.zeros((1, 1)), G1=np.array([[0.0, 0.0, 1.0, 0.0]]), b1=np.array([1.0])
    )
    cert = evaluate_reaction(linked, [1.0], [5.0])

    assert cert.status == ReactionStatus.LINK_INFEASIBLE
    assert cert.phi_value == pytest.approx(4.0)
    assert cert.primal is not None


def test_unbounded_follower_violates_assumption(toy):
    negative = replace(toy, d2=np.array([2.0, 4.0, 3.0, -1.0]))

    with pytest.raises(AssumptionViolated):
        evaluate_reaction(negative, [], [1.0])


def test_rhs_size_checked(toy):
    with pytest.raises(DimensionMismatch):
        evaluate_reaction(toy, [], [1.0, 2.0])


def test_step_two_rows(toy):
    problem = reaction_problem(toy, [], [5.0], 4.0)

    assert problem.lp.A.tolist() == [[2.0, 5.0, 2.0, 2.0], [-2.0, -4.0, -3.0, -4.0]]
    assert problem.lp.b.tolist() == [5.0, -4.0]
    assert follower_problem(toy, [5.0]).lp.c.tolist() == [2.0, 4.0, 3.0, 4.0]


def test_reaction_dual_rebuilt_from_tree(toy):
    cert = evaluate_reaction(toy, [], [8.0])
    rebuilt = build_reaction_dual(cert.reaction.tree, 0)

    assert rebuilt.to_dict() == cert.dual.to_dict()
    assert rebuilt.anchor_beta2.tolist() == [8.0]


def test_reaction_dual_needs_a_solved_tree(toy):
    cert = evaluate_reaction(replace(toy, y_upper=np.ones(4)), [], [20.0])

    with pytest.raises(EmptyTree):
        build_reaction_dual(cert.follower.tree, 0)
