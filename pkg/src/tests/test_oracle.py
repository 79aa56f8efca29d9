import os
from dataclasses import replace

import numpy as np
import pytest

from src.core.benders import evaluate_reaction
from src.core.errors import BoxTooLarge, NotOptimal, SolveStatus
from src.core.instances import load_instance
from src.core.oracle import (
    box_points,
    exact_reaction_dual,
    follower_value,
    oracle_2ssmilp,
    oracle_lp,
    oracle_miblp,
    oracle_reaction_grid,
    oracle_vf_grid,
)
from src.core.piecewise import POS_INF, grid_points
from src.core.settings import BnbSettings, OracleSettings, Settings

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "..", "fixtures")


def fixture(name):
    return load_instance(os.path.join(FIXTURES, name))


def test_value_function_grid():
    """
    GIVEN the small IP
    WHEN its value function is sampled on [-2, 10]
    THEN it is zero for nonpositive rhs, nondecreasing and hits the known anchors
    """
    samples = oracle_vf_grid(fixture("ip.json"), grid_points(-2.0, 10.0, 0.5))
    values = {beta: float(value) for beta, value in samples}

    assert [values[b] for b in (0.0, 2.0, 4.0, 5.0)] == pytest.approx([0.0, 2.0, 4.0, 4.0])
    assert values[-2.0] == pytest.approx(0.0)
    ordered = [float(v) for _, v in samples]
    assert all(b >= a - 1e-9 for a, b in zip(ordered, ordered[1:]))


def test_value_function_infeasible_points():
    ip = fixture("ip.json")
    bounded = replace(ip, upper=np.ones(4))
    samples = oracle_vf_grid(bounded, [10.0, 12.0])

    assert samples[0][1].is_finite
    assert samples[1][1] == POS_INF


def test_value_function_node_limit():
    settings = Settings(bnb=BnbSettings(node_limit=1))

    with pytest.raises(NotOptimal):
        oracle_vf_grid(fixture("ip.json"), [2.0], settings)


def test_threaded_grid_matches_serial():
    ip = fixture("ip.json")
    grid = grid_points(0.0, 8.0, 1.0)
    threaded = Settings(oracle=OracleSettings(workers=3))

    assert oracle_vf_grid(ip, grid, threaded) == oracle_vf_grid(ip, grid)


def test_reaction_grid():
    samples = dict(oracle_reaction_grid(fixture("toy_reaction.json"), [0.0, 2.0, 5.0, 8.0]))

    assert [float(samples[b]) for b in (0.0, 2.0, 5.0, 8.0)] == pytest.approx([0.0, -1.0, 1.0, -4.0])


def test_miblp_enumeration():
    """
    GIVEN the bilevel toy
    WHEN every box point is enumerated
    THEN -3 is optimal and the tie between (1, 1) and (2, 1) goes to (1, 1)
    """
    result = oracle_miblp(fixture("miblp_toy.json"))

    assert result.status == SolveStatus.OPTIMAL
    assert result.value == pytest.approx(-3.0)
    assert result.x.tolist() == [1.0, 1.0]
    assert result.y == pytest.approx([1, 0, 0, 0])


def test_box_points_respect_first_stage_rows():
    points = box_points(fixture("miblp_toy.json"), cap=100)

    assert len(points) == 8
    assert all(x[0] - 2 * x[1] >= -1 for x in points)


def test_box_cap():
    settings = Settings(oracle=OracleSettings(box_cap=5))

    with pytest.raises(BoxTooLarge):
        oracle_miblp(fixture("miblp_toy.json"), settings)


def test_extensive_form_ignores_scenario_order():
    instance = fixture("two_stage.json")
    swapped = replace(instance, scenarios=tuple(reversed(instance.scenarios)))

    first, second = oracle_2ssmilp(instance), oracle_2ssmilp(swapped)
    assert first.value == pytest.approx(-4.0)
    assert second.value == pytest.approx(first.value)


def test_monolithic_lp():
    result = oracle_lp(fixture("lp_benders.json"))

    assert result.status == SolveStatus.OPTIMAL
    assert result.value == pytest.approx(5.0)
    assert result.summary()["x"] == pytest.approx([2.0, 3.0])


def test_summary_uses_sentinels():
    toy = fixture("miblp_toy.json")
    result = oracle_miblp(replace(toy, b1=np.array([10.0])))

    assert result.summary() == {"status": "infeasible", "value": "inf", "x": None, "y": None}


def test_follower_value():
    toy = fixture("toy_reaction.json")

    assert float(follower_value(toy, [5.0])) == pytest.approx(4.0)
    assert follower_value(replace(toy, y_upper=np.ones(4)), [20.0]) == POS_INF


def test_reaction_dual_with_exact_follower_value():
    """
    GIVEN the reaction dual built at rhs 8
    WHEN it is evaluated with the exact follower value
    THEN it matches the reaction at 8 and stays below it elsewhere
    """
    toy = fixture("toy_reaction.json")
    dual = evaluate_reaction(toy, [], [8.0]).dual
    rho = {2.0: -1.0, 5.0: 1.0, 8.0: -4.0}

    assert float(exact_reaction_dual(dual, toy, [], [8.0])) == pytest.approx(-4.0)
    for beta, value in rho.items():
        assert float(exact_reaction_dual(dual, toy, [], [beta])) <= value + 1e-6
