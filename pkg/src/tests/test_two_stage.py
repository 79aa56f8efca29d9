import math
import os
from dataclasses import replace

import numpy as np
import pytest

from src.core.benders import solve_2ssmilp
from src.core.benders.two_stage import active_scenarios, scenario_problem
from src.core.branch_bound import solve_milp
from src.core.errors import SolveStatus
from src.core.instances import Scenario, load_instance, random_two_stage
from src.core.oracle import oracle_2ssmilp
from src.core.settings import BendersSettings, Settings

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "..", "fixtures")


@pytest.fixture(scope="module")
def instance():
    """Two equally likely scenarios sharing the value function of the small IP."""
    return load_instance(os.path.join(FIXTURES, "two_stage.json"))


def test_fixture_optimum(instance):
    """
    GIVEN the two-scenario fixture
    WHEN the stochastic Benders loop runs
    THEN the optimum is -4 and both scenario solutions are returned
    """
    result = solve_2ssmilp(instance)

    assert result.status == SolveStatus.OPTIMAL
    assert result.value == pytest.approx(-4.0)
    assert result.x.tolist() in ([2.0, 3.0], [3.0, 3.0])
    assert len(result.y) == 2
    assert all(y is not None for y in result.y)
    assert result.upper_bound - result.lower_bound <= 1e-6


def test_extensive_form_agrees(instance):
    expected = oracle_2ssmilp(instance)

    assert expected.status == SolveStatus.OPTIMAL
    assert expected.value == pytest.approx(-4.0)


def test_solution_is_consistent(instance):
    """The returned y solves every scenario at the returned x."""
    result = solve_2ssmilp(instance)

    total = float(instance.c @ result.x)
    for scenario, y in zip(instance.scenarios, result.y):
        sub = solve_milp(scenario_problem(instance, scenario, result.x))
        assert float(instance.d2 @ y) == pytest.approx(sub.value)
        total += scenario.probability * sub.value
    assert total == pytest.approx(result.value)


def test_trace_columns(instance):
    result = solve_2ssmilp(instance)
    frame = result.trace.frame()

    assert frame.columns.tolist()[:5] == ["iter", "LB", "UB", "x", "cut_type"]
    assert {"phi_0", "phi_1"} <= set(frame.columns)
    finite = [lb for lb in result.trace.lower_bounds if math.isfinite(lb)]
    assert finite == sorted(finite)


def test_zero_probability_scenario_is_dropped(instance):
    """
    GIVEN the first scenario alone, and the same with an extra scenario of probability 0
    WHEN both are solved
    THEN they agree and the dropped scenario has no solution
    """
    alone = replace(instance, scenarios=(replace(instance.scenarios[0], probability=1.0),))
    padded = replace(
        instance,
        scenarios=(
            replace(instance.scenarios[0], probability=1.0),
            Scenario(probability=0.0, A2=np.array([[5.0, 5.0]]), b2=np.array([100.0])),
        ),
    )

    assert [index for index, _ in active_scenarios(padded)] == [0]
    first, second = solve_2ssmilp(alone), solve_2ssmilp(padded)
    assert first.value == pytest.approx(second.value)
    assert second.y[1] is None


def test_single_scenario_matches_value_function(instance):
    """With one scenario the objective is -x1 - 2x2 + phi(x1 + x2)."""
    single = replace(instance, scenarios=(replace(instance.scenarios[0], probability=1.0),))
    result = solve_2ssmilp(single)

    # x = (1, 3): -7 + phi(4) = -3, x = (2, 3): -8 + phi(5) = -4, x = (3, 3): -9 + phi(6) = -3
    assert result.value == pytest.approx(-4.0)
    assert result.x.tolist() == [2.0, 3.0]


def test_threads_give_the_same_answer(instance):
    settings = Settings(benders=BendersSettings(workers=2))
    serial, threaded = solve_2ssmilp(instance), solve_2ssmilp(instance, settings=settings)

    assert threaded.value == pytest.approx(serial.value)
    assert threaded.x.tolist() == serial.x.tolist()
    assert threaded.iterations == serial.iterations


def test_unreachable_scenario_is_infeasible(instance):
    bounded = replace(
        instance,
        y_upper=np.ones(4),
        scenarios=(replace(instance.scenarios[0], probability=1.0, b2=np.array([30.0])),),
    )
    result = solve_2ssmilp(bounded)

    assert result.status == SolveStatus.INFEASIBLE
    assert oracle_2ssmilp(bounded).status == SolveStatus.INFEASIBLE


@pytest.mark.parametrize("seed", range(25))
def test_matches_extensive_form_on_random_instances(seed):
    """
    GIVEN a random two-stage instance with one to three scenarios
    WHEN it is solved by decomposition and in extensive form
    THEN both report the same status and optimal value
    """
    instance = random_two_stage(seed, scenarios=1 + seed % 3)
    result = solve_2ssmilp(instance)
    expected = oracle_2ssmilp(instance)

    assert result.status == expected.status
    if expected.status == SolveStatus.OPTIMAL:
        assert result.value == pytest.approx(expected.value, abs=1e-6)
        assert result.upper_bound - result.lower_bound <= 1e-6
