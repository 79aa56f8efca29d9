import math

import numpy as np
import pytest

from src.core.errors import BadRange, DimensionMismatch, EmptyTree
from src.core.piecewise import (
    NEG_INF,
    POS_INF,
    AffineTerm,
    ExtendedReal,
    GlobalDual,
    GlobalPrimal,
    MinAffineDual,
    RestrictedPrimal,
    eval_dual,
    eval_global,
    eval_global_primal,
    eval_primal,
    grid_points,
    parse_sample_value,
    sample_grid,
    samples_frame,
    write_samples,
)


@pytest.fixture
def reaction_dual():
    """min{ 2 beta - phi, 10 - beta } over a scalar beta2."""
    return MinAffineDual.build(
        [
            AffineTerm.build(coeff_beta2=[2.0], coeff_phi=-1.0),
            AffineTerm.build(coeff_beta2=[-1.0], constant=10.0),
        ],
        anchor_beta2=[3.0],
    )


@pytest.fixture
def primal():
    """beta + 1 on beta <= 4."""
    return RestrictedPrimal.build(
        eta=[1.0], kappa=1.0, offset=[0.0], domain_matrix=[[-1.0]], domain_rhs=[-4.0], anchor=[2.0]
    )


def test_extended_real_ordering():
    values = [ExtendedReal.of(3.0), POS_INF, NEG_INF, ExtendedReal.of(-7.5)]

    assert sorted(values) == [NEG_INF, ExtendedReal.of(-7.5), ExtendedReal.of(3.0), POS_INF]
    assert ExtendedReal.of(math.inf) == POS_INF
    assert float(NEG_INF) == -math.inf
    assert ExtendedReal.of(2.0) == 2.0


def test_extended_real_addition():
    assert ExtendedReal.of(1.5) + 2.0 == ExtendedReal.of(3.5)
    assert POS_INF + 5.0 == POS_INF
    with pytest.raises(ValueError):
        POS_INF + NEG_INF
    with pytest.raises(ValueError):
        ExtendedReal.of(float("nan"))


def test_eval_dual_with_finite_phi(reaction_dual):
    assert float(eval_dual(reaction_dual, [], [3.0], 2.0)) == pytest.approx(4.0)
    assert float(eval_dual(reaction_dual, [], [5.0], 2.0)) == pytest.approx(5.0)


def test_eval_dual_with_infinite_phi(reaction_dual):
    """A negative phi coefficient sends the term to -inf when phi is +inf."""
    assert eval_dual(reaction_dual, [], [3.0], POS_INF) == NEG_INF
    assert eval_dual(reaction_dual, [], [3.0], math.inf) == NEG_INF


def test_eval_dual_needs_phi_for_phi_terms(reaction_dual):
    with pytest.raises(DimensionMismatch):
        eval_dual(reaction_dual, [], [3.0])


def test_eval_dual_checks_dimensions(reaction_dual):
    with pytest.raises(DimensionMismatch):
        eval_dual(reaction_dual, [1.0], [3.0], 0.0)


def test_plain_dual_is_callable():
    dual = MinAffineDual.build(
        [AffineTerm.build(coeff_beta2=[1.0]), AffineTerm.build(constant=4.0, coeff_beta2=[0.0])],
        anchor_beta2=[2.0],
    )

    assert float(dual(3.0)) == pytest.approx(3.0)
    assert float(dual(9.0)) == pytest.approx(4.0)
    assert not dual.uses_phi


def test_empty_dual_rejected():
    with pytest.raises(EmptyTree):
        MinAffineDual.build([], anchor_beta2=[0.0])


def test_eval_primal_domain(primal):
    assert float(eval_primal(primal, [2.0])) == pytest.approx(3.0)
    assert float(eval_primal(primal, [4.0])) == pytest.approx(5.0)
    assert eval_primal(primal, [4.5]) == POS_INF


def test_global_dual_takes_max(reaction_dual, primal):
    constant = MinAffineDual.build([AffineTerm.build(coeff_beta2=[0.0], constant=1.0)], anchor_beta2=[0.0])
    collection = GlobalDual().add(constant).add(reaction_dual, primal)

    assert len(collection) == 2
    # beta = 3: phi from the primal is 4, reaction dual gives min{6 - 4, 7} = 2
    assert float(eval_global(collection, [], [3.0])) == pytest.approx(2.0)
    # beta = 6: primal is +inf, reaction dual drops to -inf, the constant wins
    assert float(eval_global(collection, [], [6.0])) == pytest.approx(1.0)
    # an exact phi overrides the primal stand-in
    assert float(eval_global(collection, [], [3.0], 0.0)) == pytest.approx(6.0)


def test_global_dual_grows_monotonically(reaction_dual, primal):
    collection = GlobalDual()
    previous = [NEG_INF] * 5
    for member in (reaction_dual, reaction_dual, reaction_dual):
        collection = collection.add(member, primal)
        current = [eval_global(collection, [], [b]) for b in (0.0, 1.0, 2.0, 3.0, 4.0)]
        assert all(c >= p for c, p in zip(current, previous))
        previous = current


def test_empty_global_dual_is_minus_infinity():
    assert eval_global(GlobalDual(), [], [0.0]) == NEG_INF


def test_global_primal_takes_min(primal):
    wider = RestrictedPrimal.build(
        eta=[2.0], kappa=0.0, offset=[0.0], domain_matrix=np.zeros((0, 1)), domain_rhs=[], anchor=[0.0]
    )
    collection = GlobalPrimal().add(primal).add(wider)

    assert float(eval_global_primal(collection, [0.5])) == pytest.approx(1.0)
    assert float(eval_global_primal(collection, [3.0])) == pytest.approx(4.0)
    assert float(eval_global_primal(collection, [10.0])) == pytest.approx(20.0)
    assert eval_global_primal(GlobalPrimal(), [1.0]) == POS_INF


def test_grid_points_inclusive():
    grid = grid_points(-2.0, 10.0, 0.25)

    assert len(grid) == 49
    assert grid[0] == -2.0
    assert grid[-1] == 10.0
    assert grid_points(1.0, 1.0, 0.5) == [1.0]


@pytest.mark.parametrize(
    "lo,hi,step",
    [(0.0, 1.0, 0.0), (0.0, 1.0, -0.5), (2.0, 1.0, 0.5), (0.0, math.inf, 1.0)],
)
def test_grid_points_bad_range(lo, hi, step):
    with pytest.raises(BadRange):
        grid_points(lo, hi, step)


def test_samples_frame_uses_sentinels(tmp_path):
    samples = sample_grid(lambda b: math.inf if b > 1 else b, 0.0, 2.0, 1.0)
    frame = samples_frame(samples)

    assert frame.columns.tolist() == ["beta", "value"]
    assert frame["value"].tolist() == ["0.0", "1.0", "inf"]

    path = tmp_path / "samples.csv"
    write_samples(samples, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == "beta,value"
    assert lines[-1] == "2.0,inf"


@pytest.mark.parametrize(
    "text,expected", [("inf", POS_INF), ("-inf", NEG_INF), (" 4.0 ", ExtendedReal.of(4.0))]
)
def test_parse_sample_value(text, expected):
    assert parse_sample_value(text) == expected


def test_to_dict_is_json_ready(reaction_dual, primal):
    document = reaction_dual.to_dict()

    assert document["anchor_beta2"] == [3.0]
    assert document["terms"][0] == {"beta1": [], "beta2": [2.0], "phi": -1.0, "constant": 0.0}
    assert primal.to_dict()["domain_rhs"] == [-4.0]
