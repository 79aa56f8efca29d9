"""
Instance files: dataclasses, JSON parsing and serialisation, random
instance generators for the oracle comparisons.

Every file is a JSON object with a ``kind`` tag (lp-benders, 2ssmilp,
miblp, milp), dense row-major matrices and optional bounds. Infinite
bounds are written as the strings "inf" / "-inf" (null means the default).
"""
import json
import logging
import math
from dataclasses import dataclass, fields
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .branch_bound import MilpProblem
from .errors import InstanceError
from .simplex import GE, SENSES

logger = logging.getLogger(__name__)

LP_BENDERS = "lp-benders"
TWO_STAGE = "2ssmilp"
MIBLP = "miblp"
MILP = "milp"
KINDS = (LP_BENDERS, TWO_STAGE, MIBLP, MILP)

DEFAULT_X_UPPER = 1e6
BIG_M_KEYS = ("M_D", "M_P", "M_lower", "M_upper")


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class BigMOverrides:
    """Per-instance replacements for the computed big-M constants."""

    M_D: Optional[float] = None
    M_P: Optional[float] = None
    M_lower: Optional[float] = None
    M_upper: Optional[float] = None

    def to_dict(self) -> Dict[str, float]:
        return {key: getattr(self, key) for key in BIG_M_KEYS if getattr(self, key) is not None}


@dataclass(frozen=True)
class LpBendersInstance:
    """min c^T x + d^T y  s.t.  A x + G y >= b,  0 <= x <= x_upper,  y >= 0."""

    c: np.ndarray
    d: np.ndarray
    A: np.ndarray
    G: np.ndarray
    b: np.ndarray
    x_upper: np.ndarray


@dataclass(frozen=True)
class Scenario:
    probability: float
    A2: np.ndarray
    b2: np.ndarray


@dataclass(frozen=True)
class TwoStageInstance:
    """
    min c^T x + sum_w p_w d2^T y_w
    s.t. A1 x >= b1, G2 y_w >= b2_w - A2_w x for every scenario w.
    """

    c: np.ndarray
    A1: np.ndarray
    b1: np.ndarray
    d2: np.ndarray
    G2: np.ndarray
    scenarios: Tuple[Scenario, ...]
    x_integer: np.ndarray
    y_integer: np.ndarray
    x_lower: np.ndarray
    x_upper: np.ndarray
    y_lower: np.ndarray
    y_upper: np.ndarray
    big_m: BigMOverrides = BigMOverrides()

    @property
    def n1(self) -> int:
        return self.c.size

    @property
    def n2(self) -> int:
        return self.d2.size


@dataclass(frozen=True)
class MiblpInstance:
    """
    Optimistic bilevel program

        min c^T x + d1^T y
        s.t. A1 x + G1 y >= b1, x integer in [x_lower, x_upper]
             y in argmin { d2^T y : G2 y >= b2 - A2 x, y in Y }
    """

    c: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    A1: np.ndarray
    G1: np.ndarray
    b1: np.ndarray
    A2: np.ndarray
    G2: np.ndarray
    b2: np.ndarray
    y_integer: np.ndarray
    x_lower: np.ndarray
    x_upper: np.ndarray
    y_lower: np.ndarray
    y_upper: np.ndarray
    big_m: BigMOverrides = BigMOverrides()
    epsilon: Optional[float] = None

    @property
    def n1(self) -> int:
        return self.c.size

    @property
    def n2(self) -> int:
        return self.d1.size

    def leader_rows(self) -> np.ndarray:
        """Indices of rows of (A1, G1) that involve y."""
        return np.flatnonzero(np.any(self.G1 != 0.0, axis=1))

    def first_stage_rows(self) -> np.ndarray:
        """Rows of (A1, G1) with an all-zero G1 row; they constrain x alone."""
        return np.flatnonzero(~np.any(self.G1 != 0.0, axis=1))


@dataclass(frozen=True)
class MilpInstance:
    """A single MILP; parametric_row selects the rhs entry varied by sampling."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: Tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    integer: np.ndarray
    parametric_row: int = 0

    def to_problem(self, rhs: Optional[Sequence[float]] = None) -> MilpProblem:
        b = self.b if rhs is None else rhs
        return MilpProblem.build(
            self.c, self.A, b, self.senses, self.lower, self.upper, self.integer
        )

    def problem_at(self, beta: float) -> MilpProblem:
        """The MILP with the parametric row's rhs replaced by beta."""
        rhs = self.b.copy()
        rhs[self.parametric_row] = beta
        return self.to_problem(rhs)


Instance = Union[LpBendersInstance, TwoStageInstance, MiblpInstance, MilpInstance]


def instance_kind(instance: Instance) -> str:
    if isinstance(instance, LpBendersInstance):
        return LP_BENDERS
    if isinstance(instance, TwoStageInstance):
        return TWO_STAGE
    if isinstance(instance, MiblpInstance):
        return MIBLP
    if isinstance(instance, MilpInstance):
        return MILP
    raise TypeError(f"Not an instance: {type(instance).__name__}")


def linking_variables(instance: Union[MiblpInstance, TwoStageInstance]) -> List[int]:
    """First-stage variables with a nonzero column in a second-stage matrix."""
    if isinstance(instance, MiblpInstance):
        matrices = [instance.A2]
    else:
        matrices = [s.A2 for s in instance.scenarios]
    used = np.zeros(instance.n1, dtype=bool)
    for matrix in matrices:
        used |= np.any(matrix != 0.0, axis=0)
    return [int(i) for i in np.flatnonzero(used)]


# --- parsing helpers -----------------------------------------------------


def _number(raw: Any, field: str) -> float:
    if isinstance(raw, str):
        text = raw.strip().lower()
        if text in ("inf", "+inf", "infinity"):
            return math.inf
        if text in ("-inf", "-infinity"):
            return -math.inf
        raise InstanceError(f"Expected a number, got {raw!r}", field=field)
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise InstanceError(f"Expected a number, got {raw!r}", field=field)
    return float(raw)


def _vector(
    doc: dict,
    key: str,
    size: Optional[int] = None,
    default: Optional[float] = None,
    finite: bool = True,
) -> np.ndarray:
    raw = doc.get(key)
    if raw is None:
        if default is None or size is None:
            raise InstanceError("Missing required field", field=key)
        return _freeze(np.full(size, default, dtype=float))
    if not isinstance(raw, list):
        raise InstanceError("Expected a list of numbers", field=key)
    values = [
        default if (item is None and default is not None) else _number(item, f"{key}[{i}]")
        for i, item in enumerate(raw)
    ]
    array = np.array(values, dtype=float)
    if size is not None and array.size != size:
        raise InstanceError(f"Expected {size} entries, got {array.size}", field=key)
    if finite and not np.isfinite(array).all():
        raise InstanceError("Entries must be finite", field=key)
    return _freeze(array)


def _matrix(doc: dict, key: str, rows: Optional[int], cols: int, optional: bool = False) -> np.ndarray:
    raw = doc.get(key)
    if raw is None:
        if optional:
            return _freeze(np.zeros((rows or 0, cols)))
        raise InstanceError("Missing required field", field=key)
    if not isinstance(raw, list) or any(not isinstance(row, list) for row in raw):
        raise InstanceError("Expected a list of rows", field=key)
    if rows is not None and len(raw) != rows:
        raise InstanceError(f"Expected {rows} rows, got {len(raw)}", field=key)
    data = np.zeros((len(raw), cols))
    for i, row in enumerate(raw):
        if len(row) != cols:
            raise InstanceError(f"Row {i} has {len(row)} entries, expected {cols}", field=key)
        for j, item in enumerate(row):
            value = _number(item, f"{key}[{i}][{j}]")
            if not math.isfinite(value):
                raise InstanceError("Matrix entries must be finite", field=f"{key}[{i}][{j}]")
            data[i, j] = value
    return _freeze(data)


def _mask(doc: dict, key: str, size: int) -> np.ndarray:
    raw = doc.get(key)
    if raw is None:
        return _freeze(np.zeros(size, dtype=bool))
    if not isinstance(raw, list) or any(not isinstance(v, bool) for v in raw):
        raise InstanceError("Expected a list of booleans", field=key)
    if len(raw) != size:
        raise InstanceError(f"Expected {size} entries, got {len(raw)}", field=key)
    return _freeze(np.array(raw, dtype=bool))


def _bounds(doc: dict, prefix: str, size: int, lower_default=0.0, upper_default=math.inf):
    lower = _vector(doc, f"{prefix}_lower", size, lower_default, finite=False)
    upper = _vector(doc, f"{prefix}_upper", size, upper_default, finite=False)
    if np.any(lower > upper):
        raise InstanceError("Lower bound exceeds upper bound", field=f"{prefix}_lower")
    return lower, upper


def _big_m(doc: dict) -> BigMOverrides:
    raw = doc.get("big_m")
    if raw is None:
        return BigMOverrides()
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        value = float(raw)
        if value <= 0:
            raise InstanceError("big_m must be positive", field="big_m")
        return BigMOverrides(value, value, value, value)
    if not isinstance(raw, dict):
        raise InstanceError("Expected a number or a mapping", field="big_m")
    values = {}
    for key, item in raw.items():
        if key not in BIG_M_KEYS:
            raise InstanceError(f"Unknown big-M family {key!r}", field="big_m")
        value = _number(item, f"big_m.{key}")
        if not (math.isfinite(value) and value > 0):
            raise InstanceError("big-M values must be positive and finite", field=f"big_m.{key}")
        values[key] = value
    return BigMOverrides(**values)


def _probability(raw: Any, field: str) -> float:
    value = _number(raw, field)
    if not 0.0 <= value <= 1.0:
        raise InstanceError("Probability must lie in [0, 1]", field=field)
    return value


# --- per-kind builders ---------------------------------------------------


def _lp_benders(doc: dict) -> LpBendersInstance:
    c = _vector(doc, "c")
    d = _vector(doc, "d")
    b = _vector(doc, "b")
    A = _matrix(doc, "A", b.size, c.size)
    G = _matrix(doc, "G", b.size, d.size)
    if doc.get("x_upper") is None:
        logger.warning("No x_upper given; bounding x by %g", DEFAULT_X_UPPER)
    x_upper = _vector(doc, "x_upper", c.size, DEFAULT_X_UPPER, finite=True)
    if np.any(x_upper < 0):
        raise InstanceError("x_upper must be nonnegative", field="x_upper")
    return LpBendersInstance(c=c, d=d, A=A, G=G, b=b, x_upper=x_upper)


def _two_stage(doc: dict) -> TwoStageInstance:
    c = _vector(doc, "c")
    d2 = _vector(doc, "d2")
    b1 = _vector(doc, "b1") if doc.get("b1") is not None else _freeze(np.zeros(0))
    A1 = _matrix(doc, "A1", b1.size, c.size, optional=True)
    raw_scenarios = doc.get("scenarios")
    if not isinstance(raw_scenarios, list) or not raw_scenarios:
        raise InstanceError("Expected a nonempty list of scenarios", field="scenarios")
    first = raw_scenarios[0]
    if not isinstance(first, dict):
        raise InstanceError("Scenario must be an object", field="scenarios[0]")
    m2 = len(first.get("b2") or [])
    G2 = _matrix(doc, "G2", m2, d2.size)
    scenarios = []
    for k, item in enumerate(raw_scenarios):
        if not isinstance(item, dict):
            raise InstanceError("Scenario must be an object", field=f"scenarios[{k}]")
        try:
            scenarios.append(
                Scenario(
                    probability=_probability(item.get("probability"), "probability"),
                    A2=_matrix(item, "A2", m2, c.size),
                    b2=_vector(item, "b2", m2),
                )
            )
        except InstanceError as exc:
            raise InstanceError(exc.message, field=f"scenarios[{k}].{exc.field}") from exc
    total = sum(s.probability for s in scenarios)
    if abs(total - 1.0) > 1e-9:
        raise InstanceError(f"Probabilities sum to {total}, expected 1", field="scenarios")
    x_lower, x_upper = _bounds(doc, "x", c.size)
    if not (np.isfinite(x_lower).all() and np.isfinite(x_upper).all()):
        raise InstanceError("First-stage bounds must be finite", field="x_upper")
    y_lower, y_upper = _bounds(doc, "y", d2.size)
    return TwoStageInstance(
        c=c,
        A1=A1,
        b1=b1,
        d2=d2,
        G2=G2,
        scenarios=tuple(scenarios),
        x_integer=_mask(doc, "x_integer", c.size),
        y_integer=_mask(doc, "y_integer", d2.size),
        x_lower=x_lower,
        x_upper=x_upper,
        y_lower=y_lower,
        y_upper=y_upper,
        big_m=_big_m(doc),
    )


def _miblp(doc: dict) -> MiblpInstance:
    c = _vector(doc, "c")
    d1 = _vector(doc, "d1")
    d2 = _vector(doc, "d2", d1.size)
    b1 = _vector(doc, "b1") if doc.get("b1") is not None else _freeze(np.zeros(0))
    A1 = _matrix(doc, "A1", b1.size, c.size, optional=True)
    G1 = _matrix(doc, "G1", b1.size, d1.size, optional=True)
    b2 = _vector(doc, "b2")
    A2 = _matrix(doc, "A2", b2.size, c.size)
    G2 = _matrix(doc, "G2", b2.size, d1.size)
    if doc.get("x_integer") is not None:
        x_integer = _mask(doc, "x_integer", c.size)
        if not x_integer.all():
            raise InstanceError(
                "All first-stage (linking) variables must be integer", field="x_integer"
            )
    x_lower, x_upper = _bounds(doc, "x", c.size)
    if not (np.isfinite(x_lower).all() and np.isfinite(x_upper).all()):
        raise InstanceError("First-stage bounds must be finite", field="x_upper")
    y_lower, y_upper = _bounds(doc, "y", d1.size)
    epsilon = doc.get("epsilon")
    if epsilon is not None:
        epsilon = _number(epsilon, "epsilon")
        if not (math.isfinite(epsilon) and epsilon > 0):
            raise InstanceError("epsilon must be positive", field="epsilon")
    instance = MiblpInstance(
        c=c,
        d1=d1,
        d2=d2,
        A1=A1,
        G1=G1,
        b1=b1,
        A2=A2,
        G2=G2,
        b2=b2,
        y_integer=_mask(doc, "y_integer", d1.size),
        x_lower=x_lower,
        x_upper=x_upper,
        y_lower=y_lower,
        y_upper=y_upper,
        big_m=_big_m(doc),
        epsilon=epsilon,
    )
    unused = sorted(set(range(instance.n1)) - set(linking_variables(instance)))
    if unused:
        logger.debug("First-stage variables %s do not link to the second stage", unused)
    return instance


def _milp(doc: dict) -> MilpInstance:
    c = _vector(doc, "c")
    b = _vector(doc, "b")
    A = _matrix(doc, "A", b.size, c.size)
    senses = doc.get("senses")
    if senses is None:
        senses = (GE,) * b.size
    else:
        if not isinstance(senses, list) or len(senses) != b.size:
            raise InstanceError(f"Expected {b.size} row senses", field="senses")
        for i, sense in enumerate(senses):
            if sense not in SENSES:
                raise InstanceError(f"Unknown sense {sense!r}", field=f"senses[{i}]")
        senses = tuple(senses)
    lower, upper = _bounds(doc, "y", c.size)
    row = doc.get("parametric_row", 0)
    if isinstance(row, bool) or not isinstance(row, int) or not (0 <= row < max(b.size, 1)):
        raise InstanceError("parametric_row must index a row", field="parametric_row")
    return MilpInstance(
        c=c,
        A=A,
        b=b,
        senses=senses,
        lower=lower,
        upper=upper,
        integer=_mask(doc, "integer", c.size),
        parametric_row=row,
    )


_BUILDERS = {LP_BENDERS: _lp_benders, TWO_STAGE: _two_stage, MIBLP: _miblp, MILP: _milp}


def parse_instance(text: str, expected_kind: Optional[str] = None) -> Instance:
    """
    Parses and validates an instance document.

    Raises:
        InstanceError: With the line of a syntax error or the offending field.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(exc.msg, line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise InstanceError("Instance must be a JSON object")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise InstanceError(f"kind must be one of {', '.join(KINDS)}", field="kind")
    if expected_kind is not None and kind != expected_kind:
        raise InstanceError(f"Expected a {expected_kind} instance, got {kind}", field="kind")
    return _BUILDERS[kind](doc)


def load_instance(path: str, expected_kind: Optional[str] = None) -> Instance:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise InstanceError(f"Cannot read instance file {path}: {exc.strerror}") from exc
    return parse_instance(text, expected_kind)


# --- serialisation -------------------------------------------------------


def _plain(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, list):
        return [_plain(v) for v in value]
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def serialize_instance(instance: Instance) -> Dict[str, Any]:
    """The instance as a JSON-ready mapping; parse_instance inverts it."""
    kind = instance_kind(instance)
    doc: Dict[str, Any] = {"kind": kind}
    for item in fields(instance):
        value = getattr(instance, item.name)
        if item.name == "scenarios":
            doc["scenarios"] = [
                {"probability": s.probability, "A2": _plain(s.A2), "b2": _plain(s.b2)}
                for s in value
            ]
        elif item.name == "big_m":
            if value.to_dict():
                doc["big_m"] = value.to_dict()
        elif item.name == "epsilon":
            if value is not None:
                doc["epsilon"] = value
        elif item.name in ("lower", "upper"):
            doc[f"y_{item.name}"] = _plain(value)
        elif item.name == "senses":
            doc["senses"] = list(value)
        else:
            doc[item.name] = _plain(value)
    return doc


def dump_instance(instance: Instance) -> str:
    return json.dumps(serialize_instance(instance), indent=2)


def same_instance(left: Instance, right: Instance) -> bool:
    """Field-wise equality (numpy arrays compared exactly)."""
    if type(left) is not type(right):
        return False
    return serialize_instance(left) == serialize_instance(right)


# --- random instances ----------------------------------------------------


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_lp_benders(seed=None, m: int = 5, n1: int = 3, n2: int = 3) -> LpBendersInstance:
    """Feasible, bounded LP: every row has a positive y coefficient and d > 0."""
    rng = _rng(seed)
    G = rng.integers(0, 4, size=(m, n2)).astype(float)
    for i in range(m):
        if not G[i].any():
            G[i, rng.integers(n2)] = 1.0
    return LpBendersInstance(
        c=_freeze(rng.integers(-2, 5, size=n1).astype(float)),
        d=_freeze(rng.integers(1, 6, size=n2).astype(float)),
        A=_freeze(rng.integers(-2, 4, size=(m, n1)).astype(float)),
        G=_freeze(G),
        b=_freeze(rng.integers(0, 11, size=m).astype(float)),
        x_upper=_freeze(np.full(n1, 10.0)),
    )


def random_two_stage(seed=None, scenarios: int = 2, box: int = 4) -> TwoStageInstance:
    """
    Two integer first-stage variables in [0, box]^2, three second-stage
    variables (two integer, one continuous with complete recourse).
    """
    rng = _rng(seed)
    m2 = 2
    G2 = rng.integers(0, 4, size=(m2, 3)).astype(float)
    G2[:, 2] = rng.integers(1, 3, size=m2)
    items = tuple(
        Scenario(
            probability=1.0 / scenarios,
            A2=_freeze(rng.integers(-2, 3, size=(m2, 2)).astype(float)),
            b2=_freeze(rng.integers(0, 8, size=m2).astype(float)),
        )
        for _ in range(scenarios)
    )
    return TwoStageInstance(
        c=_freeze(rng.integers(-3, 4, size=2).astype(float)),
        A1=_freeze(np.ones((1, 2))),
        b1=_freeze(np.array([1.0])),
        d2=_freeze(np.concatenate([rng.integers(1, 5, size=2), [rng.integers(3, 7)]]).astype(float)),
        G2=_freeze(G2),
        scenarios=items,
        x_integer=_freeze(np.ones(2, dtype=bool)),
        y_integer=_freeze(np.array([True, True, False])),
        x_lower=_freeze(np.zeros(2)),
        x_upper=_freeze(np.full(2, float(box))),
        y_lower=_freeze(np.zeros(3)),
        y_upper=_freeze(np.full(3, math.inf)),
    )


def random_miblp(seed=None, box: int = 4) -> MiblpInstance:
    """
    Two integer leader variables in [0, box]^2 and four follower variables
    (three integer, one continuous). Follower costs are positive, so the
    reaction function is finite wherever the follower is feasible.
    """
    rng = _rng(seed)
    n2 = 4
    m2 = int(rng.integers(1, 3))
    G2 = rng.integers(0, 5, size=(m2, n2)).astype(float)
    G2[:, 3] = rng.integers(1, 3, size=m2)
    has_leader_row = bool(rng.integers(0, 2))
    A1 = rng.integers(-2, 3, size=(1, 2)).astype(float) if has_leader_row else np.zeros((0, 2))
    G1 = rng.integers(-2, 3, size=(1, n2)).astype(float) if has_leader_row else np.zeros((0, n2))
    b1 = rng.integers(-4, 2, size=1).astype(float) if has_leader_row else np.zeros(0)
    return MiblpInstance(
        c=_freeze(rng.integers(-3, 4, size=2).astype(float)),
        d1=_freeze(rng.integers(-5, 4, size=n2).astype(float)),
        d2=_freeze(rng.integers(1, 6, size=n2).astype(float)),
        A1=_freeze(A1),
        G1=_freeze(G1),
        b1=_freeze(b1),
        A2=_freeze(-rng.integers(0, 3, size=(m2, 2)).astype(float)),
        G2=_freeze(G2),
        b2=_freeze(rng.integers(-2, 3, size=m2).astype(float)),
        y_integer=_freeze(np.array([True, True, True, False])),
        x_lower=_freeze(np.zeros(2)),
        x_upper=_freeze(np.full(2, float(box))),
        y_lower=_freeze(np.zeros(n2)),
        y_upper=_freeze(np.full(n2, math.inf)),
    )
