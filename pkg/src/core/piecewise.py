"""
Function families the Benders drivers pass around.

* MinAffineDual: min over terms of beta1^T eta1 + beta2^T eta2 + phi*eta_phi + alpha
* RestrictedPrimal: affine in beta2 on a polyhedral domain, +inf elsewhere
* GlobalDual / GlobalPrimal: max (resp. min) over accumulated members

Values are ExtendedReal so infinities never enter numpy arithmetic.
"""
import functools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import BadRange, DimensionMismatch, EmptyTree

logger = logging.getLogger(__name__)

INF_SENTINEL = "inf"
NEG_INF_SENTINEL = "-inf"


@functools.total_ordering
@dataclass(frozen=True)
class ExtendedReal:
    """A real number or one of +inf / -inf (sign = +1 / -1)."""

    sign: int = 0
    value: float = 0.0

    @classmethod
    def of(cls, number: Union[float, "ExtendedReal"]) -> "ExtendedReal":
        if isinstance(number, ExtendedReal):
            return number
        number = float(number)
        if math.isnan(number):
            raise ValueError("NaN is not an extended real")
        if math.isinf(number):
            return POS_INF if number > 0 else NEG_INF
        return cls(0, number)

    @property
    def is_finite(self) -> bool:
        return self.sign == 0

    def _key(self) -> Tuple[int, float]:
        return (self.sign, self.value if self.sign == 0 else 0.0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExtendedReal):
            try:
                other = ExtendedReal.of(other)
            except (TypeError, ValueError):
                return NotImplemented
        return self._key() == other._key()

    def __lt__(self, other) -> bool:
        other = ExtendedReal.of(other)
        return self._key() < other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __float__(self) -> float:
        if self.sign > 0:
            return math.inf
        if self.sign < 0:
            return -math.inf
        return self.value

    def __add__(self, other) -> "ExtendedReal":
        other = ExtendedReal.of(other)
        if self.sign and other.sign and self.sign != other.sign:
            raise ValueError("inf - inf is undefined")
        if self.sign or other.sign:
            return self if self.sign else other
        return ExtendedReal(0, self.value + other.value)

    __radd__ = __add__

    def __str__(self) -> str:
        if self.sign > 0:
            return INF_SENTINEL
        if self.sign < 0:
            return NEG_INF_SENTINEL
        return repr(self.value)


POS_INF = ExtendedReal(1)
NEG_INF = ExtendedReal(-1)


def _vector(values, name: str) -> np.ndarray:
    array = np.array([] if values is None else values, dtype=float).reshape(-1)
    if not np.isfinite(array).all():
        raise DimensionMismatch(f"{name} must be finite")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class AffineTerm:
    """beta1^T coeff_beta1 + beta2^T coeff_beta2 + phi * coeff_phi + constant."""

    coeff_beta1: np.ndarray
    coeff_beta2: np.ndarray
    coeff_phi: float
    constant: float

    @classmethod
    def build(
        cls,
        coeff_beta1: Optional[Sequence[float]] = None,
        coeff_beta2: Optional[Sequence[float]] = None,
        coeff_phi: float = 0.0,
        constant: float = 0.0,
    ) -> "AffineTerm":
        if not (math.isfinite(coeff_phi) and math.isfinite(constant)):
            raise DimensionMismatch("Affine term coefficients must be finite")
        return cls(
            coeff_beta1=_vector(coeff_beta1, "coeff_beta1"),
            coeff_beta2=_vector(coeff_beta2, "coeff_beta2"),
            coeff_phi=float(coeff_phi),
            constant=float(constant),
        )

    def linear(self, beta1: np.ndarray, beta2: np.ndarray) -> float:
        """The term without its phi part."""
        return float(beta1 @ self.coeff_beta1 + beta2 @ self.coeff_beta2) + self.constant

    def evaluate(
        self, beta1: np.ndarray, beta2: np.ndarray, phi: Optional[ExtendedReal]
    ) -> ExtendedReal:
        base = self.linear(beta1, beta2)
        if self.coeff_phi == 0.0:
            return ExtendedReal(0, base)
        if phi is None:
            raise DimensionMismatch("Term has a phi coefficient but no phi value was given")
        if not phi.is_finite:
            return POS_INF if self.coeff_phi * phi.sign > 0 else NEG_INF
        return ExtendedReal(0, base + self.coeff_phi * phi.value)

    def to_dict(self) -> dict:
        return {
            "beta1": self.coeff_beta1.tolist(),
            "beta2": self.coeff_beta2.tolist(),
            "phi": self.coeff_phi,
            "constant": self.constant,
        }


@dataclass(frozen=True)
class MinAffineDual:
    terms: Tuple[AffineTerm, ...]
    anchor_beta1: np.ndarray
    anchor_beta2: np.ndarray

    @classmethod
    def build(
        cls,
        terms: Iterable[AffineTerm],
        anchor_beta1: Optional[Sequence[float]] = None,
        anchor_beta2: Optional[Sequence[float]] = None,
    ) -> "MinAffineDual":
        terms = tuple(terms)
        if not terms:
            raise EmptyTree("A dual function needs at least one term")
        beta1 = _vector(anchor_beta1, "anchor_beta1")
        beta2 = _vector(anchor_beta2, "anchor_beta2")
        for term in terms:
            if term.coeff_beta1.size != beta1.size or term.coeff_beta2.size != beta2.size:
                raise DimensionMismatch("Term dimensions disagree with the anchor")
        return cls(terms=terms, anchor_beta1=beta1, anchor_beta2=beta2)

    @property
    def uses_phi(self) -> bool:
        return any(term.coeff_phi != 0.0 for term in self.terms)

    def __call__(self, *beta2) -> ExtendedReal:
        """Shorthand for plain value-function duals (no beta1, no phi)."""
        return eval_dual(self, [], np.array(beta2, dtype=float).reshape(-1))

    def to_dict(self) -> dict:
        return {
            "anchor_beta1": self.anchor_beta1.tolist(),
            "anchor_beta2": self.anchor_beta2.tolist(),
            "terms": [term.to_dict() for term in self.terms],
        }


@dataclass(frozen=True)
class RestrictedPrimal:
    """
    Upper bound on the value function from a continuous restriction.

    With r = beta2 - offset the value is r^T eta + kappa whenever
    domain_matrix r >= domain_rhs, and +inf otherwise. In the common case
    (continuous variables in [0, inf)) domain_matrix is the basis inverse
    and domain_rhs is zero.
    """

    eta: np.ndarray
    kappa: float
    offset: np.ndarray
    domain_matrix: np.ndarray
    domain_rhs: np.ndarray
    anchor: np.ndarray
    fixed: np.ndarray

    @classmethod
    def build(cls, eta, kappa, offset, domain_matrix, domain_rhs, anchor, fixed=None):
        eta = _vector(eta, "eta")
        offset = _vector(offset, "offset")
        domain_rhs = _vector(domain_rhs, "domain_rhs")
        domain_matrix = np.array(domain_matrix, dtype=float).reshape(domain_rhs.size, eta.size)
        domain_matrix.setflags(write=False)
        if offset.size != eta.size:
            raise DimensionMismatch("offset and eta must have the same length")
        return cls(
            eta=eta,
            kappa=float(kappa),
            offset=offset,
            domain_matrix=domain_matrix,
            domain_rhs=domain_rhs,
            anchor=_vector(anchor, "anchor"),
            fixed=_vector(fixed, "fixed"),
        )

    def in_domain(self, beta2: np.ndarray, tol: float = 1e-9) -> bool:
        residual = np.asarray(beta2, dtype=float) - self.offset
        return bool(np.all(self.domain_matrix @ residual >= self.domain_rhs - tol))

    def affine(self, beta2: np.ndarray) -> float:
        return float((np.asarray(beta2, dtype=float) - self.offset) @ self.eta) + self.kappa

    def to_dict(self) -> dict:
        return {
            "eta": self.eta.tolist(),
            "kappa": self.kappa,
            "offset": self.offset.tolist(),
            "domain_matrix": self.domain_matrix.tolist(),
            "domain_rhs": self.domain_rhs.tolist(),
            "anchor": self.anchor.tolist(),
            "fixed": self.fixed.tolist(),
        }


def _as_vector(beta, size: int, name: str) -> np.ndarray:
    array = np.asarray(beta if beta is not None else [], dtype=float).reshape(-1)
    if array.size != size:
        raise DimensionMismatch(f"{name} has {array.size} entries, expected {size}")
    return array


def eval_dual(
    d: MinAffineDual,
    beta1,
    beta2,
    phi_value: Optional[Union[float, ExtendedReal]] = None,
) -> ExtendedReal:
    """
    Evaluates a min-of-affine dual function.

    A term with a negative phi coefficient is -inf where phi is +inf; terms
    with a zero phi coefficient ignore phi entirely.
    """
    b1 = _as_vector(beta1, d.anchor_beta1.size, "beta1")
    b2 = _as_vector(beta2, d.anchor_beta2.size, "beta2")
    phi = None if phi_value is None else ExtendedReal.of(phi_value)
    return min(term.evaluate(b1, b2, phi) for term in d.terms)


def eval_primal(p: RestrictedPrimal, beta2, tol: float = 1e-9) -> ExtendedReal:
    b2 = _as_vector(beta2, p.eta.size, "beta2")
    if not p.in_domain(b2, tol):
        return POS_INF
    return ExtendedReal(0, p.affine(b2))


@dataclass(frozen=True)
class GlobalDual:
    """
    Max over accumulated duals. A member that uses phi is paired with the
    primal function that stands in for phi when no exact value is given.
    """

    members: Tuple[Tuple[MinAffineDual, Optional[RestrictedPrimal]], ...] = ()

    def add(self, dual: MinAffineDual, primal: Optional[RestrictedPrimal] = None) -> "GlobalDual":
        if dual.uses_phi and primal is None:
            logger.debug("Dual with phi coefficients added without a primal function")
        return GlobalDual(self.members + ((dual, primal),))

    def __len__(self) -> int:
        return len(self.members)


def eval_global(
    g: GlobalDual,
    beta1=None,
    beta2=None,
    phi_value: Optional[Union[float, ExtendedReal]] = None,
) -> ExtendedReal:
    """
    Max over members; -inf for an empty collection.

    Without phi_value each member evaluates phi through its own primal.
    """
    best = NEG_INF
    for dual, primal in g.members:
        phi = phi_value
        if phi is None and dual.uses_phi:
            if primal is None:
                raise DimensionMismatch("Member needs a phi value or a primal function")
            phi = eval_primal(primal, beta2)
        best = max(best, eval_dual(dual, beta1, beta2, phi))
    return best


@dataclass(frozen=True)
class GlobalPrimal:
    """Min over restricted primal functions; +inf where none applies."""

    members: Tuple[RestrictedPrimal, ...] = ()

    def add(self, primal: RestrictedPrimal) -> "GlobalPrimal":
        return GlobalPrimal(self.members + (primal,))


def eval_global_primal(g: GlobalPrimal, beta2) -> ExtendedReal:
    return min((eval_primal(p, beta2) for p in g.members), default=POS_INF)


def grid_points(lo: float, hi: float, step: float) -> List[float]:
    """
    Inclusive grid lo, lo + step, ... up to hi.

    Raises:
        BadRange: For a non-positive step, hi < lo or non-finite ends.
    """
    if not all(math.isfinite(v) for v in (lo, hi, step)):
        raise BadRange("Grid bounds and step must be finite")
    if step <= 0:
        raise BadRange(f"Grid step must be positive, got {step}")
    if hi < lo:
        raise BadRange(f"Grid upper end {hi} is below lower end {lo}")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + k * step, 12) for k in range(count)]


def sample_grid(
    f: Callable[[float], Union[float, ExtendedReal]], lo: float, hi: float, step: float
) -> List[Tuple[float, ExtendedReal]]:
    """Evaluates a scalar function on an inclusive grid."""
    return [(beta, ExtendedReal.of(f(beta))) for beta in grid_points(lo, hi, step)]


def samples_frame(samples: Sequence[Tuple[float, ExtendedReal]]) -> pd.DataFrame:
    """Samples as a (beta, value) frame with "inf"/"-inf" sentinels."""
    return pd.DataFrame(
        {
            "beta": [beta for beta, _ in samples],
            "value": [str(ExtendedReal.of(value)) for _, value in samples],
        }
    )


def write_samples(samples: Sequence[Tuple[float, ExtendedReal]], path: str) -> None:
    samples_frame(samples).to_csv(path, index=False)


def parse_sample_value(text: str) -> ExtendedReal:
    text = str(text).strip()
    if text == INF_SENTINEL:
        return POS_INF
    if text == NEG_INF_SENTINEL:
        return NEG_INF
    return ExtendedReal(0, float(text))
