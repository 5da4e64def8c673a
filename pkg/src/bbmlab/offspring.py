"""Offspring generating polynomials for branching processes.

A branching model is described by G(u) = sum a_n u^n where a_n is the
probability that a dying particle leaves n children. This module validates
coefficient lists, classifies models by mean offspring count, computes
extinction probabilities, and converts general polynomial reaction terms
F(u) into the normalized form lam * (G(u) - u).
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

COEFF_SUM_TOL = 1e-12
CRITICAL_TOL = 1e-12

# The critical case approaches its fixed point like 2/k, so the increment
# |q_{k+1}-q_k| ~ 2/k^2 needs ~1.5e6 iterations to drop below 1e-12.
DEFAULT_FIXED_POINT_TOL = 1e-12
DEFAULT_FIXED_POINT_MAX_ITER = 4_000_000


class OffspringError(ValueError):
    """Invalid offspring polynomial input."""


class NegativeCoefficient(OffspringError):
    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"coefficient a_{index} = {value} is negative")


class SumNotOne(OffspringError):
    def __init__(self, actual_sum: float):
        self.actual_sum = actual_sum
        super().__init__(
            f"coefficients sum to {actual_sum!r}, expected 1 within {COEFF_SUM_TOL}"
        )


class NoConvergence(RuntimeError):
    def __init__(self, max_iter: int):
        self.max_iter = max_iter
        super().__init__(f"fixed-point iteration did not converge in {max_iter} steps")


class NotDecomposable(ValueError):
    """Reaction polynomial admits no probabilistic normalization."""


class Regime(enum.Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class Criticality:
    """Regime label together with the mean offspring count that produced it."""

    regime: Regime
    mean_offspring: float

    @property
    def is_critical(self) -> bool:
        return self.regime is Regime.CRITICAL

    @property
    def is_supercritical(self) -> bool:
        return self.regime is Regime.SUPERCRITICAL


@dataclass(frozen=True)
class OffspringPolynomial:
    """Canonical offspring distribution: nonnegative coeffs summing to 1.

    Build instances through :func:`validate`, which strips trailing zeros and
    checks the probabilistic constraints. ``coeffs[n]`` is the probability of
    n offspring.
    """

    coeffs: tuple[float, ...]

    def __post_init__(self):
        if not self.coeffs:
            raise OffspringError("offspring polynomial needs at least one coefficient")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, u):
        """Evaluate G(u); accepts scalars or numpy arrays."""
        out = np.polynomial.polynomial.polyval(u, self.coeffs)
        return float(out) if np.isscalar(u) else out

    def derivative(self, u: float) -> float:
        d = [n * a for n, a in enumerate(self.coeffs)][1:]
        if not d:
            return 0.0
        return float(np.polynomial.polynomial.polyval(u, d))

    def cumulative(self) -> np.ndarray:
        """Cumulative probabilities for inverse-CDF sampling; last entry is 1."""
        cum = np.cumsum(np.asarray(self.coeffs, dtype=np.float64))
        cum[-1] = 1.0
        return cum

    def to_json(self) -> str:
        return json.dumps(list(self.coeffs))

    @classmethod
    def from_json(cls, text: str) -> "OffspringPolynomial":
        return validate(json.loads(text))


@dataclass(frozen=True)
class ReactionPolynomial:
    """Reaction term F(u) = sum f_n u^n, optionally with a preferred rate."""

    coeffs: tuple[float, ...]
    lam: float | None = None

    def __post_init__(self):
        if not self.coeffs:
            raise ValueError("reaction polynomial needs at least one coefficient")
        if self.lam is not None and self.lam <= 0:
            raise ValueError("rate must be positive")

    def __call__(self, u):
        out = np.polynomial.polynomial.polyval(u, self.coeffs)
        return float(out) if np.isscalar(u) else out


def validate(coeffs: Sequence[float]) -> OffspringPolynomial:
    """Check and canonicalize a coefficient list.

    Raises NegativeCoefficient or SumNotOne on violation. Trailing zeros are
    stripped so equal distributions compare equal. Renormalization is refused
    on purpose: a sum off by more than 1e-12 is treated as a user input bug.
    """
    coeffs = [float(c) for c in coeffs]
    if not coeffs:
        raise OffspringError("empty coefficient list")
    for n, c in enumerate(coeffs):
        if c < 0.0:
            raise NegativeCoefficient(n, c)
    total = float(np.sum(coeffs))
    if abs(total - 1.0) > COEFF_SUM_TOL:
        raise SumNotOne(total)
    while len(coeffs) > 1 and coeffs[-1] == 0.0:
        coeffs.pop()
    return OffspringPolynomial(tuple(coeffs))


def evaluate(G: OffspringPolynomial, u) -> float:
    """G(u) via Horner evaluation."""
    return G(u)


def mean_offspring(G: OffspringPolynomial) -> float:
    """Mean number of offspring, G'(1) = sum n * a_n."""
    return float(sum(n * a for n, a in enumerate(G.coeffs)))


def classify(G: OffspringPolynomial) -> Criticality:
    """Label the model by mean offspring count with a 1e-12 band around 1."""
    m = mean_offspring(G)
    if abs(m - 1.0) <= CRITICAL_TOL:
        regime = Regime.CRITICAL
    elif m < 1.0:
        regime = Regime.SUBCRITICAL
    else:
        regime = Regime.SUPERCRITICAL
    return Criticality(regime, m)


def extinction_probability(
    G: OffspringPolynomial,
    tol: float = DEFAULT_FIXED_POINT_TOL,
    max_iter: int = DEFAULT_FIXED_POINT_MAX_ITER,
) -> float:
    """Least fixed point of G(q) = q on [0, 1].

    Iterates q <- G(q) from q = 0; with nonnegative coefficients the sequence
    is monotone increasing and converges to the least fixed point. Stops when
    successive iterates differ by less than ``tol``. In the critical case the
    error at the stopping point is about sqrt(2 * tol), not tol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    coeffs = G.coeffs
    rev = coeffs[::-1]
    q = 0.0
    for _ in range(max_iter):
        acc = 0.0
        for c in rev:
            acc = acc * q + c
        if abs(acc - q) < tol:
            return acc
        q = acc
    raise NoConvergence(max_iter)


def decompose_reaction(
    F: ReactionPolynomial | Sequence[float],
    lam: float | None = None,
) -> tuple[float, OffspringPolynomial]:
    """Write F(u) = lam * (G(u) - u) with probabilistic G.

    Requires F(1) = 0, f_n >= 0 for n != 1, and f_1 <= 0. When no rate is
    supplied the smallest rate keeping every a_n in [0, 1] is chosen:
    lam = max(-f_1, max_{n != 1} f_n). Coefficientwise a_n = f_n / lam for
    n != 1 and a_1 = 1 + f_1 / lam. The result is re-checked via validate.
    """
    if isinstance(F, ReactionPolynomial):
        f = list(F.coeffs)
        if lam is None:
            lam = F.lam
    else:
        f = [float(c) for c in F]
    if not f:
        raise NotDecomposable("empty reaction polynomial")
    f1 = f[1] if len(f) > 1 else 0.0
    value_at_one = float(np.sum(f))
    scale = max(1.0, float(np.max(np.abs(f))))
    if abs(value_at_one) > COEFF_SUM_TOL * scale:
        raise NotDecomposable(f"F(1) = {value_at_one!r} must vanish")
    for n, c in enumerate(f):
        if n != 1 and c < 0.0:
            raise NotDecomposable(f"f_{n} = {c} is negative")
    if f1 > 0.0:
        raise NotDecomposable(f"f_1 = {f1} must be nonpositive")

    if lam is None:
        candidates = [-f1] + [c for n, c in enumerate(f) if n != 1]
        lam = max(candidates)
        if lam <= 0.0:
            raise NotDecomposable("F is identically zero; supply a rate explicitly")
    if lam <= 0.0:
        raise NotDecomposable("rate must be positive")

    a = [c / lam for c in f]
    while len(a) < 2:
        a.append(0.0)
    a[1] = 1.0 + f1 / lam
    return float(lam), validate(a)


def recompose(lam: float, G: OffspringPolynomial) -> tuple[float, ...]:
    """Coefficients of lam * (G(u) - u), the inverse of decompose_reaction."""
    f = [lam * c for c in G.coeffs]
    while len(f) < 2:
        f.append(0.0)
    f[1] = lam * (G.coeffs[1] if G.degree >= 1 else 0.0) - lam
    return tuple(f)
