"""Affine forms over ordered random variables.

Everything downstream (entry times, fluid levels, clocks, domain bounds)
is affine in the values of the general-transition firings that already
happened, listed in firing order.  A form's coefficient k multiplies the
k-th expired firing.  Bounds attached to variable k may only reference
variables with index < k; that triangular shape is what makes the
extremum walk and the domain decomposition exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np

#: Tolerance for coefficient and bound comparisons.
EPS = 1e-9


def _strip(coeffs: Iterable[float], eps: float = EPS) -> tuple[float, ...]:
    out = [float(c) for c in coeffs]
    while out and abs(out[-1]) <= eps:
        out.pop()
    return tuple(out)


@dataclass(frozen=True)
class RvId:
    """Identifies one firing of one general transition (0-based ordinal)."""

    transition: str
    firing: int

    def label(self) -> str:
        return f"s{self.transition}_{self.firing}"


@dataclass(frozen=True)
class LinearForm:
    """const + sum(coeffs[k] * o[k]) with trailing ~zero coefficients stripped."""

    const: float
    coeffs: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "const", float(self.const))
        object.__setattr__(self, "coeffs", _strip(self.coeffs))

    # -- algebra ---------------------------------------------------------

    def __add__(self, other: "LinearForm | float") -> "LinearForm":
        if isinstance(other, (int, float)):
            return LinearForm(self.const + other, self.coeffs)
        n = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [0.0] * (n - len(self.coeffs))
        b = list(other.coeffs) + [0.0] * (n - len(other.coeffs))
        return LinearForm(self.const + other.const, tuple(x + y for x, y in zip(a, b)))

    def __sub__(self, other: "LinearForm | float") -> "LinearForm":
        if isinstance(other, (int, float)):
            return LinearForm(self.const - other, self.coeffs)
        return self + other.scaled(-1.0)

    def scaled(self, factor: float) -> "LinearForm":
        return LinearForm(self.const * factor, tuple(c * factor for c in self.coeffs))

    def coeff(self, k: int) -> float:
        return self.coeffs[k] if k < len(self.coeffs) else 0.0

    def top_index(self, eps: float = EPS) -> Optional[int]:
        """Highest variable index with a non-negligible coefficient."""
        for k in range(len(self.coeffs) - 1, -1, -1):
            if abs(self.coeffs[k]) > eps:
                return k
        return None

    def is_constant(self, eps: float = EPS) -> bool:
        return self.top_index(eps) is None

    def drop_var(self, k: int) -> "LinearForm":
        """Remove variable slot k (its coefficient must already be ~0)."""
        if abs(self.coeff(k)) > EPS:
            raise ValueError(f"cannot drop live variable {k} from {self}")
        cs = list(self.coeffs)
        if k < len(cs):
            del cs[k]
        return LinearForm(self.const, tuple(cs))

    def substitute(self, k: int, replacement: "LinearForm") -> "LinearForm":
        """Replace o[k] by a form over lower-indexed variables."""
        if replacement.top_index() is not None and replacement.top_index() >= k:
            raise ValueError("replacement must reference lower-order variables only")
        c = self.coeff(k)
        cs = list(self.coeffs)
        if k < len(cs):
            cs[k] = 0.0
        return LinearForm(self.const, tuple(cs)) + replacement.scaled(c)

    # -- evaluation ------------------------------------------------------

    def evaluate(self, assignment: Sequence[float]) -> float:
        if len(assignment) < len(self.coeffs):
            raise ValueError(
                f"assignment of length {len(assignment)} too short for form "
                f"referencing o[{len(self.coeffs) - 1}]"
            )
        return self.const + sum(c * v for c, v in zip(self.coeffs, assignment))

    def evaluate_batch(self, samples: np.ndarray) -> np.ndarray:
        """Vectorized evaluate over a (N, n) sample matrix."""
        if not self.coeffs:
            return np.full(samples.shape[0] if samples.ndim > 1 else 1, self.const)
        k = len(self.coeffs)
        if samples.shape[1] < k:
            raise ValueError("sample matrix narrower than form")
        return self.const + samples[:, :k] @ np.asarray(self.coeffs)

    def approx_eq(self, other: "LinearForm", eps: float = EPS) -> bool:
        if abs(self.const - other.const) > eps:
            return False
        n = max(len(self.coeffs), len(other.coeffs))
        return all(abs(self.coeff(i) - other.coeff(i)) <= eps for i in range(n))

    # -- formatting ------------------------------------------------------

    def text(self, names: Optional[Sequence[str]] = None) -> str:
        terms = []
        if abs(self.const) > EPS or not self.coeffs:
            terms.append(f"{self.const:g}")
        for k, c in enumerate(self.coeffs):
            if abs(c) <= EPS:
                continue
            name = names[k] if names else f"o{k}"
            if abs(c - 1.0) <= EPS:
                t = name
            elif abs(c + 1.0) <= EPS:
                t = f"-{name}"
            else:
                t = f"{c:g}*{name}"
            terms.append(t)
        out = terms[0]
        for t in terms[1:]:
            out += f" - {t[1:]}" if t.startswith("-") else f" + {t}"
        return out

    def __str__(self) -> str:  # pragma: no cover - debugging aid
        return self.text()


def const(value: float) -> LinearForm:
    return LinearForm(value)


def var(k: int, coeff: float = 1.0, offset: float = 0.0) -> LinearForm:
    return LinearForm(offset, tuple([0.0] * k + [coeff]))


ZERO = LinearForm(0.0)


@dataclass(frozen=True)
class SymInterval:
    """[lower, upper] with symbolic bounds; upper None marks +infinity."""

    lower: LinearForm
    upper: Optional[LinearForm]

    def is_unbounded(self) -> bool:
        return self.upper is None

    def width_at(self, assignment: Sequence[float]) -> float:
        if self.upper is None:
            return math.inf
        return self.upper.evaluate(assignment) - self.lower.evaluate(assignment)

    def contains(self, value: float, assignment: Sequence[float], eps: float = EPS) -> bool:
        if value < self.lower.evaluate(assignment) - eps:
            return False
        if self.upper is None:
            return True
        return value <= self.upper.evaluate(assignment) + eps

    def text(self, names: Optional[Sequence[str]] = None) -> str:
        hi = "inf" if self.upper is None else self.upper.text(names)
        return f"[{self.lower.text(names)}, {hi}]"


def unbounded(lower: float = 0.0) -> SymInterval:
    return SymInterval(LinearForm(lower), None)


class ComparisonKind(Enum):
    """Outcome of comparing two remaining-time forms dtc vs dtstar."""

    EQUAL = "equal"                # identical forms: simultaneous everywhere
    UPPER_BOUND = "upper"          # dtc <= dtstar iff o[index] <= bound
    LOWER_BOUND = "lower"          # dtc <= dtstar iff o[index] >= bound
    ALWAYS_BEFORE = "always"       # parallel forms, dtc < dtstar everywhere
    NEVER_BEFORE = "never"         # parallel forms, dtc > dtstar everywhere


@dataclass(frozen=True)
class ComparisonOutcome:
    kind: ComparisonKind
    index: Optional[int] = None
    bound: Optional[LinearForm] = None


def compare_remaining_times(
    dtc: LinearForm, dtstar: LinearForm, eps: float = EPS
) -> ComparisonOutcome:
    """Solve dtc <= dtstar for the highest-order variable where they differ.

    With dtc = a0 + sum(a_k o_k) and dtstar = b0 + sum(b_k o_k), let k be the
    largest index with a_k != b_k.  Then dtc <= dtstar rewrites to a bound on
    o[k] over lower-order variables: (b0-a0)/(a_k-b_k) + sum_{z<k}
    (b_z-a_z)/(a_k-b_k) o_z, an upper bound when a_k > b_k and a lower bound
    when a_k < b_k.  Parallel forms (no such k) cannot cross: the smaller
    constant fires strictly first everywhere, or the forms are equal.
    """
    diff = dtstar - dtc  # diff >= 0  <=>  dtc <= dtstar
    k = diff.top_index(eps)
    if k is None:
        if abs(diff.const) <= eps:
            return ComparisonOutcome(ComparisonKind.EQUAL)
        if diff.const > 0:
            return ComparisonOutcome(ComparisonKind.ALWAYS_BEFORE)
        return ComparisonOutcome(ComparisonKind.NEVER_BEFORE)
    denom = dtc.coeff(k) - dtstar.coeff(k)  # == -diff.coeffs[k], nonzero
    num_const = dtstar.const - dtc.const
    num_coeffs = [dtstar.coeff(z) - dtc.coeff(z) for z in range(k)]
    bound = LinearForm(num_const / denom, tuple(c / denom for c in num_coeffs))
    if denom > 0:
        return ComparisonOutcome(ComparisonKind.UPPER_BOUND, k, bound)
    return ComparisonOutcome(ComparisonKind.LOWER_BOUND, k, bound)


def extremal_value(
    form: LinearForm,
    domain: Sequence[SymInterval],
    sense: str,
    eps: float = EPS,
) -> float:
    """Exact extremum of an affine form over a triangular box domain.

    Walks variables from the highest order down, substituting the bound that
    extremizes the current coefficient.  Because each bound only references
    lower-order variables the substitution is exact, and an unbounded upper
    bound chosen with a live coefficient makes the extremum infinite.
    """
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    want_max = sense == "max"
    cur = form
    for k in range(len(domain) - 1, -1, -1):
        c = cur.coeff(k)
        if abs(c) <= eps:
            if k < len(cur.coeffs):
                cur = cur.substitute(k, ZERO)
            continue
        iv = domain[k]
        pick_upper = (c > 0) == want_max
        if pick_upper:
            if iv.upper is None:
                return math.inf if c > 0 else -math.inf
            cur = cur.substitute(k, iv.upper)
        else:
            cur = cur.substitute(k, iv.lower)
    if cur.top_index(eps) is not None:
        raise ValueError("form references variables outside the domain")
    return cur.const
