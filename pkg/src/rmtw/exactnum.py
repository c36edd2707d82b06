"""Exact rational arithmetic, coded reals, and interval-set algebra on [0,1].

Every stage of every pipeline computes through this module.  Numbers are
`fractions.Fraction` (arbitrary precision, always in lowest terms), all
comparisons are exact, and no floating point is used anywhere.

Reals are coded as fast Cauchy sequences of rationals: a generator
``k -> q_k`` with ``|q_k - q_{k+i}| <= 2^-k`` for all k, i.  The invariant
is checked on every inspected prefix and a violation raises
:class:`CauchyViolation`.

Finite unions of intervals are kept in a unique normal form (sorted,
disjoint, merged) so that set equality is representation equality.  Open
and closed intervals are never mixed inside one set: subtraction of an
open set from a closed interval yields closed components (degenerate
point components are retained, since downstream constructions must
distinguish them), and subtraction of a closed set from open intervals
yields open components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

from .errors import ContractError, RmtwError

Q = Fraction

OPEN = "open"
CLOSED = "closed"


class CauchyViolation(ContractError):
    """A coded real broke the fast-Cauchy bound on an inspected prefix."""


class MixedKinds(RmtwError):
    """Open and closed intervals were mixed in one interval set."""


def pow2(n: int) -> Fraction:
    """2**n as an exact Fraction, for any integer n."""
    if n >= 0:
        return Fraction(1 << n)
    return Fraction(1, 1 << (-n))


def fmt_q(q: Fraction) -> str:
    """Render a rational in the wire format "p/q" ("p" for integers)."""
    return str(q)


def parse_q(text: str) -> Fraction:
    """Parse the "p/q" wire format back into a Fraction."""
    return Fraction(text.strip())


def cantor_pair(a: int, b: int) -> int:
    return (a + b) * (a + b + 1) // 2 + b


def cantor_unpair(t: int) -> tuple[int, int]:
    w = (math.isqrt(8 * t + 1) - 1) // 2
    b = t - w * (w + 1) // 2
    return w - b, b


# ---------------------------------------------------------------------------
# Canonical enumeration of the rationals in [0,1]
# ---------------------------------------------------------------------------
#
# Ordered by denominator, then numerator, in lowest terms:
#   0, 1, 1/2, 1/3, 2/3, 1/4, 3/4, 1/5, 2/5, 3/5, 4/5, 1/6, 5/6, ...
# This fixed enumeration is shared by every construction that needs "the
# n-th rational": singular covers, dense sequences, and rational codes.

_RATIONALS: list[Fraction] = [Q(0), Q(1)]
_RATIONAL_INDEX: dict[Fraction, int] = {Q(0): 0, Q(1): 1}
_NEXT_DEN = 2


def _extend_rationals() -> None:
    global _NEXT_DEN
    d = _NEXT_DEN
    for p in range(1, d):
        if math.gcd(p, d) == 1:
            q = Q(p, d)
            _RATIONAL_INDEX[q] = len(_RATIONALS)
            _RATIONALS.append(q)
    _NEXT_DEN = d + 1


def unit_rational(n: int) -> Fraction:
    """The n-th rational of [0,1] under the canonical enumeration."""
    if n < 0:
        raise ValueError("index must be a natural number")
    while len(_RATIONALS) <= n:
        _extend_rationals()
    return _RATIONALS[n]


def rational_index(q: Fraction) -> int:
    """Position of q in the canonical enumeration (q must lie in [0,1])."""
    if not 0 <= q <= 1:
        raise ValueError(f"{q} is not in [0,1]")
    while q.denominator >= _NEXT_DEN:
        _extend_rationals()
    return _RATIONAL_INDEX[q]


# ---------------------------------------------------------------------------
# Coded reals
# ---------------------------------------------------------------------------


class RealCode:
    """A point of the line coded by a fast Cauchy sequence of rationals.

    The generator must be pure: the same index always yields the same
    rational.  Values are cached, and the fast-Cauchy bound
    ``|q_j - q_{j+i}| <= 2^-j`` is verified for every inspected pair the
    first time an index is reached.
    """

    __slots__ = ("_fn", "_vals", "_checked")

    def __init__(self, fn: Callable[[int], Fraction]):
        self._fn = fn
        self._vals: list[Fraction] = []
        self._checked = 0  # pairs verified for all j, j+i < _checked

    @classmethod
    def constant(cls, q: Fraction) -> "RealCode":
        q = Q(q)
        return cls(lambda _k: q)

    def _value(self, k: int) -> Fraction:
        while len(self._vals) <= k:
            self._vals.append(Q(self._fn(len(self._vals))))
        return self._vals[k]

    def _check_prefix(self, k: int) -> None:
        self._value(k)
        hi = k + 1
        if hi <= self._checked:
            return
        for j in range(hi):
            bound = pow2(-j)
            qj = self._vals[j]
            for i in range(max(j + 1, self._checked), hi):
                if abs(qj - self._vals[i]) > bound:
                    raise CauchyViolation(
                        f"|q_{j} - q_{i}| = {abs(qj - self._vals[i])} > 2^-{j}"
                    )
        self._checked = hi

    def approx(self, k: int) -> Fraction:
        """q_k, after validating the Cauchy bound on the prefix up to k.

        The true value is then guaranteed to lie within 2^-k of q_k.
        """
        self._check_prefix(k)
        return self._vals[k]


def approx(x: RealCode, k: int) -> Fraction:
    """Module-level alias for :meth:`RealCode.approx`."""
    return x.approx(k)


@dataclass(frozen=True)
class ConsistentWithEqual:
    """No inspected index separated the two codes (not a proof of equality)."""


@dataclass(frozen=True)
class Distinct:
    """The codes provably denote different reals; witness index included."""

    witness: int


def real_eq_at(x: RealCode, y: RealCode, k: int):
    """Compare two coded reals on the prefix up to k.

    Distinct(j) is sound: |q_j - q'_j| > 2^-(j-1) forces the limits apart.
    """
    for j in range(k + 1):
        if abs(x.approx(j) - y.approx(j)) > pow2(-j + 1):
            return Distinct(j)
    return ConsistentWithEqual()


# ---------------------------------------------------------------------------
# Intervals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    """A rational interval, open or closed.

    ``lo <= hi`` always; a degenerate closed interval is the single point
    ``[lo, lo]`` while a degenerate open interval is empty.
    """

    lo: Fraction
    hi: Fraction
    kind: str

    def __post_init__(self):
        if self.kind not in (OPEN, CLOSED):
            raise ValueError(f"bad interval kind {self.kind!r}")
        if self.lo > self.hi:
            raise ValueError(f"interval endpoints out of order: {self.lo} > {self.hi}")

    @property
    def is_degenerate(self) -> bool:
        return self.lo == self.hi

    @property
    def is_empty(self) -> bool:
        return self.kind == OPEN and self.lo == self.hi

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo

    @property
    def midpoint(self) -> Fraction:
        return (self.lo + self.hi) / 2

    def contains(self, q: Fraction) -> bool:
        if self.kind == CLOSED:
            return self.lo <= q <= self.hi
        return self.lo < q < self.hi

    def interior_contains(self, q: Fraction) -> bool:
        return self.lo < q < self.hi

    def meets_interior_of(self, other: "Interval") -> bool:
        """Does this interval overlap the open interior of `other`?"""
        return max(self.lo, other.lo) < min(self.hi, other.hi)

    def __str__(self) -> str:
        l, r = ("[", "]") if self.kind == CLOSED else ("(", ")")
        return f"{l}{fmt_q(self.lo)},{fmt_q(self.hi)}{r}"


def open_interval(lo, hi) -> Interval:
    return Interval(Q(lo), Q(hi), OPEN)


def closed_interval(lo, hi) -> Interval:
    return Interval(Q(lo), Q(hi), CLOSED)


def parse_interval(text: str) -> Interval:
    text = text.strip()
    kind = CLOSED if text[0] == "[" else OPEN
    if text[0] not in "([" or text[-1] not in ")]":
        raise ValueError(f"bad interval literal {text!r}")
    lo, hi = text[1:-1].split(",")
    return Interval(parse_q(lo), parse_q(hi), kind)


# ---------------------------------------------------------------------------
# Interval sets in normal form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntervalSet:
    """A finite union of same-kind intervals in normal form.

    Normal form: components sorted by left endpoint, pairwise disjoint,
    and merged wherever the union of two components is again an interval.
    Touching closed intervals merge; touching open intervals do not
    (their union is not an interval).  Normal form is unique, so dataclass
    equality is set equality.
    """

    components: tuple[Interval, ...]
    kind: str

    @classmethod
    def empty(cls, kind: str) -> "IntervalSet":
        return cls((), kind)

    def __iter__(self):
        return iter(self.components)

    def __len__(self) -> int:
        return len(self.components)

    @property
    def is_empty(self) -> bool:
        return not self.components

    @property
    def measure(self) -> Fraction:
        return sum((c.length for c in self.components), Q(0))

    def contains(self, q: Fraction) -> bool:
        return any(c.contains(q) for c in self.components)

    def __str__(self) -> str:
        return "{" + ";".join(str(c) for c in self.components) + "}"


def parse_interval_set(text: str) -> IntervalSet:
    text = text.strip()
    if not (text.startswith("{") and text.endswith("}")):
        raise ValueError(f"bad interval-set literal {text!r}")
    body = text[1:-1].strip()
    if not body:
        return IntervalSet.empty(OPEN)
    return ivl_normalize([parse_interval(part) for part in body.split(";")])


def ivl_normalize(raw: Iterable[Interval], kind: Optional[str] = None) -> IntervalSet:
    """Normal form of a finite union of same-kind intervals.

    The union is preserved exactly.  Raises :class:`MixedKinds` if open
    and closed intervals are mixed.  For an empty input the kind must be
    supplied (or defaults to open).
    """
    items = [iv for iv in raw]
    kinds = {iv.kind for iv in items}
    if len(kinds) > 1:
        raise MixedKinds(f"cannot normalize mixed kinds {sorted(kinds)}")
    if kinds:
        inferred = kinds.pop()
        if kind is not None and kind != inferred:
            raise MixedKinds(f"expected {kind} intervals, got {inferred}")
        kind = inferred
    elif kind is None:
        kind = OPEN

    items = [iv for iv in items if not iv.is_empty]
    items.sort(key=lambda iv: (iv.lo, iv.hi))
    merged: list[Interval] = []
    for iv in items:
        if merged:
            cur = merged[-1]
            touching_ok = cur.hi >= iv.lo if kind == CLOSED else cur.hi > iv.lo
            if touching_ok:
                if iv.hi > cur.hi:
                    merged[-1] = Interval(cur.lo, iv.hi, kind)
                continue
        merged.append(iv)
    return IntervalSet(tuple(merged), kind)


def ivl_union(a: IntervalSet, b: IntervalSet) -> IntervalSet:
    return ivl_normalize(list(a.components) + list(b.components), kind=a.kind)


def ivl_subtract(base: Interval, minus: IntervalSet) -> IntervalSet:
    """Exact difference ``base \\ minus`` of a closed interval and an open set.

    The result is a closed interval set in normal form.  Degenerate point
    components are genuine members of the difference (an open interval
    does not contain its endpoints) and are retained.
    """
    if base.kind != CLOSED:
        raise MixedKinds("base of ivl_subtract must be closed")
    if minus.kind != OPEN:
        raise MixedKinds("subtrahend of ivl_subtract must be an open set")
    out: list[Interval] = []
    cur = base.lo
    for iv in minus.components:
        if iv.hi <= cur:
            continue
        if iv.lo > base.hi:
            break
        if iv.lo >= cur:
            out.append(Interval(cur, min(iv.lo, base.hi), CLOSED))
        cur = iv.hi
        if cur > base.hi:
            break
    if cur <= base.hi:
        out.append(Interval(cur, base.hi, CLOSED))
    return IntervalSet(tuple(out), CLOSED)


def ivl_subtract_set(base: IntervalSet, minus: IntervalSet) -> IntervalSet:
    """Difference of a closed interval set and an open set, componentwise."""
    parts: list[Interval] = []
    for comp in base.components:
        parts.extend(ivl_subtract(comp, minus).components)
    return IntervalSet(tuple(parts), CLOSED)


def open_minus_closed(base: IntervalSet, minus: IntervalSet) -> IntervalSet:
    """Exact difference of an open interval set and a closed interval set.

    Removing a closed interval from an open one splits it into open
    pieces; removing a point splits it in two.  Result in normal form.
    """
    if base.kind != OPEN or minus.kind != CLOSED:
        raise MixedKinds("open_minus_closed expects open base and closed subtrahend")
    out: list[Interval] = []
    for iv in base.components:
        cur = iv.lo
        for cl in minus.components:
            if cl.hi <= cur:
                continue
            if cl.lo >= iv.hi:
                break
            if cl.lo > cur:
                out.append(Interval(cur, min(cl.lo, iv.hi), OPEN))
            cur = max(cur, cl.hi)
            if cur >= iv.hi:
                break
        if cur < iv.hi:
            out.append(Interval(cur, iv.hi, OPEN))
    return ivl_normalize(out, kind=OPEN)


def uncovered_point(base: Interval, opens: IntervalSet) -> Optional[Fraction]:
    """A rational point of ``base`` missed by the open set, if any.

    Deterministic tie-break: the midpoint of the leftmost nondegenerate
    component of the difference; if only point components remain, the
    leftmost such point.  Returns None when the difference is empty.
    """
    diff = ivl_subtract(base, opens)
    for comp in diff.components:
        if not comp.is_degenerate:
            return comp.midpoint
    if diff.components:
        return diff.components[0].lo
    return None
