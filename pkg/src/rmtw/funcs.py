"""Continuous-function codes, moduli of uniform continuity, and PL doubles.

A function code is a stream of generator quadruples ``(a, r, b, s)``:
"inputs within r of a map to within s of b".  The full coded relation is
the derived closure of the generators under input refinement and output
enlargement, so the closure laws hold definitionally and only the
pairwise consistency of generators needs checking.

Piecewise-constant tables (the shape every constructed function takes at
a finite stage) admit an exact modulus check, and piecewise-linear
functions serve as concrete extension doubles: exact evaluation, exact
Lipschitz constants, and a derived modulus.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .errors import RmtwError
from .exactnum import (
    CLOSED,
    Interval,
    Q,
    RealCode,
    closed_interval,
    fmt_q,
    parse_q,
    pow2,
)


class OutOfDomain(RmtwError):
    """A piecewise-linear function was evaluated outside [0,1]."""


class PointNotInDomain(RmtwError):
    """A point probed for a piecewise table lies in no piece."""


class OverlappingPieces(RmtwError):
    """Piece supports overlap where they are required to be disjoint."""


Generator = tuple[Fraction, Fraction, Fraction, Fraction]  # (a, r, b, s)


class FuncCode:
    """A pure stream of generator quadruples; ``None`` ticks emit nothing."""

    __slots__ = ("_fn", "_cache")

    def __init__(self, fn: Callable[[int], Optional[Generator]]):
        self._fn = fn
        self._cache: list[Optional[Generator]] = []

    @classmethod
    def from_list(cls, gens: Sequence[Generator]) -> "FuncCode":
        frozen = [tuple(Q(v) for v in g) for g in gens]
        return cls(lambda i: frozen[i] if i < len(frozen) else None)

    def at(self, i: int) -> Optional[Generator]:
        while len(self._cache) <= i:
            self._cache.append(self._fn(len(self._cache)))
        return self._cache[i]

    def prefix(self, stage: int) -> list[tuple[int, Generator]]:
        """Generators emitted at ticks <= stage, with indices."""
        out = []
        for i in range(stage + 1):
            g = self.at(i)
            if g is not None:
                out.append((i, g))
        return out


def save_func_code(code: FuncCode, stage: int, path) -> None:
    with open(path, "w") as fh:
        for _, (a, r, b, s) in code.prefix(stage):
            fh.write(f"{fmt_q(a)} {fmt_q(r)} {fmt_q(b)} {fmt_q(s)}\n")


def load_func_code(path) -> FuncCode:
    gens: list[Generator] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            a, r, b, s = (parse_q(t) for t in line.split())
            gens.append((a, r, b, s))
    return FuncCode.from_list(gens)


class Modulus:
    """A modulus of uniform continuity: n -> h(n)."""

    __slots__ = ("_fn",)

    def __init__(self, fn: Callable[[int], int]):
        self._fn = fn

    def __call__(self, n: int) -> int:
        return self._fn(n)

    @classmethod
    def offset(cls, t: int) -> "Modulus":
        return cls(lambda n: n + t)


def phi_holds(code: FuncCode, inp: tuple, out: tuple, stage: int) -> bool:
    """Does the derived relation hold for input ball ``inp``, output ball ``out``?

    True iff some generator with index <= stage subsumes the query: the
    query input refines the generator's input ball and the generator's
    output ball refines the query output.  Refinement here is non-strict,
    so every generator certifies itself; the strict-refinement closure
    laws follow by the triangle inequality.
    """
    a, r = Q(inp[0]), Q(inp[1])
    b, s = Q(out[0]), Q(out[1])
    for _, (a0, r0, b0, s0) in code.prefix(stage):
        if abs(a0 - a) + r <= r0 and abs(b - b0) + s0 <= s:
            return True
    return False


@dataclass(frozen=True)
class ConsistencyViolation:
    i: int
    j: int
    detail: str


def check_consistency(code: FuncCode, stage: int) -> list[ConsistencyViolation]:
    """Pairwise consistency of the generator prefix.

    Two generators whose input balls properly overlap admit a common
    refined input ball, so their output balls must satisfy
    ``|b - b'| <= s + s'``.  An empty report means the prefix codes a
    (partial) function.
    """
    gens = code.prefix(stage)
    bad = []
    for u in range(len(gens)):
        i, (a1, r1, b1, s1) = gens[u]
        for v in range(u + 1, len(gens)):
            j, (a2, r2, b2, s2) = gens[v]
            if abs(a1 - a2) < r1 + r2 and abs(b1 - b2) > s1 + s2:
                bad.append(
                    ConsistencyViolation(
                        i, j, f"|{fmt_q(b1)}-{fmt_q(b2)}| > {fmt_q(s1 + s2)}"
                    )
                )
    return bad


@dataclass(frozen=True)
class Value:
    b: Fraction
    s: Fraction


@dataclass(frozen=True)
class Insufficient:
    pass


def _eval_precision_cap(r: Fraction) -> int:
    p = 0
    while pow2(-p) * 8 > r:
        p += 1
    return p


def eval_at(code: FuncCode, x: RealCode, q: Fraction, stage_budget: int):
    """Evaluate the coded function at x to output radius below q.

    Scans the generator prefix for a quadruple with ``s < q`` whose input
    ball certifiably contains x.  ``Insufficient`` deliberately conflates
    "x outside the domain" with "budget too small" - no finite process
    separates them.
    """
    if q <= 0:
        raise ValueError("target radius q must be positive")
    for _, (a, r, b, s) in code.prefix(stage_budget):
        if s >= q:
            continue
        for j in range(_eval_precision_cap(r) + 1):
            if abs(x.approx(j) - a) + pow2(-j) < r:
                return Value(b, s)
    return Insufficient()


# ---------------------------------------------------------------------------
# Piecewise-constant tables and the exact modulus check
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PieceTable:
    """Finite piecewise-constant function: disjoint closed supports -> values.

    The optional anchor adds the pair (0 -> 0) as a degenerate piece.
    """

    pieces: tuple[tuple[Interval, Fraction], ...]
    anchor: bool = False

    def __post_init__(self):
        spans = sorted(self.pieces, key=lambda p: (p[0].lo, p[0].hi))
        for (left, _), (right, _) in zip(spans, spans[1:]):
            if right.lo <= left.hi:
                raise OverlappingPieces(f"{left} overlaps {right}")
        if self.anchor and any(p[0].contains(Q(0)) for p in self.pieces):
            raise OverlappingPieces("a piece covers the 0-anchor")

    def all_pieces(self) -> list[tuple[Interval, Fraction]]:
        out = list(self.pieces)
        if self.anchor:
            out.append((closed_interval(0, 0), Q(0)))
        out.sort(key=lambda p: (p[0].lo, p[0].hi))
        return out

    def value_at(self, q: Fraction) -> Fraction:
        for support, v in self.all_pieces():
            if support.contains(q):
                return v
        raise PointNotInDomain(f"{fmt_q(q)} lies in no piece")


@dataclass(frozen=True)
class ModulusTraceEntry:
    n: int
    value_a: Fraction
    value_b: Fraction
    case: str  # "required": value gap >= 2^-n forces a support gap; "vacuous": values too close to constrain
    min_gap: Optional[Fraction]
    ok: bool


@dataclass(frozen=True)
class ModulusCheckResult:
    ok: bool
    counterexample: Optional[tuple[int, Interval, Interval]]
    trace: tuple[ModulusTraceEntry, ...]


def _min_gap_between(groups_a: list[Interval], groups_b: list[Interval]) -> Optional[Fraction]:
    """Smallest distance between two families of disjoint closed intervals."""
    tagged = [(iv.lo, iv.hi, 0) for iv in groups_a] + [(iv.lo, iv.hi, 1) for iv in groups_b]
    tagged.sort()
    best: Optional[Fraction] = None
    last: dict[int, Fraction] = {}
    for lo, hi, tag in tagged:
        other = 1 - tag
        if other in last:
            gap = lo - last[other]
            if gap < 0:
                gap = Q(0)
            if best is None or gap < best:
                best = gap
        cur = last.get(tag)
        last[tag] = hi if cur is None or hi > cur else cur
    return best


def modulus_check_exact(f: PieceTable, h: Modulus, n_max: int) -> ModulusCheckResult:
    """Exact verification that h is a modulus of uniform continuity for f.

    For a piecewise-constant f the modulus condition is equivalent to:
    whenever two pieces carry values at least 2^-n apart, their supports
    are at least 2^-h(n) apart.  The check is literal and exhaustive for
    n <= n_max; the first violating pair (if any) is returned.

    The trace records, per n and per pair of distinct values, whether the
    value gap forced a support-gap check ("required") or was already
    below 2^-n ("vacuous") - the two cases of the modulus argument.
    """
    pieces = f.all_pieces()
    by_value: dict[Fraction, list[Interval]] = {}
    for support, v in pieces:
        by_value.setdefault(v, []).append(support)
    values = sorted(by_value)
    trace: list[ModulusTraceEntry] = []
    counterexample = None
    for n in range(n_max + 1):
        eps = pow2(-n)
        delta = pow2(-h(n))
        for ia in range(len(values)):
            for ib in range(ia + 1, len(values)):
                va, vb = values[ia], values[ib]
                if abs(va - vb) >= eps:
                    gap = _min_gap_between(by_value[va], by_value[vb])
                    ok = gap is None or gap >= delta
                    trace.append(
                        ModulusTraceEntry(n, va, vb, "required", gap, ok)
                    )
                    if not ok and counterexample is None:
                        pa = min(by_value[va], key=lambda iv: iv.lo)
                        pb = min(by_value[vb], key=lambda iv: iv.lo)
                        counterexample = (n, pa, pb)
                else:
                    trace.append(
                        ModulusTraceEntry(n, va, vb, "vacuous", None, True)
                    )
    return ModulusCheckResult(counterexample is None, counterexample, tuple(trace))


# ---------------------------------------------------------------------------
# Piecewise-linear functions (extension doubles)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PLFunction:
    """Piecewise-linear function on [0,1] given by strictly increasing knots."""

    knots: tuple[tuple[Fraction, Fraction], ...]

    def __post_init__(self):
        xs = [x for x, _ in self.knots]
        if not xs or xs[0] != 0 or xs[-1] != 1:
            raise ValueError("knots must start at x=0 and end at x=1")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("knot x-coordinates must be strictly increasing")

    @classmethod
    def from_pairs(cls, pairs) -> "PLFunction":
        return cls(tuple((Q(x), Q(y)) for x, y in pairs))


def pl_eval(F: PLFunction, x: Fraction) -> Fraction:
    """Exact linear interpolation between the bracketing knots."""
    x = Q(x)
    if not 0 <= x <= 1:
        raise OutOfDomain(f"{fmt_q(x)} outside [0,1]")
    xs = [k[0] for k in F.knots]
    i = bisect.bisect_right(xs, x) - 1
    if i == len(xs) - 1:
        return F.knots[-1][1]
    (x0, y0), (x1, y1) = F.knots[i], F.knots[i + 1]
    return y0 + (y1 - y0) * (x - x0) / (x1 - x0)


def pl_lipschitz(F: PLFunction) -> Fraction:
    """Exact best Lipschitz constant (0 for a constant function)."""
    best = Q(0)
    for (x0, y0), (x1, y1) in zip(F.knots, F.knots[1:]):
        slope = abs(y1 - y0) / (x1 - x0)
        if slope > best:
            best = slope
    return best


def _ceil_log2(L: Fraction) -> int:
    t = 0
    while pow2(t) < L:
        t += 1
    return t


def pl_modulus(F: PLFunction) -> Modulus:
    """h(n) = n + ceil(log2 L) for Lipschitz constant L > 1, else h(n) = n.

    Then |x-y| < 2^-h(n) gives |F(x)-F(y)| <= L|x-y| < L * 2^-h(n) <= 2^-n,
    strictly, because |x-y| is strictly below the threshold.
    """
    L = pl_lipschitz(F)
    t = _ceil_log2(L) if L > 1 else 0
    return Modulus.offset(t)


def pl_to_code(F: PLFunction, density: int) -> FuncCode:
    """Compile a PL function into a function code over the dyadic grid.

    For each level i <= density and each dyadic a = j*2^-i the generator
    is (a, 2^-i, F(a), (L+1)*2^-i); the extra 2^-i of output radius keeps
    pairwise consistency strict even at exact dyadic overlaps.
    """
    L = pl_lipschitz(F)
    gens: list[Generator] = []
    for i in range(density + 1):
        r = pow2(-i)
        for j in range((1 << i) + 1):
            a = Q(j, 1 << i)
            gens.append((a, r, pl_eval(F, a), (L + 1) * r))
    return FuncCode.from_list(gens)


def save_pl(F: PLFunction, path) -> None:
    with open(path, "w") as fh:
        for x, y in F.knots:
            fh.write(f"{fmt_q(x)} {fmt_q(y)}\n")


def load_pl(path) -> PLFunction:
    pairs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            x, y = (parse_q(t) for t in line.split())
            pairs.append((x, y))
    return PLFunction.from_pairs(pairs)


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------

Poly = tuple[Fraction, ...]  # coefficients, low degree first


def poly_eval(coeffs: Sequence[Fraction], x: Fraction) -> Fraction:
    acc = Q(0)
    for c in reversed(list(coeffs)):
        acc = acc * x + c
    return acc


def format_poly(coeffs: Sequence[Fraction]) -> str:
    return " ".join(fmt_q(c) for c in coeffs)


def parse_poly(text: str) -> Poly:
    return tuple(parse_q(t) for t in text.split())


@dataclass(frozen=True)
class PolySeq:
    """A sequence of rational polynomials n -> p_n."""

    polys: Callable[[int], Poly]


def weierstrass_check(p: Sequence[Fraction], f: PieceTable, q: Fraction, n: int) -> bool:
    """Exact check of the approximation inequality |f(q) - p(q)| < 2^-n at q."""
    return abs(f.value_at(q) - poly_eval(p, q)) < pow2(-n)
