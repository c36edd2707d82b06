"""Codings of open, closed, and separably closed subsets of [0,1].

Open sets are streams of rational balls (positive information), closed
sets are streams of balls exhausting the complement (negative
information), and separably closed sets are sequences of coded points
whose closure is the set.

Membership in any of these is only semi-decidable, so every query here
returns a three-valued verdict under explicit stage / precision /
budget bounds.  Verdicts are sound certificates (an ``In`` really is in
the ball, an ``Out`` really is in the complement) and monotone: they
never downgrade as the bounds grow.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .errors import RmtwError
from .exactnum import (
    CLOSED,
    OPEN,
    Interval,
    IntervalSet,
    Q,
    RealCode,
    cantor_pair,
    cantor_unpair,
    closed_interval,
    fmt_q,
    ivl_normalize,
    ivl_subtract,
    open_interval,
    parse_q,
    pow2,
    rational_index,
    unit_rational,
)


class DisjointnessViolation(RmtwError):
    """Intervals passed to a dense-sequence construction overlap."""


Ball = tuple[Fraction, Fraction]  # (center, radius), radius > 0


class BallStream:
    """A pure stream of rational balls; ``None`` ticks emit nothing.

    The stream position doubles as the ball's index.  Gaps (None) let a
    stream stop enumerating permanently without losing totality.
    """

    __slots__ = ("_fn", "_cache")

    def __init__(self, fn: Callable[[int], Optional[Ball]]):
        self._fn = fn
        self._cache: list[Optional[Ball]] = []

    @classmethod
    def from_list(cls, balls: Sequence[Ball]) -> "BallStream":
        frozen = [(Q(a), Q(r)) for a, r in balls]
        return cls(lambda s: frozen[s] if s < len(frozen) else None)

    @classmethod
    def from_intervals(cls, intervals: Sequence[Interval]) -> "BallStream":
        return cls.from_list(
            [(iv.midpoint, iv.length / 2) for iv in intervals if not iv.is_empty]
        )

    def at(self, s: int) -> Optional[Ball]:
        while len(self._cache) <= s:
            self._cache.append(self._fn(len(self._cache)))
        return self._cache[s]

    def prefix(self, stage: int) -> list[tuple[int, Fraction, Fraction]]:
        """Balls emitted at ticks < stage, with their tick indices."""
        out = []
        for s in range(stage):
            ball = self.at(s)
            if ball is not None:
                out.append((s, ball[0], ball[1]))
        return out

    def prefix_intervals(self, stage: int) -> list[Interval]:
        return [
            open_interval(a - r, a + r) for _, a, r in self.prefix(stage)
        ]


def save_ball_stream(stream: BallStream, stage: int, path) -> None:
    """Write the emitted prefix in the "s center radius" line format."""
    with open(path, "w") as fh:
        for s, a, r in stream.prefix(stage):
            fh.write(f"{s} {fmt_q(a)} {fmt_q(r)}\n")


def load_ball_stream(path) -> BallStream:
    balls: dict[int, Ball] = {}
    top = -1
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            s_txt, a_txt, r_txt = line.split()
            s = int(s_txt)
            balls[s] = (parse_q(a_txt), parse_q(r_txt))
            top = max(top, s)
    frozen = [balls.get(s) for s in range(top + 1)]
    return BallStream(lambda s: frozen[s] if s < len(frozen) else None)


@dataclass(frozen=True)
class OpenSetCode:
    balls: BallStream


@dataclass(frozen=True)
class ClosedSetCode:
    complement: BallStream


class SepClosedCode:
    """A separably closed set: a total sequence of coded points."""

    __slots__ = ("_fn", "_cache")

    def __init__(self, fn: Callable[[int], RealCode]):
        self._fn = fn
        self._cache: dict[int, RealCode] = {}

    def point(self, n: int) -> RealCode:
        if n not in self._cache:
            self._cache[n] = self._fn(n)
        return self._cache[n]


@dataclass(frozen=True)
class CompactnessWitness:
    """Finite 2^-i nets witnessing compactness of [0,1]."""

    nets: Callable[[int], list[Fraction]]


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class In:
    ball_index: int


@dataclass(frozen=True)
class Unknown:
    pass


@dataclass(frozen=True)
class Out:
    ball_index: int


@dataclass(frozen=True)
class NotYetRefuted:
    pass


@dataclass(frozen=True)
class Witnessed:
    index: int


@dataclass(frozen=True)
class NoWitnessFound:
    pass


def _certified_in_ball(x: RealCode, center: Fraction, radius: Fraction, prec: int) -> bool:
    # Scanning every precision <= prec (not just prec itself) is what makes
    # the verdict monotone in prec.
    for j in range(prec + 1):
        if abs(x.approx(j) - center) + pow2(-j) < radius:
            return True
    return False


def open_member_at(U: OpenSetCode, x: RealCode, stage: int, prec: int):
    """Certified membership of x in the open set, at bounded stage/precision.

    ``In(s)`` guarantees the real coded by x lies in ball s.  ``Unknown``
    carries no information; it may flip to ``In`` at larger bounds.
    """
    for s in range(stage + 1):
        ball = U.balls.at(s)
        if ball is None:
            continue
        if _certified_in_ball(x, ball[0], ball[1], prec):
            return In(s)
    return Unknown()


def closed_member_refuted_at(C: ClosedSetCode, x: RealCode, stage: int, prec: int):
    """Dual of :func:`open_member_at`: Out(s) certifies x outside the closed set."""
    verdict = open_member_at(OpenSetCode(C.complement), x, stage, prec)
    if isinstance(verdict, In):
        return Out(verdict.ball_index)
    return NotYetRefuted()


def _sep_precision(q: Fraction) -> int:
    # Smallest p with 2^-p <= q/8, so the certificate slack 2^-(p-1) is
    # at most q/4 and an exact hit always certifies.
    p = 0
    while pow2(-p) * 8 > q:
        p += 1
    return p


def sep_member_at(S: SepClosedCode, x: RealCode, q: Fraction, budget: int):
    """Search for a listed point within q of x, scanning indices <= budget.

    Witnessed(n) certifies |x - x_n| < q exactly; the verdict is monotone
    in the budget.  NoWitnessFound is not a refutation.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    p = _sep_precision(q)
    slack = pow2(-p + 1)
    for n in range(budget + 1):
        xn = S.point(n)
        if abs(x.approx(p) - xn.approx(p)) + slack < q:
            return Witnessed(n)
    return NoWitnessFound()


def snapshot_complement(C: ClosedSetCode, stage: int, ambient: Interval) -> IntervalSet:
    """Stage-bounded over-approximation of the closed set inside ``ambient``.

    Subtracts the first ``stage`` enumerated complement balls from the
    ambient closed interval; monotonically shrinks as the stage grows.
    """
    opens = ivl_normalize(C.complement.prefix_intervals(stage), kind=OPEN)
    return ivl_subtract(ambient, opens)


# ---------------------------------------------------------------------------
# Dense sequences for {0} u U J_e  (structured closed sets)
# ---------------------------------------------------------------------------


def _check_disjoint(J: Sequence[Interval]) -> None:
    ordered = sorted(J, key=lambda iv: (iv.lo, iv.hi))
    for left, right in zip(ordered, ordered[1:]):
        if right.lo <= left.hi:
            raise DisjointnessViolation(f"{left} and {right} are not disjoint")


def dense_sequence(J: Sequence[Interval]) -> SepClosedCode:
    """Enumerate a dense subset of {0} u U_e J_e as a separably closed code.

    Position 0 lists the point 0; position n+1 unpairs to (e, i) and
    lists the i-th rational of J_e under the canonical enumeration of
    [0,1] carried onto the interval (indices beyond the family repeat 0).
    Every rational of every J_e appears, so the closure of the listed
    points is exactly {0} u U_e J_e.
    """
    for iv in J:
        if iv.kind != CLOSED:
            raise DisjointnessViolation("dense_sequence expects closed intervals")
    _check_disjoint(J)
    family = tuple(J)

    def point(n: int) -> RealCode:
        if n == 0:
            return RealCode.constant(Q(0))
        e, i = cantor_unpair(n - 1)
        if e >= len(family):
            return RealCode.constant(Q(0))
        iv = family[e]
        return RealCode.constant(iv.lo + unit_rational(i) * (iv.hi - iv.lo))

    return SepClosedCode(point)


def dense_witness_budget(J: Sequence[Interval], i_max: int = 3) -> int:
    """A budget under which dense_sequence surely lists endpoints/midpoints."""
    return 2 + cantor_pair(max(len(J), 1), i_max)


def rational_set_variant(J: Sequence[Interval], q: Fraction) -> bool:
    """Decidable set-of-rationals variant of the dense sequence.

    Accepts 0 and every rational q lying in some J_e with e below q's
    canonical code (position in the fixed enumeration of the rationals
    of [0,1]).  The accepted set is dense in {0} u U_e J_e.
    """
    if q == 0:
        return True
    if not 0 <= q <= 1:
        return False
    code = rational_index(q)
    return any(e < code and J[e].contains(q) for e in range(min(len(J), code)))


def unit_compactness_witness() -> CompactnessWitness:
    """The dyadic nets <j * 2^-i : j <= 2^i> witnessing compactness of [0,1]."""

    def nets(i: int) -> list[Fraction]:
        return [Q(j, 1 << i) for j in range((1 << i) + 1)]

    return CompactnessWitness(nets)
