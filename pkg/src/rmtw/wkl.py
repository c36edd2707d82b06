"""Separation instances, Kleene trees, and open covers of [0,1].

A separation instance is a pair of injections g0, g1 with disjoint
ranges; its Kleene tree holds exactly the binary strings compatible with
"bit e = 1 iff e is in range(g0)" on the observed prefix, so infinite
paths correspond to separating sets.

The singular ("Specker") cover encloses the n-th rational of [0,1] in an
interval of length 2^-(n+c-1).  For c >= 3 the total length is below
1/2, so while every rational is covered, no finite prefix covers any
interval of length above 2^-(c-2).  This cover is the stand-in for the
no-finite-subcover hypothesis that drives every downstream construction:
all those constructions only ever probe nondegenerate rational
intervals, which always meet the cover.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .errors import RmtwError
from .exactnum import (
    OPEN,
    Interval,
    IntervalSet,
    Q,
    fmt_q,
    ivl_normalize,
    open_interval,
    parse_q,
    pow2,
    unit_rational,
    uncovered_point,
)

COVERS_ALL_RATIONALS = "covers-all-rationals"
COVERS_ALL_REALS = "covers-all-reals"
CLAIM_UNKNOWN = "unknown"

CLAMP_LO = Q(-1, 4)
CLAMP_HI = Q(5, 4)
CLAMP_INSET = pow2(-10)


class InstanceViolation(RmtwError):
    """Injectivity or range-disjointness failed on an inspected prefix."""


@dataclass(frozen=True)
class SeparationInstance:
    """Finite observed prefixes of two injections with disjoint ranges.

    g0[m] and g1[m] are the values at stage m.  Desk-scale runs use
    finite prefixes throughout; the stage order is the enumeration order.
    """

    g0: tuple[int, ...]
    g1: tuple[int, ...]

    def validate(self) -> None:
        for name, g in (("g0", self.g0), ("g1", self.g1)):
            if len(set(g)) != len(g):
                raise InstanceViolation(f"{name} is not injective: {g}")
        common = set(self.g0) & set(self.g1)
        if common:
            raise InstanceViolation(f"ranges intersect at {sorted(common)}")

    def hit(self, e: int) -> Optional[tuple[int, int]]:
        """The least stage naming e, as (which injection, stage), if any."""
        best: Optional[tuple[int, int]] = None
        for which, g in ((0, self.g0), (1, self.g1)):
            for stage, value in enumerate(g):
                if value == e and (best is None or stage < best[1]):
                    best = (which, stage)
        return best

    @property
    def range0(self) -> frozenset[int]:
        return frozenset(self.g0)

    @property
    def range1(self) -> frozenset[int]:
        return frozenset(self.g1)

    @classmethod
    def from_inline(cls, text: str) -> "SeparationInstance":
        """Parse "g0:0,2;g1:1" (either part may be empty or absent)."""
        parts = {"g0": (), "g1": ()}
        for chunk in text.split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            name, _, vals = chunk.partition(":")
            name = name.strip()
            if name not in parts:
                raise InstanceViolation(f"unknown stream {name!r}")
            parts[name] = tuple(
                int(v) for v in vals.split(",") if v.strip() != ""
            )
        return cls(parts["g0"], parts["g1"])


def save_instance(inst: SeparationInstance, path) -> None:
    with open(path, "w") as fh:
        for m, v in enumerate(inst.g0):
            fh.write(f"g0 {m} {v}\n")
        for m, v in enumerate(inst.g1):
            fh.write(f"g1 {m} {v}\n")


def load_instance(path) -> SeparationInstance:
    rows: dict[str, dict[int, int]] = {"g0": {}, "g1": {}}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            name, m_txt, v_txt = line.split()
            if name not in rows:
                raise InstanceViolation(f"unknown stream {name!r} in {path}")
            rows[name][int(m_txt)] = int(v_txt)
    out = {}
    for name, entries in rows.items():
        if entries and sorted(entries) != list(range(len(entries))):
            raise InstanceViolation(f"{name} stages must be 0..n without gaps")
        out[name] = tuple(entries[m] for m in sorted(entries))
    return SeparationInstance(out["g0"], out["g1"])


# ---------------------------------------------------------------------------
# Binary trees
# ---------------------------------------------------------------------------


class BinTree:
    """A level-bounded decision procedure for membership of binary strings."""

    __slots__ = ("_member", "max_level", "_cache")

    def __init__(self, member: Callable[[str], bool], max_level: int):
        self._member = member
        self.max_level = max_level
        self._cache: dict[str, bool] = {}

    def member(self, sigma: str) -> bool:
        if len(sigma) > self.max_level:
            raise ValueError(f"string longer than tree level bound {self.max_level}")
        if sigma not in self._cache:
            self._cache[sigma] = self._member(sigma)
        return self._cache[sigma]

    def level(self, d: int) -> list[str]:
        """All live strings of length d, lexicographically."""
        if d == 0:
            return [""] if self.member("") else []
        out = []
        for parent in self.level(d - 1):
            for bit in "01":
                child = parent + bit
                if self.member(child):
                    out.append(child)
        return out

    def minimal_dead(self, d: int) -> list[str]:
        """Strings of length d outside the tree whose parent is live."""
        if d == 0:
            return []
        out = []
        for parent in self.level(d - 1):
            for bit in "01":
                child = parent + bit
                if not self.member(child):
                    out.append(child)
        return out

    def check_prefix_closed(self, depth: int) -> bool:
        for d in range(1, depth + 1):
            for sigma in self.level(d):
                if not self.member(sigma[:-1]):
                    return False
        return True


def kleene_tree(inst: SeparationInstance, max_level: int = 24) -> BinTree:
    """The tree of strings compatible with separating the observed ranges.

    A string sigma is live iff for every e < |sigma| and stage j < |sigma|:
    g0(j) = e forces sigma(e) = 1 and g1(j) = e forces sigma(e) = 0.
    Infinite paths are exactly the (characteristic functions of)
    separating sets.
    """
    inst.validate()
    forced: dict[int, tuple[int, int]] = {}
    for j, v in enumerate(inst.g0):
        forced[v] = (1, j)
    for j, v in enumerate(inst.g1):
        forced[v] = (0, j)

    def member(sigma: str) -> bool:
        n = len(sigma)
        for e, (bit, j) in forced.items():
            if e < n and j < n and sigma[e] != str(bit):
                return False
        return True

    return BinTree(member, max_level)


def sepset_to_path(X: frozenset[int] | set[int]) -> Callable[[int], int]:
    return lambda e: 1 if e in X else 0


def path_to_sepset(branch: Callable[[int], int], upto: int) -> frozenset[int]:
    return frozenset(e for e in range(upto) if branch(e) == 1)


# ---------------------------------------------------------------------------
# Cover streams
# ---------------------------------------------------------------------------


class CoverStream:
    """A pure stream of open rational intervals with a coverage claim tag.

    ``None`` ticks emit nothing (used by clamping, which may drop
    intervals, and by tree covers, which emit only at dead nodes).
    """

    __slots__ = ("_fn", "tag", "cache_key", "_cache")

    def __init__(
        self,
        fn: Callable[[int], Optional[Interval]],
        tag: str = CLAIM_UNKNOWN,
        cache_key: Optional[tuple] = None,
    ):
        self._fn = fn
        self.tag = tag
        self.cache_key = cache_key
        self._cache: list[Optional[Interval]] = []

    @classmethod
    def from_list(cls, intervals: Sequence[Interval], tag: str = CLAIM_UNKNOWN) -> "CoverStream":
        frozen = list(intervals)
        return cls(lambda k: frozen[k] if k < len(frozen) else None, tag)

    def at(self, k: int) -> Optional[Interval]:
        while len(self._cache) <= k:
            self._cache.append(self._fn(len(self._cache)))
        return self._cache[k]

    def prefix(self, n: int) -> list[Interval]:
        """Intervals emitted at ticks < n."""
        return [iv for iv in (self.at(k) for k in range(n)) if iv is not None]


def save_cover(cov: CoverStream, n: int, path) -> None:
    with open(path, "w") as fh:
        for iv in cov.prefix(n):
            fh.write(f"{fmt_q(iv.lo)} {fmt_q(iv.hi)}\n")


def load_cover(path, tag: str = CLAIM_UNKNOWN) -> CoverStream:
    intervals = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            a, b = (parse_q(t) for t in line.split())
            if not a < b:
                raise RmtwError(f"cover interval must have a < b, got {line!r}")
            intervals.append(open_interval(a, b))
    return CoverStream.from_list(intervals, tag)


def specker_cover(shrink_exponent: int = 3) -> CoverStream:
    """The singular cover: the n-th rational inside a 2^-(n+c)-radius ball.

    Total length sum 2^-(n+c-1) = 2^-(c-2) < 1 for c >= 3, so no finite
    prefix covers any interval of length above 2^-(c-2), yet every
    rational of [0,1] is interior to its own interval.
    """
    c = shrink_exponent
    if c < 3:
        raise RmtwError("shrink exponent must be at least 3")

    def gen(n: int) -> Interval:
        r = unit_rational(n)
        radius = pow2(-(n + c))
        return open_interval(r - radius, r + radius)

    return CoverStream(gen, COVERS_ALL_RATIONALS, cache_key=("specker", c))


def tree_to_cover(T: BinTree) -> CoverStream:
    """Open intervals around the dyadic cells of minimal dead nodes.

    A dead node sigma of depth d contributes the cell [0.sigma,
    0.sigma + 2^-d] padded by 2^-(d+2) on both sides; the padding closes
    the dyadic boundary points (which have a second binary expansion)
    when the tree has no path.  Nodes are emitted in depth order,
    lexicographically within a depth.
    """
    found: list[Interval] = []
    state = {"depth": 0}

    def extend() -> bool:
        if state["depth"] >= T.max_level:
            return False
        state["depth"] += 1
        d = state["depth"]
        pad = pow2(-(d + 2))
        width = pow2(-d)
        for sigma in T.minimal_dead(d):
            base = sum(pow2(-(i + 1)) for i, bit in enumerate(sigma) if bit == "1")
            found.append(open_interval(base - pad, base + width + pad))
        return True

    def gen(k: int) -> Optional[Interval]:
        while len(found) <= k:
            if not extend():
                return None
        return found[k]

    return CoverStream(gen, CLAIM_UNKNOWN)


def clamp_cover(cov: CoverStream) -> CoverStream:
    """Clamp every interval strictly inside (-1/4, 5/4), dropping empties.

    The inset 2^-10 keeps the required endpoint inequalities strict.
    Intervals inside [0,1] are untouched, so coverage of the unit
    interval's rationals is preserved.
    """
    lo = CLAMP_LO + CLAMP_INSET
    hi = CLAMP_HI - CLAMP_INSET

    def gen(k: int) -> Optional[Interval]:
        iv = cov.at(k)
        if iv is None:
            return None
        a, b = max(iv.lo, lo), min(iv.hi, hi)
        if a >= b:
            return None
        return open_interval(a, b)

    key = ("clamped",) + cov.cache_key if cov.cache_key else None
    return CoverStream(gen, cov.tag, cache_key=key)


def no_finite_subcover_witness(
    base: Interval, prefix: Sequence[Interval]
) -> Optional[Fraction]:
    """A rational of ``base`` missed by the given finite cover prefix."""
    return uncovered_point(base, ivl_normalize(list(prefix), kind=OPEN))
