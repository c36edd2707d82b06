"""The staged pre-domain construction, uniformly in the band index e.

Given any clamped open cover of [0,1] with no finite subcover, the
construction builds, inside each band I_e = [2^-(2e+1), 2^-2e], a
sequence of shrinking closed intervals I_{e,m} with marked rationals
q_{e,m}, helper open intervals (c,d), least cover indices k_{e,m}, and
finite open sets U_{e,m} accounting exactly for the cover mass spent so
far, such that {0} u U_{e,m} I_{e,m} is closed and every I_{e,m} carries
its own transferred cover with no finite subcover, disjoint from every
other I_{e',m'}.

Determinism: every "choose" is pinned - the least cover index meeting
the interior of the leftmost nondegenerate component, the open middle
third of the resulting overlap, the closed middle half of that (shrunk
symmetrically to length 2^-(m+1) when longer), and the midpoint rational.

Because all of those choices commute exactly with the increasing affine
map carrying [0,1] onto I_e, the per-band stages are affine images of a
single scan in base coordinates (only the absolute length cap differs
per band).  :class:`PredomainPlan` exploits this: one
:class:`MasterScan` per cover serves every band, and
:func:`plan_step` remains the direct per-band reference that the master
path is tested against, value for value.
"""

from __future__ import annotations

import bisect
import weakref
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .errors import ContractError
from .exactnum import (
    CLOSED,
    OPEN,
    Interval,
    IntervalSet,
    Q,
    cantor_unpair,
    closed_interval,
    fmt_q,
    ivl_normalize,
    ivl_subtract,
    ivl_subtract_set,
    open_interval,
    open_minus_closed,
    parse_interval,
    parse_interval_set,
    parse_q,
    pow2,
)
from .sets import BallStream, ClosedSetCode
from .wkl import CoverStream, clamp_cover


class Stalled(ContractError):
    """No cover interval met the target component within the scan budget."""


class Degenerate(ContractError):
    """The remaining set has no nondegenerate component: the cover admitted
    a finite subcover, violating the no-finite-subcover contract."""


def base_interval(e: int) -> Interval:
    """The band I_e = [2^-(2e+1), 2^-2e]."""
    return closed_interval(pow2(-(2 * e + 1)), pow2(-2 * e))


def band_scale(e: int) -> Fraction:
    return pow2(-(2 * e + 1))


def transfer_to_Ie(cov: CoverStream, e: int) -> CoverStream:
    """Carry a clamped cover onto I_e via x -> (x+1) / 2^(2e+1).

    Images for distinct bands are pairwise disjoint: the clamp bounds
    (-1/4, 5/4) map into (3/8, 9/8) * 2^-2e, and those ranges never meet.
    """
    scale = band_scale(e)

    def gen(k: int) -> Optional[Interval]:
        iv = cov.at(k)
        if iv is None:
            return None
        return open_interval((iv.lo + 1) * scale, (iv.hi + 1) * scale)

    key = ("transfer", e) + cov.cache_key if cov.cache_key else None
    return CoverStream(gen, cov.tag, cache_key=key)


# ---------------------------------------------------------------------------
# Reference per-band stepping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PlanEntry:
    """The stage-(e,m) artifacts: interval, marked rational, helper, index."""

    e: int
    m: int
    interval: Interval
    q: Fraction
    helper: Interval
    k: int


@dataclass(frozen=True)
class StageState:
    """Per-band construction state after stage m-1 (m steps completed)."""

    e: int
    m: int
    D: IntervalSet
    k_high: int
    intervals: tuple[Interval, ...]


def initial_state(e: int) -> StageState:
    return StageState(e, 0, IntervalSet((base_interval(e),), CLOSED), -1, ())


def _leftmost_nondegenerate(D: IntervalSet) -> Optional[Interval]:
    for comp in D.components:
        if not comp.is_degenerate:
            return comp
    return None


def _carve(overlap_lo: Fraction, overlap_hi: Fraction, m: int):
    """Middle third, then middle half shrunk to length <= 2^-(m+1)."""
    span = overlap_hi - overlap_lo
    c = overlap_lo + span / 3
    d = overlap_lo + 2 * span / 3
    width = d - c
    h1 = c + width / 4
    h2 = c + 3 * width / 4
    cap = pow2(-(m + 1))
    if h2 - h1 > cap:
        mid = (h1 + h2) / 2
        h1, h2 = mid - cap / 2, mid + cap / 2
    return open_interval(c, d), closed_interval(h1, h2)


def plan_step(
    state: StageState, cov_e: CoverStream, scan_budget: int = 100_000
) -> tuple[StageState, PlanEntry, IntervalSet]:
    """One stage of the construction on a transferred cover (reference path).

    Picks the least cover index whose interval meets the interior of the
    leftmost nondegenerate component of the current remainder, carves
    I_{e,m} and q_{e,m} out of the overlap, and accounts the newly spent
    cover mass into U_{e,m}.

    Raises :class:`Degenerate` when no nondegenerate component remains
    and :class:`Stalled` when no intersecting interval appears within the
    scan budget; both signal that the cover broke its contract.
    """
    e, m = state.e, state.m
    target = _leftmost_nondegenerate(state.D)
    if target is None:
        raise Degenerate(f"no nondegenerate component left in band {e} at stage {m}")

    k = state.k_high + 1
    scanned = 0
    while True:
        if scanned > scan_budget:
            raise Stalled(f"band {e} stage {m}: no hit within {scan_budget} indices")
        iv = cov_e.at(k)
        if iv is not None and max(iv.lo, target.lo) < min(iv.hi, target.hi):
            break
        k += 1
        scanned += 1

    overlap_lo, overlap_hi = max(iv.lo, target.lo), min(iv.hi, target.hi)
    helper, interval = _carve(overlap_lo, overlap_hi, m)
    entry = PlanEntry(e, m, interval, interval.midpoint, helper, k)

    batch = ivl_normalize(
        [w for w in (cov_e.at(i) for i in range(state.k_high + 1, k + 1)) if w is not None],
        kind=OPEN,
    )
    new_D = ivl_subtract_set(state.D, batch)
    intervals = state.intervals + (interval,)
    covered = ivl_normalize(
        [w for w in (cov_e.at(i) for i in range(k + 1)) if w is not None], kind=OPEN
    )
    U = open_minus_closed(covered, ivl_normalize(list(intervals), kind=CLOSED))
    new_state = StageState(e, m + 1, new_D, k, intervals)
    return new_state, entry, U


# ---------------------------------------------------------------------------
# Master scan in base coordinates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MasterStep:
    k: int
    component: tuple[Fraction, Fraction]
    overlap: tuple[Fraction, Fraction]
    cd: tuple[Fraction, Fraction]
    half: tuple[Fraction, Fraction]


class MasterScan:
    """Band-independent stage geometry, computed once per cover.

    Runs the stepping rules on [0,1] against the clamped base cover and
    records, per stage, the chosen index, target component, overlap,
    middle third, and unshrunk middle half.  Band entries are affine
    images of these (the length cap is applied per band afterwards).
    """

    def __init__(self, clamped: CoverStream, scan_budget: int = 500_000):
        self.cover = clamped
        self.scan_budget = scan_budget
        self.steps: list[MasterStep] = []
        self._removed: list[Interval] = []
        self._removed_los: list[Fraction] = []
        self._k_next = 0

    def _insert_removed(self, iv: Interval) -> None:
        pos = bisect.bisect_left(self._removed_los, iv.lo)
        start = pos
        if start > 0 and self._removed[start - 1].hi > iv.lo:
            start -= 1
        end = pos
        while end < len(self._removed) and self._removed[end].lo < iv.hi:
            end += 1
        merged = self._removed[start:end]
        lo = min([iv.lo] + [s.lo for s in merged])
        hi = max([iv.hi] + [s.hi for s in merged])
        self._removed[start:end] = [open_interval(lo, hi)]
        self._removed_los[start:end] = [lo]

    def _leftmost(self) -> Optional[tuple[Fraction, Fraction]]:
        cur = Q(0)
        one = Q(1)
        for riv in self._removed:
            if riv.hi <= cur:
                continue
            if riv.lo > cur:
                hi = min(riv.lo, one)
                if hi > cur:
                    return cur, hi
            cur = max(cur, riv.hi)
            if cur >= one:
                return None
        if cur < one:
            return cur, one
        return None

    def step(self, m: int) -> MasterStep:
        while len(self.steps) <= m:
            self._advance()
        return self.steps[m]

    def _advance(self) -> None:
        m = len(self.steps)
        target = self._leftmost()
        if target is None:
            raise Degenerate(f"base remainder degenerate at stage {m}")
        t_lo, t_hi = target
        k = self._k_next
        scanned = 0
        while True:
            if scanned > self.scan_budget:
                raise Stalled(
                    f"base stage {m}: no hit within {self.scan_budget} indices"
                )
            iv = self.cover.at(k)
            if iv is not None and max(iv.lo, t_lo) < min(iv.hi, t_hi):
                break
            k += 1
            scanned += 1
        for i in range(self._k_next, k + 1):
            w = self.cover.at(i)
            if w is not None:
                self._insert_removed(w)
        self._k_next = k + 1
        o_lo, o_hi = max(iv.lo, t_lo), min(iv.hi, t_hi)
        span = o_hi - o_lo
        c = o_lo + span / 3
        d = o_lo + 2 * span / 3
        width = d - c
        self.steps.append(
            MasterStep(
                k,
                (t_lo, t_hi),
                (o_lo, o_hi),
                (c, d),
                (c + width / 4, c + 3 * width / 4),
            )
        )


_MASTER_CACHE: "weakref.WeakValueDictionary[tuple, MasterScan]" = (
    weakref.WeakValueDictionary()
)


def _get_master(clamped: CoverStream, scan_budget: int) -> MasterScan:
    key = clamped.cache_key
    if key is None:
        return MasterScan(clamped, scan_budget)
    cached = _MASTER_CACHE.get(key)
    if cached is None or cached.scan_budget < scan_budget:
        cached = MasterScan(clamped, scan_budget)
        _MASTER_CACHE[key] = cached
    return cached


# ---------------------------------------------------------------------------
# Plans
# ---------------------------------------------------------------------------


class PredomainPlan:
    """Lazily built stage artifacts for every band, backed by a master scan."""

    def __init__(self, cover: CoverStream, scan_budget: int = 500_000):
        self.cover = cover
        self.clamped = clamp_cover(cover)
        self.master = _get_master(self.clamped, scan_budget)
        self._transferred: dict[int, CoverStream] = {}
        self._U: dict[tuple[int, int], IntervalSet] = {}
        self._cov_norm: dict[int, IntervalSet] = {}

    def geometry(self, e: int, m: int) -> PlanEntry:
        step = self.master.step(m)
        scale = band_scale(e)
        a = lambda x: (x + 1) * scale
        h1, h2 = step.half
        cap = pow2(-(m + 1))
        if (h2 - h1) * scale > cap:
            mid = a((h1 + h2) / 2)
            interval = closed_interval(mid - cap / 2, mid + cap / 2)
        else:
            interval = closed_interval(a(h1), a(h2))
        helper = open_interval(a(step.cd[0]), a(step.cd[1]))
        return PlanEntry(e, m, interval, interval.midpoint, helper, step.k)

    def q(self, e: int, m: int) -> Fraction:
        return self.geometry(e, m).q

    def _covered_base(self, m: int) -> IntervalSet:
        if m not in self._cov_norm:
            k = self.master.step(m).k
            self._cov_norm[m] = ivl_normalize(
                [iv for iv in (self.clamped.at(i) for i in range(k + 1)) if iv],
                kind=OPEN,
            )
        return self._cov_norm[m]

    def U(self, e: int, m: int) -> IntervalSet:
        """Cover mass spent through stage m, minus the carved intervals.

        Equals the normal form of U_{k <= k_m} (a^e_k, b^e_k) minus
        U_{n <= m} I_{e,n}; computed on demand (the set can be large at
        deep stages and nothing on the decoding path consumes it).
        """
        if (e, m) not in self._U:
            scale = band_scale(e)
            covered = IntervalSet(
                tuple(
                    open_interval((iv.lo + 1) * scale, (iv.hi + 1) * scale)
                    for iv in self._covered_base(m)
                ),
                OPEN,
            )
            carved = ivl_normalize(
                [self.geometry(e, n).interval for n in range(m + 1)], kind=CLOSED
            )
            self._U[(e, m)] = open_minus_closed(covered, carved)
        return self._U[(e, m)]

    def transferred_cover(self, e: int) -> CoverStream:
        if e not in self._transferred:
            self._transferred[e] = transfer_to_Ie(self.clamped, e)
        return self._transferred[e]

    def local_cover(self, e: int, m: int) -> CoverStream:
        return _local_cover_stream(self.clamped, self.geometry(e, m))

    def dump(self, e_max: int, m_max: int) -> str:
        lines = []
        for e in range(e_max + 1):
            for m in range(m_max + 1):
                g = self.geometry(e, m)
                lines.append(
                    f"{e} {m} {g.interval} {fmt_q(g.q)} {g.helper} {g.k} {self.U(e, m)}"
                )
        return "\n".join(lines) + "\n"


def _local_cover_stream(clamped: CoverStream, entry: PlanEntry) -> CoverStream:
    """The band cover carried onto I_{e,m} and trimmed to its helper interval.

    Affine map: 0 -> left endpoint, 1 -> right endpoint of I_{e,m}; every
    image is intersected with (c,d)^{e,m}, which pins item (v): local
    cover intervals never meet any other I_{e',m'}.
    """
    u, w = entry.interval.lo, entry.interval.hi
    span = w - u
    c, d = entry.helper.lo, entry.helper.hi

    def gen(k: int) -> Optional[Interval]:
        iv = clamped.at(k)
        if iv is None:
            return None
        lo = max(u + iv.lo * span, c)
        hi = min(u + iv.hi * span, d)
        if lo >= hi:
            return None
        return open_interval(lo, hi)

    return CoverStream(gen, clamped.tag)


class LoadedPlan:
    """Plan artifacts parsed from a dump, verifiable against a cover."""

    def __init__(self, entries: dict, U: dict, cover: CoverStream):
        self.entries = entries
        self.Us = U
        self.cover = cover
        self.clamped = clamp_cover(cover)
        self._transferred: dict[int, CoverStream] = {}

    def geometry(self, e: int, m: int) -> PlanEntry:
        try:
            return self.entries[(e, m)]
        except KeyError:
            raise ContractError(f"plan dump has no entry for (e={e}, m={m})")

    def q(self, e: int, m: int) -> Fraction:
        return self.geometry(e, m).q

    def U(self, e: int, m: int) -> IntervalSet:
        return self.Us[(e, m)]

    def transferred_cover(self, e: int) -> CoverStream:
        if e not in self._transferred:
            self._transferred[e] = transfer_to_Ie(self.clamped, e)
        return self._transferred[e]

    def local_cover(self, e: int, m: int) -> CoverStream:
        return _local_cover_stream(self.clamped, self.geometry(e, m))


def load_plan_dump(path, cover: CoverStream) -> LoadedPlan:
    entries: dict = {}
    Us: dict = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            e_txt, m_txt, ivl_txt, q_txt, cd_txt, k_txt, u_txt = line.split()
            e, m = int(e_txt), int(m_txt)
            entries[(e, m)] = PlanEntry(
                e,
                m,
                parse_interval(ivl_txt),
                parse_q(q_txt),
                parse_interval(cd_txt),
                int(k_txt),
            )
            Us[(e, m)] = parse_interval_set(u_txt)
    return LoadedPlan(entries, Us, cover)


# ---------------------------------------------------------------------------
# The pre-domain as a closed-set code
# ---------------------------------------------------------------------------


def predomain_code(plan, dovetail_bound: int) -> ClosedSetCode:
    """Closed-set code for {0} u U_{e,m} I_{e,m}.

    Enumerates, in the fixed pairing order on (e, m), the inter-band gap
    interval (2^-(2e+2), 2^-(2e+1)) at each band's first visit followed
    by the members of U_{e,m}.  The point 0 is never refuted: every
    emitted interval keeps a positive distance from it.
    """
    items: list[tuple[Fraction, Fraction]] = []
    state = {"t": 0}

    def ensure(idx: int) -> None:
        while len(items) <= idx and state["t"] < dovetail_bound:
            e, m = cantor_unpair(state["t"])
            state["t"] += 1
            if m == 0:
                gap = open_interval(pow2(-(2 * e + 2)), pow2(-(2 * e + 1)))
                items.append((gap.midpoint, gap.length / 2))
            for comp in plan.U(e, m):
                items.append((comp.midpoint, comp.length / 2))

    def gen(s: int):
        ensure(s)
        return items[s] if s < len(items) else None

    return ClosedSetCode(BallStream(gen))


# ---------------------------------------------------------------------------
# Invariant verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InvariantViolation:
    item: str
    e: int
    m: int
    detail: str


@dataclass(frozen=True)
class InvariantReport:
    violations: tuple[InvariantViolation, ...]
    checked: int

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_plan_invariants(plan, e_max: int, m_max: int) -> InvariantReport:
    """Exact checks of the construction's contract over e <= e_max, m <= m_max.

    Items (i)-(v), both displayed stage equalities, the increasing
    least-index rule, and the pinned carving choices are all verified by
    exact rational arithmetic; every failure is reported, none raised.
    Works identically on live plans and loaded dumps.
    """
    bad: list[InvariantViolation] = []
    checked = 0

    def flag(item, e, m, detail):
        bad.append(InvariantViolation(item, e, m, detail))

    geoms = {
        (e, m): plan.geometry(e, m)
        for e in range(e_max + 1)
        for m in range(m_max + 1)
    }

    for e in range(e_max + 1):
        band = base_interval(e)
        cov_e = plan.transferred_cover(e)
        prev_k = -1
        D = IntervalSet((band,), CLOSED)
        carved: list[Interval] = []
        spent_U = IntervalSet.empty(OPEN)
        for m in range(m_max + 1):
            g = geoms[(e, m)]
            U = plan.U(e, m)
            checked += 1

            # (ii) the marked rational sits inside its interval
            if not g.interval.contains(g.q):
                flag("ii", e, m, f"q={fmt_q(g.q)} outside {g.interval}")
            # (iii) containment and length
            if not (band.lo <= g.interval.lo and g.interval.hi <= band.hi):
                flag("iii", e, m, f"{g.interval} escapes band {band}")
            if g.interval.length > pow2(-(m + 1)):
                flag("iii", e, m, f"length {fmt_q(g.interval.length)} > 2^-{m + 1}")
            if not (g.helper.lo < g.interval.lo and g.interval.hi < g.helper.hi):
                flag("iii", e, m, f"{g.interval} not strictly inside helper {g.helper}")
            if not (band.lo <= g.helper.lo and g.helper.hi <= band.hi):
                flag("iii", e, m, f"helper {g.helper} escapes band {band}")

            # least-index rule against the frozen remainder
            if g.k <= prev_k:
                flag("determinism", e, m, f"k={g.k} not above previous {prev_k}")
            target = _leftmost_nondegenerate(D)
            if target is None:
                flag("determinism", e, m, "remainder degenerate but entry exists")
            else:
                hit = cov_e.at(g.k)
                if hit is None or not (
                    max(hit.lo, target.lo) < min(hit.hi, target.hi)
                ):
                    flag("determinism", e, m, f"index {g.k} misses target {target}")
                else:
                    for kk in range(prev_k + 1, g.k):
                        iv = cov_e.at(kk)
                        if iv is not None and max(iv.lo, target.lo) < min(
                            iv.hi, target.hi
                        ):
                            flag(
                                "determinism",
                                e,
                                m,
                                f"index {kk} already met target {target}",
                            )
                            break
                    helper_ref, interval_ref = _carve(
                        max(hit.lo, target.lo), min(hit.hi, target.hi), m
                    )
                    if helper_ref != g.helper or interval_ref != g.interval:
                        flag(
                            "determinism",
                            e,
                            m,
                            "carved values differ from pinned replay",
                        )

            # stage bookkeeping
            batch = ivl_normalize(
                [
                    iv
                    for iv in (cov_e.at(i) for i in range(prev_k + 1, g.k + 1))
                    if iv is not None
                ],
                kind=OPEN,
            )
            D = ivl_subtract_set(D, batch)
            carved.append(g.interval)
            covered = ivl_normalize(
                [iv for iv in (cov_e.at(i) for i in range(g.k + 1)) if iv is not None],
                kind=OPEN,
            )
            carved_set = ivl_normalize(list(carved), kind=CLOSED)

            # stage equality 1: carved intervals lie inside the spent cover
            for iv in carved:
                if not ivl_subtract(iv, covered).is_empty:
                    flag("stage-eq-1", e, m, f"{iv} not inside spent cover")
            # stage equality 2: spent cover minus carved intervals = U's union
            spent_U = ivl_normalize(
                list(spent_U.components) + list(U.components), kind=OPEN
            )
            lhs = open_minus_closed(covered, carved_set)
            if lhs != spent_U:
                flag("stage-eq-2", e, m, "accounted open mass differs from ledger")
            # remainder matches its definition
            if D != ivl_subtract(band, covered):
                flag("state-eq", e, m, "incremental remainder mismatch")

            # (iv): the local cover never finitely covers I_{e,m}
            local = plan.local_cover(e, m)
            for n in (8, 32):
                remaining = ivl_subtract(
                    g.interval, ivl_normalize(local.prefix(n), kind=OPEN)
                )
                if remaining.is_empty:
                    flag("iv", e, m, f"local prefix {n} covered the interval")
                else:
                    break_found = any(not c.is_degenerate for c in remaining)
                    if not break_found:
                        flag("iv", e, m, f"local prefix {n} left only points")
            prev_k = g.k

    def open_meets_closed(o: Interval, c: Interval) -> bool:
        return c.lo < o.hi and c.hi > o.lo

    # (i) closedness: enumerated complement pieces avoid every interval,
    # and 0 is touched by nothing
    all_intervals = [g.interval for g in geoms.values()]
    for e in range(e_max + 1):
        gap = open_interval(pow2(-(2 * e + 2)), pow2(-(2 * e + 1)))
        if gap.contains(Q(0)):
            flag("i", e, 0, "gap interval touches 0")
        for iv in all_intervals:
            if open_meets_closed(gap, iv):
                flag("i", e, 0, f"gap {gap} meets {iv}")
        for m in range(m_max + 1):
            for comp in plan.U(e, m):
                if comp.contains(Q(0)):
                    flag("i", e, m, f"U component {comp} touches 0")
                for iv in all_intervals:
                    if open_meets_closed(comp, iv):
                        flag("i", e, m, f"U component {comp} meets {iv}")

    # (v): intervals never meet other stages' helper zones (which contain
    # their local covers)
    for (e, m), g in geoms.items():
        for (e2, m2), g2 in geoms.items():
            if (e, m) == (e2, m2):
                continue
            if open_meets_closed(g2.helper, g.interval):
                flag("v", e, m, f"{g.interval} meets helper of ({e2},{m2})")

    return InvariantReport(tuple(bad), checked)
