"""Per-band diagonalization against claimed polynomial approximations.

The halting side is abstracted to an oracle stream: for each band index
e, the oracle either never answers within budget (the band is erased
from the domain) or eventually produces a rational polynomial p.  On an
answer at stage s, the band's transferred cover has spent only its
first s intervals, so a rational witness q survives in the remainder;
the function value at q is pinned to +2^-2e if p(q) <= 0 and -2^-2e
otherwise, forcing |f(q) - p(q)| >= 2^-2e.  That gap refutes p as an
approximation at accuracy 2^-(2e+1).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .errors import ContractError, RmtwError
from .exactnum import (
    CLOSED,
    OPEN,
    Interval,
    IntervalSet,
    Q,
    fmt_q,
    ivl_normalize,
    ivl_subtract,
    pow2,
    uncovered_point,
)
from .construction import base_interval
from .funcs import Poly, PieceTable, format_poly, parse_poly, poly_eval, weierstrass_check
from .wkl import CoverStream


class CoverContractViolation(ContractError):
    """A finite cover prefix swallowed a whole band: no witness remains."""


class PolyOracle:
    """Monotone halting oracle: (e, stage) -> None or a polynomial.

    Once an answer appears it persists unchanged at later stages; the
    wrapper enforces that on everything it is asked.
    """

    __slots__ = ("_fn", "_seen")

    def __init__(self, fn: Callable[[int, int], Optional[Poly]]):
        self._fn = fn
        self._seen: dict[int, tuple[int, Poly]] = {}

    @classmethod
    def from_dict(cls, answers: dict[int, tuple[int, Sequence]]) -> "PolyOracle":
        frozen = {
            e: (s, tuple(Q(c) for c in coeffs)) for e, (s, coeffs) in answers.items()
        }

        def fn(e: int, stage: int) -> Optional[Poly]:
            if e in frozen and stage >= frozen[e][0]:
                return frozen[e][1]
            return None

        return cls(fn)

    @classmethod
    def never(cls) -> "PolyOracle":
        return cls(lambda e, s: None)

    def ask(self, e: int, stage: int) -> Optional[Poly]:
        answer = self._fn(e, stage)
        if answer is not None:
            answer = tuple(Q(c) for c in answer)
            if e in self._seen:
                s0, p0 = self._seen[e]
                if stage >= s0 and answer != p0:
                    raise RmtwError(f"oracle changed its answer for e={e}")
            else:
                self._seen[e] = (stage, answer)
        return answer


@dataclass(frozen=True)
class DiagEntry:
    e: int
    erased: bool
    stage: Optional[int] = None
    remaining: Optional[IntervalSet] = None
    witness: Optional[Fraction] = None
    value: Optional[Fraction] = None
    polynomial: Optional[Poly] = None


def diag_run(e: int, oracle: PolyOracle, cover_e: CoverStream, budget: int) -> DiagEntry:
    """Run band e against the oracle with the given stage budget.

    If the oracle answers first at stage s <= budget with polynomial p,
    the remainder is I_e minus the first s cover intervals, the witness
    is its canonical uncovered rational, and the value is +-2^-2e by the
    sign rule on p(witness).  Otherwise the band is erased.
    """
    band = base_interval(e)
    halted: Optional[tuple[int, Poly]] = None
    for s in range(budget + 1):
        answer = oracle.ask(e, s)
        if answer is not None:
            halted = (s, answer)
            break
    if halted is None:
        return DiagEntry(e, erased=True)
    s, p = halted
    prefix = ivl_normalize(
        [iv for iv in (cover_e.at(k) for k in range(s)) if iv is not None], kind=OPEN
    )
    remaining = ivl_subtract(band, prefix)
    witness = uncovered_point(band, prefix)
    if witness is None:
        raise CoverContractViolation(
            f"first {s} intervals already covered band {e}"
        )
    value = pow2(-2 * e) if poly_eval(p, witness) <= 0 else -pow2(-2 * e)
    return DiagEntry(e, False, s, remaining, witness, value, p)


def diag_verify(entry: DiagEntry, oracle: PolyOracle) -> tuple[bool, str]:
    """Exact check that a halted entry beats its polynomial.

    Verifies |value - p(q)| >= 2^-2e and that the claimed approximation
    at accuracy 2^-(2e+1) fails at the witness.
    """
    if entry.erased:
        raise RmtwError("nothing to verify for an erased band")
    p = oracle.ask(entry.e, entry.stage)
    if p is None or p != entry.polynomial:
        return False, f"oracle does not confirm the polynomial for e={entry.e}"
    gap = abs(entry.value - poly_eval(p, entry.witness))
    threshold = pow2(-2 * entry.e)
    if gap < threshold:
        return False, (
            f"|f(q) - p(q)| = {fmt_q(gap)} below 2^-{2 * entry.e} at "
            f"q = {fmt_q(entry.witness)}"
        )
    if entry.remaining is not None and entry.remaining.contains(entry.witness):
        table = PieceTable(
            tuple((c, entry.value) for c in entry.remaining.components), anchor=False
        )
        if weierstrass_check(p, table, entry.witness, 2 * entry.e + 1):
            return False, "approximation claim at 2^-(2e+1) unexpectedly holds"
    return True, f"gap {fmt_q(gap)} >= 2^-{2 * entry.e}"


def save_outcomes(entries: Sequence[DiagEntry], path) -> None:
    """One line per band: "e erased" or "e s witness value p...".

    The remaining set is reconstructible from the cover and stage, so it
    is not serialized.
    """
    with open(path, "w") as fh:
        for entry in entries:
            if entry.erased:
                fh.write(f"{entry.e} erased\n")
            else:
                fh.write(
                    f"{entry.e} {entry.stage} {fmt_q(entry.witness)} "
                    f"{fmt_q(entry.value)} {format_poly(entry.polynomial)}\n"
                )


def load_outcomes(path, covers: Callable[[int], CoverStream]) -> list[DiagEntry]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            e = int(parts[0])
            if parts[1] == "erased":
                out.append(DiagEntry(e, erased=True))
                continue
            s = int(parts[1])
            witness = Q(parts[2])
            value = Q(parts[3])
            poly = parse_poly(" ".join(parts[4:]))
            cover_e = covers(e)
            prefix = ivl_normalize(
                [iv for iv in (cover_e.at(k) for k in range(s)) if iv is not None],
                kind=OPEN,
            )
            remaining = ivl_subtract(base_interval(e), prefix)
            out.append(DiagEntry(e, False, s, remaining, witness, value, poly))
    return out
