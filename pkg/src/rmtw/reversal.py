"""From a separation instance to a separating set, via function extension.

The pipeline: build the staged pre-domain plan from a cover; carve the
closed set E whose complement enumerates each local cover while the
instance has not yet named the band index; form C = D n E; define f as
+2^-2e on band-e remnants named by g0, -2^-2e on those named by g1, and
0 at 0, with modulus h(n) = 2n+2; extend f to [0,1] by a
piecewise-linear double F with modulus H = its Lipschitz-derived
modulus; and decode membership of each e by the sign of F at the marked
rational q_{e, H(2e+2)}.

The decode step is sound because the marked rational sits within
2^-(m+1) < 2^-H(2e+2) of a point of C carrying the band value, so any
H-modulus extension evaluates within 2^-(2e+2) of +-2^-2e there, which
pins the sign.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from random import Random
from typing import Optional, Sequence, Union

from .errors import ContractError, RmtwError
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
    pow2,
)
from .construction import (
    InvariantReport,
    PredomainPlan,
    base_interval,
    predomain_code,
    verify_plan_invariants,
)
from .funcs import (
    FuncCode,
    Insufficient,
    Modulus,
    PieceTable,
    PLFunction,
    Value,
    check_consistency,
    eval_at,
    modulus_check_exact,
    pl_eval,
    pl_lipschitz,
    pl_modulus,
)
from .sets import (
    BallStream,
    ClosedSetCode,
    NoWitnessFound,
    Witnessed,
    dense_sequence,
    dense_witness_budget,
    sep_member_at,
)
from .wkl import COVERS_ALL_RATIONALS, CoverStream, SeparationInstance


class PlanDepthExceeded(ContractError):
    """The decoder needed a stage the plan does not contain."""


class EvalBudgetExceeded(ContractError):
    """A function code refused the requested output precision in budget."""


ANCHOR_CAP = 32  # anchor generators emitted for e < ANCHOR_CAP
PIECE_J_STEPS = 48  # output radii per piece: 2^-j for j_min <= j < j_min + steps


# ---------------------------------------------------------------------------
# E, C, and f
# ---------------------------------------------------------------------------


def _guard_bound(inst: SeparationInstance, e: int) -> Optional[int]:
    """Local-cover indices below this bound are enumerated into E's complement.

    None means the band is never named and enumeration never stops.
    """
    hit = inst.hit(e)
    return None if hit is None else hit[1]


def e_complement(plan, inst: SeparationInstance, stage: int) -> ClosedSetCode:
    """The closed set E: local covers enumerated while the guard holds.

    Tick t unpairs to ((e, m), k); the local interval is emitted exactly
    when every stage s <= k leaves e unnamed, i.e. k is below the least
    stage naming e.  Ticks at or beyond ``stage`` emit nothing, so the
    code is the stage-s snapshot of the enumeration.
    """
    inst.validate()

    def gen(t: int):
        if t >= stage:
            return None
        pm, k = cantor_unpair(t)
        e, m = cantor_unpair(pm)
        bound = _guard_bound(inst, e)
        if bound is not None and k >= bound:
            return None
        iv = plan.local_cover(e, m).at(k)
        if iv is None:
            return None
        return (iv.midpoint, iv.length / 2)

    return ClosedSetCode(BallStream(gen))


def _removed_for(plan, inst, e: int, m: int, stage: int) -> IntervalSet:
    """Local-cover mass removed from I_{e,m} at the given snapshot stage."""
    local = plan.local_cover(e, m)
    bound = _guard_bound(inst, e)
    if bound is not None:
        ks = range(bound)
    else:
        pm = cantor_pair(e, m)
        ks = [k for k in range(stage) if cantor_pair(pm, k) < stage]
    return ivl_normalize(
        [iv for iv in (local.at(k) for k in ks) if iv is not None], kind=OPEN
    )


def c_structured(plan, inst: SeparationInstance, stage: int) -> list[Interval]:
    """Stage-s snapshot of C = D n E as disjoint closed intervals (plus {0}).

    Bands named by the instance are fully determined (their enumeration
    stopped at the naming stage); unnamed bands shrink as the stage
    grows.  The point 0 always belongs to C and is left implicit.
    """
    inst.validate()
    out: list[Interval] = []
    pm = 0
    while cantor_pair(pm, 0) < stage:
        e, m = cantor_unpair(pm)
        removed = _removed_for(plan, inst, e, m, stage)
        out.extend(ivl_subtract(plan.geometry(e, m).interval, removed).components)
        pm += 1
    out.sort(key=lambda iv: (iv.lo, iv.hi))
    return out


@dataclass(frozen=True)
class FPiece:
    e: int
    m: int
    support: Interval
    value: Fraction


@dataclass(frozen=True)
class FPieces:
    entries: tuple[FPiece, ...]

    def table(self) -> PieceTable:
        pieces = tuple(
            (p.support, p.value)
            for p in sorted(self.entries, key=lambda p: (p.support.lo, p.support.hi))
        )
        return PieceTable(pieces, anchor=True)


def _band_clearance(e: int, support: Interval) -> Fraction:
    band = base_interval(e)
    return min(support.lo - band.lo, band.hi - support.hi)


def _f_code(entries: Sequence[FPiece]) -> FuncCode:
    """Generator stream certifying f's values.

    Anchors (0, 2^-(2e+1), 0, 2^-2(e+1)) come first: any x within
    2^-(2e+1) of 0 lies in a band of index above e, where |f| is at most
    2^-2(e+1).  Then, per piece, balls (mid, halfwidth + 2^-j, value,
    2^-j) for the j making 2^-j smaller than the piece's clearance to its
    band ends - that containment keeps input balls of different bands
    disjoint, so pairwise consistency holds with strict slack.
    """
    gens: list[tuple] = []
    for e in range(ANCHOR_CAP):
        gens.append((Q(0), pow2(-(2 * e + 1)), Q(0), pow2(-2 * (e + 1))))
    for piece in entries:
        clearance = _band_clearance(piece.e, piece.support)
        j = 0
        while pow2(-j) >= clearance:
            j += 1
        mid = piece.support.midpoint
        half = piece.support.length / 2
        for off in range(PIECE_J_STEPS):
            radius = pow2(-(j + off))
            gens.append((mid, half + radius, piece.value, radius))
    return FuncCode.from_list(gens)


def f_build(plan, inst: SeparationInstance, stage: int) -> tuple[FPieces, FuncCode]:
    """The coded function f at plan depth ``stage``.

    For every band e named by the instance (at stage s*, by g0 or g1) and
    every m <= stage, the determined remnant I_{e,m} minus the first s*
    local-cover intervals becomes pieces of value +2^-2e (g0) or -2^-2e
    (g1).  Unnamed bands contribute nothing: f is simply undefined there.
    """
    inst.validate()
    entries: list[FPiece] = []
    for e in sorted(inst.range0 | inst.range1):
        which, s_star = inst.hit(e)
        value = pow2(-2 * e) if which == 0 else -pow2(-2 * e)
        for m in range(stage + 1):
            geom = plan.geometry(e, m)
            local = plan.local_cover(e, m)
            removed = ivl_normalize(
                [iv for iv in (local.at(k) for k in range(s_star)) if iv is not None],
                kind=OPEN,
            )
            for comp in ivl_subtract(geom.interval, removed).components:
                entries.append(FPiece(e, m, comp, value))
    entries.sort(key=lambda p: (p.support.lo, p.support.hi))
    fp = FPieces(tuple(entries))
    return fp, _f_code(entries)


def modulus_h() -> Modulus:
    """The modulus n -> 2n+2 carried by every constructed f.

    Within one band values agree, so close points with large values share
    a band; across bands the values themselves are below 2^-n.
    """
    return Modulus(lambda n: 2 * n + 2)


# ---------------------------------------------------------------------------
# Extension doubles
# ---------------------------------------------------------------------------


def pl_extension_double(fp: FPieces) -> PLFunction:
    """The canonical piecewise-linear extension of the pieces to [0,1].

    Knots: (0,0), both endpoints of every piece at the piece value, and
    (1, value of the piece nearest 1, or 0 with no pieces).  Linear in
    between, so it agrees with f exactly on every piece support.
    """
    pieces = sorted(fp.entries, key=lambda p: (p.support.lo, p.support.hi))
    for left, right in zip(pieces, pieces[1:]):
        if right.support.lo <= left.support.hi:
            raise RmtwError(f"overlapping pieces {left.support} and {right.support}")
    knots: list[tuple[Fraction, Fraction]] = [(Q(0), Q(0))]
    for p in pieces:
        u, w = p.support.lo, p.support.hi
        if u == w:
            knots.append((u, p.value))
        else:
            knots.append((u, p.value))
            knots.append((w, p.value))
    last_value = pieces[-1].value if pieces else Q(0)
    if knots[-1][0] != 1:
        knots.append((Q(1), last_value))
    return PLFunction(tuple(knots))


def make_perturbed_double(
    base: PLFunction, fp: FPieces, rng: Random, min_gap: Fraction = Q(1, 16)
) -> PLFunction:
    """A randomized valid double: extra knots off the pieces, values jittered.

    Insertions land in the middle half of knot gaps that meet no piece
    interior and are at least ``min_gap`` long; the jitter is bounded by
    the gap, which caps the extra slope at 24/13 < 2.  Agreement with f
    on every piece is untouched.
    """
    supports = [p.support for p in fp.entries]
    knots = list(base.knots)
    inserted: list[tuple[Fraction, Fraction]] = []
    for (x1, y1), (x2, y2) in zip(knots, knots[1:]):
        gap = x2 - x1
        if gap < min_gap:
            continue
        if any(max(s.lo, x1) < min(s.hi, x2) for s in supports):
            continue
        if rng.random() < 0.5:
            continue
        frac = Q(rng.randint(4, 12), 16)
        xm = x1 + gap * frac
        interp = y1 + (y2 - y1) * frac
        amp = min(gap, Q(1, 2))
        eta = amp * Q(rng.randint(-6, 6), 13)
        inserted.append((xm, interp + eta))
    return PLFunction(tuple(sorted(knots + inserted)))


def validate_double(F: PLFunction, fp: FPieces) -> list[str]:
    """Exact agreement check of a PL double against the pieces and anchor.

    A PL function agrees with a constant piece on [u,w] iff it takes the
    value at u, at w, and at every knot in between, so the check is
    complete, not sampled.
    """
    problems: list[str] = []
    if pl_eval(F, Q(0)) != 0:
        problems.append(f"F(0) = {fmt_q(pl_eval(F, Q(0)))}, anchor requires 0")
    for p in fp.entries:
        u, w = p.support.lo, p.support.hi
        for x in {u, w, p.support.midpoint}:
            got = pl_eval(F, x)
            if got != p.value:
                problems.append(
                    f"F({fmt_q(x)}) = {fmt_q(got)} but the piece {p.support} "
                    f"carries {fmt_q(p.value)}"
                )
                break
        else:
            for kx, ky in F.knots:
                if u < kx < w and ky != p.value:
                    problems.append(
                        f"knot at {fmt_q(kx)} inside piece {p.support} has value "
                        f"{fmt_q(ky)} instead of {fmt_q(p.value)}"
                    )
                    break
    return problems


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecodeTrace:
    e: int
    m: int
    q_em: Fraction
    approximation: Fraction
    in_X: bool


@dataclass(frozen=True)
class DecoderOutput:
    X: dict[int, bool]
    traces: tuple[DecodeTrace, ...]


def decode(
    F: Union[PLFunction, FuncCode],
    H: Modulus,
    e: int,
    plan,
    budget: int = 65536,
) -> tuple[bool, DecodeTrace]:
    """Decide e's membership from the extension and its modulus.

    Reads m = H(2e+2), approximates F at the marked rational q_{e,m} to
    within 2^-(2e+2) (exactly, for a PL double), and returns whether the
    approximation is >= 0.
    """
    m = H(2 * e + 2)
    try:
        q_em = plan.q(e, m)
    except ContractError as err:
        raise PlanDepthExceeded(f"stage (e={e}, m={m}) unavailable: {err}") from err
    if isinstance(F, PLFunction):
        val = pl_eval(F, q_em)
    else:
        verdict = eval_at(F, RealCode.constant(q_em), pow2(-(2 * e + 2)), budget)
        if isinstance(verdict, Insufficient):
            raise EvalBudgetExceeded(
                f"no output ball below 2^-{2 * e + 2} at q_{{{e},{m}}} in budget {budget}"
            )
        val = verdict.b
    in_X = val >= 0
    return in_X, DecodeTrace(e, m, q_em, val, in_X)


# ---------------------------------------------------------------------------
# Reports and the full pipeline
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Budgets:
    e_max: int = 3
    m_max: int = 2  # floor for the plan depth; the decoder demand extends it
    stage: int = 256  # snapshot ticks for E / structured C
    eval_budget: int = 65536
    modulus_n: int = 8
    consistency_prefix: int = 160
    verify_e: int = 1
    verify_m: int = 2
    lemma31_budget: int = 4096
    depth_rounds: int = 12


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    details: tuple[str, ...] = ()


@dataclass
class SeparationReport:
    instance: dict
    budgets: dict
    seed: int
    cover: str
    X: dict[int, bool]
    traces: list[dict]
    suites: list[SuiteResult]
    errors: list[str] = field(default_factory=list)
    artifacts: Optional[object] = None  # not serialized

    @property
    def passed(self) -> bool:
        return not self.errors and all(s.passed for s in self.suites)

    def to_json(self) -> str:
        payload = {
            "instance": self.instance,
            "budgets": self.budgets,
            "seed": self.seed,
            "cover": self.cover,
            "X": {str(e): v for e, v in sorted(self.X.items())},
            "traces": self.traces,
            "suites": [
                {"name": s.name, "passed": s.passed, "details": list(s.details)}
                for s in self.suites
            ],
            "errors": self.errors,
            "passed": self.passed,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    def tsv_rows(self) -> list[str]:
        rows = ["e\tm\tq_em\tapproximation\tin_X"]
        for t in self.traces:
            rows.append(
                f"{t['e']}\t{t['m']}\t{t['q_em']}\t{t['approximation']}\t{int(t['in_X'])}"
            )
        return rows

    def to_text(self) -> str:
        lines = [f"separation run (seed {self.seed}, cover {self.cover})"]
        lines.append(f"instance: g0={self.instance['g0']} g1={self.instance['g1']}")
        members = sorted(e for e, v in self.X.items() if v)
        lines.append(f"X = {{{', '.join(str(e) for e in members)}}}")
        for s in self.suites:
            mark = "pass" if s.passed else "FAIL"
            lines.append(f"[{mark}] {s.name}")
            for d in s.details:
                lines.append(f"    {d}")
        for err in self.errors:
            lines.append(f"[error] {err}")
        lines.append("overall: " + ("pass" if self.passed else "FAIL"))
        return "\n".join(lines) + "\n"


@dataclass
class RunArtifacts:
    plan: object
    pieces: FPieces
    fcode: FuncCode
    double: PLFunction
    modulus: Modulus
    depth: int
    structured: list[Interval]


def run_reversal(
    inst: SeparationInstance,
    cover: CoverStream,
    budgets: Budgets = Budgets(),
    seed: int = 0,
    double: Optional[PLFunction] = None,
) -> SeparationReport:
    """The end-to-end pipeline; every check lands in the report, not raised.

    Only contract failures (bad instance, cover violating its claims,
    exhausted budgets) raise.  A supplied ``double`` stands in for the
    extension oracle and is validated for actual agreement with f.
    """
    inst.validate()
    plan = PredomainPlan(cover)

    depth = max(budgets.m_max, 1)
    fp, fcode = f_build(plan, inst, depth)
    F = double if double is not None else pl_extension_double(fp)
    for _ in range(budgets.depth_rounds):
        H = pl_modulus(F)
        need = max(
            (H(2 * e + 2) for e in range(budgets.e_max + 1)), default=0
        )
        if need <= depth:
            break
        depth = need
        fp, fcode = f_build(plan, inst, depth)
        if double is None:
            F = pl_extension_double(fp)
    else:
        raise ContractError("extension double's modulus failed to stabilize")

    X: dict[int, bool] = {}
    traces: list[DecodeTrace] = []
    for e in range(budgets.e_max + 1):
        member, trace = decode(F, H, e, plan, budgets.eval_budget)
        X[e] = member
        traces.append(trace)

    suites: list[SuiteResult] = []

    agreement = validate_double(F, fp)
    suites.append(
        SuiteResult("double-agreement", not agreement, tuple(agreement[:8]))
    )

    sep_problems = []
    for e in sorted(inst.range0):
        if e <= budgets.e_max and not X[e]:
            sep_problems.append(f"e={e} named by g0 but decoded out of X")
    for e in sorted(inst.range1):
        if e <= budgets.e_max and X[e]:
            sep_problems.append(f"e={e} named by g1 but decoded into X")
    suites.append(SuiteResult("separation", not sep_problems, tuple(sep_problems)))

    mod_res = modulus_check_exact(fp.table(), modulus_h(), budgets.modulus_n)
    mod_details = ()
    if not mod_res.ok:
        n, pa, pb = mod_res.counterexample
        mod_details = (f"n={n}: pieces {pa} and {pb} too close",)
    suites.append(SuiteResult("modulus-2n+2", mod_res.ok, mod_details))

    violations = check_consistency(fcode, budgets.consistency_prefix)
    suites.append(
        SuiteResult(
            "fcode-consistency",
            not violations,
            tuple(f"generators {v.i},{v.j}: {v.detail}" for v in violations[:8]),
        )
    )

    plan_rep = verify_plan_invariants(
        plan, min(budgets.e_max, budgets.verify_e), budgets.verify_m
    )
    suites.append(
        SuiteResult(
            "plan-invariants",
            plan_rep.ok,
            tuple(
                f"item {v.item} at (e={v.e},m={v.m}): {v.detail}"
                for v in plan_rep.violations[:8]
            ),
        )
    )

    structured = c_structured(plan, inst, budgets.stage)
    lemma_problems = _lemma31_spot_checks(structured, budgets.lemma31_budget)
    suites.append(
        SuiteResult("dense-sequence", not lemma_problems, tuple(lemma_problems[:8]))
    )

    report = SeparationReport(
        instance={"g0": list(inst.g0), "g1": list(inst.g1)},
        budgets={
            "e_max": budgets.e_max,
            "m_max": budgets.m_max,
            "stage": budgets.stage,
            "eval_budget": budgets.eval_budget,
        },
        seed=seed,
        cover=str(cover.cache_key or cover.tag),
        X=X,
        traces=[
            {
                "e": t.e,
                "m": t.m,
                "q_em": fmt_q(t.q_em),
                "approximation": fmt_q(t.approximation),
                "in_X": t.in_X,
            }
            for t in traces
        ],
        suites=suites,
        artifacts=RunArtifacts(plan, fp, fcode, F, H, depth, structured),
    )
    return report


def _lemma31_spot_checks(structured: list[Interval], budget: int) -> list[str]:
    """Membership spot checks of the dense sequence against structured C."""
    problems = []
    S = dense_sequence(structured)
    probes = [Q(0)]
    for comp in structured[:4]:
        probes.extend([comp.lo, comp.hi, comp.midpoint])
    fine = pow2(-10)
    for x in probes:
        verdict = sep_member_at(
            S, RealCode.constant(x), fine, dense_witness_budget(structured)
        )
        if not isinstance(verdict, Witnessed):
            problems.append(f"listed point {fmt_q(x)} not witnessed at 2^-10")
    far_point = Q(3, 8)
    dist = min(
        (min(abs(far_point - c.lo), abs(far_point - c.hi)) for c in structured),
        default=Q(1),
    )
    if all(not c.contains(far_point) for c in structured) and dist >= pow2(-5):
        verdict = sep_member_at(S, RealCode.constant(far_point), pow2(-6), budget)
        if not isinstance(verdict, NoWitnessFound):
            problems.append("distant rational 3/8 spuriously witnessed at 2^-6")
    return problems
