"""Command-line front end.

Subcommands:
  run     execute the full separation pipeline, write report files
          (JSON + TSV + text) and figures
  verify  check invariants of a plan dump or diagonalization outcomes
  dump    deterministic textual dumps (plan, cover, tree, fcode, csnap, diag)

Exit codes: 0 all checks pass, 1 invariant violation, 2 budget or
contract error (including unusable inputs).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import ContractError, RmtwError
from .exactnum import fmt_q
from .construction import (
    PredomainPlan,
    load_plan_dump,
    transfer_to_Ie,
    verify_plan_invariants,
)
from .diag import PolyOracle, diag_run, diag_verify, load_outcomes, save_outcomes
from .funcs import load_func_code, load_pl, save_func_code
from .reversal import Budgets, f_build, c_structured, run_reversal
from .wkl import (
    CoverStream,
    SeparationInstance,
    clamp_cover,
    kleene_tree,
    load_cover,
    load_instance,
    save_cover,
    specker_cover,
    tree_to_cover,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONTRACT = 2


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("RMTW_SEED")
    return int(env) if env else 0


def _resolve_instance(args) -> SeparationInstance:
    if args.inline:
        inst = SeparationInstance.from_inline(args.inline)
    elif args.instance:
        path = Path(args.instance)
        if not path.exists():
            raise ContractError(f"instance file not found: {path}")
        inst = load_instance(path)
    else:
        raise ContractError("an instance is required (--instance or --inline)")
    inst.validate()
    return inst


def _resolve_cover(args, inst=None) -> CoverStream:
    spec = args.cover
    if spec.startswith("specker"):
        _, _, c_txt = spec.partition(":")
        return specker_cover(int(c_txt) if c_txt else 3)
    if spec == "tree":
        if inst is None:
            raise ContractError("the tree cover source needs an instance")
        return tree_to_cover(kleene_tree(inst, max_level=args.tree_depth))
    if spec.startswith("file:"):
        path = Path(spec[5:])
        if not path.exists():
            raise ContractError(f"cover file not found: {path}")
        return load_cover(path)
    raise ContractError(f"unknown cover source {spec!r}")


def _budgets(args) -> Budgets:
    return Budgets(
        e_max=args.e_max,
        m_max=args.m_max,
        stage=args.stage_budget,
        eval_budget=args.eval_budget,
    )


def cmd_run(args) -> int:
    inst = _resolve_instance(args)
    cover = _resolve_cover(args, inst)
    seed = _resolve_seed(args)
    double = load_pl(Path(args.double)) if args.double else None
    report = run_reversal(inst, cover, _budgets(args), seed=seed, double=double)

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(report.to_json() + "\n")
    (outdir / "report.tsv").write_text("\n".join(report.tsv_rows()) + "\n")
    (outdir / "report.txt").write_text(report.to_text())
    if args.figures:
        from . import figures

        figures.render_all(outdir, report, cover)
    sys.stdout.write(report.to_text())
    return EXIT_OK if report.passed else EXIT_VIOLATION


def cmd_verify(args) -> int:
    problems = 0
    if args.plan:
        cover = _resolve_cover(args)
        plan = load_plan_dump(Path(args.plan), cover)
        if not plan.entries:
            print("empty plan dump: nothing to check")
        else:
            e_max = max(e for e, _ in plan.entries)
            m_max = max(m for _, m in plan.entries)
            rep = verify_plan_invariants(plan, e_max, m_max)
            for v in rep.violations:
                print(f"violation item {v.item} at (e={v.e},m={v.m}): {v.detail}")
            print(f"plan invariants: {len(rep.violations)} violation(s), "
                  f"{rep.checked} stage(s) checked")
            problems += len(rep.violations)
    elif args.diag:
        oracle = _load_oracle(Path(args.oracle))
        cover = _resolve_cover(args)
        clamped = clamp_cover(cover)
        entries = load_outcomes(
            Path(args.diag), lambda e: transfer_to_Ie(clamped, e)
        )
        for entry in entries:
            if entry.erased:
                continue
            ok, detail = diag_verify(entry, oracle)
            print(f"e={entry.e}: {'ok' if ok else 'VIOLATION'} ({detail})")
            if not ok:
                problems += 1
    elif args.instance or args.inline:
        inst = _resolve_instance(args)
        cover = _resolve_cover(args, inst)
        plan = PredomainPlan(cover)
        rep = verify_plan_invariants(plan, args.e_max, args.m_max)
        for v in rep.violations:
            print(f"violation item {v.item} at (e={v.e},m={v.m}): {v.detail}")
        print(f"plan invariants: {len(rep.violations)} violation(s), "
              f"{rep.checked} stage(s) checked")
        problems += len(rep.violations)
    else:
        raise ContractError("nothing to verify: pass --plan, --diag, or an instance")
    return EXIT_VIOLATION if problems else EXIT_OK


def _load_oracle(path: Path) -> PolyOracle:
    if not path.exists():
        raise ContractError(f"oracle file not found: {path}")
    answers = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            answers[int(parts[0])] = (int(parts[1]), tuple(parts[2:]))
    return PolyOracle.from_dict(answers)


def cmd_dump(args) -> int:
    what = args.dump_what
    out = sys.stdout if args.out in (None, "-") else open(args.out, "w")
    try:
        if what == "plan":
            cover = _resolve_cover(args)
            plan = PredomainPlan(cover)
            out.write(plan.dump(args.e_max, args.m_max))
        elif what == "cover":
            inst = None
            if args.cover == "tree":
                inst = _resolve_instance(args)
            cover = _resolve_cover(args, inst)
            for iv in cover.prefix(args.prefix):
                out.write(f"{fmt_q(iv.lo)} {fmt_q(iv.hi)}\n")
        elif what == "tree":
            inst = _resolve_instance(args)
            tree = kleene_tree(inst, max_level=args.tree_depth)
            for sigma in tree.level(args.prefix):
                out.write(sigma + "\n")
        elif what == "fcode":
            inst = _resolve_instance(args)
            cover = _resolve_cover(args, inst)
            plan = PredomainPlan(cover)
            _, fcode = f_build(plan, inst, args.m_max)
            for _, (a, r, b, s) in fcode.prefix(args.prefix):
                out.write(f"{fmt_q(a)} {fmt_q(r)} {fmt_q(b)} {fmt_q(s)}\n")
        elif what == "csnap":
            inst = _resolve_instance(args)
            cover = _resolve_cover(args, inst)
            plan = PredomainPlan(cover)
            for comp in c_structured(plan, inst, args.stage_budget):
                out.write(f"{comp}\n")
        elif what == "diag":
            oracle = _load_oracle(Path(args.oracle))
            cover = _resolve_cover(args)
            clamped = clamp_cover(cover)
            entries = [
                diag_run(e, oracle, transfer_to_Ie(clamped, e), args.stage_budget)
                for e in range(args.e_max + 1)
            ]
            for entry in entries:
                if entry.erased:
                    out.write(f"{entry.e} erased\n")
                else:
                    from .funcs import format_poly

                    out.write(
                        f"{entry.e} {entry.stage} {fmt_q(entry.witness)} "
                        f"{fmt_q(entry.value)} {format_poly(entry.polynomial)}\n"
                    )
        else:
            raise ContractError(f"unknown dump target {what!r}")
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmtw",
        description="exact interval covers, set/function codes, separation decoding",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--instance", help="instance file (lines 'g0 m v' / 'g1 m v')")
        p.add_argument("--inline", help="inline instance, e.g. 'g0:0,2;g1:1'")
        p.add_argument("--cover", default="specker",
                       help="cover source: specker[:c] | tree | file:PATH")
        p.add_argument("--e-max", type=int, default=3, dest="e_max")
        p.add_argument("--m-max", type=int, default=2, dest="m_max")
        p.add_argument("--stage-budget", type=int, default=256, dest="stage_budget")
        p.add_argument("--eval-budget", type=int, default=65536, dest="eval_budget")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--tree-depth", type=int, default=12, dest="tree_depth")

    p_run = sub.add_parser("run", help="full pipeline, report + figures")
    common(p_run)
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--double", help="piecewise-linear extension file to use as F")
    p_run.add_argument("--figures", action=argparse.BooleanOptionalAction,
                       default=True, help="render PNG figures next to the report")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="invariant checks")
    common(p_verify)
    p_verify.add_argument("--plan", help="plan dump file to verify")
    p_verify.add_argument("--diag", help="diagonalization outcomes file to verify")
    p_verify.add_argument("--oracle", help="oracle file (lines 'e s coeffs...')")
    p_verify.set_defaults(func=cmd_verify)

    p_dump = sub.add_parser("dump", help="deterministic textual dumps")
    common(p_dump)
    p_dump.add_argument("--dump-what", required=True, dest="dump_what",
                        choices=["plan", "cover", "tree", "fcode", "csnap", "diag"])
    p_dump.add_argument("--prefix", type=int, default=20,
                        help="prefix length / tree level for dumps")
    p_dump.add_argument("--oracle", help="oracle file for diag dumps")
    p_dump.add_argument("--out", default="-", help="output file ('-' = stdout)")
    p_dump.set_defaults(func=cmd_dump)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ContractError as err:
        print(f"contract error: {err}", file=sys.stderr)
        return EXIT_CONTRACT
    except RmtwError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
