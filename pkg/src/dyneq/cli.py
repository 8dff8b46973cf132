"""Command-line interface: ``dyneq verify|rank-matrix|heights|prolong|examples``.

Exit status is 0 when every check passes, 1 when a check ran and failed,
and 2 for usage, file or parse errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Any, Sequence

from .equivmap import verify_equivalence
from .errors import DyneqError
from .feasibility import enumerate_heights, search_rank_matrix
from .jetspace import ControlSystem, describe, parse_orders, partial_prolong, total_prolong
from .problem import builtin_names, builtin_text, load_problem
from .rankmatrix import rank_matrix, validate_rank_matrix


def _emit(args, data: dict[str, Any], lines: list[str]) -> None:
    if getattr(args, "json", False):
        print(json.dumps(data, indent=2))
    else:
        print("\n".join(lines))


def _sampler(args, prob):
    return prob.sampler(seed=args.seed, trials=args.trials)


def cmd_verify(args) -> int:
    prob = load_problem(args.source)
    pair = prob.pair(args.pair)
    report = verify_equivalence(pair, _sampler(args, prob))
    _emit(args, report.to_dict(), report.lines())
    return 0 if report.ok else 1


def cmd_rank_matrix(args) -> int:
    prob = load_problem(args.source)
    pair = prob.pair(args.pair)
    s = _sampler(args, prob)
    report = verify_equivalence(pair, s)
    p, q = report.height
    base = {"pair": report.pair, "height": [p, q], "verified": report.ok}
    if not report.ok:
        _emit(args, {**base, "error": "pair does not verify", "verification": report.to_dict()},
              report.lines() + ["rank matrix not computed: the pair does not verify"])
        return 1
    if p == 0 or q == 0:
        msg = f"rank matrix undefined at this height ({p}, {q}); it needs p, q > 0"
        _emit(args, {**base, "error": msg}, [msg])
        return 1
    rm = rank_matrix(pair, s, args.window_margin)
    val = validate_rank_matrix(rm)
    data = {**base, "rank_matrix": rm.to_dict(), "validation": val.to_dict()}
    lines = [f"pair {report.pair}: height (p, q) = ({p}, {q}), r1 = {rm.r1}, r2 = {rm.r2}, "
             f"n1 = {rm.n1}, n2 = {rm.n2}, m = {rm.m}"]
    lines += ["  " + line for line in rm.lines()]
    for family, counts in val.summary().items():
        lines.append(f"  {family}: {counts['passed']} passed, {counts['failed']} failed")
    lines.append("constraints: " + ("all satisfied" if val.ok else "VIOLATED"))
    _emit(args, data, lines)
    return 0 if val.ok else 1


def cmd_heights(args) -> int:
    if args.n1 is None and args.n2 is not None:
        raise DyneqError("--n2 needs --n1")
    combos = ([(args.n1, args.n2 if args.n2 is not None else args.n1)] if args.n1 is not None
              else [(n, n) for n in range(1, 9)])
    tables, lines = [], []
    for n1, n2 in combos:
        entries = enumerate_heights(n1, n2, args.m, args.pmax, args.qmax)
        rows = []
        lines.append(f"n1 = {n1}, n2 = {n2}, m = {args.m}, p <= {args.pmax}, q <= {args.qmax}: "
                     f"{len(entries)} candidate(s) not ruled out")
        for e in entries:
            row = e.to_dict()
            text = (f"  (p, q) = ({e.p}, {e.q})  r1 = {e.r1}, r2 = {e.r2}  "
                    f"{e.report.rule}: lhs = {e.report.lhs}, rhs = {e.report.rhs}"
                    f"{'  (equality)' if e.report.tight else ''}")
            if args.witness and e.p > 0 and e.q > 0:
                w = search_rank_matrix(n1, n2, args.m, e.p, e.q, e.r1, e.r2, args.window_margin)
                row["witness"] = w.to_dict()["window"] if w else None
                text += "  witness:" if w else "  no rank-matrix witness"
                lines.append(text)
                if w:
                    lines.extend("      " + line for line in w.lines()[:-1])
            else:
                lines.append(text)
            rows.append(row)
        tables.append({"n1": n1, "n2": n2, "m": args.m, "p_max": args.pmax, "q_max": args.qmax,
                       "heights": rows})
    _emit(args, {"tables": tables}, lines)
    return 0


def _system_dict(sys_: ControlSystem) -> dict[str, Any]:
    return {
        "name": sys_.name,
        "states": [str(v) for v in sys_.states],
        "controls": [str(v) for v in sys_.controls],
        "dynamics": {str(x): str(f) for x, f in zip(sys_.states, sys_.dynamics)},
    }


def cmd_prolong(args) -> int:
    prob = load_problem(args.source)
    base = prob.system(args.system)
    if args.partial is not None:
        out = partial_prolong(base, parse_orders(args.partial))
    else:
        out = total_prolong(base, args.order)
    _emit(args, _system_dict(out), describe(out))
    return 0


def cmd_examples(args) -> int:
    if args.action == "list":
        names = builtin_names()
        if args.json:
            print(json.dumps({"examples": names}, indent=2))
        else:
            for name in names:
                prob = load_problem(name)
                print(f"{name}: pairs {', '.join(prob.pairs)}")
        return 0
    if not args.name:
        raise DyneqError("examples show needs a NAME")
    print(builtin_text(args.name), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dyneq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def sampling(p):
        p.add_argument("source", help="problem file path or builtin example name")
        p.add_argument("--pair", help="pair name (default: first pair in the file)")
        p.add_argument("--seed", type=int, default=None, help="sampler seed (default 42)")
        p.add_argument("--trials", type=int, default=None, help="sample points per test (default 5)")
        p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("verify", help="check a candidate pair of maps")
    sampling(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("rank-matrix", help="rank matrix of a verified pair")
    sampling(p)
    p.add_argument("--window-margin", type=int, default=2)
    p.set_defaults(func=cmd_rank_matrix)

    p = sub.add_parser("heights", help="heights not ruled out for given dimensions")
    p.add_argument("--n1", type=int, help="states of the first system (default: sweep 1..8 with n2 = n1)")
    p.add_argument("--n2", type=int, help="states of the second system (default: n1)")
    p.add_argument("--m", type=int, required=True, help="number of controls")
    p.add_argument("--pmax", type=int, default=5)
    p.add_argument("--qmax", type=int, default=5)
    p.add_argument("--witness", action="store_true", help="search a rank-matrix window per entry")
    p.add_argument("--window-margin", type=int, default=2)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_heights)

    p = sub.add_parser("prolong", help="print a total or partial prolongation")
    p.add_argument("source")
    p.add_argument("--system", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--order", type=int)
    group.add_argument("--partial", help="per-control orders, e.g. u1=1,u2=2")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_prolong)

    p = sub.add_parser("examples", help="list or show builtin problem files")
    p.add_argument("action", choices=["list", "show"])
    p.add_argument("name", nargs="?")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_examples)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DyneqError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
