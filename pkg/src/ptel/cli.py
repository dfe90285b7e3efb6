"""Command line front end.

Exit codes: 0 success, 1 a check failed, 2 bad input or usage, 3 budget
exhausted.  Errors go to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from .errors import BudgetExceeded, PtelError, SyntaxProblem
from .evaluator import evaluator_for
from .explorer import (DEFAULT_NODE_CAP, explore_points, make_point, reachable_graph)
from .formula import expand_derived, is_nnf, nnf, parse_formula, render_formula
from .kernel import check_derivation, parse_derivation, soundness_fuzz
from .program import parse_program, with_initial
from .specfile import parse_spec, run_spec

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_BUDGET = 0, 1, 2, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def corpus_path(name: str) -> Path:
    """Path of a file shipped in the bundled corpus."""
    base = resources.files("ptel") / "corpus"
    for cand in (base / name, base / "proofs" / name):
        if cand.is_file():
            return Path(str(cand))
    raise FileNotFoundError(name)


def _read(name: str) -> str:
    path = Path(name)
    if not path.is_file():
        try:
            path = corpus_path(name)
        except FileNotFoundError:
            raise _UsageError(f"no such file: {name}") from None
    return path.read_text()


def _init_overrides(items) -> dict[str, int]:
    out = {}
    for item in items or ():
        k, sep, v = item.partition("=")
        if not sep:
            raise _UsageError(f"--init expects var=value, got {item!r}")
        try:
            out[k.strip()] = int(v)
        except ValueError:
            raise _UsageError(f"--init value for {k} is not an integer") from None
    return out


def _load_program(args):
    p = parse_program(_read(args.program))
    init = _init_overrides(args.init)
    return (with_initial(p, init) if init else p), init


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _constraint(args, p):
    if not getattr(args, "under", None):
        return None, None
    if not args.spec:
        raise _UsageError("--under needs --spec")
    sf = parse_spec(_read(args.spec))
    if args.under not in sf.constraints:
        raise _UsageError(f"spec has no constraint named {args.under!r}")
    return sf.constraints[args.under], sf


def cmd_check(args) -> int:
    p, init = _load_program(args)
    sf = parse_spec(_read(args.spec))
    rep = run_spec(p, sf, args.program, args.spec, init, node_cap=args.node_cap)
    _emit(rep.to_json(timing=not args.no_timing))
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_explore(args) -> int:
    p, _ = _load_program(args)
    constraint, _ = _constraint(args, p)
    if args.graph:
        g = reachable_graph(p, constraint, args.node_cap)
        sys.stdout.write(g.dump())
        return EXIT_OK
    ps = explore_points(p, args.depth, constraint, args.node_cap)
    for n in range(len(ps)):
        labels = ",".join(ps.labels(n))
        print(f"point {n} labels={labels or '-'} {p.render_state(ps.states[ps.state[n]])}")
    return EXIT_OK


def cmd_prove(args) -> int:
    d = parse_derivation(_read(args.script))
    res = check_derivation(d, unsound_prev=args.unsound_prev)
    out = {"script": args.script, "check": res.to_json(),
           "conclusion": d.conclusion.render()}
    ok = res.ok
    if args.fuzz and (res.ok or args.unsound_prev):
        fz = soundness_fuzz(d, models=args.models, seed=args.seed, max_depth=args.depth)
        out["fuzz"] = fz.to_json()
        ok = ok and fz.clean
    _emit(out)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_nnf(args) -> int:
    f = expand_derived(parse_formula(args.formula))
    g = nnf(f, depth=args.unfold)
    assert is_nnf(g)
    print(render_formula(g))
    return EXIT_OK


def cmd_trace(args) -> int:
    p, _ = _load_program(args)
    labels = tuple(x.strip() for x in args.labels.split(",") if x.strip()) if args.labels else ()
    constraint, sf = _constraint(args, p)
    if sf is None and args.spec:
        sf = parse_spec(_read(args.spec))
    aliases = dict(sf.aliases, **sf.formulas) if sf else None
    f = parse_formula(args.eval, aliases)
    index = len(labels) if args.index is None else args.index
    if not 0 <= index <= len(labels):
        raise _UsageError(f"--index must lie in 0..{len(labels)}")
    depth = max(len(labels), args.depth or 0)
    ps = explore_points(p, depth, constraint, args.node_cap)
    pt = make_point(p, labels, index)
    if not ps.contains(labels):
        raise _UsageError("the label sequence violates the model constraint")
    core = expand_derived(f, p.domains())
    value = evaluator_for(ps).value(pt, core)
    _emit({"formula": render_formula(f), "labels": list(labels), "index": index,
           "depth": depth, "value": {True: "true", False: "false", None: "indeterminate"}[value],
           "state": p.state_dict(pt.prefix.states[index])})
    return EXIT_OK if value is True else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ptel", description="Check temporal-epistemic properties of "
                                          "shared-memory programs.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def prog_opts(sp):
        sp.add_argument("program")
        sp.add_argument("--init", action="append", metavar="VAR=VALUE",
                        help="override a shared variable's initial value")
        sp.add_argument("--node-cap", type=int, default=DEFAULT_NODE_CAP)

    sp = sub.add_parser("check", help="run every directive of a spec file")
    prog_opts(sp)
    sp.add_argument("spec")
    sp.add_argument("--no-timing", action="store_true", help="omit timing fields")
    sp.set_defaults(fn=cmd_check)

    sp = sub.add_parser("explore", help="dump bounded points or the reachable graph")
    prog_opts(sp)
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--depth", type=int)
    g.add_argument("--graph", action="store_true")
    sp.add_argument("--spec")
    sp.add_argument("--under", help="name of a constraint in --spec")
    sp.set_defaults(fn=cmd_explore)

    sp = sub.add_parser("prove", help="check a proof script")
    sp.add_argument("script")
    sp.add_argument("--fuzz", action="store_true", help="also test soundness on random models")
    sp.add_argument("--models", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--depth", type=int, default=8)
    sp.add_argument("--unsound-prev", action="store_true", help=argparse.SUPPRESS)
    sp.set_defaults(fn=cmd_prove)

    sp = sub.add_parser("nnf", help="negation normal form of a Knows-free formula")
    sp.add_argument("formula")
    sp.add_argument("--unfold", type=int, default=3, help="unfoldings of a negated S")
    sp.set_defaults(fn=cmd_nnf)

    sp = sub.add_parser("trace", help="evaluate a formula on one explicit prefix")
    prog_opts(sp)
    sp.add_argument("--labels", default="", help="comma separated thread names")
    sp.add_argument("--eval", required=True, metavar="FORMULA")
    sp.add_argument("--index", type=int, help="position to evaluate at (default: last)")
    sp.add_argument("--depth", type=int, help="depth of the model for knowledge")
    sp.add_argument("--spec", help="spec file for aliases and constraints")
    sp.add_argument("--under", help="name of a constraint in --spec")
    sp.set_defaults(fn=cmd_trace)
    return ap


def _error(kind: str, message: str, **extra) -> None:
    obj = {"error": kind, "message": message}
    obj.update({k: v for k, v in extra.items() if v is not None})
    print(json.dumps(obj, sort_keys=True), file=sys.stderr)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "node_cap", 1) < 1:
            raise _UsageError("--node-cap must be positive")
        return args.fn(args)
    except _UsageError as e:
        _error("usage", str(e))
        return EXIT_USAGE
    except BudgetExceeded as e:
        _error("budget", str(e))
        return EXIT_BUDGET
    except SyntaxProblem as e:
        _error("syntax", e.message, line=e.line, col=e.col)
        return EXIT_USAGE
    except PtelError as e:
        _error(type(e).__name__, str(e))
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
