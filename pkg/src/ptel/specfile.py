"""Spec files: named formulas, model constraints, RG interfaces, directives.

Line based, ``#`` comments, indented lines continue the previous one::

    alias InCS0 = at(T0, l_cs)
    formula MUTEX = H !(InCS0 & InCS1)
    constraint CODE = H(!after(T0) -> flag0 = Y flag0)
    guarantee T0 : flag1 = Y flag1
    rely T0 : flag0 = Y flag0

    check valid MUTEX depth=14 audit=2
    check valid ENTRY0 depth=12 audit=2 under=CODE
    check invariant MUTEX_STATE
    stepspec env T0 : flag0 = Y flag0
    obligation compat T0
    obligation invariant INV
    obligation parallel INV

Any directive accepts ``expect=fail``; it then passes exactly when the
underlying check fails.
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field

from .errors import FormulaError, SyntaxProblem
from .evaluator import check_invariant, check_valid_bounded, stability_audit
from .explorer import DEFAULT_NODE_CAP, induction_graph, reachable_graph
from .formula import Formula, is_extensional, parse_formula, render_formula
from .program import Program
from .rg import (RGInterface, StepSpec, check_step_spec, entails_on_edges,
                 invariant_by_preservation, parallel_composition)

MAX_DEPTH = 24

_ID = r"[A-Za-z_][A-Za-z0-9_]*"
_NAMED = re.compile(rf"(alias|formula|constraint)\s+({_ID})\s*=\s*(.+)$", re.S)
_IFACE = re.compile(rf"(guarantee|rely)\s+({_ID})\s*:\s*(.+)$", re.S)
_CHECK = re.compile(rf"check\s+(valid|invariant)\s+({_ID})((?:\s+{_ID}=\S+)*)\s*$")
_STEP = re.compile(rf"stepspec\s+(?:(on|env)\s+({_ID})|(all))((?:\s+{_ID}=\S+)*)\s*:\s*(.+)$", re.S)
_OBLIG = re.compile(rf"obligation\s+(compat|invariant|parallel)\s+({_ID})((?:\s+{_ID}=\S+)*)\s*$")


@dataclass
class Directive:
    kind: str
    target: str
    options: dict
    line: int
    spec: StepSpec | None = None

    @property
    def expect_fail(self) -> bool:
        return self.options.get("expect", "pass") == "fail"

    def label(self) -> str:
        opts = " ".join(f"{k}={v}" for k, v in self.options.items())
        return f"{self.kind} {self.target}" + (f" {opts}" if opts else "")


@dataclass
class SpecFile:
    aliases: dict[str, Formula] = field(default_factory=dict)
    formulas: dict[str, Formula] = field(default_factory=dict)
    constraints: dict[str, Formula] = field(default_factory=dict)
    guarantees: dict[str, list[StepSpec]] = field(default_factory=dict)
    relies: dict[str, list[StepSpec]] = field(default_factory=dict)
    directives: list[Directive] = field(default_factory=list)

    def formula(self, name: str) -> Formula:
        for table in (self.formulas, self.aliases, self.constraints):
            if name in table:
                return table[name]
        raise FormulaError(f"unknown formula name {name!r}")

    def interfaces(self, p: Program) -> list[RGInterface]:
        return [RGInterface(a, self.guarantees.get(a, []), self.relies.get(a, []))
                for a in p.thread_names]


def _options(text: str, line: int, allowed: set[str]) -> dict:
    out = {}
    for item in text.split():
        k, _, v = item.partition("=")
        if k not in allowed:
            raise SyntaxProblem(f"unknown option {k!r}", line, 1)
        out[k] = v
    if out.get("expect", "pass") not in ("pass", "fail"):
        raise SyntaxProblem("expect= takes 'pass' or 'fail'", line, 1)
    return out


def _logical_lines(text: str):
    buf, start = None, 0
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if line[0].isspace() and buf is not None:
            buf += " " + line.strip()
            continue
        if buf is not None:
            yield start, buf
        buf, start = line.strip(), n
    if buf is not None:
        yield start, buf


def _parse(text: str, line: int, aliases) -> Formula:
    try:
        return parse_formula(text, aliases)
    except SyntaxProblem as e:
        raise SyntaxProblem(f"{e.message} (in formula on line {line})", line, e.col) from None


def parse_spec(text: str) -> SpecFile:
    sf = SpecFile()
    names: dict[str, Formula] = {}
    for n, line in _logical_lines(text):
        if m := _NAMED.match(line):
            kind, name, body = m.groups()
            if name in names:
                raise SyntaxProblem(f"name {name} defined twice", n, 1)
            f = _parse(body, n, names)
            names[name] = f
            {"alias": sf.aliases, "formula": sf.formulas, "constraint": sf.constraints}[kind][name] = f
        elif m := _IFACE.match(line):
            kind, thread, body = m.groups()
            f = _parse(body, n, names)
            if kind == "guarantee":
                sf.guarantees.setdefault(thread, []).append(StepSpec("on", thread, f))
            else:
                sf.relies.setdefault(thread, []).append(StepSpec("env", thread, f))
        elif m := _CHECK.match(line):
            mode, target, opts = m.groups()
            allowed = {"depth", "audit", "under", "expect"} if mode == "valid" else {"expect", "under"}
            o = _options(opts, n, allowed)
            sf.directives.append(Directive(f"check-{mode}", target, o, n))
        elif m := _STEP.match(line):
            scope, thread, all_, opts, body = m.groups()
            o = _options(opts, n, {"expect", "under"})
            spec = StepSpec(scope or "all", thread, _parse(body, n, names))
            sf.directives.append(Directive("stepspec", spec.label(), o, n, spec))
        elif m := _OBLIG.match(line):
            kind, target, opts = m.groups()
            o = _options(opts, n, {"expect"})
            sf.directives.append(Directive(f"obligation-{kind}", target, o, n))
        else:
            raise SyntaxProblem(f"cannot read spec line {line!r}", n, 1)
    _resolve(sf)
    return sf


def _resolve(sf: SpecFile) -> None:
    for d in sf.directives:
        if d.kind in ("check-valid", "check-invariant", "obligation-invariant", "obligation-parallel"):
            sf.formula(d.target)
        if "under" in d.options and d.options["under"] not in sf.constraints:
            raise FormulaError(f"line {d.line}: unknown constraint {d.options['under']!r}")
        if "depth" in d.options:
            depth = int(d.options["depth"])
            if not 0 <= depth <= MAX_DEPTH:
                raise FormulaError(f"line {d.line}: depth must lie in 0..{MAX_DEPTH}")
        if "audit" in d.options and int(d.options["audit"]) < 1:
            raise FormulaError(f"line {d.line}: audit increment must be >= 1")


# ---- running ----------------------------------------------------------------

@dataclass
class DirectiveResult:
    directive: Directive
    passed: bool
    outcome: str
    report: dict

    def to_json(self) -> dict:
        d = self.directive
        return {"directive": d.label(), "line": d.line, "kind": d.kind,
                "expect": "fail" if d.expect_fail else "pass",
                "outcome": self.outcome, "passed": self.passed, "report": self.report}


@dataclass
class RunReport:
    program: str
    spec: str
    init: dict
    results: list[DirectiveResult]
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_json(self, timing: bool = True) -> dict:
        out = {"program": self.program, "spec": self.spec, "init": self.init,
               "passed": self.passed,
               "summary": {"directives": len(self.results),
                           "passed": sum(r.passed for r in self.results)},
               "directives": [r.to_json() for r in self.results]}
        if timing:
            out["timing"] = {"elapsed_s": round(self.elapsed, 6)}
        else:
            _strip_timing(out)
        return out


def _strip_timing(obj):
    if isinstance(obj, dict):
        obj.pop("timing", None)
        for v in obj.values():
            _strip_timing(v)
    elif isinstance(obj, list):
        for v in obj:
            _strip_timing(v)


class _Graphs:
    def __init__(self, p: Program, sf: SpecFile, node_cap: int):
        self.p, self.sf, self.cap = p, sf, node_cap
        self.cache: dict = {}

    def reachable(self, under: str | None):
        key = ("r", under)
        if key not in self.cache:
            c = self.sf.constraints[under] if under else None
            self.cache[key] = reachable_graph(self.p, c, self.cap)
        return self.cache[key]

    def inductive(self, inv: Formula):
        key = ("i", inv)
        if key not in self.cache:
            self.cache[key] = induction_graph(self.p, inv)
        return self.cache[key]


def run_directive(p: Program, sf: SpecFile, d: Directive, graphs: _Graphs,
                  node_cap: int = DEFAULT_NODE_CAP) -> DirectiveResult:
    under = d.options.get("under")
    constraint = sf.constraints[under] if under else None
    if d.kind == "check-valid":
        f = sf.formula(d.target)
        depth = int(d.options.get("depth", 10))
        rep = check_valid_bounded(p, f, depth, constraint, node_cap)
        out = rep.to_json()
        ok = rep.holds
        if "audit" in d.options:
            audit = stability_audit(p, f, depth, int(d.options["audit"]), constraint, node_cap)
            out["audit"] = audit.to_json()
            ok = ok and audit.stable
        outcome = "holds" if ok else "fails"
    elif d.kind == "check-invariant":
        f = sf.formula(d.target)
        if not is_extensional(f):
            raise FormulaError(f"line {d.line}: check invariant needs a state formula, "
                               f"got {render_formula(f)}")
        rep = check_invariant(p, f, graphs.reachable(under))
        out, outcome = rep.to_json(), rep.verdict
    elif d.kind == "stepspec":
        rep = check_step_spec(graphs.reachable(under), d.spec)
        out, outcome = rep.to_json(p), "holds" if rep.holds else "fails"
    elif d.kind == "obligation-compat":
        a = d.target
        if a not in p.thread_index:
            raise FormulaError(f"line {d.line}: unknown thread {a!r}")
        others = [g for b in p.thread_names if b != a for g in sf.guarantees.get(b, [])]
        rely = sf.relies.get(a, [])
        rep = entails_on_edges(graphs.reachable(None), others, rely, name=f"G_-{a} |= R_{a}")
        out, outcome = rep.to_json(p), "holds" if rep.holds else "fails"
    elif d.kind == "obligation-invariant":
        inv = sf.formula(d.target)
        rep = invariant_by_preservation(graphs.inductive(inv), inv)
        out, outcome = rep.to_json(p), "holds" if rep.holds else "fails"
    elif d.kind == "obligation-parallel":
        inv = sf.formula(d.target)
        rep = parallel_composition(graphs.inductive(inv), sf.interfaces(p), inv)
        out, outcome = rep.to_json(p), "holds" if rep.holds else "fails"
    else:
        raise FormulaError(f"unknown directive kind {d.kind}")
    passed = (outcome == "fails") if d.expect_fail else (outcome == "holds")
    return DirectiveResult(d, passed, outcome, out)


def run_spec(p: Program, sf: SpecFile, program_name: str = "", spec_name: str = "",
             init: dict | None = None, node_cap: int = DEFAULT_NODE_CAP) -> RunReport:
    t0 = time.perf_counter()
    graphs = _Graphs(p, sf, node_cap)
    results = [run_directive(p, sf, d, graphs, node_cap) for d in sf.directives]
    return RunReport(program_name, spec_name, dict(init or {}), results,
                     time.perf_counter() - t0)
