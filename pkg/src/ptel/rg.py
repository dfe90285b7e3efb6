"""Step specifications checked exactly on transition graphs.

A :class:`StepSpec` is a two-state constraint restricted to some steps:

* ``on A``   -- steps taken by ``A`` (a guarantee);
* ``env A``  -- every other step, and the initial time (a rely);
* ``all``    -- every step and the initial time.

As a trace formula these are ``H(after(A) -> c)``, ``H(!after(A) -> c)`` and
``H c``.  The initial time behaves like a step with no pre-state, so ``Y``
is false there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import FormulaError
from .explorer import TransitionGraph
from .formula import (Formula, Implies, Not, Prev, Top, after, always, expand_derived,
                      is_extensional, render_formula)
from .program import Program, check_step_shape, state_holds, step_holds

SCOPES = ("on", "env", "all")


@dataclass(frozen=True)
class StepSpec:
    scope: str
    thread: str | None
    constraint: Formula
    name: str = ""

    def __post_init__(self):
        if self.scope not in SCOPES:
            raise FormulaError(f"unknown scope {self.scope!r}")
        if (self.scope == "all") != (self.thread is None):
            raise FormulaError("'all' takes no thread; 'on'/'env' need one")

    def covers(self, actor: str | None) -> bool:
        if self.scope == "all":
            return True
        if self.scope == "on":
            return actor == self.thread
        return actor != self.thread

    def step_formula(self) -> Formula:
        """The constraint guarded by the scope, as it must hold at each post point."""
        if self.scope == "on":
            return Implies(after(self.thread), self.constraint)
        if self.scope == "env":
            return Implies(Not(after(self.thread)), self.constraint)
        return self.constraint

    def as_formula(self) -> Formula:
        if self.scope == "on":
            return always(Implies(after(self.thread), self.constraint))
        if self.scope == "env":
            return always(Implies(Not(after(self.thread)), self.constraint))
        return always(self.constraint)

    def label(self) -> str:
        if self.name:
            return self.name
        who = "all" if self.scope == "all" else f"{self.scope} {self.thread}"
        return f"[{who}] {render_formula(self.constraint)}"


@dataclass
class RGInterface:
    thread: str
    guarantee: list[StepSpec] = field(default_factory=list)
    rely: list[StepSpec] = field(default_factory=list)

    def __post_init__(self):
        for g in self.guarantee:
            if g.scope != "on" or g.thread != self.thread:
                raise FormulaError(f"guarantees of {self.thread} must be scoped 'on {self.thread}'")
        for r in self.rely:
            if r.scope != "env" or r.thread != self.thread:
                raise FormulaError(f"relies of {self.thread} must be scoped 'env {self.thread}'")


@dataclass
class EdgeWitness:
    pre: object | None
    actor: str | None
    post: object
    path: tuple[str, ...] | None

    def to_json(self, p: Program) -> dict:
        return {"pre": None if self.pre is None else p.state_dict(self.pre),
                "actor": self.actor,
                "post": p.state_dict(self.post),
                "path": None if self.path is None else list(self.path),
                "labels": self.labels}

    @property
    def labels(self) -> list[str] | None:
        """Labels of a prefix ending with this edge, or None off the reachable part."""
        if self.path is None:
            return None
        return list(self.path) + ([self.actor] if self.actor else [])


@dataclass
class ObligationReport:
    name: str
    kind: str
    holds: bool
    witness: EdgeWitness | None = None
    premises: list["ObligationReport"] = field(default_factory=list)
    edges_checked: int = 0
    note: str = ""
    violated: Formula | None = None

    def to_json(self, p: Program) -> dict:
        out = {"name": self.name, "kind": self.kind,
               "verdict": "holds" if self.holds else "fails",
               "edges_checked": self.edges_checked,
               "witness": None if self.witness is None else self.witness.to_json(p)}
        if self.violated is not None:
            out["violated"] = render_formula(self.violated)
        if self.note:
            out["note"] = self.note
        if self.premises:
            out["premises"] = [q.to_json(p) for q in self.premises]
        return out


class _Compiled:
    """A step spec with its constraint expanded against the program's domains."""

    def __init__(self, p: Program, spec: StepSpec):
        self.spec = spec
        self.core = expand_derived(spec.constraint, p.domains())
        check_step_shape(self.core)
        self.p = p

    def holds(self, pre, actor, post) -> bool:
        if not self.spec.covers(actor):
            return True
        return step_holds(self.p, self.core, pre, actor, post)


def _edges(g: TransitionGraph):
    """Every edge plus the initial pseudo-step ``(None, None, s0)``."""
    yield None, None, g.initial
    yield from g.edges


def _witness(g: TransitionGraph, src, actor, dst) -> EdgeWitness:
    if src is None:
        return EdgeWitness(None, None, g.states[dst], ())
    path = g.path_to(src)
    return EdgeWitness(g.states[src], actor, g.states[dst], path)


def replay_edge(p: Program, spec: StepSpec, w: EdgeWitness) -> bool:
    """Re-evaluate a spec on a reported edge."""
    return _Compiled(p, spec).holds(w.pre, w.actor, w.post)


def check_step_spec(g: TransitionGraph, spec: StepSpec) -> ObligationReport:
    c = _Compiled(g.program, spec)
    n = 0
    for src, a, dst in _edges(g):
        pre = None if src is None else g.states[src]
        if not spec.covers(a):
            continue
        n += 1
        if not c.holds(pre, a, g.states[dst]):
            return ObligationReport(spec.label(), "stepspec", False, _witness(g, src, a, dst),
                                    edges_checked=n, violated=spec.step_formula())
    return ObligationReport(spec.label(), "stepspec", True, edges_checked=n)


def entails_on_edges(g: TransitionGraph, lhs: list[StepSpec], rhs: StepSpec | list[StepSpec],
                     name: str = "") -> ObligationReport:
    """On every edge where all of ``lhs`` hold, all of ``rhs`` hold."""
    rhs = [rhs] if isinstance(rhs, StepSpec) else list(rhs)
    left = [_Compiled(g.program, s) for s in lhs]
    right = [_Compiled(g.program, s) for s in rhs]
    name = name or " & ".join(s.label() for s in lhs) + " |= " + " & ".join(s.label() for s in rhs)
    n = 0
    for src, a, dst in _edges(g):
        pre = None if src is None else g.states[src]
        post = g.states[dst]
        n += 1
        if not all(c.holds(pre, a, post) for c in left):
            continue
        bad = next((c for c in right if not c.holds(pre, a, post)), None)
        if bad is not None:
            return ObligationReport(name, "entailment", False, _witness(g, src, a, dst),
                                    edges_checked=n, violated=bad.spec.step_formula())
    return ObligationReport(name, "entailment", True, edges_checked=n)


def _state_formula(p: Program, inv: Formula) -> Formula:
    if not is_extensional(inv):
        raise FormulaError(f"invariant must be a state formula: {render_formula(inv)}")
    return expand_derived(inv, p.domains())


def pres_spec(inv: Formula, thread: str | None = None) -> StepSpec:
    """``Y I -> I`` on the steps of ``thread``, or on every step."""
    body = Implies(Prev(inv), inv)
    if thread is None:
        return StepSpec("all", None, Implies(Prev(Top()), body), name=f"Pres({render_formula(inv)})")
    return StepSpec("on", thread, body, name=f"Pres_{thread}({render_formula(inv)})")


def _check_pres(g: TransitionGraph, core: Formula, thread: str | None, name: str,
                shown: Formula | None = None) -> ObligationReport:
    p = g.program
    n = 0
    for src, a, dst in g.edges:
        if thread is not None and a != thread:
            continue
        n += 1
        if state_holds(p, g.states[src], core) and not state_holds(p, g.states[dst], core):
            return ObligationReport(name, "preservation", False, _witness(g, src, a, dst),
                                    edges_checked=n, violated=pres_spec(shown or core, thread).step_formula())
    return ObligationReport(name, "preservation", True, edges_checked=n)


def invariant_by_preservation(g: TransitionGraph, inv: Formula) -> ObligationReport:
    """Initial state satisfies ``inv`` and every edge preserves it."""
    p = g.program
    core = _state_formula(p, inv)
    label = render_formula(inv)
    init_ok = state_holds(p, g.states[g.initial], core)
    base = ObligationReport(f"Init & {label}", "base", init_ok,
                            None if init_ok else _witness(g, None, None, g.initial),
                            edges_checked=1, violated=None if init_ok else inv)
    step = _check_pres(g, core, None, f"Pres({label})", inv)
    holds = base.holds and step.holds
    return ObligationReport(f"invariant {label}", "invariant", holds,
                            base.witness or step.witness, premises=[base, step],
                            violated=base.violated or step.violated,
                            edges_checked=step.edges_checked,
                            note=f"checked on the {g.kind} graph")


def pres_by_thread(g: TransitionGraph, inv: Formula) -> dict[str, ObligationReport]:
    p = g.program
    core = _state_formula(p, inv)
    label = render_formula(inv)
    return {a: _check_pres(g, core, a, f"Pres_{a}({label})", inv) for a in p.thread_names}


def parallel_composition(g: TransitionGraph, ifaces: list[RGInterface], inv: Formula) -> ObligationReport:
    """The derived parallel-composition rule, premise by premise.

    Premises, for every thread A: its guarantee holds of the program; the
    other threads' guarantees entail its rely; guarantee and rely together
    entail preservation of ``inv`` on A's steps.  Conclusion: under all
    guarantees every step preserves ``inv``.
    """
    p = g.program
    by_thread = {i.thread: i for i in ifaces}
    if set(by_thread) != set(p.thread_names) or len(ifaces) != len(by_thread):
        raise FormulaError("parallel composition needs exactly one interface per thread")
    core = _state_formula(p, inv)
    label = render_formula(inv)
    premises: list[ObligationReport] = []
    for a in p.thread_names:
        iface = by_thread[a]
        for gs in iface.guarantee:
            r = check_step_spec(g, gs)
            r.kind, r.name = "guarantee", f"G_{a}: {gs.label()}"
            premises.append(r)
        others = [gs for b in p.thread_names if b != a for gs in by_thread[b].guarantee]
        if iface.rely:
            premises.append(_named(entails_on_edges(g, others, iface.rely), "compat",
                                   f"G_-{a} |= R_{a}"))
        else:
            premises.append(ObligationReport(f"G_-{a} |= R_{a}", "compat", True,
                                             note="no rely declared"))
        premises.append(_named(entails_on_edges(g, iface.guarantee + iface.rely,
                                                pres_spec(inv, a)),
                               "local", f"G_{a} & R_{a} |= Pres_{a}({label})"))
    all_g = [gs for i in ifaces for gs in i.guarantee]
    concl = _named(entails_on_edges(g, all_g, pres_spec(inv)), "conclusion",
                   f"G |= Pres({label})")
    premises_hold = all(q.holds for q in premises)
    failed = next((q for q in premises if not q.holds), concl)
    note = f"checked on the {g.kind} graph"
    if premises_hold:
        direct = _check_pres(g, core, None, "")
        if direct.holds != concl.holds:
            raise AssertionError("parallel rule conclusion disagrees with direct preservation check")
    return ObligationReport(f"parallel {label}", "parallel", premises_hold and concl.holds,
                            failed.witness, premises=premises + [concl], violated=failed.violated,
                            edges_checked=concl.edges_checked, note=note)


def _named(r: ObligationReport, kind: str, name: str) -> ObligationReport:
    r.kind, r.name = kind, name
    return r
