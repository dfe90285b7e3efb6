"""Sequent derivations: structural checking and semantic fuzzing.

Proof scripts are s-expressions::

    (rule T (seq ("K[A] p") "p")
      (rule axiom (seq ("K[A] p") "K[A] p")))

``(rule NAME ...)`` may be shortened to ``(NAME ...)``.  Formulas are
double-quoted strings in the formula syntax; a bare symbol is accepted as a
formula too.  Hypotheses form a set.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import KernelError, SyntaxProblem
from .formula import (And, Formula, Implies, Knows, Not, Or, Prev, Since, Top, expand_derived,
                      parse_formula, props_in, render_formula, substitute, subformulas,
                      threads_in, variables_in, VarEq)

RULES = ("axiom", "weaken", "mp", "lemE", "andI", "andE1", "andE2", "orI1", "orI2", "orE",
         "notI", "notE", "prev", "sinceI1", "sinceI2", "sinceE", "K", "T", "4", "5")

ARITY = {"axiom": 0, "weaken": 1, "mp": 2, "lemE": 2, "andI": 2, "andE1": 1, "andE2": 1,
         "orI1": 1, "orI2": 1, "orE": 3, "notI": 1, "notE": 2, "prev": 1, "sinceI1": 1,
         "sinceI2": 2, "sinceE": 3, "K": 1, "T": 1, "4": 1, "5": 1}


@dataclass(frozen=True)
class Sequent:
    hyps: frozenset
    goal: Formula

    @classmethod
    def of(cls, hyps, goal) -> "Sequent":
        return cls(frozenset(hyps), goal)

    def render(self) -> str:
        hs = ", ".join(sorted(render_formula(h) for h in self.hyps))
        return f"{hs} |- {render_formula(self.goal)}"


@dataclass(frozen=True)
class Derivation:
    rule: str
    conclusion: Sequent
    premises: tuple["Derivation", ...] = ()

    def nodes(self):
        yield self
        for q in self.premises:
            yield from q.nodes()

    def render(self, indent: int = 0) -> str:
        c = self.conclusion
        hyps = " ".join(f'"{render_formula(h)}"' for h in sorted(c.hyps, key=render_formula))
        head = f'{" " * indent}(rule {self.rule} (seq ({hyps}) "{render_formula(c.goal)}")'
        if not self.premises:
            return head + ")"
        inner = "\n".join(q.render(indent + 2) for q in self.premises)
        return f"{head}\n{inner})"


@dataclass
class CheckResult:
    ok: bool
    error: str | None = None
    path: tuple[int, ...] | None = None
    rule: str | None = None
    nodes: int = 0

    def to_json(self) -> dict:
        return {"valid": self.ok, "error": self.error,
                "path": None if self.path is None else list(self.path),
                "rule": self.rule, "nodes": self.nodes}


def _fail(msg: str):
    raise KernelError(msg)


def _need(cond: bool, msg: str):
    if not cond:
        raise KernelError(msg)


def _check_node(d: Derivation, unsound_prev: bool) -> None:
    rule, c = d.rule, d.conclusion
    if rule not in ARITY:
        _fail(f"unknown rule {rule!r}")
    if len(d.premises) != ARITY[rule]:
        _fail(f"{rule} takes {ARITY[rule]} premise(s), got {len(d.premises)}")
    P = [q.conclusion for q in d.premises]
    G, goal = c.hyps, c.goal

    def same_hyps(*idx):
        for i in idx:
            _need(P[i].hyps == G, f"{rule}: premise {i + 1} must have hypotheses {{{_hs(G)}}}, "
                                  f"found {{{_hs(P[i].hyps)}}}")

    if rule == "axiom":
        _need(goal in G, f"axiom: goal {render_formula(goal)} is not among the hypotheses")
    elif rule == "weaken":
        _need(P[0].hyps <= G, "weaken: premise hypotheses must be a subset of the conclusion's")
        _need(P[0].goal == goal, "weaken: premise and conclusion goals differ")
    elif rule == "mp":
        same_hyps(0, 1)
        _need(P[1].goal == Implies(P[0].goal, goal),
              f"mp: expected second premise goal {render_formula(Implies(P[0].goal, goal))}, "
              f"found {render_formula(P[1].goal)}")
    elif rule == "lemE":
        _need(P[0].goal == goal and P[1].goal == goal, "lemE: premises must prove the conclusion goal")
        ok = any(P[0].hyps == G | {phi} and P[1].hyps == G | {Not(phi)} for phi in P[0].hyps)
        _need(ok, "lemE: premises must extend the hypotheses by some f and by !f")
    elif rule == "andI":
        same_hyps(0, 1)
        _need(goal == And(P[0].goal, P[1].goal), "andI: conclusion must be the conjunction of the premises")
    elif rule in ("andE1", "andE2"):
        same_hyps(0)
        _need(isinstance(P[0].goal, And), f"{rule}: premise must prove a conjunction")
        part = P[0].goal.left if rule == "andE1" else P[0].goal.right
        _need(goal == part, f"{rule}: conclusion must be the {'left' if rule == 'andE1' else 'right'} conjunct")
    elif rule in ("orI1", "orI2"):
        same_hyps(0)
        _need(isinstance(goal, Or), f"{rule}: conclusion must be a disjunction")
        part = goal.left if rule == "orI1" else goal.right
        _need(P[0].goal == part, f"{rule}: premise must prove the {'left' if rule == 'orI1' else 'right'} disjunct")
    elif rule == "orE":
        same_hyps(0)
        _need(isinstance(P[0].goal, Or), "orE: first premise must prove a disjunction")
        a, b = P[0].goal.left, P[0].goal.right
        _need(P[1].hyps == G | {a} and P[1].goal == goal, "orE: second premise must be G, left |- goal")
        _need(P[2].hyps == G | {b} and P[2].goal == goal, "orE: third premise must be G, right |- goal")
    elif rule == "notI":
        _need(isinstance(goal, Not), "notI: conclusion must be a negation")
        _need(P[0].hyps == G | {goal.arg}, "notI: premise must assume the negated formula")
        _need(P[0].goal == Not(Top()) or P[0].goal == _bottom(), "notI: premise must prove false")
    elif rule == "notE":
        same_hyps(0, 1)
        _need(P[1].goal == Not(P[0].goal), "notE: premises must prove f and !f")
    elif rule == "prev":
        _need(goal == Prev(P[0].goal), "prev: conclusion must be Y of the premise goal")
        shifted = frozenset(Prev(h) for h in P[0].hyps)
        expected = shifted | {Prev(Top())}
        if unsound_prev:
            _need(G in (expected, shifted), "prev: hypotheses must be Y of the premise hypotheses")
        else:
            _need(G == expected, f"prev: conclusion hypotheses must be {{{_hs(expected)}}} "
                                 f"(Y of the premise's, plus Y true), found {{{_hs(G)}}}")
    elif rule == "sinceI1":
        same_hyps(0)
        _need(isinstance(goal, Since) and goal.right == P[0].goal,
              "sinceI1: conclusion must be f S g with premise proving g")
    elif rule == "sinceI2":
        same_hyps(0, 1)
        _need(isinstance(goal, Since), "sinceI2: conclusion must be an S formula")
        _need(P[0].goal == goal.left, "sinceI2: first premise must prove the left operand")
        _need(P[1].goal == Prev(goal), "sinceI2: second premise must prove Y of the conclusion")
    elif rule == "sinceE":
        same_hyps(0)
        s = P[0].goal
        _need(isinstance(s, Since), "sinceE: first premise must prove an S formula")
        _need(P[1].hyps == G | {s.right} and P[1].goal == goal,
              "sinceE: second premise must be G, right |- goal")
        _need(P[2].hyps == G | {Prev(s), s.left} and P[2].goal == goal,
              "sinceE: third premise must be G, Y(f S g), f |- goal")
    elif rule == "K":
        _need(isinstance(goal, Knows) and goal.arg == P[0].goal, "K: conclusion must be K[A] of the premise goal")
        a = goal.thread
        _need(G == frozenset(Knows(a, h) for h in P[0].hyps),
              f"K: conclusion hypotheses must be K[{a}] of the premise hypotheses")
    elif rule == "T":
        same_hyps(0)
        k = P[0].goal
        _need(isinstance(k, Knows) and k.arg == goal, "T: premise must prove K[A] of the conclusion")
    elif rule == "4":
        same_hyps(0)
        k = P[0].goal
        _need(isinstance(k, Knows) and goal == Knows(k.thread, k), "4: conclusion must be K[A] K[A] f")
    elif rule == "5":
        same_hyps(0)
        nk = P[0].goal
        _need(isinstance(nk, Not) and isinstance(nk.arg, Knows), "5: premise must prove !K[A] f")
        _need(goal == Knows(nk.arg.thread, nk), "5: conclusion must be K[A] !K[A] f")


def _bottom():
    from .formula import Bottom
    return Bottom()


def _hs(hyps) -> str:
    return ", ".join(sorted(render_formula(h) for h in hyps))


def check_derivation(d: Derivation, unsound_prev: bool = False) -> CheckResult:
    """Accept iff every node instantiates its rule schema.

    ``unsound_prev`` drops the ``Y true`` side condition of ``prev``; it
    exists only to show that the fuzzer catches the resulting bug.
    """
    count = 0
    stack: list[tuple[Derivation, tuple[int, ...]]] = [(d, ())]
    while stack:
        node, path = stack.pop()
        count += 1
        try:
            _check_node(node, unsound_prev)
        except KernelError as e:
            return CheckResult(False, str(e), path, node.rule, count)
        stack.extend((q, path + (i,)) for i, q in reversed(list(enumerate(node.premises))))
    return CheckResult(True, nodes=count)


# ---- s-expression scripts --------------------------------------------------

_SX = re.compile(r'\s*(?:(;[^\n]*)|(\()|(\))|"((?:[^"\\]|\\.)*)"|([^\s()";]+))')


def _read_sexpr(text: str):
    pos = 0
    stack: list[list] = [[]]
    while True:
        m = _SX.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip():
                raise SyntaxProblem(f"cannot read proof script near {text[pos:pos + 20]!r}")
            break
        pos = m.end()
        comment, lp, rp, string, sym = m.groups()
        if comment:
            continue
        if lp:
            stack.append([])
        elif rp:
            if len(stack) == 1:
                raise SyntaxProblem("unbalanced ')' in proof script")
            done = stack.pop()
            stack[-1].append(done)
        elif string is not None:
            stack[-1].append(("str", string.replace('\\"', '"')))
        elif sym:
            stack[-1].append(("sym", sym))
    if len(stack) != 1:
        raise SyntaxProblem("unbalanced '(' in proof script")
    return stack[0]


def _formula_of(item, aliases) -> Formula:
    if isinstance(item, tuple):
        return parse_formula(item[1], aliases)
    raise SyntaxProblem(f"expected a formula, found a list {item!r}")


def _build(node, aliases) -> Derivation:
    if not isinstance(node, list) or not node or not isinstance(node[0], tuple):
        raise SyntaxProblem("a derivation is a list starting with a rule")
    items = list(node)
    head = items.pop(0)[1]
    if head == "rule":
        if not items or not isinstance(items[0], tuple):
            raise SyntaxProblem("(rule NAME ...) needs a rule name")
        head = items.pop(0)[1]
    if head not in ARITY:
        raise SyntaxProblem(f"unknown rule {head!r}")
    if not items or not isinstance(items[0], list) or not items[0] or items[0][0] != ("sym", "seq"):
        raise SyntaxProblem(f"{head}: expected (seq (hyps...) goal)")
    seq = items.pop(0)
    if len(seq) != 3 or not isinstance(seq[1], list):
        raise SyntaxProblem(f"{head}: (seq (hyps...) goal) has the wrong shape")
    hyps = [_formula_of(h, aliases) for h in seq[1]]
    goal = _formula_of(seq[2], aliases)
    premises = tuple(_build(q, aliases) for q in items)
    if len(premises) != ARITY[head]:
        raise SyntaxProblem(f"{head} takes {ARITY[head]} premise(s), got {len(premises)}")
    return Derivation(head, Sequent.of(hyps, goal), premises)


def parse_derivation(text: str, aliases=None) -> Derivation:
    forms = _read_sexpr(text)
    if len(forms) != 1:
        raise SyntaxProblem(f"a proof script holds exactly one derivation, found {len(forms)}")
    return _build(forms[0], aliases)


# ---- soundness fuzzing -----------------------------------------------------

@dataclass
class Violation:
    sequent: str
    program: str
    substitution: dict
    labels: tuple[str, ...]
    index: int

    def to_json(self) -> dict:
        return {"sequent": self.sequent, "program": self.program,
                "substitution": self.substitution, "labels": list(self.labels),
                "index": self.index}


@dataclass
class FuzzReport:
    models: int
    contexts_checked: int
    premise_hits: int
    violations: list[Violation] = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"models": self.models, "contexts_checked": self.contexts_checked,
                "premise_hits": self.premise_hits, "violations": len(self.violations),
                "first_violation": self.violations[0].to_json() if self.violations else None}


def soundness_fuzz(d: Derivation, models: int = 100, seed: int = 0, max_depth: int = 8,
                   node_budget: int = 4000, stop_at_first: bool = True) -> FuzzReport:
    """Check every sequent of ``d`` at every point of random bounded models.

    Propositional letters are bound to random state predicates and thread
    names are mapped to program threads afresh for each model.  A point
    where all hypotheses are true but the goal is false is a violation.
    """
    from .evaluator import evaluator_for
    from .explorer import explore_points
    from .sampling import random_program, random_state_formula

    rng = random.Random(seed)
    sequents = list(dict.fromkeys(n.conclusion for n in d.nodes()))
    all_f = [f for s in sequents for f in (*s.hyps, s.goal)]
    threads = sorted(set().union(*(threads_in(f) for f in all_f)) or {"T0"})
    if len(threads) > 3:
        raise KernelError("soundness fuzzing supports at most three thread names")
    needed_vars = sorted(set().union(*(variables_in(f) for f in all_f)))
    values = [g.value for f in all_f for g in subformulas(f) if isinstance(g, VarEq)]
    letters = sorted(set().union(*(props_in(f) for f in all_f)))

    report = FuzzReport(0, 0, 0)
    for _ in range(models):
        extra = [f"E{k}" for k in range(rng.randint(0, 3 - len(threads)))]
        shared = needed_vars or ["x", "y", "z"][:rng.randint(1, 3)]
        p = random_program(rng, threads=threads + extra, shared=shared,
                           hi=max([rng.randint(1, 2)] + values))
        depth = max_depth
        while depth > 1 and sum(len(p.thread_names) ** k for k in range(depth + 1)) > node_budget:
            depth -= 1
        ps = explore_points(p, depth)
        ev = evaluator_for(ps)
        binding = {x: random_state_formula(rng, p, size=rng.randint(1, 3)) for x in letters}
        inner = ~ps.is_root
        report.models += 1
        for s in sequents:
            hyp = None
            for h in s.hyps:
                tv = ev.truth(expand_derived(substitute(h, binding), p.domains()))
                hyp = (tv.Ft, tv.Et) if hyp is None else (hyp[0] & tv.Ft, hyp[1] & tv.Et)
            if hyp is None:
                hyp = (np.ones(len(ps), bool), np.ones(len(ps), bool))
            goal = ev.truth(expand_derived(substitute(s.goal, binding), p.domains()))
            hF, hE = hyp[0], hyp[1] & inner
            report.contexts_checked += len(ps) + int(inner.sum())
            report.premise_hits += int(hF.sum() + hE.sum())
            badF = np.flatnonzero(hF & goal.Ff)
            badE = np.flatnonzero(hE & goal.Ef)
            if len(badF) or len(badE):
                if len(badF):
                    n = int(badF[0])
                    labels, index = ps.labels(n), len(ps.labels(n))
                else:
                    c = int(badE[0])
                    labels = ps.labels(c)
                    index = len(labels) - 1
                report.violations.append(Violation(
                    s.render(), p.to_text(),
                    {k: render_formula(v) for k, v in binding.items()}, labels, index))
                if stop_at_first:
                    return report
    return report
