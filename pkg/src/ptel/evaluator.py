"""Satisfaction over bounded point sets, bounded validity, depth audits.

Every subformula is evaluated at once over all evaluation contexts of a
:class:`~ptel.explorer.PointSet`, as a pair of boolean arrays (definitely
true, definitely false).  There are two kinds of context:

* frontier ``F[n]``: node ``n`` with no known outgoing step;
* inner ``E[c]``: the parent of node ``c``, with the next step known to be
  the one leading to ``c``.

``active(A)`` is unknown at a frontier and decided at an inner context;
unknowns propagate Kleene-style.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import FormulaError
from .explorer import Point, PointSet, explore_points
from .formula import (Active, And, At, Bottom, DualSince, Formula, Iff, Implies, Knows, Macro,
                      Not, Or, Prev, Prop, Since, Top, Unchanged, VarEq, expand_derived,
                      render_formula)
from .program import Program, atom_holds


@dataclass
class TV:
    """Three-valued truth over every context: ``t`` true, ``f`` false, neither unknown."""
    Ft: np.ndarray
    Ff: np.ndarray
    Et: np.ndarray
    Ef: np.ndarray

    def frontier(self, n: int) -> bool | None:
        return True if self.Ft[n] else False if self.Ff[n] else None

    def inner(self, c: int) -> bool | None:
        return True if self.Et[c] else False if self.Ef[c] else None


def _neg(x: TV) -> TV:
    return TV(x.Ff, x.Ft, x.Ef, x.Et)


def _and(x: TV, y: TV) -> TV:
    return TV(x.Ft & y.Ft, x.Ff | y.Ff, x.Et & y.Et, x.Ef | y.Ef)


def _or(x: TV, y: TV) -> TV:
    return TV(x.Ft | y.Ft, x.Ff & y.Ff, x.Et | y.Et, x.Ef & y.Ef)


class Evaluator:
    def __init__(self, ps: PointSet):
        self.ps = ps
        self.p: Program = ps.program
        n = len(ps)
        self.n = n
        self.root = ps.is_root
        self.par = np.where(self.root, 0, ps.parent)
        self.par_root = self.root[self.par] | self.root
        self.pstate = ps.state[self.par]
        self.memo: dict[Formula, TV] = {}
        self._false = np.zeros(n, dtype=bool)

    # -- helpers
    def _state_tv(self, pred) -> TV:
        vals = np.fromiter((pred(s) for s in self.ps.states), dtype=bool, count=len(self.ps.states))
        F = vals[self.ps.state]
        E = vals[self.pstate]
        return TV(F, ~F, E, ~E)

    def truth(self, f: Formula) -> TV:
        tv = self.memo.get(f)
        if tv is None:
            tv = self._compute(f)
            self.memo[f] = tv
        return tv

    def _compute(self, f: Formula) -> TV:
        ps = self.ps
        if isinstance(f, Top):
            one = ~self._false
            return TV(one, self._false, one, self._false)
        if isinstance(f, Bottom):
            return _neg(self.truth(Top()))
        if isinstance(f, (VarEq, At)):
            return self._state_tv(lambda s: atom_holds(self.p, s, f))
        if isinstance(f, Prop):
            raise FormulaError(f"propositional letter {f.name!r} is not bound to a state predicate")
        if isinstance(f, Active):
            if f.thread not in self.p.thread_index:
                raise FormulaError(f"unknown thread {f.thread!r}")
            hit = (ps.actor == self.p.thread_index[f.thread]) & ~self.root
            return TV(self._false, self._false, hit, ~hit)
        if isinstance(f, Not):
            return _neg(self.truth(f.arg))
        if isinstance(f, And):
            return _and(self.truth(f.left), self.truth(f.right))
        if isinstance(f, Or):
            return _or(self.truth(f.left), self.truth(f.right))
        if isinstance(f, Implies):
            return _or(_neg(self.truth(f.left)), self.truth(f.right))
        if isinstance(f, Iff):
            a, b = self.truth(f.left), self.truth(f.right)
            return _and(_or(_neg(a), b), _or(_neg(b), a))
        if isinstance(f, Prev):
            g = self.truth(f.arg)
            # F[n] looks at E[n]; E[c] looks at E[parent(c)]; nothing before the root
            Ft = np.where(self.root, False, g.Et)
            Ff = np.where(self.root, True, g.Ef)
            Et = np.where(self.par_root, False, g.Et[self.par])
            Ef = np.where(self.par_root, True, g.Ef[self.par])
            return TV(Ft, Ff, Et, Ef)
        if isinstance(f, Since):
            return self._since(self.truth(f.left), self.truth(f.right))
        if isinstance(f, DualSince):
            return _neg(self._since(self.truth(f.left), self.truth(f.right)))
        if isinstance(f, Knows):
            if f.thread not in self.p.thread_index:
                raise FormulaError(f"unknown thread {f.thread!r}")
            g = self.truth(f.arg)
            cls = ps.class_ids(f.thread)
            k = int(cls.max()) + 1
            pc = cls[self.par]
            # a class holds its nodes as frontier points and as inner points of longer prefixes
            inner = ~self.root
            members = np.concatenate([cls, pc[inner]])
            t = np.concatenate([g.Ft, g.Et[inner]])
            fl = np.concatenate([g.Ff, g.Ef[inner]])
            n_false = np.bincount(members, weights=fl, minlength=k) > 0
            n_unknown = np.bincount(members, weights=~(t | fl), minlength=k) > 0
            kt = ~n_false & ~n_unknown
            kf = n_false
            return TV(kt[cls], kf[cls], kt[pc] & ~self.root, kf[pc] & ~self.root)
        if isinstance(f, (Macro, Unchanged)):
            raise FormulaError(f"unexpanded derived operator: {render_formula(f)}")
        raise TypeError(f"not a formula: {f!r}")

    def _since(self, a: TV, b: TV) -> TV:
        # E'[c] = b.E[c] | (a.E[c] & E'[parent c]), with E' false for contexts at the root
        Et = np.zeros(self.n, dtype=bool)
        Ef = np.zeros(self.n, dtype=bool)
        ls = self.ps.level_start
        for d in range(1, len(ls) - 1):
            lo, hi = ls[d], ls[d + 1]
            if lo == hi:
                break
            sl = slice(lo, hi)
            if d == 1:
                pt, pf = np.zeros(hi - lo, dtype=bool), np.ones(hi - lo, dtype=bool)
            else:
                pp = self.ps.parent[sl]
                pt, pf = Et[pp], Ef[pp]
            Et[sl] = b.Et[sl] | (a.Et[sl] & pt)
            Ef[sl] = b.Ef[sl] & (a.Ef[sl] | pf)
        pt = np.where(self.root, False, Et)
        pf = np.where(self.root, True, Ef)
        Ft = b.Ft | (a.Ft & pt)
        Ff = b.Ff & (a.Ff | pf)
        return TV(Ft, Ff, Et, Ef)

    # -- per point
    def context(self, pt: Point) -> tuple[str, int]:
        labels = pt.prefix.labels
        if pt.index == len(labels):
            return "F", self.ps.node_of(labels)
        return "E", self.ps.node_of(labels[:pt.index + 1])

    def value(self, pt: Point, f: Formula) -> bool | None:
        kind, n = self.context(pt)
        tv = self.truth(f)
        return tv.frontier(n) if kind == "F" else tv.inner(n)


def evaluator_for(ps: PointSet) -> Evaluator:
    if ps._evaluator is None:
        ps._evaluator = Evaluator(ps)
    return ps._evaluator


@dataclass
class Verdict:
    value: bool | None
    bound: int
    witness: Point | None = None

    @property
    def indeterminate(self) -> bool:
        return self.value is None


def satisfies(ps: PointSet, pt: Point, f: Formula) -> Verdict:
    try:
        v = evaluator_for(ps).value(pt, f)
    except KeyError as e:
        raise FormulaError(str(e.args[0])) from None
    return Verdict(v, ps.depth, pt if v is not True else None)


# ---- reports ---------------------------------------------------------------

def _witness_json(pt: Point | None):
    if pt is None:
        return None
    return {"labels": list(pt.prefix.labels), "index": pt.index}


@dataclass
class CheckReport:
    formula: str
    mode: str
    depth: int | None
    verdict: str
    witness: Point | None = None
    indeterminate: int = 0
    indeterminate_witness: Point | None = None
    stats: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"

    def to_json(self) -> dict:
        return {
            "formula": self.formula,
            "mode": self.mode,
            "depth": self.depth,
            "verdict": self.verdict,
            "witness": _witness_json(self.witness),
            "indeterminate": {"count": self.indeterminate,
                              "first": _witness_json(self.indeterminate_witness)},
            "stats": self.stats,
            "timing": {"elapsed_s": round(self.elapsed, 6)},
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _first(ps: PointSet, mask: np.ndarray) -> Point | None:
    idx = np.flatnonzero(mask)
    if not len(idx):
        return None
    rank = ps.preorder_rank()
    return ps.point(int(idx[np.argmin(rank[idx])]))


def _frontier_verdicts(p: Program, f: Formula, depth: int, constraint, node_cap=None):
    kw = {} if node_cap is None else {"node_cap": node_cap}
    ps = explore_points(p, depth, constraint, **kw)
    core = expand_derived(f, p.domains())
    tv = evaluator_for(ps).truth(core)
    return ps, tv


def check_valid_bounded(p: Program, f: Formula, depth: int, constraint: Formula | None = None,
                        node_cap: int | None = None) -> CheckReport:
    """Evaluate ``f`` at every point of the depth-bounded model."""
    t0 = time.perf_counter()
    ps, tv = _frontier_verdicts(p, f, depth, constraint, node_cap)
    fails = tv.Ff
    unknown = ~(tv.Ft | tv.Ff)
    n_fail = int(fails.sum())
    stats = {
        "points": len(ps),
        "failing_points": n_fail,
        "states": len(ps.states),
        "classes": {a: int(ps.class_ids(a).max()) + 1 for a in p.thread_names}
        if any(isinstance(g, Knows) for g in _subs(f, p)) else {},
    }
    return CheckReport(
        formula=render_formula(f), mode="valid-bounded", depth=depth,
        verdict="fails" if n_fail else "holds",
        witness=_first(ps, fails),
        indeterminate=int(unknown.sum()),
        indeterminate_witness=_first(ps, unknown),
        stats=stats, elapsed=time.perf_counter() - t0)


def _subs(f: Formula, p: Program):
    from .formula import subformulas
    return subformulas(expand_derived(f, p.domains()))


def check_invariant(p: Program, state_formula: Formula, graph) -> CheckReport:
    """Scan every state of a transition graph for an extensional formula."""
    from .program import state_holds
    t0 = time.perf_counter()
    core = expand_derived(state_formula, p.domains())
    bad = None
    for sid, s in enumerate(graph.states):
        if not state_holds(p, s, core):
            path = graph.path_to(sid)
            if path is not None and (bad is None or (len(path), path) < (len(bad), bad)):
                bad = path
    witness = None
    if bad is not None:
        from .explorer import make_point
        witness = make_point(p, bad)
    return CheckReport(formula=render_formula(state_formula), mode="invariant", depth=None,
                       verdict="fails" if bad is not None else "holds", witness=witness,
                       stats={"states": len(graph.states), "edges": len(graph.edges)},
                       elapsed=time.perf_counter() - t0)


@dataclass
class AuditReport:
    formula: str
    depth: int
    delta: int
    verdicts: tuple[str, str]
    stable: bool
    flip: Point | None
    flips: int
    elapsed: float = 0.0

    def to_json(self) -> dict:
        return {"formula": self.formula, "depth": self.depth, "delta": self.delta,
                "verdicts": list(self.verdicts), "depth_stable": self.stable,
                "flips": self.flips, "first_flip": _witness_json(self.flip),
                "timing": {"elapsed_s": round(self.elapsed, 6)}}


def stability_audit(p: Program, f: Formula, depth: int, delta: int = 2,
                    constraint: Formula | None = None, node_cap: int | None = None) -> AuditReport:
    """Compare verdicts at ``depth`` and ``depth + delta`` on the shared points."""
    if delta < 1:
        raise ValueError("delta must be >= 1")
    t0 = time.perf_counter()
    small, tv_s = _frontier_verdicts(p, f, depth, constraint, node_cap)
    big, tv_b = _frontier_verdicts(p, f, depth + delta, constraint, node_cap)
    m = len(small)
    # breadth-first numbering makes the shallow tree a prefix of the deep one
    assert np.array_equal(big.parent[:m], small.parent) and np.array_equal(big.actor[:m], small.actor)
    code_s = tv_s.Ft.astype(np.int8) - tv_s.Ff.astype(np.int8)
    code_b = tv_b.Ft[:m].astype(np.int8) - tv_b.Ff[:m].astype(np.int8)
    flipped = code_s != code_b
    v_s = "fails" if tv_s.Ff.any() else "holds"
    v_b = "fails" if tv_b.Ff.any() else "holds"
    return AuditReport(render_formula(f), depth, delta, (v_s, v_b),
                       stable=(v_s == v_b) and not flipped.any(),
                       flip=_first(small, flipped), flips=int(flipped.sum()),
                       elapsed=time.perf_counter() - t0)
