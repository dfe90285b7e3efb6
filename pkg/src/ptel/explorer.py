"""Bounded enumeration of execution prefixes and the exact reachable graph.

A :class:`PointSet` is the scheduling tree of every admissible label
sequence of length <= D.  Node ``n`` stands for the point at the end of its
label sequence; positions inside a longer sequence are reached through the
ancestors.  Nodes are numbered breadth-first with children in actor-name
order, so the first nodes of a deeper tree are exactly the nodes of a
shallower one.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, FormulaError, ModelError
from .formula import (And, Formula, Macro, Not, Since, Top, expand_derived, render_formula)
from .program import (GlobalState, LocalState, Program, check_step_shape, initial_state,
                      state_holds, step_holds, step_thread)

DEFAULT_NODE_CAP = 4_000_000


@dataclass(frozen=True)
class RunPrefix:
    states: tuple[GlobalState, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.states) - 1:
            raise ValueError("a run prefix has one label per step")


@dataclass(frozen=True)
class Point:
    prefix: RunPrefix
    index: int

    def __post_init__(self):
        if not 0 <= self.index <= len(self.prefix.labels):
            raise ValueError(f"index {self.index} outside prefix of length {len(self.prefix.labels)}")

    @property
    def labels(self) -> tuple[str, ...]:
        return self.prefix.labels


def run_prefix(p: Program, labels) -> RunPrefix:
    states = [initial_state(p)]
    for a in labels:
        if a not in p.thread_index:
            raise ModelError(f"unknown thread {a!r}")
        states.append(step_thread(p, states[-1], a))
    return RunPrefix(tuple(states), tuple(labels))


def make_point(p: Program, labels, index: int | None = None) -> Point:
    pre = run_prefix(p, labels)
    return Point(pre, len(pre.labels) if index is None else index)


def observation_history(pt: Point, a: str, p: Program) -> tuple[LocalState, ...]:
    """The compressed perfect-recall history of ``a`` at ``pt``.

    Initial observation, the observation after each of ``a``'s steps before
    the current index, then the current observation.
    """
    k = p.thread_index[a]
    st, lab = pt.prefix.states, pt.prefix.labels
    hist = [st[0].locals[k]]
    hist += [st[j + 1].locals[k] for j in range(pt.index) if lab[j] == a]
    hist.append(st[pt.index].locals[k])
    return tuple(hist)


# ---- model constraints ------------------------------------------------------

def constraint_bodies(phi: Formula | None, domains) -> list[Formula]:
    """Split a model constraint into its step bodies.

    Accepted shape: a conjunction of ``H body`` (or stable/frame/pres/presA,
    which expand to that) where each body is a step formula.
    """
    if phi is None:
        return []
    out: list[Formula] = []

    def walk(f: Formula):
        if isinstance(f, And):
            walk(f.left)
            walk(f.right)
            return
        if isinstance(f, Top):
            return
        if isinstance(f, Macro) and f.name == "always":
            body = expand_derived(f.args[0], domains)
        elif isinstance(f, Macro) and f.name in ("stable", "frame", "pres", "presA"):
            walk(expand_derived(f, domains))
            return
        elif isinstance(f, Not) and isinstance(f.arg, Since) and isinstance(f.arg.left, Top) \
                and isinstance(f.arg.right, Not):
            body = f.arg.right.arg
        else:
            raise FormulaError("model constraints must be conjunctions of H(step formula); got "
                               + render_formula(f))
        check_step_shape(body)
        out.append(body)

    walk(phi)
    return out


class _Stepper:
    """Interned states plus a memo of admissible successors."""

    def __init__(self, p: Program, constraint: Formula | None):
        self.p = p
        self.bodies = constraint_bodies(constraint, p.domains())
        self.states: list[GlobalState] = []
        self.index: dict[GlobalState, int] = {}
        self.succ: dict[tuple[int, int], int] = {}

    def intern(self, s: GlobalState) -> int:
        k = self.index.get(s)
        if k is None:
            k = self.index[s] = len(self.states)
            self.states.append(s)
        return k

    def init_ok(self, s: GlobalState) -> bool:
        return all(step_holds(self.p, b, None, None, s) for b in self.bodies)

    def step(self, sid: int, ai: int) -> int:
        """Successor state id, or -1 if the step violates the constraint."""
        key = (sid, ai)
        out = self.succ.get(key)
        if out is None:
            a = self.p.thread_names[ai]
            pre = self.states[sid]
            post = step_thread(self.p, pre, a)
            if all(step_holds(self.p, b, pre, a, post) for b in self.bodies):
                out = self.intern(post)
            else:
                out = -1
            self.succ[key] = out
        return out


@dataclass
class PointSet:
    program: Program
    depth: int
    constraint: Formula | None
    states: list[GlobalState]
    parent: np.ndarray
    actor: np.ndarray
    state: np.ndarray
    level_start: list[int]
    _children: dict[tuple[int, int], int] = field(repr=False)
    _classes: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    _evaluator: object = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.parent)

    @property
    def is_root(self) -> np.ndarray:
        return self.parent < 0

    def level(self, n: int) -> int:
        lo = 0
        for d, start in enumerate(self.level_start):
            if start > n:
                break
            lo = d
        return lo

    def levels(self) -> np.ndarray:
        out = np.zeros(len(self), dtype=np.int32)
        for d in range(1, len(self.level_start) - 1):
            out[self.level_start[d]:self.level_start[d + 1]] = d
        return out

    def labels(self, n: int) -> tuple[str, ...]:
        names = self.program.thread_names
        out = []
        while self.parent[n] >= 0:
            out.append(names[self.actor[n]])
            n = self.parent[n]
        return tuple(reversed(out))

    def node_of(self, labels) -> int:
        n = 0
        for a in labels:
            ai = self.program.thread_index.get(a)
            child = self._children.get((n, ai)) if ai is not None else None
            if child is None:
                raise KeyError(f"label sequence {','.join(labels)} is not in the point set")
            n = child
        return n

    def contains(self, labels) -> bool:
        try:
            self.node_of(labels)
            return True
        except KeyError:
            return False

    def point(self, n: int) -> Point:
        return make_point(self.program, self.labels(n))

    def points(self) -> list[Point]:
        return [self.point(n) for n in range(len(self))]

    def class_ids(self, a: str) -> np.ndarray:
        """Class index of every node under indistinguishability for ``a``."""
        if a in self._classes:
            return self._classes[a]
        k = self.program.thread_index[a]
        obs_ids: dict[LocalState, int] = {}
        obs = np.array([obs_ids.setdefault(s.locals[k], len(obs_ids)) for s in self.states],
                       dtype=np.int64)
        node_obs = obs[self.state]
        hist_ids: dict[tuple, int] = {}
        cls_ids: dict[tuple[int, int], int] = {}
        hprefix = np.empty(len(self), dtype=np.int64)
        cls = np.empty(len(self), dtype=np.int64)
        hprefix[0] = hist_ids.setdefault((-1, int(node_obs[0])), len(hist_ids))
        parent, actor = self.parent, self.actor
        for n in range(len(self)):
            if n:
                h = hprefix[parent[n]]
                if actor[n] == k:
                    h = hist_ids.setdefault((int(h), int(node_obs[n])), len(hist_ids))
                hprefix[n] = h
            cls[n] = cls_ids.setdefault((int(hprefix[n]), int(node_obs[n])), len(cls_ids))
        self._classes[a] = cls
        return cls

    def preorder_rank(self) -> np.ndarray:
        """Rank of each node in lexicographic order of label sequences."""
        rank = np.empty(len(self), dtype=np.int64)
        kids: dict[int, list[int]] = {}
        for (par, ai), c in sorted(self._children.items()):
            kids.setdefault(par, []).append(c)
        stack, r = [0], 0
        while stack:
            n = stack.pop()
            rank[n] = r
            r += 1
            stack.extend(reversed(kids.get(n, [])))
        return rank


def explore_points(p: Program, depth: int, constraint: Formula | None = None,
                   node_cap: int = DEFAULT_NODE_CAP) -> PointSet:
    if depth < 0:
        raise ValueError("depth must be >= 0")
    st = _Stepper(p, constraint)
    s0 = initial_state(p)
    if not st.init_ok(s0):
        raise ModelError("the model constraint is false at the initial state")
    parent = [-1]
    actor = [-1]
    state = [st.intern(s0)]
    children: dict[tuple[int, int], int] = {}
    level_start = [0, 1]
    n_threads = len(p.thread_names)
    for _ in range(depth):
        lo, hi = level_start[-2], level_start[-1]
        for n in range(lo, hi):
            sid = state[n]
            for ai in range(n_threads):
                nxt = st.step(sid, ai)
                if nxt < 0:
                    continue
                children[(n, ai)] = len(parent)
                parent.append(n)
                actor.append(ai)
                state.append(nxt)
            if len(parent) > node_cap:
                raise BudgetExceeded(f"point enumeration exceeded {node_cap} nodes at depth "
                                     f"{len(level_start) - 1}")
        level_start.append(len(parent))
        if level_start[-1] == level_start[-2]:
            break
    while len(level_start) < depth + 2:
        level_start.append(level_start[-1])
    return PointSet(p, depth, constraint, st.states,
                    np.array(parent, dtype=np.int64), np.array(actor, dtype=np.int64),
                    np.array(state, dtype=np.int64), level_start, children)


def indist_classes(ps: PointSet, a: str) -> list[list[Point]]:
    cls = ps.class_ids(a)
    groups: dict[int, list[int]] = {}
    for n, c in enumerate(cls):
        groups.setdefault(int(c), []).append(n)
    return [[ps.point(n) for n in members] for _, members in sorted(groups.items())]


# ---- transition graphs ------------------------------------------------------

@dataclass
class TransitionGraph:
    program: Program
    states: list[GlobalState]
    initial: int
    edges: list[tuple[int, str, int]]
    constraint: Formula | None = None
    kind: str = "reachable"
    _paths: dict[int, tuple[str, ...]] | None = field(default=None, repr=False)

    def path_to(self, sid: int) -> tuple[str, ...] | None:
        """Shortest label sequence reaching ``sid`` from the initial state, if any."""
        if self._paths is None:
            out = {self.initial: ()}
            adj: dict[int, list[tuple[str, int]]] = {}
            for src, a, dst in self.edges:
                adj.setdefault(src, []).append((a, dst))
            q = deque([self.initial])
            while q:
                u = q.popleft()
                for a, v in adj.get(u, ()):
                    if v not in out:
                        out[v] = out[u] + (a,)
                        q.append(v)
            self._paths = out
        return self._paths.get(sid)

    def dump(self) -> str:
        lines = [f"node {k} {self.program.render_state(s)}" for k, s in enumerate(self.states)]
        lines += [f"edge {src} {a} {dst}" for src, a, dst in self.edges]
        return "\n".join(lines) + "\n"


def reachable_graph(p: Program, constraint: Formula | None = None,
                    node_cap: int = DEFAULT_NODE_CAP) -> TransitionGraph:
    st = _Stepper(p, constraint)
    s0 = initial_state(p)
    if not st.init_ok(s0):
        raise ModelError("the model constraint is false at the initial state")
    root = st.intern(s0)
    edges = []
    q = deque([root])
    seen = {root}
    while q:
        u = q.popleft()
        for ai, a in enumerate(p.thread_names):
            v = st.step(u, ai)
            if v < 0:
                continue
            edges.append((u, a, v))
            if v not in seen:
                seen.add(v)
                q.append(v)
                if len(seen) > node_cap:
                    raise BudgetExceeded(f"reachable graph exceeded {node_cap} states")
    return TransitionGraph(p, st.states, root, edges, constraint)


def all_states(p: Program):
    """Every well-typed global state (valid pcs, values within domains)."""
    shared = itertools.product(*(d.domain for d in p.shared_decls))
    per_thread = []
    for a in p.thread_names:
        locs = p.locations(a)
        vals = itertools.product(*(d.domain for d in p.local_decls(a)))
        per_thread.append([LocalState(pc, v) for pc, v in itertools.product(locs, list(vals))])
    for sh in shared:
        for locs in itertools.product(*per_thread):
            yield GlobalState(tuple(sh), tuple(locs))


def induction_graph(p: Program, inv: Formula, constraint: Formula | None = None,
                    node_cap: int = 2_000_000) -> TransitionGraph:
    """Graph of every step leaving any well-typed state that satisfies ``inv``.

    Preservation checked over this graph is ordinary inductiveness, whereas
    over the reachable graph it holds for every true invariant.
    """
    inv_core = expand_derived(inv, p.domains())
    st = _Stepper(p, constraint)
    s0 = initial_state(p)
    root = st.intern(s0)
    sources = [root]
    count = 0
    for s in all_states(p):
        count += 1
        if count > node_cap:
            raise BudgetExceeded(f"state space exceeds {node_cap} states")
        if state_holds(p, s, inv_core) and s != s0:
            sources.append(st.intern(s))
    edges = []
    for u in sources:
        for ai, a in enumerate(p.thread_names):
            v = st.step(u, ai)
            if v >= 0:
                edges.append((u, a, v))
    return TransitionGraph(p, st.states, root, edges, constraint, kind="inductive")
