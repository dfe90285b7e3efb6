"""Micro-step shared-memory programs.

Line-based DSL, ``#`` starts a comment::

    shared x : 0..3 = 0
    thread A {
      local r : 0..3 = 0
      L0: read r := x goto L1
      L1: write x := r + 1 goto L2
      L2: readbr x == 2 ? L3 : L0
      L3: let r := 0 goto L4
      L4: br r == 0 ? L5 : L4
      L5: halt
    }

Every instruction touches at most one shared variable.  Each thread that
reads ``x`` owns a last-read register ``lr_x`` that starts at ``x``'s initial
value and is overwritten by every read of ``x``.  ``halt`` stutters: the
thread stays schedulable and its step changes nothing.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass, field
from typing import Mapping

from .errors import FormulaError, ModelError, SyntaxProblem
from .formula import (Active, And, At, Formula, Iff, Implies, Knows, Macro, Not, Or, Prev,
                      Prop, Since, DualSince, Top, Bottom, Unchanged, VarEq, render_formula)


@dataclass(frozen=True)
class VarDecl:
    name: str
    lo: int
    hi: int
    init: int

    @property
    def domain(self) -> range:
        return range(self.lo, self.hi + 1)


# ---- local expressions ------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class UnOp:
    op: str
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


_BIN = {
    "+": operator.add, "-": operator.sub, "*": operator.mul,
    "==": lambda a, b: int(a == b), "!=": lambda a, b: int(a != b),
    "<": lambda a, b: int(a < b), "<=": lambda a, b: int(a <= b),
    ">": lambda a, b: int(a > b), ">=": lambda a, b: int(a >= b),
    "&&": lambda a, b: int(bool(a) and bool(b)), "||": lambda a, b: int(bool(a) or bool(b)),
}
_EXPR_LEVELS = [("||",), ("&&",), ("==", "!=", "<", "<=", ">", ">="), ("+", "-"), ("*",)]
_EXPR_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_]*)|(&&|\|\||==|!=|<=|>=|[-+*<>!()]))")


def parse_expr(text: str):
    toks = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _EXPR_TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise SyntaxProblem(f"bad expression {text!r}")
        num, name, op = m.groups()
        toks.append(("num", int(num)) if num else ("id", name) if name else ("op", op))
        pos = m.end()
    i = 0

    def level(k: int):
        nonlocal i
        if k == len(_EXPR_LEVELS):
            return unary()
        left = level(k + 1)
        while i < len(toks) and toks[i][0] == "op" and toks[i][1] in _EXPR_LEVELS[k]:
            op = toks[i][1]
            i += 1
            left = BinOp(op, left, level(k + 1))
        return left

    def unary():
        nonlocal i
        if i >= len(toks):
            raise SyntaxProblem(f"truncated expression {text!r}")
        kind, val = toks[i]
        i += 1
        if kind == "num":
            return Const(val)
        if kind == "id":
            return Var(val)
        if val in ("!", "-"):
            return UnOp(val, unary())
        if val == "(":
            e = level(0)
            if i >= len(toks) or toks[i] != ("op", ")"):
                raise SyntaxProblem(f"missing ')' in {text!r}")
            i += 1
            return e
        raise SyntaxProblem(f"unexpected {val!r} in {text!r}")

    e = level(0)
    if i != len(toks):
        raise SyntaxProblem(f"trailing input in expression {text!r}")
    return e


def eval_expr(e, env: Mapping[str, int]) -> int:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, UnOp):
        v = eval_expr(e.arg, env)
        return int(not v) if e.op == "!" else -v
    return _BIN[e.op](eval_expr(e.left, env), eval_expr(e.right, env))


def expr_names(e) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, UnOp):
        return expr_names(e.arg)
    if isinstance(e, BinOp):
        return expr_names(e.left) | expr_names(e.right)
    return set()


def render_expr(e) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, UnOp):
        return f"{e.op}({render_expr(e.arg)})"
    return f"({render_expr(e.left)} {e.op} {render_expr(e.right)})"


# ---- instructions -----------------------------------------------------------

@dataclass(frozen=True)
class WriteShared:
    var: str
    rhs: object
    next: str


@dataclass(frozen=True)
class ReadShared:
    dest: str
    var: str
    next: str


@dataclass(frozen=True)
class ReadBranch:
    var: str
    op: str
    const: int
    then: str
    orelse: str


@dataclass(frozen=True)
class AssignLocal:
    dest: str
    rhs: object
    next: str


@dataclass(frozen=True)
class BranchLocal:
    cond: object
    then: str
    orelse: str


@dataclass(frozen=True)
class Halt:
    pass


def _targets(ins) -> tuple[str, ...]:
    if isinstance(ins, (WriteShared, ReadShared, AssignLocal)):
        return (ins.next,)
    if isinstance(ins, (ReadBranch, BranchLocal)):
        return (ins.then, ins.orelse)
    return ()


def shared_access(ins) -> set[str]:
    if isinstance(ins, (WriteShared, ReadShared, ReadBranch)):
        return {ins.var}
    return set()


# ---- program and states -----------------------------------------------------

@dataclass(frozen=True, slots=True)
class LocalState:
    pc: str
    vals: tuple[int, ...]


@dataclass(frozen=True, slots=True)
class GlobalState:
    shared: tuple[int, ...]
    locals: tuple[LocalState, ...]


@dataclass
class ThreadDef:
    name: str
    local_decls: list[VarDecl]
    instructions: dict[str, object]
    entry: str
    lr_vars: list[str] = field(default_factory=list)

    @property
    def local_names(self) -> list[str]:
        return [d.name for d in self.local_decls] + [f"lr_{x}" for x in self.lr_vars]


@dataclass
class Program:
    shared_decls: list[VarDecl]
    threads: dict[str, ThreadDef]

    def __post_init__(self):
        self.thread_names: list[str] = sorted(self.threads)
        self.thread_index = {a: k for k, a in enumerate(self.thread_names)}
        self.shared_index = {d.name: k for k, d in enumerate(self.shared_decls)}
        self._local_index = {a: {n: k for k, n in enumerate(t.local_names)}
                             for a, t in self.threads.items()}
        self._local_decl = {}
        for a, t in self.threads.items():
            decls = list(t.local_decls)
            for x in t.lr_vars:
                d = self.shared_decls[self.shared_index[x]]
                decls.append(VarDecl(f"lr_{x}", d.lo, d.hi, d.init))
            self._local_decl[a] = decls

    def local_decls(self, a: str) -> list[VarDecl]:
        """Declared locals of ``a`` followed by its last-read registers."""
        return self._local_decl[a]

    def domains(self) -> dict[str, range]:
        out = {d.name: d.domain for d in self.shared_decls}
        for a in self.thread_names:
            for d in self._local_decl[a]:
                out[f"{a}.{d.name}"] = d.domain
        return out

    def locations(self, a: str) -> list[str]:
        return list(self.threads[a].instructions)

    def state_dict(self, s: GlobalState) -> dict[str, object]:
        out: dict[str, object] = {d.name: v for d, v in zip(self.shared_decls, s.shared)}
        for a, loc in zip(self.thread_names, s.locals):
            out[f"{a}.pc"] = loc.pc
            for d, v in zip(self._local_decl[a], loc.vals):
                out[f"{a}.{d.name}"] = v
        return out

    def render_state(self, s: GlobalState) -> str:
        return " ".join(f"{k}={v}" for k, v in self.state_dict(s).items())

    def to_text(self) -> str:
        lines = [f"shared {d.name} : {d.lo}..{d.hi} = {d.init}" for d in self.shared_decls]
        for a in self.thread_names:
            t = self.threads[a]
            lines.append(f"thread {a} {{")
            lines += [f"  local {d.name} : {d.lo}..{d.hi} = {d.init}" for d in t.local_decls]
            for loc, ins in t.instructions.items():
                lines.append(f"  {loc}: {_render_instr(ins)}")
            lines.append("}")
        return "\n".join(lines) + "\n"


def _render_instr(ins) -> str:
    if isinstance(ins, WriteShared):
        return f"write {ins.var} := {render_expr(ins.rhs)} goto {ins.next}"
    if isinstance(ins, ReadShared):
        return f"read {ins.dest} := {ins.var} goto {ins.next}"
    if isinstance(ins, ReadBranch):
        return f"readbr {ins.var} {ins.op} {ins.const} ? {ins.then} : {ins.orelse}"
    if isinstance(ins, AssignLocal):
        return f"let {ins.dest} := {render_expr(ins.rhs)} goto {ins.next}"
    if isinstance(ins, BranchLocal):
        return f"br {render_expr(ins.cond)} ? {ins.then} : {ins.orelse}"
    return "halt"


# ---- parsing ----------------------------------------------------------------

_ID = r"[A-Za-z_][A-Za-z0-9_]*"
_DECL = re.compile(rf"(shared|local)\s+({_ID})\s*:\s*(-?\d+)\s*\.\.\s*(-?\d+)\s*=\s*(-?\d+)$")
_THREAD = re.compile(rf"thread\s+({_ID})\s*\{{$")
_LABELLED = re.compile(rf"({_ID})\s*:\s*(.*)$")
_WRITE = re.compile(rf"write\s+({_ID})\s*:=\s*(.+?)\s+goto\s+({_ID})$")
_READ = re.compile(rf"read\s+({_ID})\s*:=\s*({_ID})\s+goto\s+({_ID})$")
_READBR = re.compile(rf"readbr\s+({_ID})\s*(==|!=|<=|>=|<|>)\s*(-?\d+)\s*\?\s*({_ID})\s*:\s*({_ID})$")
_LET = re.compile(rf"let\s+({_ID})\s*:=\s*(.+?)\s+goto\s+({_ID})$")
_BR = re.compile(rf"br\s+(.+?)\s*\?\s*({_ID})\s*:\s*({_ID})$")

_CMP = {"==": operator.eq, "!=": operator.ne, "<": operator.lt,
        "<=": operator.le, ">": operator.gt, ">=": operator.ge}


def _decl(m, lineno: int) -> VarDecl:
    _, name, lo, hi, init = m.groups()
    d = VarDecl(name, int(lo), int(hi), int(init))
    if d.lo > d.hi:
        raise SyntaxProblem(f"empty domain for {name}", lineno, 1)
    if d.init not in d.domain:
        raise ModelError(f"line {lineno}: initial value {d.init} of {name} outside {d.lo}..{d.hi}")
    return d


def parse_program(text: str) -> Program:
    shared: list[VarDecl] = []
    threads: dict[str, ThreadDef] = {}
    current: ThreadDef | None = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if current is None:
            m = _DECL.match(line)
            if m and m.group(1) == "shared":
                shared.append(_decl(m, lineno))
                continue
            m = _THREAD.match(line)
            if m:
                if m.group(1) in threads:
                    raise SyntaxProblem(f"duplicate thread {m.group(1)}", lineno, 1)
                current = ThreadDef(m.group(1), [], {}, "")
                threads[current.name] = current
                continue
            raise SyntaxProblem(f"expected 'shared' or 'thread', got {line!r}", lineno, 1)
        if line == "}":
            if not current.instructions:
                raise SyntaxProblem(f"thread {current.name} has no instructions", lineno, 1)
            current = None
            continue
        m = _DECL.match(line)
        if m and m.group(1) == "local":
            current.local_decls.append(_decl(m, lineno))
            continue
        m = _LABELLED.match(line)
        if not m:
            raise SyntaxProblem(f"expected '<loc>: <instruction>', got {line!r}", lineno, 1)
        loc, body = m.groups()
        if loc in current.instructions:
            raise SyntaxProblem(f"location {loc} defined twice in {current.name}", lineno, 1)
        if not current.entry:
            current.entry = loc
        current.instructions[loc] = _parse_instr(body.strip(), lineno)
    if current is not None:
        raise SyntaxProblem(f"thread {current.name} is not closed with '}}'")
    if not threads:
        raise SyntaxProblem("program declares no threads")
    _validate(shared, threads)
    return Program(shared, threads)


def _parse_instr(body: str, lineno: int):
    try:
        if body == "halt":
            return Halt()
        if m := _WRITE.match(body):
            return WriteShared(m.group(1), parse_expr(m.group(2)), m.group(3))
        if m := _READ.match(body):
            return ReadShared(m.group(1), m.group(2), m.group(3))
        if m := _READBR.match(body):
            return ReadBranch(m.group(1), m.group(2), int(m.group(3)), m.group(4), m.group(5))
        if m := _LET.match(body):
            return AssignLocal(m.group(1), parse_expr(m.group(2)), m.group(3))
        if m := _BR.match(body):
            return BranchLocal(parse_expr(m.group(1)), m.group(2), m.group(3))
    except SyntaxProblem as e:
        raise SyntaxProblem(e.message, lineno, 1) from None
    raise SyntaxProblem(f"unknown instruction {body!r}", lineno, 1)


def _validate(shared: list[VarDecl], threads: dict[str, ThreadDef]) -> None:
    names = [d.name for d in shared]
    if len(set(names)) != len(names):
        raise ModelError("shared variable declared twice")
    shared_set = set(names)
    by_name = {d.name: d for d in shared}
    for t in threads.values():
        local_names = [d.name for d in t.local_decls]
        if len(set(local_names)) != len(local_names):
            raise ModelError(f"thread {t.name}: local declared twice")
        clash = shared_set & set(local_names)
        if clash:
            raise ModelError(f"thread {t.name}: local {sorted(clash)[0]} shadows a shared variable")
        local_set = set(local_names)
        reads: list[str] = []
        for loc, ins in t.instructions.items():
            for target in _targets(ins):
                if target not in t.instructions:
                    raise ModelError(f"thread {t.name}, {loc}: goto to undefined location {target}")
            for x in shared_access(ins):
                if x not in shared_set:
                    raise ModelError(f"thread {t.name}, {loc}: {x} is not a shared variable")
            if isinstance(ins, (ReadShared, ReadBranch)) and ins.var not in reads:
                reads.append(ins.var)
            exprs = [getattr(ins, a) for a in ("rhs", "cond") if hasattr(ins, a)]
            for e in exprs:
                for n in expr_names(e):
                    if n in shared_set:
                        raise ModelError(f"thread {t.name}, {loc}: shared access to {n} "
                                         f"inside a local expression")
                    if n not in local_set:
                        raise ModelError(f"thread {t.name}, {loc}: unknown local {n}")
            if isinstance(ins, (ReadShared, AssignLocal)) and ins.dest not in local_set:
                raise ModelError(f"thread {t.name}, {loc}: unknown local {ins.dest}")
            if isinstance(ins, (WriteShared, AssignLocal)) and isinstance(ins.rhs, Const):
                dom = by_name[ins.var].domain if isinstance(ins, WriteShared) else \
                    next(d.domain for d in t.local_decls if d.name == ins.dest)
                if ins.rhs.value not in dom:
                    raise ModelError(f"thread {t.name}, {loc}: constant {ins.rhs.value} "
                                     f"outside the domain of the destination")
        t.lr_vars = sorted(reads)
        lr_clash = {f"lr_{x}" for x in reads} & local_set
        if lr_clash:
            raise ModelError(f"thread {t.name}: local {sorted(lr_clash)[0]} clashes with a "
                             f"last-read register")


# ---- semantics --------------------------------------------------------------

def initial_state(p: Program) -> GlobalState:
    shared = tuple(d.init for d in p.shared_decls)
    locs = tuple(LocalState(p.threads[a].entry, tuple(d.init for d in p.local_decls(a)))
                 for a in p.thread_names)
    return GlobalState(shared, locs)


def with_initial(p: Program, overrides: Mapping[str, int]) -> Program:
    """Copy of ``p`` with some shared initial values replaced."""
    decls = []
    for d in p.shared_decls:
        if d.name in overrides:
            v = int(overrides[d.name])
            if v not in d.domain:
                raise ModelError(f"initial value {v} of {d.name} outside {d.lo}..{d.hi}")
            d = VarDecl(d.name, d.lo, d.hi, v)
        decls.append(d)
    unknown = set(overrides) - {d.name for d in p.shared_decls}
    if unknown:
        raise ModelError(f"unknown shared variable {sorted(unknown)[0]}")
    return Program(decls, p.threads)


def step_thread(p: Program, s: GlobalState, a: str) -> GlobalState:
    k = p.thread_index[a]
    t = p.threads[a]
    loc = s.locals[k]
    ins = t.instructions[loc.pc]
    if isinstance(ins, Halt):
        return s
    idx = p._local_index[a]
    decls = p.local_decls(a)
    vals = list(loc.vals)
    shared = s.shared

    def env():
        return dict(zip(t.local_names, vals))

    def put_local(name: str, v: int):
        d = decls[idx[name]]
        if v not in d.domain:
            raise ModelError(f"thread {a} at {loc.pc}: value {v} outside domain of {name}")
        vals[idx[name]] = v

    if isinstance(ins, WriteShared):
        v = eval_expr(ins.rhs, env())
        d = p.shared_decls[p.shared_index[ins.var]]
        if v not in d.domain:
            raise ModelError(f"thread {a} at {loc.pc}: value {v} outside domain of {ins.var}")
        shared = shared[:p.shared_index[ins.var]] + (v,) + shared[p.shared_index[ins.var] + 1:]
        pc = ins.next
    elif isinstance(ins, ReadShared):
        v = shared[p.shared_index[ins.var]]
        put_local(ins.dest, v)
        put_local(f"lr_{ins.var}", v)
        pc = ins.next
    elif isinstance(ins, ReadBranch):
        v = shared[p.shared_index[ins.var]]
        put_local(f"lr_{ins.var}", v)
        pc = ins.then if _CMP[ins.op](v, ins.const) else ins.orelse
    elif isinstance(ins, AssignLocal):
        put_local(ins.dest, eval_expr(ins.rhs, env()))
        pc = ins.next
    elif isinstance(ins, BranchLocal):
        pc = ins.then if eval_expr(ins.cond, env()) else ins.orelse
    else:
        raise TypeError(ins)
    new_local = LocalState(pc, tuple(vals))
    return GlobalState(shared, s.locals[:k] + (new_local,) + s.locals[k + 1:])


def atom_holds(p: Program, s: GlobalState, atom: Formula) -> bool:
    if isinstance(atom, VarEq):
        k = p.shared_index.get(atom.var)
        if k is not None:
            return s.shared[k] == atom.value
        a, _, name = atom.var.partition(".")
        if name and a in p.thread_index and name in p._local_index[a]:
            return s.locals[p.thread_index[a]].vals[p._local_index[a][name]] == atom.value
        raise FormulaError(f"unknown variable {atom.var!r}")
    if isinstance(atom, At):
        if atom.thread not in p.thread_index:
            raise FormulaError(f"unknown thread {atom.thread!r}")
        if atom.loc not in p.threads[atom.thread].instructions:
            raise FormulaError(f"unknown location {atom.loc!r} of thread {atom.thread}")
        return s.locals[p.thread_index[atom.thread]].pc == atom.loc
    if isinstance(atom, Top):
        return True
    if isinstance(atom, Bottom):
        return False
    if isinstance(atom, Prop):
        raise FormulaError(f"propositional letter {atom.name!r} is not bound to a state predicate")
    raise FormulaError(f"not a state atom: {render_formula(atom)}")


def state_holds(p: Program, s: GlobalState, f: Formula) -> bool:
    """Evaluate an extensional formula on a single state."""
    return step_holds(p, f, None, None, s)


def step_holds(p: Program, f: Formula, pre: GlobalState | None, actor: str | None,
               post: GlobalState) -> bool:
    """Evaluate a step formula on one transition ``pre --actor--> post``.

    Plain atoms read ``post``; under one ``Y`` they read ``pre`` and
    ``active(A)`` asks whether ``actor`` is ``A``.  With ``pre=None`` (the
    initial time) every ``Y`` is false.  Derived operators must already be
    expanded except for the Boolean sugar.
    """

    def ev(g: Formula, now: GlobalState, under_prev: bool) -> bool:
        if isinstance(g, Not):
            return not ev(g.arg, now, under_prev)
        if isinstance(g, And):
            return ev(g.left, now, under_prev) and ev(g.right, now, under_prev)
        if isinstance(g, Or):
            return ev(g.left, now, under_prev) or ev(g.right, now, under_prev)
        if isinstance(g, Implies):
            return (not ev(g.left, now, under_prev)) or ev(g.right, now, under_prev)
        if isinstance(g, Iff):
            return ev(g.left, now, under_prev) == ev(g.right, now, under_prev)
        if isinstance(g, Prev):
            if under_prev:
                raise FormulaError("step formulas allow Y-nesting of depth 1 only")
            if pre is None:
                return False
            return ev(g.arg, pre, True)
        if isinstance(g, Active):
            if not under_prev:
                raise FormulaError("active(A) in a step formula must sit under Y (use after(A))")
            return actor == g.thread
        if isinstance(g, (Since, DualSince, Knows, Macro, Unchanged)):
            raise FormulaError(f"not a two-state step formula: {render_formula(g)}")
        return atom_holds(p, now, g)

    return ev(f, post, False)


def check_step_shape(f: Formula) -> None:
    """Reject anything that is not a Y-depth <= 1 formula without S/K."""
    def walk(g: Formula, depth: int):
        if isinstance(g, Prev):
            if depth:
                raise FormulaError("step formulas allow Y-nesting of depth 1 only")
            walk(g.arg, 1)
            return
        if isinstance(g, Active) and not depth:
            raise FormulaError("active(A) in a step formula must sit under Y (use after(A))")
        if isinstance(g, (Since, DualSince, Knows, Macro, Unchanged)):
            raise FormulaError(f"not a two-state step formula: {render_formula(g)}")
        for c in (getattr(g, "arg", None), getattr(g, "left", None), getattr(g, "right", None)):
            if c is not None:
                walk(c, depth)
    walk(f, 0)
