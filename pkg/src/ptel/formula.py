"""Formula language: AST, concrete syntax, derived operators, normal forms.

Concrete syntax (ASCII)::

    form   := form "<->" form | form "->" form | form "|" form | form "&" form
            | form "S" form
            | "!" form | "Y" form | "H" form | "O" form | "K[" id "]" form
            | macro "(" args ")" | "(" form ")" | atom
    atom   := id "=" int | id "!=" int | id "=" "Y" id
            | "at(" id "," id ")" | "active(" id ")" | "true" | "false" | "init" | id

Binding strength from loosest to tightest: ``<->``, ``->``, ``|``, ``&``, ``S``,
then the prefix operators.  ``->`` and ``S`` associate to the right, the
others to the left.  A bare identifier is a propositional letter unless an
alias table maps it to a formula.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

from .errors import FormulaError, SyntaxProblem


class Formula:
    __slots__ = ()

    def __str__(self) -> str:
        return render_formula(self)


@dataclass(frozen=True, slots=True)
class Top(Formula):
    pass


@dataclass(frozen=True, slots=True)
class Bottom(Formula):
    pass


@dataclass(frozen=True, slots=True)
class Prop(Formula):
    """Schematic propositional letter; must be bound before evaluation."""
    name: str


@dataclass(frozen=True, slots=True)
class VarEq(Formula):
    var: str
    value: int


@dataclass(frozen=True, slots=True)
class Unchanged(Formula):
    """``x = Y x``: the variable kept its value over the last step."""
    var: str


@dataclass(frozen=True, slots=True)
class At(Formula):
    thread: str
    loc: str


@dataclass(frozen=True, slots=True)
class Active(Formula):
    thread: str


@dataclass(frozen=True, slots=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True, slots=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Iff(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Prev(Formula):
    arg: Formula


@dataclass(frozen=True, slots=True)
class Since(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Knows(Formula):
    thread: str
    arg: Formula


@dataclass(frozen=True, slots=True)
class DualSince(Formula):
    """Residual node left by :func:`nnf`; means exactly ``!(left S right)``."""
    left: Formula
    right: Formula


@dataclass(frozen=True, slots=True)
class Macro(Formula):
    name: str
    args: tuple


# argument kinds: f = formula, t = thread id, v = variable name
MACROS: dict[str, tuple[str, ...]] = {
    "always": ("f",),
    "sometime": ("f",),
    "prec": ("f", "f"),
    "after": ("t",),
    "lastA": ("t", "f"),
    "preA": ("t", "f"),
    "est": ("t", "f"),
    "chg": ("v",),
    "write": ("t", "v"),
    "lastW": ("f", "f"),
    "stable": ("t", "f"),
    "frame": ("t", "v"),
    "pres": ("f",),
    "presA": ("t", "f"),
    "init": (),
}

# macros whose formula argument must be a plain state predicate
_EXTENSIONAL_ARGS = {"stable", "pres", "presA"}

ATOMIC = (Top, Bottom, Prop, VarEq, Unchanged, At, Active)
BINARY = (And, Or, Implies, Iff, Since, DualSince)


def make_macro(name: str, *args) -> Macro:
    sig = MACROS.get(name)
    if sig is None:
        raise FormulaError(f"unknown macro {name!r}")
    if len(sig) != len(args):
        raise FormulaError(f"macro {name} takes {len(sig)} argument(s), got {len(args)}")
    for kind, arg in zip(sig, args):
        if kind == "f" and not isinstance(arg, Formula):
            raise FormulaError(f"macro {name}: expected a formula, got {arg!r}")
        if kind in "tv" and not isinstance(arg, str):
            raise FormulaError(f"macro {name}: expected an identifier, got {arg!r}")
    return Macro(name, tuple(args))


def always(f): return make_macro("always", f)
def sometime(f): return make_macro("sometime", f)
def prec(f, g): return make_macro("prec", f, g)
def after(a): return make_macro("after", a)
def last_a(a, f): return make_macro("lastA", a, f)
def pre_a(a, f): return make_macro("preA", a, f)
def est(a, f): return make_macro("est", a, f)
def chg(x): return make_macro("chg", x)
def write_by(a, x): return make_macro("write", a, x)
def last_w(w, f): return make_macro("lastW", w, f)
def stable(a, f): return make_macro("stable", a, f)
def frame(a, x): return make_macro("frame", a, x)
def pres(f): return make_macro("pres", f)
def pres_a(a, f): return make_macro("presA", a, f)
def init(): return make_macro("init")


def conj(items: Iterable[Formula]) -> Formula:
    items = list(items)
    if not items:
        return Top()
    out = items[0]
    for f in items[1:]:
        out = And(out, f)
    return out


def disj(items: Iterable[Formula]) -> Formula:
    items = list(items)
    if not items:
        return Bottom()
    out = items[0]
    for f in items[1:]:
        out = Or(out, f)
    return out


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, (Not, Prev)):
        return (f.arg,)
    if isinstance(f, Knows):
        return (f.arg,)
    if isinstance(f, BINARY):
        return (f.left, f.right)
    if isinstance(f, Macro):
        return tuple(a for a in f.args if isinstance(a, Formula))
    return ()


def subformulas(f: Formula) -> Iterable[Formula]:
    stack = [f]
    while stack:
        g = stack.pop()
        yield g
        stack.extend(children(g))


def map_formula(f: Formula, fn: Callable[[Formula], Formula | None]) -> Formula:
    """Bottom-up rebuild; ``fn`` may return a replacement or None to keep the node."""
    if isinstance(f, (Not, Prev)):
        f = type(f)(map_formula(f.arg, fn))
    elif isinstance(f, Knows):
        f = Knows(f.thread, map_formula(f.arg, fn))
    elif isinstance(f, BINARY):
        f = type(f)(map_formula(f.left, fn), map_formula(f.right, fn))
    elif isinstance(f, Macro):
        f = Macro(f.name, tuple(map_formula(a, fn) if isinstance(a, Formula) else a
                                for a in f.args))
    out = fn(f)
    return f if out is None else out


def threads_in(f: Formula) -> set[str]:
    out = set()
    for g in subformulas(f):
        if isinstance(g, (At, Active, Knows)):
            out.add(g.thread)
        elif isinstance(g, Macro):
            out.update(a for k, a in zip(MACROS[g.name], g.args) if k == "t")
    return out


def variables_in(f: Formula) -> set[str]:
    out = set()
    for g in subformulas(f):
        if isinstance(g, (VarEq, Unchanged)):
            out.add(g.var)
        elif isinstance(g, Macro):
            out.update(a for k, a in zip(MACROS[g.name], g.args) if k == "v")
    return out


def props_in(f: Formula) -> set[str]:
    return {g.name for g in subformulas(f) if isinstance(g, Prop)}


def is_extensional(f: Formula) -> bool:
    """True for state formulas: atoms under Boolean connectives only."""
    for g in subformulas(f):
        if isinstance(g, (Prev, Since, DualSince, Knows, Active, Unchanged, Macro)):
            return False
    return True


def prev_depth(f: Formula) -> int:
    if isinstance(f, Prev):
        return 1 + prev_depth(f.arg)
    return max((prev_depth(c) for c in children(f)), default=0)


# --------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>-?\d+)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*(?:\.[A-Za-z_][A-Za-z0-9_]*)?)
  | (?P<op><->|->|!=|[!&|()\[\],=])
""", re.VERBOSE)

KEYWORDS = {"Y", "S", "H", "O", "K", "true", "false", "init"}


@dataclass(frozen=True, slots=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _line_col(text: str, pos: int) -> tuple[int, int]:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SyntaxProblem(f"unexpected character {text[pos]!r}", *_line_col(text, pos))
        kind = m.lastgroup
        if kind != "ws":
            toks.append(_Tok(kind, m.group(), pos))
        pos = m.end()
    toks.append(_Tok("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str, aliases: Mapping[str, Formula] | None):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.aliases = aliases or {}

    def peek(self, k: int = 0) -> _Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, msg: str, tok: _Tok | None = None) -> SyntaxProblem:
        tok = tok or self.peek()
        return SyntaxProblem(msg, *_line_col(self.text, tok.pos))

    def expect(self, text: str) -> _Tok:
        tok = self.next()
        if tok.text != text:
            shown = tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {shown!r}", tok)
        return tok

    def ident(self) -> str:
        tok = self.next()
        if tok.kind != "id" or tok.text in KEYWORDS:
            raise self.error(f"expected an identifier, found {tok.text or 'end of input'!r}", tok)
        return tok.text

    def parse(self) -> Formula:
        f = self.iff()
        if self.peek().kind != "eof":
            raise self.error(f"unexpected {self.peek().text!r}")
        return f

    def iff(self) -> Formula:
        f = self.implies()
        while self.peek().text == "<->":
            self.next()
            f = Iff(f, self.implies())
        return f

    def implies(self) -> Formula:
        f = self.disj()
        if self.peek().text == "->":
            self.next()
            return Implies(f, self.implies())
        return f

    def disj(self) -> Formula:
        f = self.conj()
        while self.peek().text == "|":
            self.next()
            f = Or(f, self.conj())
        return f

    def conj(self) -> Formula:
        f = self.since()
        while self.peek().text == "&":
            self.next()
            f = And(f, self.since())
        return f

    def since(self) -> Formula:
        f = self.unary()
        if self.peek().text == "S" and self.peek().kind == "id":
            self.next()
            return Since(f, self.since())
        return f

    def unary(self) -> Formula:
        tok = self.peek()
        if tok.text == "!":
            self.next()
            return Not(self.unary())
        if tok.kind == "id" and tok.text in ("Y", "H", "O"):
            self.next()
            arg = self.unary()
            if tok.text == "Y":
                return Prev(arg)
            return always(arg) if tok.text == "H" else sometime(arg)
        if tok.kind == "id" and tok.text == "K":
            self.next()
            self.expect("[")
            a = self.ident()
            self.expect("]")
            return Knows(a, self.unary())
        return self.primary()

    def primary(self) -> Formula:
        tok = self.next()
        if tok.text == "(":
            f = self.iff()
            self.expect(")")
            return f
        if tok.kind != "id":
            raise self.error(f"expected a formula, found {tok.text or 'end of input'!r}", tok)
        name = tok.text
        if name == "true":
            return Top()
        if name == "false":
            return Bottom()
        if name == "init":
            return init()
        if name in ("S",):
            raise self.error("'S' needs a left operand", tok)
        if self.peek().text == "(":
            return self.call(name, tok)
        if self.peek().text == "=":
            self.next()
            nxt = self.next()
            if nxt.kind == "num":
                return VarEq(name, int(nxt.text))
            if nxt.text == "Y":
                other = self.ident()
                if other != name:
                    raise self.error(f"'{name} = Y {other}' compares different variables", nxt)
                return Unchanged(name)
            raise self.error(f"expected an integer after '=', found {nxt.text!r}", nxt)
        if self.peek().text == "!=":
            self.next()
            nxt = self.next()
            if nxt.kind != "num":
                raise self.error(f"expected an integer after '!=', found {nxt.text!r}", nxt)
            return Not(VarEq(name, int(nxt.text)))
        if name in KEYWORDS:
            raise self.error(f"unexpected keyword {name!r}", tok)
        if name in self.aliases:
            return self.aliases[name]
        return Prop(name)

    def call(self, name: str, tok: _Tok) -> Formula:
        self.expect("(")
        if name == "at":
            a = self.ident()
            self.expect(",")
            loc = self.ident()
            self.expect(")")
            return At(a, loc)
        if name == "active":
            a = self.ident()
            self.expect(")")
            return Active(a)
        if name == "nS":
            left = self.iff()
            self.expect(",")
            right = self.iff()
            self.expect(")")
            return DualSince(left, right)
        sig = MACROS.get(name)
        if sig is None or name in ("always", "sometime", "init"):
            raise self.error(f"unknown macro {name!r}", tok)
        args = []
        while True:
            if self.peek().text == ")" and not args and not sig:
                break
            kind = sig[len(args)] if len(args) < len(sig) else "f"
            args.append(self.iff() if kind == "f" else self.ident())
            if self.peek().text == ",":
                self.next()
                continue
            break
        self.expect(")")
        if len(args) != len(sig):
            raise self.error(f"macro {name} takes {len(sig)} argument(s), got {len(args)}", tok)
        return Macro(name, tuple(args))


def parse_formula(text: str, aliases: Mapping[str, Formula] | None = None) -> Formula:
    return _Parser(text, aliases).parse()


# --------------------------------------------------------------------------
# rendering

_LEVEL = {Iff: 1, Implies: 2, Or: 3, And: 4, Since: 5}
_SYMBOL = {Iff: "<->", Implies: "->", Or: "|", And: "&", Since: "S"}
_RIGHT_ASSOC = (Implies, Since)


def _level(f: Formula) -> int:
    if isinstance(f, tuple(_LEVEL)):
        return _LEVEL[type(f)]
    if isinstance(f, (Not, Prev, Knows)) or (isinstance(f, Macro) and f.name in ("always", "sometime")):
        return 6
    return 7


def _wrap(f: Formula, need: int) -> str:
    s = render_formula(f)
    return s if _level(f) >= need else f"({s})"


def _prefix(op: str, arg: Formula) -> str:
    if isinstance(arg, (VarEq, Unchanged)):
        return f"{op}({render_formula(arg)})"
    return op + _wrap(arg, 7)


def render_formula(f: Formula) -> str:
    if isinstance(f, Top):
        return "true"
    if isinstance(f, Bottom):
        return "false"
    if isinstance(f, Prop):
        return f.name
    if isinstance(f, VarEq):
        return f"{f.var} = {f.value}"
    if isinstance(f, Unchanged):
        return f"{f.var} = Y {f.var}"
    if isinstance(f, At):
        return f"at({f.thread}, {f.loc})"
    if isinstance(f, Active):
        return f"active({f.thread})"
    if isinstance(f, Not):
        return _prefix("!", f.arg)
    if isinstance(f, Prev):
        return _prefix("Y ", f.arg)
    if isinstance(f, Knows):
        return _prefix(f"K[{f.thread}] ", f.arg)
    if isinstance(f, DualSince):
        return f"nS({render_formula(f.left)}, {render_formula(f.right)})"
    if isinstance(f, tuple(_LEVEL)):
        lvl = _LEVEL[type(f)]
        if isinstance(f, _RIGHT_ASSOC):
            left, right = _wrap(f.left, lvl + 1), _wrap(f.right, lvl)
        else:
            left, right = _wrap(f.left, lvl), _wrap(f.right, lvl + 1)
        return f"{left} {_SYMBOL[type(f)]} {right}"
    if isinstance(f, Macro):
        if f.name == "always":
            return _prefix("H ", f.args[0])
        if f.name == "sometime":
            return _prefix("O ", f.args[0])
        if f.name == "init":
            return "init"
        parts = [render_formula(a) if isinstance(a, Formula) else a for a in f.args]
        return f"{f.name}({', '.join(parts)})"
    raise TypeError(f"not a formula: {f!r}")


# --------------------------------------------------------------------------
# derived operators

Domains = Mapping[str, Sequence[int]]


def _domain(domains: Domains | None, var: str) -> Sequence[int]:
    if domains is None or var not in domains:
        raise FormulaError(f"no finite domain known for variable {var!r}")
    return domains[var]


def _implies(a: Formula, b: Formula) -> Formula:
    return Not(And(a, Not(b)))


def _or(a: Formula, b: Formula) -> Formula:
    return Not(And(Not(a), Not(b)))


def _always(f: Formula) -> Formula:
    return Not(Since(Top(), Not(f)))


def _after(a: str) -> Formula:
    return Prev(Active(a))


def _last_a(a: str, f: Formula) -> Formula:
    return Since(Not(_after(a)), And(_after(a), f))


def _unchanged(x: str, domains: Domains | None) -> Formula:
    return conj(_implies(Prev(VarEq(x, v)), VarEq(x, v)) for v in _domain(domains, x))


def _chg(x: str, domains: Domains | None) -> Formula:
    terms = [And(VarEq(x, v), Prev(Not(VarEq(x, v)))) for v in _domain(domains, x)]
    out = terms[0]
    for t in terms[1:]:
        out = _or(out, t)
    return out


def check_extensional(name: str, f: Formula) -> None:
    if not is_extensional(f):
        raise FormulaError(f"{name}(...) needs a state formula (atoms and Boolean connectives), "
                           f"got {render_formula(f)}")


def expand_derived(f: Formula, domains: Domains | None = None) -> Formula:
    """Rewrite to the core language {atoms, active, !, &, Y, S, K, true}."""
    if isinstance(f, (Top, Prop, VarEq, At, Active)):
        return f
    if isinstance(f, Bottom):
        return Not(Top())
    if isinstance(f, Unchanged):
        return _unchanged(f.var, domains)
    if isinstance(f, Not):
        return Not(expand_derived(f.arg, domains))
    if isinstance(f, And):
        return And(expand_derived(f.left, domains), expand_derived(f.right, domains))
    if isinstance(f, Or):
        return _or(expand_derived(f.left, domains), expand_derived(f.right, domains))
    if isinstance(f, Implies):
        return _implies(expand_derived(f.left, domains), expand_derived(f.right, domains))
    if isinstance(f, Iff):
        a, b = expand_derived(f.left, domains), expand_derived(f.right, domains)
        return And(_implies(a, b), _implies(b, a))
    if isinstance(f, Prev):
        return Prev(expand_derived(f.arg, domains))
    if isinstance(f, Since):
        return Since(expand_derived(f.left, domains), expand_derived(f.right, domains))
    if isinstance(f, DualSince):
        return Not(Since(expand_derived(f.left, domains), expand_derived(f.right, domains)))
    if isinstance(f, Knows):
        return Knows(f.thread, expand_derived(f.arg, domains))
    if not isinstance(f, Macro):
        raise TypeError(f"not a formula: {f!r}")

    name, args = f.name, f.args
    if name in _EXTENSIONAL_ARGS:
        check_extensional(name, args[-1])
    ex = lambda g: expand_derived(g, domains)  # noqa: E731
    if name == "always":
        return _always(ex(args[0]))
    if name == "sometime":
        return Since(Top(), ex(args[0]))
    if name == "prec":
        a, b = ex(args[0]), ex(args[1])
        return And(Since(Not(a), And(b, Not(a))), Since(Top(), a))
    if name == "after":
        return _after(args[0])
    if name == "lastA":
        return _last_a(args[0], ex(args[1]))
    if name == "preA":
        return _last_a(args[0], Prev(ex(args[1])))
    if name == "est":
        return _last_a(args[0], Knows(args[0], ex(args[1])))
    if name == "chg":
        return _chg(args[0], domains)
    if name == "write":
        return And(_after(args[0]), _chg(args[1], domains))
    if name == "lastW":
        w, g = ex(args[0]), ex(args[1])
        return Since(Not(w), And(w, g))
    if name == "stable":
        g = ex(args[1])
        return _always(_implies(Not(_after(args[0])), _implies(Prev(g), g)))
    if name == "frame":
        return _always(_implies(Not(_after(args[0])), _unchanged(args[1], domains)))
    if name == "pres":
        g = ex(args[0])
        return _always(_implies(Prev(Top()), _implies(Prev(g), g)))
    if name == "presA":
        g = ex(args[1])
        return _always(_implies(_after(args[0]), _implies(Prev(g), g)))
    if name == "init":
        return Not(Prev(Top()))
    raise FormulaError(f"unknown macro {name!r}")


def is_core(f: Formula) -> bool:
    core = (Top, Prop, VarEq, At, Active, Not, And, Prev, Since, Knows)
    return all(isinstance(g, core) for g in subformulas(f))


# --------------------------------------------------------------------------
# normal forms

def unfold_since(f: Formula) -> Formula:
    """``a S b`` becomes ``b | (a & Y (a S b))``."""
    if not isinstance(f, Since):
        raise FormulaError(f"unfold_since needs a top-level S, got {render_formula(f)}")
    return Or(f.right, And(f.left, Prev(f)))


_INIT = Not(Prev(Top()))


def is_literal(f: Formula) -> bool:
    if not isinstance(f, Not):
        return isinstance(f, ATOMIC)
    return isinstance(f.arg, (Top, Prop, VarEq, At, Active)) or f.arg == Prev(Top())


def is_nnf(f: Formula) -> bool:
    for g in subformulas(f):
        if isinstance(g, Not) and not is_literal(g):
            return False
        if isinstance(g, (Implies, Iff, Macro, Unchanged, Bottom)):
            return False
    return True


def nnf(f: Formula, depth: int = 3, dual: bool = True) -> Formula:
    """Push negations down to literals in the Knows-free past-time fragment.

    A negated ``S`` is unfolded ``depth`` times; what remains is kept as a
    :class:`DualSince` node, or rejected when ``dual`` is False.  ``!Y true``
    counts as a literal (it marks the initial time).
    """

    def pos(g: Formula) -> Formula:
        if isinstance(g, Bottom):
            return Not(Top())
        if isinstance(g, ATOMIC):
            if isinstance(g, Unchanged):
                raise FormulaError("expand 'x = Y x' before nnf")
            return g
        if isinstance(g, Not):
            return neg(g.arg, depth)
        if isinstance(g, And):
            return And(pos(g.left), pos(g.right))
        if isinstance(g, Or):
            return Or(pos(g.left), pos(g.right))
        if isinstance(g, Implies):
            return Or(neg(g.left, depth), pos(g.right))
        if isinstance(g, Iff):
            return And(Or(neg(g.left, depth), pos(g.right)), Or(neg(g.right, depth), pos(g.left)))
        if isinstance(g, Prev):
            return Prev(pos(g.arg))
        if isinstance(g, Since):
            return Since(pos(g.left), pos(g.right))
        if isinstance(g, DualSince):
            return DualSince(pos(g.left), pos(g.right))
        if isinstance(g, Knows):
            raise FormulaError("nnf is defined for the Knows-free fragment only")
        raise FormulaError(f"expand derived operators before nnf: {render_formula(g)}")

    def neg(g: Formula, d: int) -> Formula:
        if isinstance(g, Top):
            return Not(Top())
        if isinstance(g, Bottom):
            return Top()
        if isinstance(g, (Prop, VarEq, At, Active)):
            return Not(g)
        if isinstance(g, Not):
            return pos(g.arg)
        if isinstance(g, And):
            return Or(neg(g.left, depth), neg(g.right, depth))
        if isinstance(g, Or):
            return And(neg(g.left, depth), neg(g.right, depth))
        if isinstance(g, Implies):
            return And(pos(g.left), neg(g.right, depth))
        if isinstance(g, Iff):
            return Or(And(pos(g.left), neg(g.right, depth)), And(pos(g.right), neg(g.left, depth)))
        if isinstance(g, Prev):
            if isinstance(g.arg, Top):
                return _INIT
            return Or(And(Prev(Top()), Prev(neg(g.arg, depth))), _INIT)
        if isinstance(g, DualSince):
            return Since(pos(g.left), pos(g.right))
        if isinstance(g, Since):
            if d <= 0:
                if not dual:
                    raise FormulaError("unfolding depth exceeded for a negated S")
                return DualSince(pos(g.left), pos(g.right))
            # !(a S b) == !b & (!a | !Y(a S b)), with !Y expanded as above
            prev_neg = Or(And(Prev(Top()), Prev(neg(g, d - 1))), _INIT)
            return And(neg(g.right, depth), Or(neg(g.left, depth), prev_neg))
        if isinstance(g, Knows):
            raise FormulaError("nnf is defined for the Knows-free fragment only")
        raise FormulaError(f"expand derived operators before nnf: {render_formula(g)}")

    return pos(f)


def substitute(f: Formula, props: Mapping[str, Formula] | None = None,
               threads: Mapping[str, str] | None = None) -> Formula:
    """Replace propositional letters and rename threads."""
    props = props or {}
    threads = threads or {}
    rn = lambda a: threads.get(a, a)  # noqa: E731

    def fn(g: Formula):
        if isinstance(g, Prop) and g.name in props:
            return props[g.name]
        if isinstance(g, At):
            return At(rn(g.thread), g.loc)
        if isinstance(g, Active):
            return Active(rn(g.thread))
        if isinstance(g, Knows):
            return Knows(rn(g.thread), g.arg)
        if isinstance(g, Macro):
            return Macro(g.name, tuple(rn(a) if k == "t" else a
                                       for k, a in zip(MACROS[g.name], g.args)))
        return None

    return map_formula(f, fn)
