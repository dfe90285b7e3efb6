"""Random programs and formulas for property sweeps and soundness fuzzing."""

from __future__ import annotations

import random

from .formula import (Active, And, At, Formula, Implies, Knows, Not, Or, Prev, Since, Top,
                      VarEq)
from .program import Program, parse_program

_VAR_NAMES = ("x", "y", "z")
_THREAD_NAMES = ("A", "B", "C")


def random_program(rng: random.Random, threads=None, shared=None, hi: int | None = None,
                   max_locs: int = 4) -> Program:
    """A small well-formed program: <= 3 threads, <= 3 shared vars, one local each.

    Generated as DSL text and parsed, so it goes through the same validation
    as user programs.  Right-hand sides are constants or the thread's local,
    which keeps every step inside the declared domains.
    """
    if threads is None:
        threads = list(_THREAD_NAMES[:rng.randint(1, 3)])
    if shared is None:
        shared = list(_VAR_NAMES[:rng.randint(1, 3)])
    shared = list(shared) or ["x"]
    if hi is None:
        hi = rng.randint(1, 2)
    lines = [f"shared {x} : 0..{hi} = {rng.randint(0, hi)}" for x in shared]
    for t in threads:
        n = rng.randint(2, max_locs)
        locs = [f"L{k}" for k in range(n)]
        lines.append(f"thread {t} {{")
        lines.append(f"  local r : 0..{hi} = 0")
        for k, loc in enumerate(locs):
            nxt = locs[(k + 1) % n] if rng.random() < 0.8 else rng.choice(locs)
            alt = rng.choice(locs)
            x = rng.choice(shared)
            c = rng.randint(0, hi)
            kind = rng.choices(["write", "writer", "read", "readbr", "let", "br", "halt"],
                               weights=[4, 2, 3, 3, 1, 1, 1])[0]
            if k == n - 1 and rng.random() < 0.3:
                kind = "halt"
            body = {
                "write": f"write {x} := {c} goto {nxt}",
                "writer": f"write {x} := r goto {nxt}",
                "read": f"read r := {x} goto {nxt}",
                "readbr": f"readbr {x} == {c} ? {nxt} : {alt}",
                "let": f"let r := {c} goto {nxt}",
                "br": f"br r == {c} ? {nxt} : {alt}",
                "halt": "halt",
            }[kind]
            lines.append(f"  {loc}: {body}")
        lines.append("}")
    return parse_program("\n".join(lines) + "\n")


def random_atom(rng: random.Random, p: Program) -> Formula:
    r = rng.random()
    if r < 0.6 or not p.thread_names:
        d = rng.choice(p.shared_decls)
        return VarEq(d.name, rng.choice(list(d.domain)))
    a = rng.choice(p.thread_names)
    decls = p.local_decls(a)
    if r < 0.85 or not decls:
        return At(a, rng.choice(p.locations(a)))
    d = rng.choice(decls)
    return VarEq(f"{a}.{d.name}", rng.choice(list(d.domain)))


def random_state_formula(rng: random.Random, p: Program, size: int = 3) -> Formula:
    """Boolean combination of atoms with about ``size`` connectives."""
    if size <= 0:
        return random_atom(rng, p) if rng.random() < 0.95 else Top()
    op = rng.choice(("not", "and", "or", "and", "or"))
    if op == "not":
        return Not(random_state_formula(rng, p, size - 1))
    k = rng.randint(0, size - 1)
    left = random_state_formula(rng, p, k)
    right = random_state_formula(rng, p, size - 1 - k)
    return And(left, right) if op == "and" else Or(left, right)


def random_formula(rng: random.Random, p: Program, size: int = 6, knows: bool = False,
                   active: bool = True, bare_active: bool = True) -> Formula:
    """A random temporal formula of about ``size`` operators.

    ``bare_active=False`` keeps ``active(A)`` directly under ``Y``, which makes
    every subformula determinate at every context.
    """

    def atom() -> Formula:
        if active and rng.random() < 0.2:
            act = Active(rng.choice(p.thread_names))
            return act if bare_active else Prev(act)
        if rng.random() < 0.05:
            return Top()
        return random_atom(rng, p)

    def gen(n: int) -> Formula:
        if n <= 0:
            return atom()
        ops = ["not", "and", "or", "imp", "prev", "since", "since"]
        if knows:
            ops += ["knows", "knows"]
        op = rng.choice(ops)
        if op == "not":
            return Not(gen(n - 1))
        if op == "prev":
            return Prev(gen(n - 1))
        if op == "knows":
            return Knows(rng.choice(p.thread_names), gen(n - 1))
        k = rng.randint(0, n - 1)
        left, right = gen(k), gen(n - 1 - k)
        return {"and": And, "or": Or, "imp": Implies, "since": Since}[op](left, right)

    return gen(size)
