import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptel.errors import FormulaError, SyntaxProblem
from ptel.formula import (Active, And, At, Bottom, DualSince, Iff, Implies, Knows, Macro, Not, Or,
                          Prev, Prop, Since, Top, Unchanged, VarEq, always, expand_derived, is_core,
                          is_nnf, make_macro, nnf, parse_formula, render_formula, sometime,
                          substitute, unfold_since)

P, Q, R = Prop("p"), Prop("q"), Prop("r")


@pytest.mark.parametrize("text,expected", [
    ("Y (active(A))", Prev(Active("A"))),
    ("p S q", Since(P, Q)),
    ("K[A] (x = 1)", Knows("A", VarEq("x", 1))),
    ("x != 2", Not(VarEq("x", 2))),
    ("x = Y x", Unchanged("x")),
    ("at(T0, l_cs)", At("T0", "l_cs")),
    ("T0.lr_flag1 = 0", VarEq("T0.lr_flag1", 0)),
    ("true & false", And(Top(), Bottom())),
    ("nS(p, q)", DualSince(P, Q)),
])
def test_parse_examples(text, expected):
    assert parse_formula(text) == expected


def test_precedence():
    # ! > S > & > | > -> > <->, with -> and S grouping to the right
    assert parse_formula("!p S q") == Since(Not(P), Q)
    assert parse_formula("p & q S r") == And(P, Since(Q, R))
    assert parse_formula("p | q & r") == Or(P, And(Q, R))
    assert parse_formula("p -> q -> r") == Implies(P, Implies(Q, R))
    assert parse_formula("p S q S r") == Since(P, Since(Q, R))
    assert parse_formula("p <-> q -> r") == Iff(P, Implies(Q, R))
    assert parse_formula("Y p & q") == And(Prev(P), Q)
    assert parse_formula("K[A] p | q") == Or(Knows("A", P), Q)


@pytest.mark.parametrize("f,text", [
    (Since(P, Q), "p S q"),
    (Knows("A", Not(P)), "K[A] (!p)"),
    (always(P), "H p"),
    (sometime(P), "O p"),
])
def test_render_examples(f, text):
    assert render_formula(f) == text


def test_aliases_resolve_bare_names():
    incs = At("T0", "l_cs")
    assert parse_formula("H !InCS0", {"InCS0": incs}) == always(Not(incs))


@pytest.mark.parametrize("text,fragment", [
    ("foo(p)", "unknown macro"),
    ("lastA(A)", "takes 2"),
    ("p & (q", "expected ')'"),
    ("x = ", "integer"),
    ("K[A p", "expected ']'"),
    ("p $ q", "unexpected character"),
])
def test_syntax_errors(text, fragment):
    with pytest.raises(SyntaxProblem) as e:
        parse_formula(text)
    assert fragment in str(e.value)
    assert e.value.line == 1 and e.value.col >= 1


def test_error_position_on_later_line():
    with pytest.raises(SyntaxProblem) as e:
        parse_formula("p &\n  q &\n  )")
    assert (e.value.line, e.value.col) == (3, 3)


# ---- expansion ---------------------------------------------------------------

def test_expand_sometime():
    assert expand_derived(sometime(P)) == Since(Top(), P)


def test_expand_always():
    assert expand_derived(always(P)) == Not(Since(Top(), Not(P)))


def test_expand_last_step_operator():
    after = Prev(Active("A"))
    assert expand_derived(parse_formula("lastA(A, p)")) == Since(Not(after), And(after, P))


def test_expand_est_is_last_step_of_knowledge():
    after = Prev(Active("A"))
    want = Since(Not(after), And(after, Knows("A", P)))
    assert expand_derived(parse_formula("est(A, p)")) == want


def test_expand_pre_a():
    after = Prev(Active("A"))
    want = Since(Not(after), And(after, Prev(P)))
    assert expand_derived(parse_formula("preA(A, p)")) == want


def test_expand_prec():
    f = expand_derived(parse_formula("prec(p, q)"))
    assert f == And(Since(Not(P), And(Q, Not(P))), Since(Top(), P))


def test_expand_init():
    assert expand_derived(parse_formula("init")) == Not(Prev(Top()))


def test_expand_chg_over_domain():
    f = expand_derived(parse_formula("chg(x)"), {"x": range(0, 2)})
    assert is_core(f)
    # x changed iff for some v: x = v now and not before
    assert "Y" in render_formula(f)


def test_chg_needs_domain():
    with pytest.raises(FormulaError):
        expand_derived(parse_formula("chg(x)"))


def test_expand_removes_all_sugar():
    doms = {"x": range(0, 3)}
    text = ("stable(A, x = 1 | p) & frame(B, x) & pres(p -> q) & presA(A, p <-> q) "
            "& write(A, x) & lastW(after(B), p) & (x = Y x)")
    f = expand_derived(parse_formula(text), doms)
    assert is_core(f)


@pytest.mark.parametrize("text", ["stable(A, Y p)", "frame(A, x) & pres(p S q)",
                                  "presA(A, K[A] p)", "pres(active(A))"])
def test_extensionality_guard(text):
    with pytest.raises(FormulaError):
        expand_derived(parse_formula(text), {"x": range(2)})


# ---- unfolding and NNF -------------------------------------------------------

def test_unfold_since():
    assert unfold_since(Since(P, Q)) == Or(Q, And(P, Prev(Since(P, Q))))
    assert unfold_since(Since(Top(), Q)) == Or(Q, And(Top(), Prev(Since(Top(), Q))))


def test_unfold_since_rejects_other_nodes():
    with pytest.raises(FormulaError):
        unfold_since(And(P, Q))


def test_nnf_examples():
    assert nnf(Not(Prev(P))) == Or(And(Prev(Top()), Prev(Not(P))), Not(Prev(Top())))
    assert nnf(Not(Not(P))) == P
    assert nnf(Not(And(P, Q))) == Or(Not(P), Not(Q))


def test_nnf_negated_since_leaves_marked_residual():
    g = nnf(Not(Since(P, Q)), depth=1)
    assert is_nnf(g)
    assert DualSince(P, Q) in set(_walk(g))


def test_nnf_without_residual_raises():
    with pytest.raises(FormulaError):
        nnf(Not(Since(P, Q)), depth=2, dual=False)


def test_nnf_rejects_knowledge():
    with pytest.raises(FormulaError):
        nnf(Not(Knows("A", P)))


def _walk(f):
    from ptel.formula import subformulas
    return subformulas(f)


# ---- properties --------------------------------------------------------------

_ids = st.sampled_from(["p", "q", "r", "x_1", "flag0"])
_threads = st.sampled_from(["A", "B", "T0"])


def _atoms():
    return st.one_of(
        _ids.map(Prop),
        st.builds(VarEq, st.sampled_from(["x", "y", "T0.r"]), st.integers(-3, 9)),
        st.builds(Unchanged, st.sampled_from(["x", "y"])),
        st.builds(At, _threads, st.sampled_from(["L0", "l_cs"])),
        _threads.map(Active),
        st.just(Top()), st.just(Bottom()),
    )


_formulas = st.recursive(
    _atoms(),
    lambda sub: st.one_of(
        sub.map(Not), sub.map(Prev),
        st.builds(And, sub, sub), st.builds(Or, sub, sub), st.builds(Implies, sub, sub),
        st.builds(Iff, sub, sub), st.builds(Since, sub, sub), st.builds(DualSince, sub, sub),
        st.builds(Knows, _threads, sub),
        sub.map(lambda f: make_macro("always", f)),
        sub.map(lambda f: make_macro("sometime", f)),
        st.builds(lambda a, f: make_macro("lastA", a, f), _threads, sub),
        st.builds(lambda f, g: make_macro("prec", f, g), sub, sub),
        _threads.map(lambda a: make_macro("after", a)),
    ),
    max_leaves=12,
)


@settings(max_examples=400, deadline=None)
@given(_formulas)
def test_render_parse_round_trip(f):
    assert parse_formula(render_formula(f)) == f


@settings(max_examples=200, deadline=None)
@given(_formulas)
def test_render_is_whitespace_insensitive(f):
    text = render_formula(f)
    assert parse_formula(" " + text.replace(" ", "  ") + "\n") == f


@settings(max_examples=300, deadline=None)
@given(_formulas)
def test_expansion_is_idempotent(f):
    doms = {"x": range(0, 3), "y": range(0, 2)}
    once = expand_derived(f, doms)
    assert is_core(once)
    assert expand_derived(once, doms) == once


def test_substitute_letters_and_threads():
    f = parse_formula("K[A] p -> p S q")
    g = substitute(f, {"p": VarEq("x", 1)}, {"A": "T0"})
    assert g == parse_formula("K[T0] x = 1 -> x = 1 S q")


def test_macro_args_are_checked():
    with pytest.raises(FormulaError):
        make_macro("after", P)
    assert isinstance(make_macro("after", "A"), Macro)


def test_nnf_sweep_is_structurally_nnf():
    from ptel.program import parse_program
    from ptel.sampling import random_formula
    p = parse_program("shared x : 0..1 = 0\nthread A {\n L0: halt\n}\nthread B {\n L0: halt\n}\n")
    rng = random.Random(5)
    for _ in range(300):
        f = random_formula(rng, p, size=rng.randint(0, 8))
        assert is_nnf(nnf(expand_derived(f)))
