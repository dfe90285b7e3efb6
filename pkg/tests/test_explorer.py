import random

import numpy as np
import pytest
from oracle import bfs_reachable, label_sequences

from ptel.errors import BudgetExceeded, FormulaError, ModelError
from ptel.explorer import (explore_points, indist_classes, induction_graph, make_point,
                           observation_history, reachable_graph, run_prefix)
from ptel.formula import parse_formula
from ptel.program import initial_state, parse_program, step_thread, with_initial
from ptel.sampling import random_program

TWO_HALTS = "shared x : 0..1 = 0\nthread A {\n L0: halt\n}\nthread B {\n L0: halt\n}\n"


def test_depth_zero_single_point(peterson):
    ps = explore_points(peterson, 0)
    assert len(ps) == 1 and ps.labels(0) == ()


def test_straight_line_single_thread():
    p = parse_program("shared x : 0..1 = 0\nthread A {\n L0: write x := 1 goto L1\n L1: halt\n}\n")
    ps = explore_points(p, 2)
    assert len(ps) == 3
    assert [ps.labels(n) for n in range(3)] == [(), ("A",), ("A", "A")]


def test_two_threads_depth_two_has_seven_points():
    ps = explore_points(parse_program(TWO_HALTS), 2)
    assert len(ps) == 7
    assert sorted(ps.labels(n) for n in range(7)) == sorted(label_sequences(["A", "B"], 2))


def test_enumeration_order_is_breadth_first_by_actor_name():
    ps = explore_points(parse_program(TWO_HALTS), 2)
    assert [ps.labels(n) for n in range(len(ps))] == [
        (), ("A",), ("B",), ("A", "A"), ("A", "B"), ("B", "A"), ("B", "B")]


def test_shallow_tree_is_prefix_of_deep_tree(peterson):
    small, big = explore_points(peterson, 5), explore_points(peterson, 7)
    m = len(small)
    assert np.array_equal(small.parent, big.parent[:m])
    assert np.array_equal(small.actor, big.actor[:m])


def test_point_states_replay(peterson):
    ps = explore_points(peterson, 6)
    for n in range(0, len(ps), 7):
        pre = run_prefix(peterson, ps.labels(n))
        assert ps.states[ps.state[n]] == pre.states[-1]


def test_budget_is_explicit(peterson):
    with pytest.raises(BudgetExceeded):
        explore_points(peterson, 12, node_cap=1000)
    with pytest.raises(BudgetExceeded):
        reachable_graph(peterson, node_cap=10)


@pytest.mark.parametrize("victim", [0, 1])
def test_peterson_graph_matches_bfs_oracle(peterson, victim):
    p = with_initial(peterson, {"victim": victim})
    g = reachable_graph(p)
    states, edges = bfs_reachable(p)
    assert set(g.states) == states
    assert len(g.states) == len(states)
    assert {(g.states[s], a, g.states[t]) for s, a, t in g.edges} == edges


def test_random_graphs_match_bfs_oracle():
    rng = random.Random(3)
    for _ in range(40):
        p = random_program(rng)
        g = reachable_graph(p)
        states, edges = bfs_reachable(p)
        assert set(g.states) == states
        assert {(g.states[s], a, g.states[t]) for s, a, t in g.edges} == edges


def test_halted_thread_graph():
    g = reachable_graph(parse_program("thread A {\n L0: halt\n}\n"))
    assert len(g.states) == 1 and g.edges == [(0, "A", 0)]


def test_ownership_constraint_leaves_peterson_graph_unchanged(peterson):
    own = parse_formula("H (!after(T0) -> flag0 = Y flag0) & H (!after(T1) -> flag1 = Y flag1)")
    g0, g1 = reachable_graph(peterson), reachable_graph(peterson, own)
    assert g0.states == g1.states and g0.edges == g1.edges


def test_constraint_prunes_steps():
    p = parse_program("shared x : 0..1 = 0\nthread A {\n L0: write x := 1 goto L0\n}\n"
                      "thread B {\n L0: halt\n}\n")
    c = parse_formula("H (x = Y x)")
    g = reachable_graph(p, c)
    assert len(g.states) == 1 and [a for _, a, _ in g.edges] == ["B"]
    ps = explore_points(p, 3, c)
    assert all(set(ps.labels(n)) <= {"B"} for n in range(len(ps)))


def test_constraint_shape_is_enforced(peterson):
    with pytest.raises(FormulaError):
        explore_points(peterson, 2, parse_formula("O flag0 = 1"))
    with pytest.raises(FormulaError):
        explore_points(peterson, 2, parse_formula("H (active(T0) -> flag0 = 0)"))
    with pytest.raises(ModelError):
        explore_points(peterson, 2, parse_formula("H flag0 = 1"))


def test_graph_contains_every_point_state(peterson):
    g = reachable_graph(peterson)
    ps = explore_points(peterson, 8)
    assert set(ps.states) <= set(g.states)


def test_path_to_replays(peterson):
    g = reachable_graph(peterson)
    for sid in range(0, len(g.states), 5):
        assert run_prefix(peterson, g.path_to(sid)).states[-1] == g.states[sid]


def test_dump_format():
    g = reachable_graph(parse_program("thread A {\n L0: halt\n}\n"))
    assert g.dump() == "node 0 A.pc=L0\nedge 0 A 0\n"


def test_induction_graph_sources_satisfy_invariant(peterson):
    inv = parse_formula("flag0 = 0")
    g = induction_graph(peterson, inv)
    assert g.kind == "inductive"
    srcs = {s for s, _, _ in g.edges}
    assert all(g.states[s].shared[0] == 0 for s in srcs)


# ---- histories and classes -------------------------------------------------------

def test_history_at_initial_time(peterson):
    pt = make_point(peterson, (), 0)
    o = initial_state(peterson).locals[0]
    assert observation_history(pt, "T0", peterson) == (o, o)


def test_history_counts_own_steps_only(peterson):
    pt = make_point(peterson, ("T1", "T0", "T1"))
    st = pt.prefix.states
    k = peterson.thread_index["T0"]
    assert observation_history(pt, "T0", peterson) == (st[0].locals[k], st[2].locals[k],
                                                       st[3].locals[k])


def test_history_at_inner_index(peterson):
    pt = make_point(peterson, ("T0", "T0", "T1"), 1)
    st = pt.prefix.states
    assert observation_history(pt, "T0", peterson) == (st[0].locals[0], st[1].locals[0],
                                                       st[1].locals[0])


def test_environment_step_leaves_history_unchanged():
    rng = random.Random(8)
    checked = 0
    for _ in range(50):
        p = random_program(rng)
        labels = tuple(rng.choice(p.thread_names) for _ in range(rng.randint(0, 6)))
        for a in p.thread_names:
            for b in p.thread_names:
                if b == a:
                    continue
                before = observation_history(make_point(p, labels), a, p)
                after = observation_history(make_point(p, labels + (b,)), a, p)
                assert before == after
                checked += 1
    assert checked > 0


def test_single_prefix_classes_are_singletons():
    p = parse_program("shared x : 0..1 = 0\nthread A {\n L0: write x := 1 goto L1\n L1: halt\n}\n")
    classes = indist_classes(explore_points(p, 3), "A")
    assert len(classes) == 4


def test_environment_only_prefixes_share_a_class():
    ps = explore_points(parse_program(TWO_HALTS), 2)
    cls = ps.class_ids("A")
    assert cls[ps.node_of(())] == cls[ps.node_of(("B",))] == cls[ps.node_of(("B", "B"))]
    assert cls[ps.node_of(("A",))] == cls[ps.node_of(("B", "A"))] == cls[ps.node_of(("A", "B"))]
    assert cls[ps.node_of(())] != cls[ps.node_of(("A",))]


def _class_vs_history(p, depth):
    ps = explore_points(p, depth)
    for a in p.thread_names:
        cls = ps.class_ids(a)
        hist = [observation_history(ps.point(n), a, p) for n in range(len(ps))]
        by_cls, by_hist = {}, {}
        for n, (c, h) in enumerate(zip(cls, hist)):
            by_cls.setdefault(int(c), set()).add(h)
            by_hist.setdefault(h, set()).add(int(c))
        assert all(len(v) == 1 for v in by_cls.values())
        assert all(len(v) == 1 for v in by_hist.values())


def test_peterson_classes_are_consistent(peterson):
    ps = explore_points(peterson, 6)
    for a in peterson.thread_names:
        k = peterson.thread_index[a]
        cls = ps.class_ids(a)
        seen = {}
        for n, c in enumerate(cls):
            loc = ps.states[ps.state[n]].locals[k]
            assert seen.setdefault(int(c), loc) == loc
    _class_vs_history(peterson, 6)


def test_random_classes_equal_history_partition():
    rng = random.Random(21)
    for _ in range(15):
        p = random_program(rng)
        _class_vs_history(p, 4 if len(p.thread_names) == 3 else 5)


def test_dropping_duplicate_final_entry_changes_no_class(peterson):
    # the final entry of a verbatim history repeats the last own observation
    ps = explore_points(peterson, 7)
    for a in peterson.thread_names:
        full = {}
        short = {}
        for n in range(len(ps)):
            h = observation_history(ps.point(n), a, peterson)
            full.setdefault(h, []).append(n)
            short.setdefault(h[:-1], []).append(n)
        assert sorted(full.values()) == sorted(short.values())


def test_prefix_closure(peterson):
    ps = explore_points(peterson, 6)
    for n in range(1, len(ps)):
        assert ps.labels(int(ps.parent[n])) == ps.labels(n)[:-1]


def test_node_of_rejects_missing_labels():
    ps = explore_points(parse_program(TWO_HALTS), 1)
    with pytest.raises(KeyError):
        ps.node_of(("A", "A"))
    assert not ps.contains(("C",))


def test_step_function_drives_enumeration(peterson):
    ps = explore_points(peterson, 3)
    for n in range(1, len(ps)):
        par = int(ps.parent[n])
        a = peterson.thread_names[ps.actor[n]]
        assert step_thread(peterson, ps.states[ps.state[par]], a) == ps.states[ps.state[n]]
