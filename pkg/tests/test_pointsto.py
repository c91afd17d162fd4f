"""Region points-to analysis: unify, intraprocedural and interprocedural
passes, allocation marking."""

import pytest

from conftest import QSORT_SRC

from rbmm.frontend import load_program
from rbmm.pointsto import (RptGraph, analyze_program, intraproc,
                           refixpoint_changes)

LIST_DECL = ":- type list_int ---> [] ; [int | list_int].\n"


def make_graph(nodes, edges):
    g = RptGraph("test")
    ids = {}
    for name, tname in nodes:
        ids[name] = g.fresh_node(tname)
        g.vars[ids[name]].add(name)
        g.var_home[name] = ids[name]
    for src, f, i, dst in edges:
        g.edges[ids[src]][(f, i)] = ids[dst]
    return g, ids


def test_unify_two_bare_nodes():
    g, ids = make_graph([("X", "t"), ("Y", "t")], [])
    g.unify(ids["X"], ids["Y"])
    assert len(g.nodes()) == 1
    assert g.vars[g.node_of("X")] == {"X", "Y"}


def test_unify_cascades_to_children():
    # n -(f,1)-> a, m -(f,1)-> b with a != b: unify(n, m) also merges a and b
    g, ids = make_graph(
        [("N", "t"), ("M", "t"), ("A", "u"), ("B", "u")],
        [("N", "f", 1, "A"), ("M", "f", 1, "B")])
    before_edges = g.edge_count()
    g.unify(ids["N"], ids["M"])
    assert g.node_of("A") == g.node_of("B")
    assert g.node_of("N") == g.node_of("M")
    assert len(g.nodes()) == 2
    assert g.edge_count() <= before_edges


def test_unify_never_increases_edges_decreases_nodes():
    g, ids = make_graph(
        [("N", "t"), ("M", "t"), ("A", "u"), ("B", "u"), ("C", "v")],
        [("N", "f", 1, "A"), ("M", "f", 1, "B"), ("A", "g", 1, "C")])
    nodes0, edges0 = len(g.nodes()), g.edge_count()
    g.unify(ids["N"], ids["M"])
    assert len(g.nodes()) < nodes0
    assert g.edge_count() <= edges0


def test_assignment_shares_node():
    src = LIST_DECL + """
:- pred p(list_int, list_int).
:- mode p(in, out) is det.
p(X, Y) :- Y := X.
"""
    prog = load_program(src, "t.rl")
    g = intraproc(prog, prog.procs["p/2"])
    assert g.node_of("X") == g.node_of("Y")


def test_sharing_example_sequence():
    # X <= [1,2], Y := X, Z <= h(Y,2), L <= [f, g(1), Z], K <= k(Z)
    src = """
:- type elem ---> f ; g(int) ; h(list_int, int).
:- type list_int ---> [] ; [int | list_int].
:- type list_elem ---> [] ; [elem | list_elem].
:- type kt ---> k(elem).
:- pred p(list_elem, kt).
:- mode p(out, out) is det.
p(L, K) :-
    X = [1, 2],
    Y := X,
    Z = h(Y, 2),
    L = [f, g(1), Z],
    K = k(Z).
"""
    prog = load_program(src, "t.rl")
    res = analyze_program(prog)
    g = res.graphs["p/2"]
    assert g.node_of("X") == g.node_of("Y")
    nz = g.node_of("Z")
    assert nz in g.reach(g.node_of("L"))
    assert nz in g.reach(g.node_of("K"))


def test_true_body_single_node():
    src = """
:- pred p(int).
:- mode p(in) is det.
p(_) :- true.
"""
    prog = load_program(src, "t.rl")
    g = intraproc(prog, prog.procs["p/1"])
    assert len(g.nodes()) == 1


def test_quicksort_graphs_match_paper_shape():
    prog = load_program(QSORT_SRC, "qsort.rl")
    res = analyze_program(prog)
    g = res.graphs["split/4"]
    # five regions: X | {L,Ls} | {L1,L11} | {L2,L21} | {Le}
    parts = {frozenset(g.vars[n]) for n in g.nodes()}
    assert frozenset({"X"}) in parts
    assert frozenset({"HV_2", "Ls"}) in parts
    assert frozenset({"L1", "L11"}) in parts
    assert frozenset({"L2", "L21"}) in parts
    assert frozenset({"Le"}) in parts
    assert len(g.nodes()) == 5
    # qsort: accumulator, result and temporaries share one region
    gq = res.graphs["qsort/3"]
    accs = gq.vars[gq.node_of("A")]
    assert {"A", "S", "S2", "V_0"} <= accs
    assert gq.node_of("L1") != gq.node_of("L2")
    assert len(gq.nodes()) == 5


def test_alpha_maps_split_into_qsort():
    prog = load_program(QSORT_SRC, "qsort.rl")
    res = analyze_program(prog)
    gq = res.graphs["qsort/3"]
    gs = res.graphs["split/4"]
    alpha = res.alpha_at("qsort/3", 4)
    assert alpha[gs.node_of("HV_2")] == gq.node_of("Ls")
    assert alpha[gs.node_of("L1")] == gq.node_of("L1")
    assert alpha[gs.node_of("L2")] == gq.node_of("L2")
    assert alpha[gs.node_of("Le")] == gq.node_of("Le")


def test_identity_alpha_no_merges():
    src = LIST_DECL + """
:- pred q(list_int, list_int).
:- mode q(in, in) is det.
q(_, _) :- true.
:- pred p(list_int, list_int).
:- mode p(in, in) is det.
p(A, B) :- q(A, B).
"""
    prog = load_program(src, "t.rl")
    res = analyze_program(prog)
    g = res.graphs["p/2"]
    assert g.node_of("A") != g.node_of("B")


def test_aliased_formals_unify_actuals():
    # callee puts both formals in one node; caller actuals must merge
    src = LIST_DECL + """
:- pred q(list_int, list_int).
:- mode q(in, out) is det.
q(X, Y) :- Y := X.
:- pred p(list_int, list_int).
:- mode p(in, out) is det.
p(A, B) :- q(A, B).
"""
    prog = load_program(src, "t.rl")
    res = analyze_program(prog)
    g = res.graphs["p/2"]
    assert g.node_of("A") == g.node_of("B")


def test_self_recursive_fixpoint_idempotent():
    src = LIST_DECL + """
:- pred app(list_int, list_int, list_int).
:- mode app(in, in, out) is det.
app([], B, B).
app([X | Xs], B, [X | R]) :- app(Xs, B, R).
"""
    prog = load_program(src, "t.rl")
    res = analyze_program(prog)
    assert not refixpoint_changes(res)
    g = res.graphs["app/3"]
    # B and the output share a region; the first list is separate
    assert g.node_of("B") == g.node_of("HV_3")
    assert g.node_of("HV_1") != g.node_of("B")


def test_quicksort_idempotent():
    prog = load_program(QSORT_SRC, "qsort.rl")
    res = analyze_program(prog)
    assert not refixpoint_changes(res)


def test_allocation_sets():
    prog = load_program(QSORT_SRC, "qsort.rl")
    res = analyze_program(prog)
    gs = res.graphs["split/4"]
    assert res.allocation("split/4") == {gs.node_of("L1"), gs.node_of("L2")}
    gq = res.graphs["qsort/3"]
    assert res.allocation("qsort/3") == {gq.node_of("A"), gq.node_of("L1"),
                                         gq.node_of("L2")}


def test_tests_and_deconstructions_allocate_nothing():
    src = LIST_DECL + """
:- pred p(list_int, int).
:- mode p(in, out) is semidet.
p(L, X) :- L = [X | _], X == X.
"""
    prog = load_program(src, "t.rl")
    res = analyze_program(prog)
    assert res.allocation("p/2") == frozenset()


def test_vars_partition_invariant():
    prog = load_program(QSORT_SRC, "qsort.rl")
    res = analyze_program(prog)
    for key, proc in prog.procs.items():
        g = res.graphs[key]
        seen = {}
        for n in g.nodes():
            for v in g.vars[n]:
                assert v not in seen
                seen[v] = n
        for v, home in g.var_home.items():
            assert g.find(home) == seen[v]


def test_soundness_spot_check_on_quicksort():
    # X := Y implies shared node; X <= f(..Yi..) implies the (f,i) edge
    from rbmm.syntax import Unify, UnifyKind
    prog = load_program(QSORT_SRC, "qsort.rl")
    res = analyze_program(prog)
    for key, proc in prog.procs.items():
        g = res.graphs[key]
        for a in proc.atoms:
            if not isinstance(a, Unify):
                continue
            if a.kind is UnifyKind.ASSIGN:
                assert g.node_of(a.lhs) == g.node_of(a.rhs_var)
            elif a.kind is UnifyKind.CONSTRUCT and a.args:
                for i, arg in enumerate(a.args, start=1):
                    assert g.child(g.node_of(a.lhs), (a.functor, i)) == \
                        g.node_of(arg)
