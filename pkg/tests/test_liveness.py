"""Execution paths, LV/LR tables, and the global region classification,
checked against the quicksort results reported for the analyses."""

import pytest

from conftest import QSORT_SRC, node_of, region_names

from rbmm.frontend import load_program
from rbmm.liveness import (AnalysisError, analyze_liveness, classify_regions,
                           execution_paths)
from rbmm.pointsto import analyze_program

LIST_DECL = ":- type list_int ---> [] ; [int | list_int].\n"


@pytest.fixture(scope="module")
def qsort():
    prog = load_program(QSORT_SRC, "qsort.rl")
    res = analyze_program(prog)
    live = analyze_liveness(prog, res)
    cls = classify_regions(prog, res, live)
    return prog, res, live, cls


def test_split_paths(qsort):
    prog, *_ = qsort
    assert execution_paths(prog.procs["split/4"]) == [
        (1, 2, 3), (4, 5, 6, 7), (4, 8, 9)]


def test_qsort_paths(qsort):
    prog, *_ = qsort
    assert execution_paths(prog.procs["qsort/3"]) == [(1, 2), (3, 4, 5, 6, 7)]


def test_single_atom_path():
    src = """
:- pred p(int).
:- mode p(in) is det.
p(_) :- true.
"""
    prog = load_program(src, "t.rl")
    assert execution_paths(prog.procs["p/1"]) == [(1,)]


def test_path_cap():
    branches = "\n".join("    ( X = 1 ; X = 2 ),"
                         for _ in range(14)).rstrip(",")
    src = f"""
:- pred p(int).
:- mode p(in) is semidet.
p(X) :-
{branches}.
"""
    prog = load_program(src, "t.rl")
    with pytest.raises(AnalysisError, match="p/1"):
        execution_paths(prog.procs["p/1"], cap=4096)


# Table rows for split: (point, LV_before, LV_after), names per Figure-2
# variable naming with HV_2 for the unnamed second argument.
SPLIT_LV = {
    1: ({"X", "HV_2"}, set()),
    2: (set(), {"L1"}),
    3: ({"L1"}, {"L1", "L2"}),
    4: ({"X", "HV_2"}, {"X", "Le", "Ls"}),
    5: ({"X", "Le", "Ls"}, {"X", "Le", "Ls"}),
    6: ({"X", "Le", "Ls"}, {"L2", "Le", "L11"}),
    7: ({"L2", "Le", "L11"}, {"L1", "L2"}),
    8: ({"X", "Le", "Ls"}, {"L1", "Le", "L21"}),
    9: ({"L1", "Le", "L21"}, {"L1", "L2"}),
}

QSORT_LV = {
    1: ({"HV_1", "A"}, {"A"}),
    2: ({"A"}, {"S"}),
    3: ({"HV_1", "A"}, {"A", "Le", "Ls"}),
    4: ({"A", "Le", "Ls"}, {"A", "Le", "L1", "L2"}),
    5: ({"A", "Le", "L1", "L2"}, {"Le", "L1", "S2"}),
    6: ({"Le", "L1", "S2"}, {"L1", "V_0"}),
    7: ({"L1", "V_0"}, {"S"}),
}


def test_split_lv_table(qsort):
    _, _, live, _ = qsort
    t = live["split/4"]
    for i, (b, a) in SPLIT_LV.items():
        assert t.lvb[i] == frozenset(b), f"LV before ({i})"
        assert t.lva[i] == frozenset(a), f"LV after ({i})"


def test_qsort_lv_table(qsort):
    _, _, live, _ = qsort
    t = live["qsort/3"]
    for i, (b, a) in QSORT_LV.items():
        assert t.lvb[i] == frozenset(b), f"LV before ({i})"
        assert t.lva[i] == frozenset(a), f"LV after ({i})"


def test_split_lr_table(qsort):
    prog, res, live, _ = qsort
    t = live["split/4"]
    key = "split/4"
    g = res.graphs[key]
    rx = g.node_of("X")
    rl = g.node_of("HV_2")
    rel = g.node_of("Le")
    r1 = g.node_of("L1")
    r2 = g.node_of("L2")
    assert t.lrb[1] == frozenset({rx, rl, rel})
    assert t.lra[1] == frozenset()
    assert t.lrb[3] == frozenset({r1, rel})
    assert t.lra[3] == frozenset({r1, r2, rel})
    assert t.lra[6] == frozenset({r2, rel, r1})
    assert t.lrb[8] == frozenset({rx, rel, rl})


def test_qsort_lr_table(qsort):
    prog, res, live, _ = qsort
    t = live["qsort/3"]
    g = res.graphs["qsort/3"]
    rl = g.node_of("HV_1")
    racc = g.node_of("A")
    rel = g.node_of("Le")
    r1 = g.node_of("L1")
    r2 = g.node_of("L2")
    assert t.lrb[1] == frozenset({rl, racc, rel})
    assert t.lra[1] == frozenset({racc, rel})
    assert t.lra[4] == frozenset({racc, rel, r1, r2})
    assert t.lrb[5] == frozenset({racc, rel, r1, r2})
    assert t.lra[5] == frozenset({r1, rel, racc})
    assert t.lra[7] == frozenset({racc, rel})


def test_empty_lv_gives_empty_lr(qsort):
    _, _, live, _ = qsort
    t = live["split/4"]
    assert t.lvb[2] == frozenset()
    assert t.lrb[2] == frozenset()


def test_split_classification(qsort):
    prog, res, _, cls = qsort
    g = res.graphs["split/4"]
    c = cls["split/4"]
    assert c.born == {g.node_of("L1"), g.node_of("L2")}
    assert c.dead == {g.node_of("HV_2")}
    assert c.outlived == {g.node_of("X"), g.node_of("Le")}
    assert c.local == set()


def test_qsort_classification(qsort):
    prog, res, _, cls = qsort
    g = res.graphs["qsort/3"]
    c = cls["qsort/3"]
    assert c.local == {g.node_of("L1"), g.node_of("L2")}
    assert c.born == set()
    assert c.dead == {g.node_of("HV_1")}
    assert c.outlived == {g.node_of("A"), g.node_of("Le")}


def test_partition_invariant(qsort):
    prog, res, _, cls = qsort
    for key in prog.procs:
        c = cls[key]
        assert c.partition_ok(res.graphs[key].nodes())


def test_formals_everywhere_reachable_stay_outlived():
    src = LIST_DECL + """
:- pred p(list_int, list_int).
:- mode p(in, out) is det.
p(X, Y) :- Y := X.
"""
    prog = load_program(src, "t.rl")
    res = analyze_program(prog)
    live = analyze_liveness(prog, res)
    cls = classify_regions(prog, res, live)
    c = cls["p/2"]
    assert c.born == set() and c.dead == set()


def test_alias_rule_l2_l4():
    # two callee formal regions map to one caller region: neither may stay
    # born or dead
    src = LIST_DECL + """
:- pred q(list_int, list_int).
:- mode q(in, in) is det.
q(A, _) :- mylen(A, _).
:- pred mylen(list_int, int).
:- mode mylen(in, out) is det.
mylen(L, N) :-
    ( L = [], N = 0
    ; L = [_ | T], mylen(T, N0), N = N0 + 1
    ).
:- pred p(list_int).
:- mode p(in) is det.
p(A) :- q(A, A).
"""
    prog = load_program(src, "t.rl")
    res = analyze_program(prog)
    live = analyze_liveness(prog, res)
    cls = classify_regions(prog, res, live)
    gq = res.graphs["q/2"]
    cq = cls["q/2"]
    n1 = gq.node_of("A")
    n2 = gq.node_of("HV_2")
    assert n1 != n2
    assert n1 not in cq.dead and n1 not in cq.born
    assert n2 not in cq.dead and n2 not in cq.born


def test_proposition_1_on_quicksort(qsort):
    _, _, live, _ = qsort
    for key, t in live.items():
        for ep in t.paths:
            for i, j in zip(ep, ep[1:]):
                assert t.lvb[j] <= t.lva[i]
                assert t.lrb[j] <= t.lra[i]


def test_proposition_2_on_quicksort(qsort):
    prog, _, live, _ = qsort
    from rbmm.syntax import Unify, UnifyKind
    for key, proc in prog.procs.items():
        t = live[key]
        for a in proc.atoms:
            if not isinstance(a, Unify):
                continue
            i = a.point
            if a.kind is UnifyKind.CONSTRUCT:
                assert t.lrb[i] <= t.lra[i]
            if t.lrb[i] < t.lra[i]:
                assert a.kind is UnifyKind.CONSTRUCT
