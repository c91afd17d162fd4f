"""Interpreter tests: corpus behavior, backtracking support points, safety
mutations, and the region/plain behavioral equivalence."""

import pytest

from conftest import run_deep

from rbmm.frontend import load_program
from rbmm.runtime import SafetyViolation
from rbmm.transform import annotate_program
from rbmm.vm import run_program

LIST_DECL = ":- type list_int ---> [] ; [int | list_int].\n"

QSORT16 = LIST_DECL + """
:- pred main(io, io).
:- mode main(in, out) is det.
main(IO0, IO) :-
    qsort([5, 1, 9, 2, 8, 3, 7, 4, 6, 0], [], S),
    print(S, IO0, IO).
:- pred qsort(list_int, list_int, list_int).
:- mode qsort(in, in, out) is det.
qsort([], A, A).
qsort([Le | Ls], A, S) :-
    split(Le, Ls, L1, L2), qsort(L2, A, S2), qsort(L1, [Le | S2], S).
:- pred split(int, list_int, list_int, list_int).
:- mode split(in, in, out, out) is det.
split(_, [], [], []).
split(X, [Le | Ls], L1, L2) :-
    ( if X >= Le then split(X, Ls, L11, L2), L1 = [Le | L11]
      else split(X, Ls, L1, L21), L2 = [Le | L21] ).
"""


def ann_of(src):
    return annotate_program(load_program(src, "t.rl"))


def test_quicksort_output_and_leak_freedom():
    r = run_program(ann_of(QSORT16), "main", check=True)
    assert r.output == "[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]\n"
    assert r.stats.words_live == 0
    assert r.stats.regions_live == 0


def test_fail_entry_all_solutions():
    src = """
:- pred boom.
:- mode boom is semidet.
boom :- fail.
"""
    r = run_program(ann_of(src), "boom", all_solutions=True)
    assert r.solutions == 0
    assert r.stats.regions_total == 0


def test_all_solutions_counts():
    src = LIST_DECL + """
:- pred pick(list_int, int, list_int).
:- mode pick(in, out, out) is nondet.
pick([H | T], X, R) :-
    ( X := H, R := T
    ; pick(T, X, R1), R = [H | R1]
    ).
:- pred three(int).
:- mode three(out) is nondet.
three(X) :- pick([1, 2, 3], X, _).
"""
    r = run_program(ann_of(src), "three", all_solutions=True, check=True)
    assert r.solutions == 3
    assert r.stats.words_live == 0


def test_first_solution_outputs():
    src = """
:- pred gen(int).
:- mode gen(out) is nondet.
gen(X) :- ( X := 7 ; X := 8 ).
"""
    r = run_program(ann_of(src), "gen")
    assert r.solutions == 1
    assert r.outputs == ["X = 7"]


def test_entry_with_list_argument():
    src = LIST_DECL + """
:- pred total(list_int, int).
:- mode total(in, out) is det.
total([], 0).
total([H | T], S) :- total(T, S0), S = S0 + H.
"""
    r = run_program(ann_of(src), "total", ["[1, 2, 3, 4]"])
    assert r.outputs == ["S = 10"]


def test_nondet_condition_retry():
    # the condition resucceeds until the then-part is satisfied
    src = LIST_DECL + """
:- pred pick(list_int, int, list_int).
:- mode pick(in, out, out) is nondet.
pick([H | T], X, R) :-
    ( X := H, R := T
    ; pick(T, X, R1), R = [H | R1]
    ).
:- pred find_big(list_int, int).
:- mode find_big(in, out) is nondet.
find_big(L, X) :-
    ( if pick(L, X0, _), X0 >= 3 then X := X0 else X := 0 ).
"""
    r = run_program(ann_of(src), "find_big", ["[1, 2, 5, 4]"], check=True)
    assert r.outputs == ["X = 5"]
    # the else path when nothing matches
    r2 = run_program(ann_of(src), "find_big", ["[1, 2]"], check=True)
    assert r2.outputs == ["X = 0"]
    # every condition solution feeds the then-part in all-solutions mode
    r3 = run_program(ann_of(src), "find_big", ["[1, 5, 4]"],
                     all_solutions=True, check=True)
    assert r3.solutions == 2


def test_negation_over_nondet_goal():
    src = LIST_DECL + """
:- pred pick(list_int, int, list_int).
:- mode pick(in, out, out) is nondet.
pick([H | T], X, R) :-
    ( X := H, R := T
    ; pick(T, X, R1), R = [H | R1]
    ).
:- pred nobig(list_int).
:- mode nobig(in) is semidet.
nobig(L) :- not (pick(L, X, _), X > 5).
:- pred check(list_int, int).
:- mode check(in, out) is det.
check(L, R) :- ( if nobig(L) then R := 1 else R := 0 ).
"""
    ann = ann_of(src)
    assert run_program(ann, "check", ["[1, 2, 3]"]).outputs == ["R = 1"]
    ann2 = ann_of(src)
    assert run_program(ann2, "check", ["[1, 9, 3]"]).outputs == ["R = 0"]


def test_backward_live_region_protected_across_disjunction():
    # the first alternative consumes the list region; the second must still
    # be able to read it, so the frame protects it
    src = LIST_DECL + """
:- pred total(list_int, int).
:- mode total(in, out) is det.
total([], 0).
total([H | T], S) :- total(T, S0), S = S0 + H.
:- pred len(list_int, int).
:- mode len(in, out) is det.
len(L, N) :-
    ( L = [], N = 0
    ; L = [_ | T], len(T, N0), N = N0 + 1
    ).
:- pred classify(list_int, int).
:- mode classify(in, out) is det.
classify(L, R) :-
    ( if big_sum(L) then R := 1 else R := 2 ).
:- pred big_sum(list_int).
:- mode big_sum(in) is semidet.
big_sum(L) :-
    ( total(L, S), S >= 100
    ; len(L, N), N >= 4
    ).
"""
    ann = ann_of(src)
    r = run_program(ann, "classify", ["[1, 2, 3, 4, 5]"], check=True)
    assert r.outputs == ["R = 1"]       # first alternative: sum is 15 < 100?
    # sum 15 < 100 fails; second alternative len 5 >= 4 succeeds
    assert r.outputs == ["R = 1"]
    r2 = run_program(ann_of(src), "classify", ["[1, 2]"], check=True)
    assert r2.outputs == ["R = 2"]
    r3 = run_program(ann_of(src), "classify", ["[60, 70]"], check=True)
    assert r3.outputs == ["R = 1"]


def test_semidet_disj_e_point_reclaims():
    # success at a non-last alternative reclaims the deferred region there
    src = LIST_DECL + """
:- pred total(list_int, int).
:- mode total(in, out) is det.
total([], 0).
total([H | T], S) :- total(T, S0), S = S0 + H.
:- pred pos(list_int).
:- mode pos(in) is semidet.
pos(L) :-
    ( total(L, S), S > 0
    ; L = [_ | _]
    ).
:- pred go(list_int, int).
:- mode go(in, out) is det.
go(L, R) :- ( if pos(L) then R := 1 else R := 0 ).
"""
    ann = ann_of(src)
    r = run_program(ann, "go", ["[3, 4]"], check=True)
    assert r.outputs == ["R = 1"]
    assert r.stats.words_live == 0
    # called directly (no enclosing if-then-else), the disjunction frame
    # itself records the protected region and reclaims it at the e-point
    r2 = run_program(ann_of(src), "pos", ["[3, 4]"], check=True)
    assert r2.solutions == 1
    assert r2.stats.frames["disj"].protected >= 1


def test_crafted_frame_words():
    # a nondet disjunction over three locally-live list regions:
    # its frame takes 4 + 3*3 words
    src = LIST_DECL + """
:- pred len(list_int, int).
:- mode len(in, out) is det.
len(L, N) :-
    ( L = [], N = 0
    ; L = [_ | T], len(T, N0), N = N0 + 1
    ).
:- pred three(list_int, list_int, list_int, int).
:- mode three(in, in, in, out) is nondet.
three(A, B, C, X) :-
    ( X := 1 ; X := 2 ),
    len(A, K1),
    len(B, K2),
    len(C, K3),
    V0 = K1 + K2,
    V1 = V0 + K3,
    X =< V1.
"""
    ann = ann_of(src)
    r = run_program(ann, "three", ["[1]", "[2]", "[3]"], all_solutions=True,
                    check=True)
    assert r.solutions == 2
    fs = r.stats.frames["disj"]
    # the harness pushes one empty frame (4 words); the disjunction's frame
    # carries three size records (4 + 9 words)
    assert fs.total == 2
    assert fs.size_records == 3
    assert fs.words == 4 + (4 + 3 * 3)
    assert fs.max_words == 4 + (4 + 3 * 3)


def test_commit_frame_in_run():
    src = LIST_DECL + """
:- pred pick(list_int, int, list_int).
:- mode pick(in, out, out) is nondet.
pick([H | T], X, R) :-
    ( X := H, R := T
    ; pick(T, X, R1), R = [H | R1]
    ).
:- pred any3(list_int).
:- mode any3(in) is semidet.
any3(L) :- some [X] ( pick(L, X, _), X = 3 ).
:- pred go(list_int, int).
:- mode go(in, out) is det.
go(L, R) :- ( if any3(L) then R := 1 else R := 0 ).
"""
    ann = ann_of(src)
    r = run_program(ann, "go", ["[1, 3, 5]"], check=True)
    assert r.outputs == ["R = 1"]
    assert r.stats.frames["commit"].total >= 1
    r2 = run_program(ann_of(src), "go", ["[1, 5]"], check=True)
    assert r2.outputs == ["R = 0"]


def test_step_limit():
    src = """
:- pred spin(int).
:- mode spin(in) is det.
spin(N) :- N1 = N + 1, spin(N1).
"""
    from rbmm.vm import VMError
    with pytest.raises(VMError, match="step limit"):
        run_deep(run_program, ann_of(src), "spin", ["0"], step_limit=10_000)


# -- behavioral equivalence over the corpus ---------------------------------

CORPUS_RUNS = [
    ("qsort.rl", "main", [], False),
    ("nrev.rl", "main", [], False),
    ("primes.rl", "main", [], False),
    ("isort.rl", "main", [], False),
    ("queens.rl", "main", [], False),
    ("queens.rl", "queens", ["6"], True),
    ("crypt.rl", "main", [], False),
    ("crypt.rl", "puzzle", [], True),
    ("recreate.rl", "main", [], False),
]


@pytest.mark.parametrize("fname,entry,args,all_sol", CORPUS_RUNS)
def test_behavioral_equivalence(corpus_anns, corpus_dir, fname, entry, args,
                                all_sol):
    from rbmm.frontend import load_file
    ann = annotate_program(load_file(corpus_dir / fname))
    region = run_deep(run_program, ann, entry, args, all_solutions=all_sol,
                      check=True)
    ann2 = annotate_program(load_file(corpus_dir / fname))
    plain = run_deep(run_program, ann2, entry, args, all_solutions=all_sol,
                     plain=True)
    assert region.output == plain.output
    assert region.solutions == plain.solutions
    assert region.outputs == plain.outputs


@pytest.mark.parametrize("fname,entry,args,all_sol", CORPUS_RUNS)
def test_corpus_leak_freedom(corpus_dir, fname, entry, args, all_sol):
    from rbmm.frontend import load_file
    ann = annotate_program(load_file(corpus_dir / fname))
    r = run_deep(run_program, ann, entry, args, all_solutions=all_sol,
                 check=True)
    if all_sol:
        assert r.stats.words_live == 0
        assert r.stats.regions_live == 0


# -- hand-mutated annotations are caught --------------------------------------

def test_mutation_early_remove_caught_at_read():
    ann = ann_of(QSORT16)
    ap = ann.procs["qsort/3"]
    # move qsort's remove of the input skeleton from after (1) to before it
    dead = next(iter(ap.removes_after[1]))
    ap.removes_after[1] = frozenset()
    ap.removes_before[1] = frozenset({dead})
    with pytest.raises(SafetyViolation, match="reclaimed"):
        run_program(ann, "main", check=True)


def test_mutation_missing_create_caught():
    ann = ann_of(QSORT16)
    ap = ann.procs["split/4"]
    assert ap.creates_before[2]
    ap.creates_before[2] = frozenset()
    with pytest.raises(SafetyViolation, match="unbound region"):
        run_program(ann, "main", check=True)


def test_mutation_duplicate_remove_caught():
    ann = ann_of(QSORT16)
    ap = ann.procs["qsort/3"]
    dead = next(iter(ap.removes_after[1]))
    ap.removes_after[2] = ap.removes_after[2] | {dead}
    with pytest.raises(SafetyViolation):
        run_program(ann, "main", check=True)


def test_mutation_exit_code_3(monkeypatch, corpus_dir):
    import rbmm.cli as cli

    real = cli.annotate_program

    def mutated(prog, **kw):
        ann = real(prog, **kw)
        ap = ann.procs["qsort/3"]
        dead = next(iter(ap.removes_after[1]))
        ap.removes_before[1] = frozenset({dead})
        ap.removes_after[1] = frozenset()
        return ann

    monkeypatch.setattr(cli, "annotate_program", mutated)
    code = cli.main(["run", str(corpus_dir / "qsort.rl"), "--entry", "main",
                     "--check-safety"])
    assert code == 3


def test_trail_and_frame_discipline():
    # after an all-solutions run, every stack is back to its initial state
    src = LIST_DECL + """
:- pred pick(list_int, int, list_int).
:- mode pick(in, out, out) is nondet.
pick([H | T], X, R) :-
    ( X := H, R := T
    ; pick(T, X, R1), R = [H | R1]
    ).
:- pred pairs(int, int).
:- mode pairs(out, out) is nondet.
pairs(X, Y) :-
    pick([1, 2, 3], X, _),
    pick([4, 5], Y, _).
"""
    from rbmm.runtime import RegionManager
    from rbmm.vm import Machine
    ann = ann_of(src)
    mgr = RegionManager(check=True)
    machine = Machine(ann, backend=mgr, check=True)
    r = machine.run("pairs", [], all_solutions=True)
    assert r.solutions == 6
    assert not mgr.disj_stack and not mgr.ite_stack and not mgr.commit_stack
    assert machine.depth == 0
    assert not machine.trail
    mgr.verify_invariants()
