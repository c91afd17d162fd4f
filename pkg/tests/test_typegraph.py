"""Type-based region graphs."""

import pytest

from rbmm.frontend import parse_program
from rbmm.typegraph import UnknownType, build_type_graph, zero_sized

DECLS = """
:- type list_int ---> [] ; [int | list_int].
:- type elem ---> f ; g(int) ; h(list_int, int).
:- type list_elem ---> [] ; [elem | list_elem].
:- type t1 ---> f(int, t2).
:- type t2 ---> g(t1, int) ; h.
:- type color ---> red ; green.
"""


@pytest.fixture(scope="module")
def types():
    return parse_program(DECLS, "tg.rl").types


def edges_by_name(g):
    return {(g.nodes[s], f, i, g.nodes[d]) for (s, f, i), d in g.edges.items()}


def test_list_elem_graph(types):
    g = build_type_graph(types, "list_elem")
    assert set(g.nodes.values()) == {"list_elem", "elem", "list_int", "int"}
    assert edges_by_name(g) == {
        ("list_elem", "[|]", 1, "elem"),
        ("list_elem", "[|]", 2, "list_elem"),
        ("elem", "g", 1, "int"),
        ("elem", "h", 1, "list_int"),
        ("elem", "h", 2, "int"),
        ("list_int", "[|]", 1, "int"),
        ("list_int", "[|]", 2, "list_int"),
    }


def test_mutually_recursive_types(types):
    g = build_type_graph(types, "t1")
    assert set(g.nodes.values()) == {"t1", "t2", "int"}
    assert edges_by_name(g) == {
        ("t1", "f", 1, "int"),
        ("t1", "f", 2, "t2"),
        ("t2", "g", 1, "t1"),
        ("t2", "g", 2, "int"),
    }


def test_enumeration_single_node(types):
    g = build_type_graph(types, "color")
    assert len(g.nodes) == 1
    assert not g.edges


def test_builtin_int_graph(types):
    g = build_type_graph(types, "int")
    assert len(g.nodes) == 1
    assert not g.edges


def test_out_degree_at_most_one(types):
    for root in types:
        g = build_type_graph(types, root)
        assert len({(s, f, i) for (s, f, i) in g.edges}) == len(g.edges)


def test_node_count_is_reachable_types(types):
    g = build_type_graph(types, "list_int")
    assert len(g.nodes) == 2  # list_int and int, cycles collapsed


def test_unknown_type(types):
    with pytest.raises(UnknownType):
        build_type_graph(types, "missing")


def test_zero_sized(types):
    assert zero_sized("int", types)
    assert zero_sized("io", types)
    assert zero_sized("color", types)
    assert not zero_sized("list_int", types)
    assert not zero_sized("elem", types)
