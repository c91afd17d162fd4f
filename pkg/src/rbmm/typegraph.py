"""Type-based region graphs: one node per type reachable from a root type,
with an edge per constructor argument position.

Recursive and mutually recursive types reuse the single node of their type,
so every term is modelled by finitely many regions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .syntax import BUILTIN_TYPES, Program, TypeDef


@dataclass
class TypeRegionGraph:
    root: str
    nodes: dict[int, str]                              # node id -> housed type
    principal: dict[str, int]                          # type -> its node id
    edges: dict[tuple[int, str, int], int] = field(default_factory=dict)
    # (src, functor, arg index 1..n) -> dst

    def out_edges(self, n: int) -> list[tuple[str, int, int]]:
        return [(f, i, dst) for (src, f, i), dst in self.edges.items() if src == n]


class UnknownType(KeyError):
    pass


def zero_sized(type_name: str, types: dict[str, TypeDef]) -> bool:
    """Word-sized values need no heap cell: builtins and enumerations."""
    if type_name in BUILTIN_TYPES:
        return True
    tdef = types.get(type_name)
    if tdef is None:
        raise UnknownType(type_name)
    return all(not args for _, args in tdef.constructors)


def build_type_graph(types: dict[str, TypeDef], root: str) -> TypeRegionGraph:
    if root not in types and root not in BUILTIN_TYPES:
        raise UnknownType(root)
    nodes: dict[int, str] = {}
    principal: dict[str, int] = {}
    g = TypeRegionGraph(root, nodes, principal)

    def visit(tname: str) -> int:
        if tname in principal:
            return principal[tname]
        nid = len(nodes)
        nodes[nid] = tname
        principal[tname] = nid
        if tname in BUILTIN_TYPES:
            return nid
        tdef = types.get(tname)
        if tdef is None:
            raise UnknownType(tname)
        for f, args in tdef.constructors:
            for i, at in enumerate(args, start=1):
                g.edges[(nid, f, i)] = visit(at)
        return nid

    visit(root)
    return g


def format_type_graph(g: TypeRegionGraph) -> str:
    lines = [f"type graph of {g.root}:"]
    for nid in sorted(g.nodes):
        lines.append(f"  R^{g.nodes[nid]}")
    for (src, f, i), dst in sorted(g.edges.items()):
        lines.append(f"  R^{g.nodes[src]} -({f},{i})-> R^{g.nodes[dst]}")
    return "\n".join(lines)
