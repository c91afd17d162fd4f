"""Region points-to analysis.

Per procedure, a graph whose nodes partition the variables into regions and
whose labelled edges model references between regions. Unification-based and
flow-insensitive: an intraprocedural pass seeds each graph from the type
graphs of the variables, then call sites propagate callee sharing into
callers (rules P1/P2) bottom-up over the call-graph SCCs until fixpoint.
Construction sites mark their node as allocated; marks propagate through
unification and through call-site mappings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx

from .syntax import Call, Procedure, Program, Unify, UnifyKind
from .typegraph import TypeRegionGraph, build_type_graph, zero_sized


class RptGraph:
    """Union-find backed points-to graph; merged nodes resolve through find."""

    def __init__(self, proc_key: str = "?"):
        self.proc_key = proc_key
        self.parent: dict[int, int] = {}
        self.vars: dict[int, set[str]] = {}
        self.allocated: dict[int, bool] = {}
        self.ntype: dict[int, str] = {}
        self.edges: dict[int, dict[tuple[str, int], int]] = {}
        self.var_home: dict[str, int] = {}
        self.version = 0
        self._reach_cache: tuple[int, dict[int, frozenset[int]]] | None = None

    # -- structure ----------------------------------------------------------

    def fresh_node(self, tname: str) -> int:
        nid = len(self.parent)
        self.parent[nid] = nid
        self.vars[nid] = set()
        self.allocated[nid] = False
        self.ntype[nid] = tname
        self.edges[nid] = {}
        self.version += 1
        return nid

    def find(self, n: int) -> int:
        root = n
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[n] != root:
            self.parent[n], n = root, self.parent[n]
        return root

    def nodes(self) -> list[int]:
        return sorted(n for n in self.parent if self.parent[n] == n)

    def node_of(self, var: str) -> int:
        return self.find(self.var_home[var])

    def maybe_node_of(self, var: str) -> int | None:
        home = self.var_home.get(var)
        return None if home is None else self.find(home)

    def child(self, n: int, label: tuple[str, int]) -> int | None:
        dst = self.edges[self.find(n)].get(label)
        return None if dst is None else self.find(dst)

    def out_labels(self, n: int) -> list[tuple[str, int]]:
        return sorted(self.edges[self.find(n)])

    def edge_count(self) -> int:
        return sum(len(e) for n, e in self.edges.items()
                   if self.parent[n] == n)

    # -- Algorithm 1 ---------------------------------------------------------

    def unify(self, n: int, m: int):
        n, m = self.find(n), self.find(m)
        if n == m:
            return
        if self.ntype[n] != self.ntype[m]:
            raise AssertionError(
                f"unify of differently-typed nodes {self.ntype[n]} vs "
                f"{self.ntype[m]} in {self.proc_key}")
        self.vars[n] |= self.vars.pop(m)
        self.allocated[n] = self.allocated[n] or self.allocated.pop(m)
        medges = self.edges.pop(m)
        self.parent[m] = n
        self.version += 1
        pending: list[tuple[int, int]] = []
        nedges = self.edges[n]
        for label, k in medges.items():
            if label in nedges:
                if self.find(nedges[label]) != self.find(k):
                    pending.append((nedges[label], k))
            else:
                nedges[label] = k
        for a, b in pending:
            self.unify(a, b)

    # -- queries --------------------------------------------------------------

    def reach(self, n: int) -> frozenset[int]:
        if self._reach_cache is None or self._reach_cache[0] != self.version:
            self._reach_cache = (self.version, {})
        cache = self._reach_cache[1]
        n = self.find(n)
        if n in cache:
            return cache[n]
        seen: set[int] = set()
        stack = [n]
        while stack:
            cur = self.find(stack.pop())
            if cur in seen:
                continue
            seen.add(cur)
            for dst in self.edges[cur].values():
                stack.append(dst)
        result = frozenset(seen)
        cache[n] = result
        return result

    def reach_vars(self, names) -> frozenset[int]:
        out: set[int] = set()
        for v in names:
            home = self.var_home.get(v)
            if home is not None:        # io state tokens carry no region
                out |= self.reach(home)
        return frozenset(out)


def init_rptg(g: RptGraph, tg: TypeRegionGraph, var: str) -> int:
    """Instantiates the type graph of `var` with fresh nodes; `var` goes on
    the copy of the principal node."""
    mapping: dict[int, int] = {}
    for tnode in sorted(tg.nodes):
        mapping[tnode] = g.fresh_node(tg.nodes[tnode])
    for (src, f, i), dst in tg.edges.items():
        g.edges[mapping[src]][(f, i)] = mapping[dst]
    principal = mapping[tg.principal[tg.root]]
    g.vars[principal].add(var)
    g.var_home[var] = principal
    return principal


def proc_var_order(proc: Procedure) -> list[str]:
    """Head variables first, then first appearance over the atom sequence."""
    seen: list[str] = []
    have: set[str] = set()

    def add(v: str):
        if v not in have:
            have.add(v)
            seen.append(v)

    for v in proc.head_vars:
        add(v)
    for a in proc.atoms:
        if isinstance(a, Unify):
            add(a.lhs)
            if a.rhs_var:
                add(a.rhs_var)
            for v in a.args:
                add(v)
        elif isinstance(a, Call):
            for v in a.args:
                add(v)
        else:
            for v in a.args:
                if isinstance(v, str):
                    add(v)
    return seen


def intraproc(prog: Program, proc: Procedure,
              tg_cache: dict[str, TypeRegionGraph] | None = None) -> RptGraph:
    """Algorithm 2: seed from type graphs, then unify over the explicit
    unifications. Tests create no sharing and are ignored."""
    tg_cache = tg_cache if tg_cache is not None else {}
    g = RptGraph(proc.key)
    for v in proc_var_order(proc):
        t = proc.var_types[v]
        if t == "io":
            continue    # the io state is a token, never heap data
        tg = tg_cache.get(t)
        if tg is None:
            tg = tg_cache[t] = build_type_graph(prog.types, t)
        init_rptg(g, tg, v)
    for a in proc.atoms:
        if not isinstance(a, Unify):
            continue
        if a.kind is UnifyKind.ASSIGN:
            g.unify(g.node_of(a.lhs), g.node_of(a.rhs_var))
        elif a.kind in (UnifyKind.CONSTRUCT, UnifyKind.DECONSTRUCT):
            if a.kind is UnifyKind.CONSTRUCT:
                g.allocated[g.node_of(a.lhs)] = True
            base = g.node_of(a.lhs)
            for i, arg in enumerate(a.args, start=1):
                child = g.child(base, (a.functor, i))
                if child is None:
                    raise AssertionError(
                        f"missing type edge ({a.functor},{i}) in {proc.key}")
                g.unify(child, g.node_of(arg))
                base = g.node_of(a.lhs)
    return g


SiteKey = tuple[str, int]          # (caller proc key, call program point)


@dataclass
class PointsToResult:
    prog: Program
    graphs: dict[str, RptGraph]
    alphas: dict[SiteKey, dict[int, int]] = field(default_factory=dict)
    numbering: dict[str, dict[int, int]] = field(default_factory=dict)

    def alpha_at(self, caller: str, point: int) -> dict[int, int]:
        """Canonical callee-root -> caller-root mapping for a call site."""
        call = self.prog.procs[caller].atoms[point - 1]
        gq = self.graphs[call.key]
        gp = self.graphs[caller]
        out: dict[int, int] = {}
        for nq, np in self.alphas.get((caller, point), {}).items():
            out[gq.find(nq)] = gp.find(np)
        return out

    def allocation(self, proc_key: str) -> frozenset[int]:
        g = self.graphs[proc_key]
        return frozenset(n for n in g.nodes() if g.allocated[n])

    def region_name(self, proc_key: str, node: int) -> str:
        return f"R{self.numbering[proc_key][self.graphs[proc_key].find(node)]}"

    def node_by_name(self, proc_key: str, name: str) -> int:
        num = int(name.lstrip("R"))
        for n, k in self.numbering[proc_key].items():
            if k == num:
                return n
        raise KeyError(name)


def _bind_formals(res: PointsToResult, caller: Procedure, call: Call) -> bool:
    """Builds/refreshes the alpha relation for the formal arguments and
    unifies caller nodes when alpha would not be a function."""
    gq = res.graphs[call.key]
    gp = res.graphs[caller.key]
    callee = res.prog.procs[call.key]
    site = (caller.key, call.point)
    alpha = res.alphas.setdefault(site, {})
    changed = False
    for formal, actual in zip(callee.head_vars, call.args):
        if formal not in gq.var_home:
            continue                     # io arguments carry no region
        nq = gq.node_of(formal)
        np = gp.node_of(actual)
        existing = None
        for k, v in alpha.items():
            if gq.find(k) == nq:
                existing = v
                break
        if existing is None:
            alpha[nq] = np
            changed = True
        elif gp.find(existing) != np:
            gp.unify(gp.find(existing), np)
            changed = True
    return changed


def _canonicalize_alpha(res: PointsToResult, site: SiteKey, callee_g: RptGraph,
                        caller_g: RptGraph) -> bool:
    """Ensures alpha is a function on current roots; unifies duplicate
    caller images."""
    alpha = res.alphas[site]
    changed = False
    buckets: dict[int, int] = {}
    for nq, np in alpha.items():
        rq, rp = callee_g.find(nq), caller_g.find(np)
        if rq in buckets:
            if caller_g.find(buckets[rq]) != rp:
                caller_g.unify(caller_g.find(buckets[rq]), rp)
                changed = True
            buckets[rq] = caller_g.find(buckets[rq])
        else:
            buckets[rq] = rp
    alpha.clear()
    alpha.update(buckets)
    return changed


def _site_dfs(res: PointsToResult, caller: Procedure, call: Call) -> bool:
    """Rules P1/P2 along a depth-first traversal from each formal-argument
    node; the traversal restarts after any unification in the caller."""
    gq = res.graphs[call.key]
    gp = res.graphs[caller.key]
    callee = res.prog.procs[call.key]
    site = (caller.key, call.point)
    alpha = res.alphas[site]
    changed = False
    while True:
        changed |= _canonicalize_alpha(res, site, gq, gp)
        restart = False
        visited: set[int] = set()
        stack = [gq.node_of(f) for f in reversed(callee.head_vars)
                 if f in gq.var_home]
        while stack and not restart:
            nq = gq.find(stack.pop())
            if nq in visited:
                continue
            visited.add(nq)
            np_raw = alpha.get(nq)
            if np_raw is None:
                continue
            np = gp.find(np_raw)
            for label in sorted(gq.edges[nq]):
                mq = gq.find(gq.edges[nq][label])
                mp_raw = gp.edges[np].get(label)
                if mp_raw is None:
                    raise AssertionError(
                        f"caller {caller.key} lacks edge {label} mirrored "
                        f"from {call.key}")
                mp = gp.find(mp_raw)
                img = alpha.get(mq)
                if img is None:                       # P2
                    alpha[mq] = mp
                    changed = True
                    stack.append(mq)
                elif gp.find(img) != mp:              # P1
                    gp.unify(gp.find(img), mp)
                    changed = True
                    restart = True
                    break
                else:
                    stack.append(mq)
        if not restart:
            break
    # propagate allocation marks through alpha
    for nq, np in list(alpha.items()):
        rq, rp = gq.find(nq), gp.find(np)
        if gq.allocated[rq] and not gp.allocated[rp]:
            gp.allocated[rp] = True
            gp.version += 1
            changed = True
    return changed


def interproc(res: PointsToResult, proc: Procedure) -> bool:
    """Algorithm 3 over all call sites of one procedure; True if anything
    changed."""
    changed = False
    before = res.graphs[proc.key].version
    for a in proc.atoms:
        if not isinstance(a, Call):
            continue
        changed |= _bind_formals(res, proc, a)
        changed |= _site_dfs(res, proc, a)
    return changed or res.graphs[proc.key].version != before


def call_graph(prog: Program) -> nx.DiGraph:
    g = nx.DiGraph()
    for key, proc in prog.procs.items():
        g.add_node(key)
        for a in proc.atoms:
            if isinstance(a, Call):
                g.add_edge(key, a.key)
    return g


def scc_bottom_up(prog: Program) -> list[list[str]]:
    g = call_graph(prog)
    cond = nx.condensation(g)
    order = list(nx.topological_sort(cond))
    sccs = []
    for comp in reversed(order):
        sccs.append(sorted(cond.nodes[comp]["members"]))
    return sccs


def analyze_program(prog: Program) -> PointsToResult:
    """Algorithm 4: intraprocedural pass for every procedure, then the SCCs
    of the call graph bottom-up, iterating each SCC to fixpoint."""
    tg_cache: dict[str, TypeRegionGraph] = {}
    graphs = {key: intraproc(prog, proc, tg_cache)
              for key, proc in sorted(prog.procs.items())}
    res = PointsToResult(prog, graphs)
    for scc in scc_bottom_up(prog):
        while True:
            changed = False
            for key in scc:
                changed |= interproc(res, prog.procs[key])
            if not changed:
                break
    _number_regions(res)
    return res


def refixpoint_changes(res: PointsToResult) -> bool:
    """Re-runs the interprocedural fixpoint; True if anything changed
    (used to check idempotence)."""
    changed = False
    for scc in scc_bottom_up(res.prog):
        for key in scc:
            changed |= interproc(res, res.prog.procs[key])
    return changed


def _number_regions(res: PointsToResult):
    for key, proc in res.prog.procs.items():
        g = res.graphs[key]
        num: dict[int, int] = {}
        counter = 1

        def assign(n: int):
            nonlocal counter
            n = g.find(n)
            if n not in num:
                num[n] = counter
                counter += 1

        for v in proc_var_order(proc):
            n = g.maybe_node_of(v)
            if n is not None:
                assign(n)
        # remaining nodes reachable from numbered ones, breadth-first
        frontier = sorted(num, key=num.get)
        seen = set(frontier)
        while frontier:
            nxt: list[int] = []
            for n in frontier:
                for label in g.out_labels(n):
                    c = g.child(n, label)
                    if c not in seen:
                        seen.add(c)
                        assign(c)
                        nxt.append(c)
            frontier = nxt
        for n in g.nodes():
            assign(n)
        res.numbering[key] = num


def is_virtual_node(res: PointsToResult, proc_key: str, node: int) -> bool:
    """A region that can only ever hold word-sized values has no runtime
    storage behind it."""
    g = res.graphs[proc_key]
    return zero_sized(g.ntype[g.find(node)], res.prog.types)


def format_rptg(res: PointsToResult, proc_key: str) -> str:
    g = res.graphs[proc_key]
    num = res.numbering[proc_key]
    lines = [f"region points-to graph of {proc_key}:"]
    for n in sorted(g.nodes(), key=lambda n: num[n]):
        vs = ",".join(sorted(g.vars[n]))
        mark = "[A]" if g.allocated[n] else ""
        lines.append(f"  R{num[n]}{{{vs}}}{mark} : {g.ntype[n]}")
    edge_lines = []
    for n in g.nodes():
        for label in g.out_labels(n):
            c = g.child(n, label)
            edge_lines.append(
                f"  R{num[n]} -({label[0]},{label[1]})-> R{num[c]}")
    lines.extend(sorted(edge_lines))
    return "\n".join(lines)
