"""Region liveness: execution paths, live variables, live region variables,
and the global region classification (bornR/deadR/outlivedR/localR).

Paths are enumerated explicitly; the liveness algorithms traverse each path
backward, accumulating into per-point sets shared across paths. The global
classification starts from the input/output-reachability partition and then
shrinks bornR/deadR by the call-site rules until fixpoint.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .pointsto import PointsToResult, is_virtual_node
from .syntax import Builtin, Call, Conj, Disj, IfThenElse, Procedure, Program, Some, Unify
from .frontend import atom_ins_outs


class AnalysisError(Exception):
    pass


DEFAULT_PATH_CAP = 4096


def execution_paths(proc: Procedure, cap: int = DEFAULT_PATH_CAP) -> list[tuple[int, ...]]:
    """One path per branch combination; then-paths include the condition's
    points, else-paths omit them."""

    def combine(prefixes: list[tuple[int, ...]], suffixes: list[tuple[int, ...]]):
        out = [p + s for p in prefixes for s in suffixes]
        if len(out) > cap:
            raise AnalysisError(
                f"{proc.key}: execution paths exceed cap ({cap})")
        return out

    def walk(g) -> list[tuple[int, ...]]:
        if isinstance(g, (Unify, Call, Builtin)):
            return [(g.point,)]
        if isinstance(g, Conj):
            paths: list[tuple[int, ...]] = [()]
            for sub in g.goals:
                paths = combine(paths, walk(sub))
            return paths
        if isinstance(g, Disj):
            out: list[tuple[int, ...]] = []
            for b in g.goals:
                out.extend(walk(b))
                if len(out) > cap:
                    raise AnalysisError(
                        f"{proc.key}: execution paths exceed cap ({cap})")
            return out
        if isinstance(g, IfThenElse):
            return combine(walk(g.cond), walk(g.then)) + walk(g.els)
        if isinstance(g, Some):
            return walk(g.goal)
        raise TypeError(g)

    return walk(proc.body)


@dataclass
class LivenessTables:
    lvb: dict[int, frozenset[str]]
    lva: dict[int, frozenset[str]]
    lrb: dict[int, frozenset[int]] = field(default_factory=dict)
    lra: dict[int, frozenset[int]] = field(default_factory=dict)
    vv: dict[int, frozenset[str]] = field(default_factory=dict)
    vr: dict[int, frozenset[int]] = field(default_factory=dict)
    paths: list[tuple[int, ...]] = field(default_factory=list)


def live_variables(prog: Program, proc: Procedure,
                   paths: list[tuple[int, ...]]) -> LivenessTables:
    """Algorithm 5, with union accumulation across paths iterated to a
    fixpoint."""
    lvb: dict[int, set[str]] = {a.point: set() for a in proc.atoms}
    lva: dict[int, set[str]] = {a.point: set() for a in proc.atoms}
    head_in = proc.head_in_vars()
    head_out = proc.head_out_vars()
    io = {a.point: atom_ins_outs(a, prog) for a in proc.atoms}

    changed = True
    while changed:
        changed = False
        for ep in paths:
            n = len(ep)
            for j in range(n - 1, -1, -1):
                i = ep[j]
                if j == n - 1:
                    new_a = lva[i] | head_out
                else:
                    new_a = lva[i] | lvb[ep[j + 1]]
                if new_a != lva[i]:
                    lva[i] = new_a
                    changed = True
                ins, outs = io[i]
                if j == 0:
                    new_b = lvb[i] | head_in
                else:
                    new_b = lvb[i] | ((lva[i] - outs) | ins)
                if new_b != lvb[i]:
                    lvb[i] = new_b
                    changed = True

    t = LivenessTables({k: frozenset(v) for k, v in lvb.items()},
                       {k: frozenset(v) for k, v in lva.items()},
                       paths=paths)

    # instantly-dead variables: outputs never consumed afterwards
    consumed: set[str] = set()
    for a in proc.atoms:
        ins, _ = io[a.point]
        consumed |= ins
    for a in proc.atoms:
        _, outs = io[a.point]
        t.vv[a.point] = frozenset(v for v in outs
                                  if v not in consumed and v not in head_out)
    return t


def live_regions(res: PointsToResult, proc: Procedure,
                 tables: LivenessTables) -> LivenessTables:
    """Algorithm 6: LR sets are unions of Reach over the LV sets."""
    g = res.graphs[proc.key]
    for i in tables.lvb:
        tables.lrb[i] = g.reach_vars(tables.lvb[i])
        tables.lra[i] = g.reach_vars(tables.lva[i])
        tables.vr[i] = g.reach_vars(tables.vv[i])
    return tables


def analyze_liveness(prog: Program, res: PointsToResult,
                     cap: int = DEFAULT_PATH_CAP) -> dict[str, LivenessTables]:
    out: dict[str, LivenessTables] = {}
    for key, proc in prog.procs.items():
        paths = execution_paths(proc, cap)
        out[key] = live_regions(res, proc, live_variables(prog, proc, paths))
    return out


# ---------------------------------------------------------------------------
# global region classification

@dataclass
class RegionClassification:
    local: set[int]
    born: set[int]
    dead: set[int]
    outlived: set[int]
    input_r: frozenset[int]
    output_r: frozenset[int]
    alloc_r: frozenset[int] = frozenset()

    def partition_ok(self, all_nodes) -> bool:
        parts = [self.local, self.born, self.dead, self.outlived]
        union = set().union(*parts)
        if union != set(all_nodes):
            return False
        return sum(len(p) for p in parts) == len(union)


def _init_classification(res: PointsToResult, proc: Procedure) -> RegionClassification:
    g = res.graphs[proc.key]
    input_r = g.reach_vars(proc.head_in_vars())
    output_r = g.reach_vars(proc.head_out_vars())
    nodes = set(g.nodes())
    born = set(output_r - input_r)
    dead = set(input_r - output_r)
    outlived = set(input_r & output_r)
    local = nodes - (input_r | output_r)
    # zero-sized regions that cross the procedure boundary have no runtime
    # storage to create or remove: they never become region arguments
    for n in sorted(born | dead):
        if is_virtual_node(res, proc.key, n):
            born.discard(n)
            dead.discard(n)
            outlived.add(n)
    alloc = res.allocation(proc.key)
    alloc_r = {n for n in (input_r | output_r) & alloc
               if not is_virtual_node(res, proc.key, n)}
    return RegionClassification(local, born, dead, outlived,
                                input_r, output_r, frozenset(alloc_r))


def classify_regions(prog: Program, res: PointsToResult,
                     liveness: dict[str, LivenessTables]) -> dict[str, RegionClassification]:
    """Initialization per reachability, then rules L1-L4 at every call site,
    with caller-side outlived status propagated into callees, to fixpoint."""
    cls = {key: _init_classification(res, prog.procs[key]) for key in prog.procs}

    def move_out(c: RegionClassification, from_set: set[int], r: int) -> bool:
        if r in from_set:
            from_set.discard(r)
            c.outlived.add(r)
            return True
        return False

    work = deque(sorted(prog.procs))
    queued = set(work)
    while work:
        pkey = work.popleft()
        queued.discard(pkey)
        proc = prog.procs[pkey]
        cp = cls[pkey]
        t = liveness[pkey]
        for a in proc.atoms:
            if not isinstance(a, Call):
                continue
            qkey = a.key
            cq = cls[qkey]
            alpha = res.alpha_at(pkey, a.point)
            changed = False
            # aliasing (L2/L4): two callee nodes with one caller image
            images: dict[int, list[int]] = {}
            for rq, rp in alpha.items():
                images.setdefault(rp, []).append(rq)
            for rp, rqs in images.items():
                if len(rqs) > 1:
                    for rq in rqs:
                        changed |= move_out(cq, cq.dead, rq)
                        changed |= move_out(cq, cq.born, rq)
            lrb = t.lrb[a.point]
            lra = t.lra[a.point]
            for rq, rp in alpha.items():
                # L1 plus caller-outlived propagation
                if rq in cq.dead and ((rp in lrb and rp in lra)
                                      or rp in cp.outlived):
                    changed |= move_out(cq, cq.dead, rq)
                # L3 plus caller-outlived propagation
                if rq in cq.born and (rp in lrb or rp in cp.outlived):
                    changed |= move_out(cq, cq.born, rq)
            if changed and qkey not in queued:
                work.append(qkey)
                queued.add(qkey)
    return cls
