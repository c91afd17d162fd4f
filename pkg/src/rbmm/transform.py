"""Region transformation: formal/actual region arguments, insertion of
create/remove instructions (rules T1-T6 applied per the two-loop insertion
algorithm), per-goal region change sets for the runtime support points, and
the annotated pretty printer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .liveness import (AnalysisError, LivenessTables, RegionClassification,
                       analyze_liveness, classify_regions)
from .pointsto import PointsToResult, analyze_program, is_virtual_node
from .syntax import (ARITH_DISPLAY, COMPARE_DISPLAY, Builtin, Call, Conj,
                     Disj, IfThenElse, Procedure, Program, Some, Unify,
                     UnifyKind, int_like)


@dataclass
class GoalSupport:
    """Static region-change information of a compound goal, resolved to
    region variables (points-to nodes) of the enclosing procedure."""

    created: frozenset[int]
    removed: frozenset[int]
    allocated: frozenset[int]
    needs_support: bool = False
    # disjunctions
    flavor: str = ""                      # "nondet" | "semidet"
    snapshot: tuple[int, ...] = ()        # regions whose size records to save
    protect: tuple[int, ...] = ()         # semidet disj: removed-set regions
    # if-then-else
    cond_nondet: bool = False
    ite_snapshot: tuple[tuple[int, bool], ...] = ()   # (node, conditional)


@dataclass
class AnnotatedProcedure:
    proc: Procedure
    region_params: list[int]
    call_actuals: dict[int, list[int]]
    removes_before: dict[int, frozenset[int]]
    creates_before: dict[int, frozenset[int]]
    removes_after: dict[int, frozenset[int]]
    construct_region: dict[int, int]
    goal_support: dict[int, GoalSupport] = field(default_factory=dict)
    virtual: frozenset[int] = frozenset()


@dataclass
class AnnotatedProgram:
    prog: Program
    pointsto: PointsToResult
    liveness: dict[str, LivenessTables]
    classification: dict[str, RegionClassification]
    procs: dict[str, AnnotatedProcedure] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# region arguments

def compute_region_args(res: PointsToResult,
                        cls: dict[str, RegionClassification]) -> dict[str, list[int]]:
    """deadR first, then bornR, then the remaining allocR, each ordered by
    region number."""
    params: dict[str, list[int]] = {}
    for key, c in cls.items():
        num = res.numbering[key]
        dead = sorted(c.dead, key=num.get)
        born = sorted(c.born, key=num.get)
        rest = sorted(set(c.alloc_r) - c.dead - c.born, key=num.get)
        params[key] = dead + born + rest
    return params


def call_actual_regions(res: PointsToResult, caller: str, call: Call,
                        params: dict[str, list[int]]) -> list[int]:
    alpha = res.alpha_at(caller, call.point)
    actuals = []
    for formal in params[call.key]:
        img = alpha.get(formal)
        if img is None:
            raise AnalysisError(
                f"alpha undefined for region argument of {call.key} at "
                f"{caller}:{call.point}")
        actuals.append(img)
    return actuals


# ---------------------------------------------------------------------------
# instruction insertion (T1-T6)

def insert_instructions(prog: Program, res: PointsToResult,
                        live: dict[str, LivenessTables],
                        cls: dict[str, RegionClassification],
                        params: dict[str, list[int]],
                        proc: Procedure) -> AnnotatedProcedure:
    key = proc.key
    g = res.graphs[key]
    t = live[key]
    c = cls[key]
    guard = c.local | c.dead | c.born
    rb: dict[int, set[int]] = {a.point: set() for a in proc.atoms}
    cb: dict[int, set[int]] = {a.point: set() for a in proc.atoms}
    ra: dict[int, set[int]] = {a.point: set() for a in proc.atoms}
    construct_region: dict[int, int] = {}
    call_actuals: dict[int, list[int]] = {}

    virtual = frozenset(n for n in g.nodes() if is_virtual_node(res, key, n))
    # a zero-sized region is worth instructions only when it backs element
    # positions of real structures (it then mirrors a region the program
    # conceptually owns); scratch word temporaries get none
    element_pos: set[int] = set()
    for n in g.nodes():
        for label in g.out_labels(n):
            element_pos.add(g.child(n, label))
    scratch = frozenset(n for n in virtual if n not in element_pos)
    eligible = guard - scratch

    # first loop: T6 on every atom, T4/T2 on unifications, T1/T3 on calls
    for a in proc.atoms:
        i = a.point
        for r in t.vr[i] - t.lra[i]:                         # T6
            # a zero-sized region holding only instantly-dead values may
            # never have been bound; there is nothing to reclaim in it
            if r in eligible and r not in virtual:
                ra[i].add(r)
        if isinstance(a, Unify):
            for r in t.lrb[i] - t.lra[i]:                    # T4
                if r in eligible:
                    ra[i].add(r)
            if a.kind is UnifyKind.CONSTRUCT:
                construct_region[i] = g.node_of(a.lhs)
                for r in t.lra[i] - t.lrb[i]:                # T2
                    if r in eligible:
                        cb[i].add(r)
        else:
            if isinstance(a, Call):
                alpha = res.alpha_at(key, i)
                call_actuals[i] = call_actual_regions(res, key, a, params)
                cq = cls[a.key]
                pre: dict[int, list[int]] = {}
                for rq, rp in alpha.items():
                    pre.setdefault(rp, []).append(rq)
            else:
                pre = {}
                cq = None
            for r in t.lra[i] - t.lrb[i]:                    # T1
                if r in eligible and all(rq not in cq.born
                                         for rq in pre.get(r, ())):
                    cb[i].add(r)
            for r in t.lrb[i] - t.lra[i]:                    # T3
                if r in eligible and all(rq not in cq.dead
                                         for rq in pre.get(r, ())):
                    ra[i].add(r)

    # second loop: T5 on consecutive pairs of every execution path
    for ep in t.paths:
        for j in range(len(ep) - 1):
            i, nxt = ep[j], ep[j + 1]
            for r in t.lra[i] - t.lrb[nxt]:
                if r in eligible:
                    rb[nxt].add(r)

    ann = AnnotatedProcedure(
        proc, params[key], call_actuals,
        {i: frozenset(s) for i, s in rb.items()},
        {i: frozenset(s) for i, s in cb.items()},
        {i: frozenset(s) for i, s in ra.items()},
        construct_region, virtual=virtual)
    _compute_goal_support(prog, res, live, cls, ann)
    return ann


# ---------------------------------------------------------------------------
# per-goal change sets for the runtime support points

def first_points(goal) -> frozenset[int]:
    if isinstance(goal, (Unify, Call, Builtin)):
        return frozenset({goal.point})
    if isinstance(goal, Conj):
        return first_points(goal.goals[0])
    if isinstance(goal, Disj):
        out: set[int] = set()
        for b in goal.goals:
            out |= first_points(b)
        return frozenset(out)
    if isinstance(goal, IfThenElse):
        return first_points(goal.cond)
    if isinstance(goal, Some):
        return first_points(goal.goal)
    raise TypeError(goal)


def _goal_changes(prog: Program, res: PointsToResult, ann: AnnotatedProcedure,
                  cls: dict[str, RegionClassification], goal):
    """(created, removed, allocated) over a goal subtree; removed and
    allocated exclude regions created inside the subtree."""
    from .syntax import atoms_of
    created: set[int] = set()
    removed: set[int] = set()
    allocated: set[int] = set()
    key = ann.proc.key
    for a in atoms_of(goal):
        i = a.point
        created |= ann.creates_before[i]
        removed |= ann.removes_before[i] | ann.removes_after[i]
        if i in ann.construct_region:
            allocated.add(ann.construct_region[i])
        if isinstance(a, Call):
            alpha = res.alpha_at(key, i)
            cq = cls[a.key]
            qalloc = res.allocation(a.key)
            for rq, rp in alpha.items():
                if rq in cq.born:
                    created.add(rp)
                if rq in cq.dead:
                    removed.add(rp)
                if rq in qalloc:
                    allocated.add(rp)
    removed -= created
    allocated -= created
    return frozenset(created), frozenset(removed), frozenset(allocated)


def _entry_live(res: PointsToResult, ann: AnnotatedProcedure,
                live: LivenessTables, goal) -> list[int]:
    """Locally forward-live non-virtual regions at the entry of a goal."""
    key = ann.proc.key
    num = res.numbering[key]
    nodes: set[int] = set()
    for p in first_points(goal):
        nodes |= live.lrb[p]
    return sorted((n for n in nodes if n not in ann.virtual), key=num.get)


def _compute_goal_support(prog: Program, res: PointsToResult,
                          live: dict[str, LivenessTables],
                          cls: dict[str, RegionClassification],
                          ann: AnnotatedProcedure):
    key = ann.proc.key
    t = live[key]
    num = res.numbering[key]

    def nonvirt(nodes) -> tuple[int, ...]:
        return tuple(sorted((n for n in nodes if n not in ann.virtual),
                            key=num.get))

    def walk(g):
        if isinstance(g, Conj):
            for s in g.goals:
                walk(s)
            return
        if isinstance(g, (Unify, Call, Builtin)):
            return
        if isinstance(g, Disj):
            for s in g.goals:
                walk(s)
            created, removed, allocated = _goal_changes(prog, res, ann, cls, g)
            sup = GoalSupport(created, removed, allocated)
            if g.is_switch:
                sup.needs_support = False           # no resume points
            elif g.det.max_solutions > 1:
                sup.flavor = "nondet"
                sup.needs_support = True
                sup.snapshot = tuple(_entry_live(res, ann, t, g))
            else:
                sup.flavor = "semidet"
                sup.needs_support = bool(created or removed or allocated)
                sup.snapshot = nonvirt(allocated)
                sup.protect = nonvirt(removed)
            ann.goal_support[g.gid] = sup
            return
        if isinstance(g, IfThenElse):
            walk(g.cond)
            walk(g.then)
            walk(g.els)
            created, removed, allocated = _goal_changes(prog, res, ann, cls,
                                                        g.cond)
            sup = GoalSupport(created, removed, allocated)
            sup.needs_support = bool(created or removed or allocated)
            sup.cond_nondet = g.cond.det.max_solutions > 1
            sup.protect = nonvirt(removed)
            if sup.needs_support:
                else_start: set[int] = set()
                for p in first_points(g.els):
                    else_start |= ann.removes_before[p]
                snap = []
                for n in _entry_live(res, ann, t, g.cond):
                    snap.append((n, n in else_start))
                sup.ite_snapshot = tuple(snap)
            ann.goal_support[g.gid] = sup
            return
        if isinstance(g, Some):
            walk(g.goal)
            if g.commit:
                created, removed, allocated = _goal_changes(prog, res, ann,
                                                            cls, g.goal)
                sup = GoalSupport(created, removed, allocated)
                sup.needs_support = True
                sup.protect = nonvirt(removed)
                ann.goal_support[g.gid] = sup
            return
        raise TypeError(g)

    walk(ann.proc.body)


# ---------------------------------------------------------------------------
# the whole-program transformation

def annotate_program(prog: Program,
                     path_cap: int | None = None) -> AnnotatedProgram:
    res = analyze_program(prog)
    kw = {} if path_cap is None else {"cap": path_cap}
    live = analyze_liveness(prog, res, **kw)
    cls = classify_regions(prog, res, live)
    params = compute_region_args(res, cls)
    ann = AnnotatedProgram(prog, res, live, cls)
    for key, proc in prog.procs.items():
        ann.procs[key] = insert_instructions(prog, res, live, cls, params,
                                             proc)
    return ann


# ---------------------------------------------------------------------------
# pretty printing

def _term_str(functor: str, args: list[str]) -> str:
    if functor == "[|]":
        return f"[{args[0]} | {args[1]}]"
    if functor == "[]":
        return "[]"
    if not args:
        return functor
    return f"{functor}({', '.join(args)})"


def _place_region_args(res: PointsToResult, key: str, g, argvars,
                       region_args) -> tuple[list[str], str]:
    """@-annotates every argument housed by a passed region; regions not
    housing any argument go in a trailing bracket group."""
    args = list(argvars)
    covered: set[int] = set()
    for j, v in enumerate(argvars):
        home = g.maybe_node_of(v)
        if home is not None and any(g.find(m) == home for m in region_args):
            args[j] = f"{v}@{res.region_name(key, home)}"
            covered.add(home)
    leftover = [m for m in region_args if g.find(m) not in covered]
    extra = ""
    if leftover:
        names = ", ".join(res.region_name(key, m) for m in leftover)
        extra = f" [{names}]"
    return args, extra


def _atom_str(ann: AnnotatedProcedure | None, res: PointsToResult | None,
              a, annotations: bool) -> str:
    if isinstance(a, Unify):
        if a.kind is UnifyKind.ASSIGN:
            return f"{a.lhs} := {a.rhs_var}"
        if a.kind is UnifyKind.TEST:
            return f"{a.lhs} == {a.rhs_var}"
        term = _term_str(a.functor, a.args)
        if a.kind is UnifyKind.CONSTRUCT:
            s = f"{a.lhs} <= {term}"
            if annotations and a.point in ann.construct_region:
                r = res.region_name(ann.proc.key, ann.construct_region[a.point])
                s += f" in {r}"
            return s
        return f"{a.lhs} => {term}"
    if isinstance(a, Call):
        args = list(a.args)
        if annotations:
            actuals = ann.call_actuals.get(a.point, [])
            g = res.graphs[ann.proc.key]
            args, extra = _place_region_args(res, ann.proc.key, g, a.args,
                                             actuals)
            return f"{a.name}({', '.join(args)}){extra}"
        return f"{a.name}({', '.join(args)})"
    assert isinstance(a, Builtin)
    sargs = [str(x) for x in a.args]
    if a.op in COMPARE_DISPLAY:
        return f"{sargs[0]} {COMPARE_DISPLAY[a.op]} {sargs[1]}"
    if a.op in ARITH_DISPLAY:
        return f"{sargs[2]} = {sargs[0]} {ARITH_DISPLAY[a.op]} {sargs[1]}"
    if a.op in ("true", "fail"):
        return a.op
    return f"{a.op}({', '.join(sargs)})"


class _Emitter:
    def __init__(self, annprog: AnnotatedProgram, annotations: bool = True):
        self.ap = annprog
        self.res = annprog.pointsto
        self.annotations = annotations

    def emit(self) -> str:
        parts: list[str] = []
        for tdef in self.ap.prog.types.values():
            ctors = []
            for f, args in tdef.constructors:
                ctors.append(_term_str(f, list(args)))
            parts.append(f":- type {tdef.name} ---> {' ; '.join(ctors)}.")
        parts.append("")
        for key, proc in self.ap.prog.procs.items():
            parts.append(self.emit_proc(self.ap.procs[key]))
        return "\n".join(parts) + "\n"

    def emit_proc(self, ann: AnnotatedProcedure) -> str:
        proc = ann.proc
        sig = proc.sig
        lines: list[str] = []
        lines.append(f":- pred {sig.name}({', '.join(sig.arg_types)}).")
        lines.append(f":- mode {sig.name}({', '.join(m.value for m in sig.arg_modes)}) "
                     f"is {sig.determinism.category}.")
        head_args = list(proc.head_vars)
        if self.annotations:
            g = self.res.graphs[proc.key]
            head_args, extra = _place_region_args(self.res, proc.key, g,
                                                  proc.head_vars,
                                                  ann.region_params)
            head = f"{sig.name}({', '.join(head_args)}){extra}"
        else:
            head = f"{sig.name}({', '.join(head_args)})"
        segs = self.render(ann, proc.body, 1)
        body = ",\n".join(segs)
        lines.append(f"{head} :-\n{body}.")
        return "\n".join(lines) + "\n"

    def rnames(self, key: str, nodes) -> list[str]:
        num = self.res.numbering[key]
        g = self.res.graphs[key]
        return [self.res.region_name(key, n)
                for n in sorted({g.find(n) for n in nodes}, key=num.get)]

    def render(self, ann: AnnotatedProcedure, g, depth: int) -> list[str]:
        ind = "    " * depth
        key = ann.proc.key
        if isinstance(g, Conj):
            segs: list[str] = []
            for sub in g.goals:
                segs.extend(self.render(ann, sub, depth))
            return segs
        if isinstance(g, (Unify, Call, Builtin)):
            segs = []
            if self.annotations:
                pre = [f"remove({r})" for r in self.rnames(key, ann.removes_before[g.point])]
                pre += [f"create({r})" for r in self.rnames(key, ann.creates_before[g.point])]
                if pre:
                    segs.append(f"{ind}    {', '.join(pre)}")
            segs.append(f"{ind}({g.point}) {_atom_str(ann, self.res, g, self.annotations)}")
            if self.annotations:
                post = [f"remove({r})" for r in self.rnames(key, ann.removes_after[g.point])]
                if post:
                    segs.append(f"{ind}    {', '.join(post)}")
            return segs
        if isinstance(g, Disj):
            branches = [",\n".join(self.render(ann, b, depth + 1))
                        for b in g.goals]
            sep = f"\n{ind};\n"
            return [f"{ind}(\n" + sep.join(branches) + f"\n{ind})"]
        if isinstance(g, IfThenElse):
            cond = ",\n".join(self.render(ann, g.cond, depth + 1))
            then = ",\n".join(self.render(ann, g.then, depth + 1))
            els = ",\n".join(self.render(ann, g.els, depth + 1))
            return [f"{ind}( if\n{cond}\n{ind}then\n{then}\n{ind}else\n{els}\n{ind})"]
        if isinstance(g, Some):
            inner = ",\n".join(self.render(ann, g.goal, depth + 1))
            vs = ", ".join(g.vars)
            return [f"{ind}some [{vs}] (\n{inner}\n{ind})"]
        raise TypeError(g)


def emit_annotated(annprog: AnnotatedProgram) -> str:
    return _Emitter(annprog, annotations=True).emit()


def emit_plain(annprog: AnnotatedProgram) -> str:
    return _Emitter(annprog, annotations=False).emit()


# ---------------------------------------------------------------------------
# annotation-stripping and renaming normalization

import re

_INSTR_LINE = re.compile(r"^\s*(?:(?:create|remove)\(R\d+\)(?:,\s*)?)+$")
_POINT = re.compile(r"^(\s*)\(\d+\)\s")
_AT = re.compile(r"@R\d+")
_IN_R = re.compile(r" in R\d+")
_EXTRA = re.compile(r" \[R\d+(?:, R\d+)*\]")


def strip_annotations(text: str) -> str:
    lines: list[str] = []
    for ln in text.splitlines():
        body = ln.rstrip().rstrip(".").rstrip(",")
        if body.strip() and _INSTR_LINE.match(body):
            if ln.rstrip().endswith(".") and lines:
                lines[-1] = lines[-1].rstrip().rstrip(",") + "."
            continue
        ln = _POINT.sub(r"\1", ln)
        ln = _AT.sub("", ln)
        ln = _IN_R.sub("", ln)
        ln = _EXTRA.sub("", ln)
        lines.append(ln)
    text = "\n".join(lines)
    # fix separators orphaned by removed instruction lines
    for pat, rep in ((r",(\s*)\.", r".\1"), (r",(\s*\n\s*;)", r"\1"),
                     (r",(\s*\n\s*\))", r"\1"), (r",(\s*\n\s*then\b)", r"\1"),
                     (r",(\s*\n\s*else\b)", r"\1")):
        text = re.sub(pat, rep, text)
    return text


_RTOKEN = re.compile(r"R(\d+)")


def normalize_region_names(text: str) -> str:
    """Renumber R<k> tokens in first-occurrence order, for renaming-
    insensitive golden comparison."""
    mapping: dict[str, str] = {}

    def sub(m):
        tok = m.group(0)
        if tok not in mapping:
            mapping[tok] = f"R{len(mapping) + 1}"
        return mapping[tok]

    return _RTOKEN.sub(sub, text)
