"""Interpreter for region-annotated programs.

Goals compile to closures. Goals with at most one solution execute by direct
recursion (no suspension is ever needed to re-enter them); multi-solution
goals compile to generators, giving chronological backtracking. Bindings are
trailed only while a choice point is active; region bookkeeping is never
trailed and is restored exclusively by the support-point code.

A plain backend that ignores all region operations and allocates from an
unbounded heap serves as the behavioral reference: outputs and solution
counts must match the region-managed run.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .pointsto import proc_var_order
from .runtime import RegionManager, RunStats, SafetyViolation
from .syntax import (Builtin, Call, Conj, Disj, IfThenElse, Procedure, Some,
                     Unify, UnifyKind, int_like)
from .transform import AnnotatedProgram, GoalSupport


class VMError(Exception):
    pass


class HeapRef:
    __slots__ = ("region", "idx")

    def __init__(self, region, idx: int):
        self.region = region
        self.idx = idx


def Env(nvals: int, nregs: int):
    """An activation record: (value slots, region slots)."""
    return ([None] * nvals, [None] * nregs)


# ---------------------------------------------------------------------------
# plain (region-free) backend

class PlainRegion:
    __slots__ = ("cells", "words", "virtual", "removed", "reclaimed", "label",
                 "seq", "ite_protected", "commit_slot")

    def __init__(self, virtual: bool = False, label: str = ""):
        self.cells: list = []
        self.words = 0
        self.virtual = virtual
        self.removed = False
        self.reclaimed = False
        self.label = label
        self.seq = 0
        self.ite_protected = None
        self.commit_slot = None


class PlainManager:
    """Counts allocations; every region operation is otherwise inert."""

    def __init__(self, **_kw):
        self.stats = RunStats()
        self.check = False

    def create_region(self, label: str = "") -> PlainRegion:
        self.stats.regions_total += 1
        return PlainRegion(label=label)

    def create_virtual_region(self, label: str = "") -> PlainRegion:
        self.stats.regions_total += 1
        return PlainRegion(virtual=True, label=label)

    def alloc(self, region: PlainRegion, functor: str, args: tuple) -> int:
        n = len(args)
        region.words += n
        st = self.stats
        st.words_total += n
        st.words_live += n
        st.words_max = st.words_live
        region.cells.append((functor, args))
        return len(region.cells) - 1

    def remove_region(self, region):
        pass

    def disj_enter(self, *_a, **_k):
        return None

    def disj_resume(self, *_a, **_k):
        pass

    def disj_succeed_nonlast(self, *_a, **_k):
        pass

    def ite_enter(self, *_a, **_k):
        return None

    def ite_then(self, *_a, **_k):
        pass

    def ite_else(self, *_a, **_k):
        pass

    def ite_pop_after_success(self, *_a, **_k):
        pass

    def commit_enter(self, *_a, **_k):
        return None

    def commit_success(self, *_a, **_k):
        pass

    def commit_fail(self, *_a, **_k):
        pass


# ---------------------------------------------------------------------------
# value helpers

def deep_eq(a, b) -> bool:
    while True:
        if a is b:
            return True
        ra = isinstance(a, HeapRef)
        rb = isinstance(b, HeapRef)
        if ra != rb:
            return False
        if not ra:
            return a == b
        if a.region.reclaimed or b.region.reclaimed:
            raise SafetyViolation("equality test reads a reclaimed region")
        fa, argsa = a.region.cells[a.idx]
        fb, argsb = b.region.cells[b.idx]
        if fa != fb or len(argsa) != len(argsb):
            return False
        for x, y in zip(argsa[:-1], argsb[:-1]):
            if not deep_eq(x, y):
                return False
        if not argsa:
            return True
        a, b = argsa[-1], argsb[-1]


def render_value(v) -> str:
    if isinstance(v, int):
        return str(v)
    if isinstance(v, str):
        return v if v != "[]" else "[]"
    assert isinstance(v, HeapRef)
    if v.region.reclaimed:
        raise SafetyViolation("print reads a reclaimed region")
    functor, args = v.region.cells[v.idx]
    if functor == "[|]":
        items = []
        cur_f, cur_args = functor, args
        while True:
            items.append(render_value(cur_args[0]))
            tail = cur_args[1]
            if isinstance(tail, HeapRef):
                if tail.region.reclaimed:
                    raise SafetyViolation("print reads a reclaimed region")
                cur_f, cur_args = tail.region.cells[tail.idx]
                if cur_f == "[|]":
                    continue
                return f"[{', '.join(items)} | {render_value(tail)}]"
            if tail == "[]":
                return f"[{', '.join(items)}]"
            return f"[{', '.join(items)} | {render_value(tail)}]"
    if not args:
        return functor
    return f"{functor}({', '.join(render_value(x) for x in args)})"


# ---------------------------------------------------------------------------
# the machine

@dataclass
class RunResult:
    solutions: int
    outputs: list[str]
    stats: RunStats
    output: str


class Machine:
    def __init__(self, ann: AnnotatedProgram, backend=None, check: bool = False,
                 step_limit: int | None = None):
        self.ann = ann
        self.prog = ann.prog
        self.mgr = backend if backend is not None else RegionManager(check=check)
        self.check = check
        self.step_limit = step_limit if step_limit is not None else 1 << 62
        self.steps = 0
        self.trail: list = []
        self.depth = 0
        self.out: list[str] = []
        self.layouts: dict[str, tuple[dict[str, int], int]] = {}
        self.executors: dict[str, tuple[bool, object]] = {}
        self.exec_cells: dict[str, list] = {}
        self._compile_all()

    # -- trail ---------------------------------------------------------------

    def mark(self) -> int:
        self.depth += 1
        return len(self.trail)

    def undo(self, mark: int):
        trail = self.trail
        while len(trail) > mark:
            vals, i = trail.pop()
            vals[i] = None
        self.depth -= 1

    def release(self, _mark: int):
        self.depth -= 1

    # -- layout ---------------------------------------------------------------

    def _layout(self, proc: Procedure) -> tuple[dict[str, int], int]:
        if proc.key not in self.layouts:
            vmap = {v: i for i, v in enumerate(proc_var_order(proc))}
            nregs = len(self.ann.pointsto.numbering[proc.key])
            self.layouts[proc.key] = (vmap, nregs)
        return self.layouts[proc.key]

    def rslot(self, key: str, node: int) -> int:
        return self.ann.pointsto.numbering[key][
            self.ann.pointsto.graphs[key].find(node)] - 1

    def _cell(self, key: str) -> list:
        if key not in self.exec_cells:
            self.exec_cells[key] = [None]
        return self.exec_cells[key]

    def _compile_all(self):
        for key, proc in self.prog.procs.items():
            self._layout(proc)
        for key, proc in self.prog.procs.items():
            ap = self.ann.procs[key]
            body_det = proc.body.det.max_solutions <= 1
            fn = self.compile_goal(ap, proc.body)
            self.executors[key] = (body_det, fn)
            self._cell(key)[0] = fn

    # -- instruction helpers ---------------------------------------------------

    def _instr_ops(self, ap, point: int):
        """(removes_before+creates, removes_after) as compiled thunks; None
        when empty."""
        key = ap.proc.key
        num = self.ann.pointsto.numbering[key]
        pre_removes = sorted(ap.removes_before[point], key=num.get)
        pre_creates = sorted(ap.creates_before[point], key=num.get)
        post_removes = sorted(ap.removes_after[point], key=num.get)
        m = self
        mgr = self.mgr

        pre = None
        if pre_removes or pre_creates:
            rem_slots = [self.rslot(key, n) for n in pre_removes]
            cre = [(self.rslot(key, n), n in ap.virtual,
                    self.ann.pointsto.region_name(key, n))
                   for n in pre_creates]
            check = self.check

            def pre(env):
                regs = env[1]
                for s in rem_slots:
                    r = regs[s]
                    if r is None:
                        raise SafetyViolation(
                            f"remove of unbound region variable in {key}")
                    mgr.remove_region(r)
                for s, virtual, label in cre:
                    if check and not virtual:
                        old = regs[s]
                        if old is not None and not (old.removed or
                                                    old.reclaimed):
                            raise SafetyViolation(
                                f"create over live region {label} in {key}")
                    regs[s] = (mgr.create_virtual_region(label) if virtual
                               else mgr.create_region(label))

        post = None
        if post_removes:
            post_slots = [self.rslot(key, n) for n in post_removes]

            def post(env):
                regs = env[1]
                for s in post_slots:
                    r = regs[s]
                    if r is None:
                        raise SafetyViolation(
                            f"remove of unbound region variable in {key}")
                    mgr.remove_region(r)

        return pre, post

    # -- goal compilation --------------------------------------------------------

    def compile_goal(self, ap, g):
        """Returns a det closure env->bool when the goal has at most one
        solution, else a generator function env->iterator."""
        if isinstance(g, Conj):
            return self.compile_conj(ap, g.goals, g.det.max_solutions <= 1)
        if isinstance(g, (Unify, Call, Builtin)):
            return self.compile_atom(ap, g)
        if isinstance(g, Disj):
            return self.compile_disj(ap, g)
        if isinstance(g, IfThenElse):
            return self.compile_ite(ap, g)
        if isinstance(g, Some):
            if g.commit:
                return self.compile_commit(ap, g)
            return self.compile_goal(ap, g.goal)
        raise TypeError(g)

    def compile_conj(self, ap, goals, overall_det: bool):
        parts = []
        for sub in goals:
            det = sub.det.max_solutions <= 1
            parts.append((det, self.compile_goal(ap, sub)))
        m = self
        if overall_det:
            fns = [fn for _, fn in parts]
            dets = [d for d, _ in parts]

            def run(env):
                for d, fn in zip(dets, fns):
                    if d:
                        if not fn(env):
                            return False
                    else:
                        # a no-output multi goal inside a det conjunction:
                        # commit to its first solution
                        got = False
                        for _ in fn(env):
                            got = True
                            break
                        if not got:
                            return False
                return True

            return run

        n = len(parts)

        def gen(env, k=0):
            while k < n and parts[k][0]:
                if not parts[k][1](env):
                    return
                k += 1
            if k == n:
                yield
                return
            sub = parts[k][1]
            for _ in sub(env):
                mark = m.mark()
                yield from gen(env, k + 1)
                m.undo(mark)

        return gen

    # -- atoms -------------------------------------------------------------------

    def compile_atom(self, ap, a):
        pre, post = self._instr_ops(ap, a.point)
        core = self.compile_atom_core(ap, a)
        if a.det.max_solutions <= 1:
            if pre is None and post is None:
                return core
            def run(env):
                if pre is not None:
                    pre(env)
                if not core(env):
                    return False
                if post is not None:
                    post(env)
                return True
            return run

        # multi-solution call
        def gen(env):
            if pre is not None:
                pre(env)
            for _ in core(env):
                if post is not None:
                    post(env)
                yield
        return gen

    def compile_atom_core(self, ap, a):
        if isinstance(a, Unify):
            return self.compile_unify(ap, a)
        if isinstance(a, Builtin):
            return self.compile_builtin(ap, a)
        return self.compile_call(ap, a)

    def compile_unify(self, ap, a: Unify):
        key = ap.proc.key
        vmap, _ = self._layout(ap.proc)
        m = self
        mgr = self.mgr
        if a.kind is UnifyKind.ASSIGN:
            xi, yi = vmap[a.lhs], vmap[a.rhs_var]

            def run(env):
                vals = env[0]
                vals[xi] = vals[yi]
                if m.depth:
                    m.trail.append((vals, xi))
                return True

            return run
        if a.kind is UnifyKind.TEST:
            xi, yi = vmap[a.lhs], vmap[a.rhs_var]

            def run(env):
                vals = env[0]
                return deep_eq(vals[xi], vals[yi])

            return run
        if a.kind is UnifyKind.CONSTRUCT:
            xi = vmap[a.lhs]
            if not a.args:
                # a zero-word construction needs no storage; regions of
                # zero-sized content carry no binding discipline either
                const = int(a.functor) if int_like(a.functor) else a.functor
                node = ap.construct_region[a.point]
                rs = self.rslot(key, node)
                virtual = node in ap.virtual

                def run(env):
                    if not virtual and env[1][rs] is None:
                        raise SafetyViolation(
                            f"construction into unbound region variable "
                            f"in {key} at ({a.point})")
                    vals = env[0]
                    vals[xi] = const
                    if m.depth:
                        m.trail.append((vals, xi))
                    return True

                return run
            argidx = [vmap[v] for v in a.args]
            functor = a.functor
            rs = self.rslot(key, ap.construct_region[a.point])
            if len(argidx) == 2:
                i0, i1 = argidx

                def run(env):
                    r = env[1][rs]
                    if r is None:
                        raise SafetyViolation(
                            f"construction into unbound region variable in "
                            f"{key} at ({a.point})")
                    vals = env[0]
                    idx = mgr.alloc(r, functor, (vals[i0], vals[i1]))
                    vals[xi] = HeapRef(r, idx)
                    if m.depth:
                        m.trail.append((vals, xi))
                    return True

                return run

            def run(env):
                r = env[1][rs]
                if r is None:
                    raise SafetyViolation(
                        f"construction into unbound region variable in "
                        f"{key} at ({a.point})")
                vals = env[0]
                cell = tuple(vals[i] for i in argidx)
                idx = mgr.alloc(r, functor, cell)
                vals[xi] = HeapRef(r, idx)
                if m.depth:
                    m.trail.append((vals, xi))
                return True

            return run
        # deconstruct
        xi = vmap[a.lhs]
        if not a.args:
            const = int(a.functor) if int_like(a.functor) else a.functor

            def run(env):
                return env[0][xi] == const

            return run
        argidx = [vmap[v] for v in a.args]
        functor = a.functor
        if len(argidx) == 2:
            i0, i1 = argidx

            def run(env):
                vals = env[0]
                v = vals[xi]
                if not isinstance(v, HeapRef):
                    return False
                r = v.region
                if r.reclaimed:
                    raise SafetyViolation(
                        f"deconstruction reads reclaimed region in {key} "
                        f"at ({a.point})")
                f, cargs = r.cells[v.idx]
                if f != functor:
                    return False
                vals[i0] = cargs[0]
                vals[i1] = cargs[1]
                if m.depth:
                    trail = m.trail
                    trail.append((vals, i0))
                    trail.append((vals, i1))
                return True

            return run

        def run(env):
            vals = env[0]
            v = vals[xi]
            if not isinstance(v, HeapRef):
                return False
            r = v.region
            if r.reclaimed:
                raise SafetyViolation(
                    f"deconstruction reads reclaimed region in {key} "
                    f"at ({a.point})")
            f, cargs = r.cells[v.idx]
            if f != functor:
                return False
            if m.depth:
                trail = m.trail
                for i, cv in zip(argidx, cargs):
                    vals[i] = cv
                    trail.append((vals, i))
            else:
                for i, cv in zip(argidx, cargs):
                    vals[i] = cv
            return True

        return run

    def compile_builtin(self, ap, a: Builtin):
        vmap, _ = self._layout(ap.proc)
        m = self
        op = a.op

        def operand(x):
            if isinstance(x, int):
                return ("const", x)
            return ("slot", vmap[x])

        if op in ("add", "sub", "mul", "div", "mod"):
            ax, ay = operand(a.args[0]), operand(a.args[1])
            zi = vmap[a.args[2]]
            import operator
            fn = {"add": operator.add, "sub": operator.sub,
                  "mul": operator.mul, "div": operator.floordiv,
                  "mod": operator.mod}[op]

            def run(env):
                vals = env[0]
                x = ax[1] if ax[0] == "const" else vals[ax[1]]
                y = ay[1] if ay[0] == "const" else vals[ay[1]]
                try:
                    z = fn(x, y)
                except ZeroDivisionError:
                    raise VMError(f"division by zero in {ap.proc.key}")
                vals[zi] = z
                if m.depth:
                    m.trail.append((vals, zi))
                return True

            return run
        if op in ("lt", "le", "gt", "ge"):
            ax, ay = operand(a.args[0]), operand(a.args[1])
            import operator
            fn = {"lt": operator.lt, "le": operator.le, "gt": operator.gt,
                  "ge": operator.ge}[op]

            def run(env):
                vals = env[0]
                x = ax[1] if ax[0] == "const" else vals[ax[1]]
                y = ay[1] if ay[0] == "const" else vals[ay[1]]
                return fn(x, y)

            return run
        if op == "print":
            xi = operand(a.args[0])
            in_io = vmap[a.args[1]]
            out_io = vmap[a.args[2]]

            def run(env):
                vals = env[0]
                v = xi[1] if xi[0] == "const" else vals[xi[1]]
                m.out.append(render_value(v))
                vals[out_io] = vals[in_io] + 1
                if m.depth:
                    m.trail.append((vals, out_io))
                return True

            return run
        if op == "true":
            return lambda env: True
        if op == "fail":
            return lambda env: False
        raise AssertionError(op)

    def compile_call(self, ap, a: Call):
        caller_key = ap.proc.key
        callee_key = a.key
        callee = self.prog.procs[callee_key]
        callee_ap = self.ann.procs[callee_key]
        vmap, _ = self._layout(ap.proc)
        cmap, cregs = self._layout(callee)
        nvals = len(cmap)
        in_pairs = []
        out_pairs = []
        for formal, actual, mode in zip(callee.head_vars, a.args,
                                        callee.sig.arg_modes):
            if mode.value == "in":
                in_pairs.append((cmap[formal], vmap[actual]))
            else:
                out_pairs.append((vmap[actual], cmap[formal]))
        actuals = ap.call_actuals.get(a.point, [])
        born = self.ann.classification[callee_key].born
        reg_in = []
        reg_out = []
        for formal_node, actual_node in zip(callee_ap.region_params, actuals):
            fs = self.rslot(callee_key, formal_node)
            asl = self.rslot(caller_key, actual_node)
            if formal_node in born:
                reg_out.append((asl, fs))
            else:
                reg_in.append((fs, asl))
        m = self
        cell = self._cell(callee_key)
        callee_det = callee.sig.determinism.max_solutions <= 1
        limit = self.step_limit

        if callee_det:
            def run(env):
                m.steps += 1
                if m.steps > limit:
                    raise VMError(f"step limit exceeded ({limit})")
                cvals = [None] * nvals
                cregs_l = [None] * cregs
                vals = env[0]
                for fi, ai in in_pairs:
                    cvals[fi] = vals[ai]
                regs = env[1]
                for fi, ai in reg_in:
                    cregs_l[fi] = regs[ai]
                if not cell[0]((cvals, cregs_l)):
                    return False
                trail = m.trail if m.depth else None
                for ai, fi in out_pairs:
                    vals[ai] = cvals[fi]
                    if trail is not None:
                        trail.append((vals, ai))
                for ai, fi in reg_out:
                    regs[ai] = cregs_l[fi]
                return True

            return run

        def gen(env):
            m.steps += 1
            if m.steps > limit:
                raise VMError(f"step limit exceeded ({limit})")
            cvals = [None] * nvals
            cregs_l = [None] * cregs
            vals = env[0]
            for fi, ai in in_pairs:
                cvals[fi] = vals[ai]
            regs = env[1]
            for fi, ai in reg_in:
                cregs_l[fi] = regs[ai]
            for _ in cell[0]((cvals, cregs_l)):
                for ai, fi in out_pairs:
                    vals[ai] = cvals[fi]
                    m.trail.append((vals, ai))
                for ai, fi in reg_out:
                    regs[ai] = cregs_l[fi]
                yield

        return gen

    # -- compound goals ------------------------------------------------------------

    def _resolve_nodes(self, key: str, nodes):
        return [self.rslot(key, n) for n in nodes]

    def compile_disj(self, ap, g: Disj):
        key = ap.proc.key
        m = self
        mgr = self.mgr
        sup: GoalSupport = ap.goal_support[g.gid]
        if g.is_switch:
            return self.compile_switch(ap, g)
        branches = [(b.det.max_solutions <= 1, self.compile_goal(ap, b))
                    for b in g.goals]
        n = len(branches)
        if g.det.max_solutions <= 1:
            # semidet/det disjunction: commits to its first success
            snap_slots = self._resolve_nodes(key, sup.snapshot)
            prot_slots = self._resolve_nodes(key, sup.protect)
            needs = sup.needs_support

            def run(env):
                regs = env[1]
                frame = None
                if needs:
                    frame = mgr.disj_enter(
                        "semidet",
                        [regs[s] for s in snap_slots if regs[s] is not None],
                        [regs[s] for s in prot_slots if regs[s] is not None])
                for k, (bdet, bfn) in enumerate(branches):
                    if k > 0 and frame is not None:
                        mgr.disj_resume(frame, is_last=(k == n - 1))
                    mark = m.mark()
                    if bdet:
                        ok = bfn(env)
                    else:
                        ok = False
                        for _ in bfn(env):
                            ok = True
                            break
                    if ok:
                        m.release(mark)
                        if frame is not None and k < n - 1:
                            mgr.disj_succeed_nonlast(frame)
                        return True
                    m.undo(mark)
                return False

            return run

        snap_slots = self._resolve_nodes(key, sup.snapshot)

        def gen(env):
            regs = env[1]
            frame = mgr.disj_enter(
                "nondet",
                [regs[s] for s in snap_slots if regs[s] is not None])
            for k, (bdet, bfn) in enumerate(branches):
                if k > 0:
                    mgr.disj_resume(frame, is_last=(k == n - 1))
                mark = m.mark()
                if bdet:
                    if bfn(env):
                        yield
                else:
                    yield from bfn(env)
                m.undo(mark)

        return gen

    def compile_switch(self, ap, g: Disj):
        arms = []
        for b in g.goals:
            if isinstance(b, Conj):
                guard = b.goals[0]
                rest = b.goals[1:]
            else:
                guard, rest = b, []
            gfn = self.compile_atom(ap, guard)
            if rest:
                maxs = 1
                for sub in rest:
                    maxs = min(2, maxs * sub.det.max_solutions)
                rdet = maxs <= 1
                rparts = [(sub.det.max_solutions <= 1,
                           self.compile_goal(ap, sub)) for sub in rest]
                if rdet:
                    def make_run(parts):
                        def runrest(env):
                            for d, fn in parts:
                                if d:
                                    if not fn(env):
                                        return False
                                else:
                                    got = False
                                    for _ in fn(env):
                                        got = True
                                        break
                                    if not got:
                                        return False
                            return True
                        return runrest
                    arms.append((gfn, True, make_run(rparts)))
                else:
                    m = self

                    def make_gen(parts):
                        np = len(parts)

                        def rgen(env, k=0):
                            while k < np and parts[k][0]:
                                if not parts[k][1](env):
                                    return
                                k += 1
                            if k == np:
                                yield
                                return
                            for _ in parts[k][1](env):
                                mark = m.mark()
                                yield from rgen(env, k + 1)
                                m.undo(mark)
                        return rgen
                    arms.append((gfn, False, make_gen(rparts)))
            else:
                arms.append((gfn, True, None))
        if g.det.max_solutions <= 1:
            def run(env):
                for gfn, rdet, rest in arms:
                    if gfn(env):
                        if rest is None:
                            return True
                        if rdet:
                            return rest(env)
                        for _ in rest(env):
                            return True
                        return False
                return False

            return run

        def gen(env):
            for gfn, rdet, rest in arms:
                if gfn(env):
                    if rest is None:
                        yield
                    elif rdet:
                        if rest(env):
                            yield
                    else:
                        yield from rest(env)
                    return

        return gen

    def compile_ite(self, ap, g: IfThenElse):
        key = ap.proc.key
        m = self
        mgr = self.mgr
        sup: GoalSupport = ap.goal_support[g.gid]
        cond_det = g.cond.det.max_solutions <= 1
        cfn = self.compile_goal(ap, g.cond)
        tdet = g.then.det.max_solutions <= 1
        tfn = self.compile_goal(ap, g.then)
        edet = g.els.det.max_solutions <= 1
        efn = self.compile_goal(ap, g.els)
        prot_slots = self._resolve_nodes(key, sup.protect)
        snap_pairs = [(self.rslot(key, n), cond_flag)
                      for n, cond_flag in sup.ite_snapshot]
        needs = sup.needs_support
        negation = isinstance(g.then, Builtin) and g.then.op == "fail"

        def enter(env):
            if not needs:
                return None
            regs = env[1]
            return mgr.ite_enter(
                [regs[s] for s in prot_slots if regs[s] is not None],
                [(regs[s], c) for s, c in snap_pairs if regs[s] is not None])

        if g.det.max_solutions <= 1:
            if cond_det:
                def run(env):
                    frame = enter(env)
                    mark = m.mark()
                    ok = cfn(env)
                    if ok:
                        m.release(mark)
                        if frame is not None:
                            mgr.ite_then(frame, False)
                        if tdet:
                            return tfn(env)
                        for _ in tfn(env):
                            return True
                        return False
                    m.undo(mark)
                    if frame is not None:
                        mgr.ite_else(frame)
                    if edet:
                        return efn(env)
                    for _ in efn(env):
                        return True
                    return False

                return run

            def run(env):
                frame = enter(env)
                mark = m.mark()
                succeeded = False
                for _ in cfn(env):
                    succeeded = True
                    if frame is not None:
                        mgr.ite_then(frame, True)
                    if negation:
                        break
                    mark2 = m.mark()
                    if tfn(env) if tdet else any(True for _ in tfn(env)):
                        m.release(mark2)
                        m.release(mark)
                        if frame is not None:
                            mgr.ite_pop_after_success(frame)
                        return True
                    m.undo(mark2)
                m.undo(mark)
                if succeeded:
                    if frame is not None:
                        mgr.ite_pop_after_success(frame)
                    return False
                if frame is not None:
                    mgr.ite_else(frame)
                if edet:
                    return efn(env)
                for _ in efn(env):
                    return True
                return False

            return run

        def gen(env):
            frame = enter(env)
            if cond_det:
                mark = m.mark()
                if cfn(env):
                    m.release(mark)
                    if frame is not None:
                        mgr.ite_then(frame, False)
                    if tdet:
                        if tfn(env):
                            yield
                    else:
                        yield from tfn(env)
                    return
                m.undo(mark)
                if frame is not None:
                    mgr.ite_else(frame)
            else:
                mark = m.mark()
                succeeded = False
                for _ in cfn(env):
                    succeeded = True
                    if frame is not None:
                        mgr.ite_then(frame, True)
                    mark2 = m.mark()
                    if tdet:
                        if tfn(env):
                            yield
                    else:
                        yield from tfn(env)
                    m.undo(mark2)
                m.undo(mark)
                if succeeded:
                    if frame is not None:
                        mgr.ite_pop_after_success(frame)
                    return
                if frame is not None:
                    mgr.ite_else(frame)
            if edet:
                if efn(env):
                    yield
            else:
                yield from efn(env)

        return gen

    def compile_commit(self, ap, g: Some):
        key = ap.proc.key
        m = self
        mgr = self.mgr
        sup: GoalSupport = ap.goal_support[g.gid]
        prot_slots = self._resolve_nodes(key, sup.protect)
        inner = self.compile_goal(ap, g.goal)
        inner_det = g.goal.det.max_solutions <= 1

        def run(env):
            regs = env[1]
            frame = mgr.commit_enter(
                [regs[s] for s in prot_slots if regs[s] is not None])
            mark = m.mark()
            got = False
            if inner_det:
                got = inner(env)
            else:
                for _ in inner(env):
                    got = True
                    break
            if got:
                m.release(mark)
                mgr.commit_success(frame)
                return True
            m.undo(mark)
            mgr.commit_fail(frame)
            return False

        return run

    # -- running ---------------------------------------------------------------

    def _build_value(self, text: str, region):
        text = text.strip()
        if re.fullmatch(r"-?\d+", text):
            return int(text)
        if text == "[]":
            return "[]"
        mlist = re.fullmatch(r"\[(.*)\]", text)
        if mlist:
            items = [s for s in mlist.group(1).split(",") if s.strip()]
            val = "[]"
            for item in reversed(items):
                elem = self._build_value(item, region)
                idx = self.mgr.alloc(region, "[|]", (elem, val))
                val = HeapRef(region, idx)
            return val
        raise VMError(f"cannot parse argument {text!r}")

    def run(self, entry: str, args: list[str] | None = None,
            all_solutions: bool = False) -> RunResult:
        if entry not in self.prog.procs:
            # accept a bare name if unambiguous
            cands = [k for k in self.prog.procs if k.split("/")[0] == entry]
            if len(cands) != 1:
                raise VMError(f"no entry procedure {entry}")
            entry = cands[0]
        proc = self.prog.procs[entry]
        ap = self.ann.procs[entry]
        args = args or []
        in_modes = [m.value for m in proc.sig.arg_modes]
        n_in = sum(1 for mv in in_modes if mv == "in")
        io_token = 0

        top_frame = self.mgr.disj_enter("nondet", []) if all_solutions else None

        vmap, nregs = self._layout(proc)
        env = Env(len(vmap), nregs)
        g = self.ann.pointsto.graphs[entry]
        arg_i = 0
        arg_regions: dict[int, object] = {}
        for hv, mode, tname in zip(proc.head_vars, in_modes,
                                   proc.sig.arg_types):
            if mode != "in":
                continue
            if tname == "io":
                env[0][vmap[hv]] = io_token
                continue
            if arg_i >= len(args):
                raise VMError(f"missing argument for {hv}")
            text = args[arg_i]
            arg_i += 1
            if tname == "int":
                env[0][vmap[hv]] = self._build_value(text, None)
                continue
            node = g.maybe_node_of(hv)
            region = arg_regions.get(node)
            if region is None:
                region = self.mgr.create_region(label=f"arg:{hv}")
                arg_regions[node] = region
            env[0][vmap[hv]] = self._build_value(text, region)
        # bind non-born region parameters for the entry call
        born = self.ann.classification[entry].born
        for node in ap.region_params:
            if node in born:
                continue
            slot = self.rslot(entry, node)
            if env[1][slot] is not None:
                continue
            if node in arg_regions:
                env[1][slot] = arg_regions[node]
            elif node in ap.virtual:
                env[1][slot] = self.mgr.create_virtual_region("arg")
            else:
                env[1][slot] = self.mgr.create_region("arg")

        is_det, fn = self.executors[entry]
        outputs: list[str] = []
        solutions = 0

        def grab_outputs():
            outs = []
            for hv, mode, tname in zip(proc.head_vars, in_modes,
                                       proc.sig.arg_types):
                if mode == "out" and tname != "io":
                    outs.append(f"{hv} = {render_value(env[0][vmap[hv]])}")
            return outs

        if all_solutions:
            mark = self.mark()
            if is_det:
                if fn(env):
                    solutions = 1
            else:
                for _ in fn(env):
                    solutions += 1
            self.undo(mark)
            self.mgr.disj_resume(top_frame, is_last=True)
        else:
            frame = self.mgr.commit_enter(
                [env[1][self.rslot(entry, n)]
                 for n in self.ann.classification[entry].dead
                 if n in ap.region_params
                 and env[1][self.rslot(entry, n)] is not None])
            mark = self.mark()
            got = False
            if is_det:
                got = fn(env)
            else:
                for _ in fn(env):
                    got = True
                    break
            if got:
                self.release(mark)
                self.mgr.commit_success(frame)
                solutions = 1
                outputs = grab_outputs()
            else:
                self.undo(mark)
                self.mgr.commit_fail(frame)

        stats = self.mgr.stats
        stats.solutions = solutions
        stats.steps = self.steps
        return RunResult(solutions, outputs, stats, "".join(
            s + "\n" for s in self.out))


def run_program(ann: AnnotatedProgram, entry: str, args=None,
                all_solutions=False, check=False, step_limit=None,
                page_size=None, page_block=None, plain=False) -> RunResult:
    if plain:
        backend = PlainManager()
    else:
        kw = {}
        if page_size:
            kw["page_size"] = page_size
        if page_block:
            kw["page_block"] = page_block
        backend = RegionManager(check=check, **kw)
    m = Machine(ann, backend=backend, check=check, step_limit=step_limit)
    return m.run(entry, args, all_solutions)
