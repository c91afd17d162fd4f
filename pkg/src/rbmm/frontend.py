"""Frontend: declaration checking, superhomogeneous normalization, mode
ordering with unification specialization, determinism annotation, and
program-point assignment.

The pipeline is `parse_program` -> `normalize` -> `mode_order_and_annotate`;
`load_program` chains all three.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field

from . import parser as P
from .parser import SourceError, parse_source
from .syntax import (
    ArithExpr, BUILTINS, BUILTIN_TYPES, Builtin, Call, Clause, Conj, Det,
    DET_BY_NAME, Disj, Functor, IfThenElse, IntLit, Mode, Procedure, Program,
    ProcSignature, Some, Unify, UnifyKind, Var, atoms_of, call_in_out,
    det_conj, in_args, int_like, out_args,
)


class ModeError(SourceError):
    pass


class DeterminismError(SourceError):
    pass


class TypeError_(SourceError):
    pass


class _NotSchedulable(Exception):
    def __init__(self, missing: set[str]):
        self.missing = missing


RESERVED_PREDS = set(BUILTINS) | {"if", "then", "else", "not", "some", "is"}


# ---------------------------------------------------------------------------
# stage 1: parse + declaration resolution

def parse_program(text: str, filename: str = "<src>") -> Program:
    """Parse source and resolve declarations; bodies stay in clause form."""
    raw = parse_source(text, filename)

    for tname, tdef in raw.types.items():
        if tname in BUILTIN_TYPES:
            raise TypeError_(f"type {tname} is builtin", tdef.line, 1, filename)
        for f, args in tdef.constructors:
            for a in args:
                if a not in raw.types and a not in BUILTIN_TYPES:
                    raise TypeError_(f"unknown type {a} in constructor {f} of {tname}",
                                     tdef.line, 1, filename)

    procs: dict[str, Procedure] = {}
    for key, (types, line) in raw.pred_decls.items():
        name = key.split("/")[0]
        if name in RESERVED_PREDS:
            raise SourceError(f"{name} is reserved", line, 1, filename)
        if key not in raw.mode_decls:
            raise ModeError(f"missing mode declaration for {key}", line, 1, filename)
        modes, detname, _ = raw.mode_decls[key]
        if len(modes) != len(types):
            raise ModeError(f"mode/pred arity mismatch for {key}", line, 1, filename)
        for t in types:
            if t not in raw.types and t not in BUILTIN_TYPES:
                raise TypeError_(f"unknown type {t} in declaration of {key}",
                                 line, 1, filename)
        sig = ProcSignature(name, len(types), list(types),
                            [Mode(m) for m in modes], DET_BY_NAME[detname], line)
        procs[key] = Procedure(sig, [], None, {})
    for key, (_, _, line) in raw.mode_decls.items():
        if key not in raw.pred_decls:
            raise ModeError(f"mode declaration for undeclared predicate {key}",
                            line, 1, filename)

    clause_map: dict[str, list[Clause]] = {k: [] for k in procs}
    for cl in raw.clauses:
        key = f"{cl.name}/{len(cl.head)}"
        if key not in procs:
            raise SourceError(f"undeclared predicate {key}", cl.line, 1, filename)
        clause_map[key].append(cl)
        _check_called_preds(cl.body, procs, filename)
    for key, cls in clause_map.items():
        if not cls:
            raise SourceError(f"no clauses for declared predicate {key}",
                              procs[key].sig.line, 1, filename)
        procs[key].clauses = cls  # type: ignore[attr-defined]

    return Program(dict(raw.types), procs, filename)


def _check_called_preds(body, procs, filename):
    if body is None:
        return
    if isinstance(body, P.RawCall):
        if body.name in BUILTINS:
            ins, outs = BUILTINS[body.name]
            if len(body.args) != len(ins) + len(outs):
                raise SourceError(f"builtin {body.name} takes {len(ins) + len(outs)} "
                                  f"arguments", body.line, body.col, filename)
            return
        key = f"{body.name}/{len(body.args)}"
        if key not in procs:
            raise SourceError(f"undeclared predicate {key}", body.line, body.col,
                              filename)
    elif isinstance(body, P.RawConj):
        for g in body.goals:
            _check_called_preds(g, procs, filename)
    elif isinstance(body, P.RawDisj):
        for g in body.goals:
            _check_called_preds(g, procs, filename)
    elif isinstance(body, P.RawIte):
        for g in (body.cond, body.then, body.els):
            _check_called_preds(g, procs, filename)
    elif isinstance(body, (P.RawNot, P.RawSome)):
        _check_called_preds(body.goal, procs, filename)


# ---------------------------------------------------------------------------
# stage 2: normalization to superhomogeneous form

class _Fresh:
    def __init__(self, taken: set[str]):
        self.taken = set(taken)
        self.n = 0

    def __call__(self, prefix: str = "V") -> str:
        while True:
            name = f"{prefix}_{self.n}"
            self.n += 1
            if name not in self.taken:
                self.taken.add(name)
                return name


def _term_vars(t, acc: set[str]):
    if isinstance(t, Var):
        acc.add(t.name)
    elif isinstance(t, Functor):
        for a in t.args:
            _term_vars(a, acc)
    elif isinstance(t, ArithExpr):
        _term_vars(t.lhs, acc)
        _term_vars(t.rhs, acc)


def _goal_vars(g, acc: set[str]):
    if g is None:
        return
    if isinstance(g, P.RawUnify):
        _term_vars(g.lhs, acc)
        _term_vars(g.rhs, acc)
    elif isinstance(g, P.RawCall):
        for a in g.args:
            _term_vars(a, acc)
    elif isinstance(g, (P.RawConj, P.RawDisj)):
        for sub in g.goals:
            _goal_vars(sub, acc)
    elif isinstance(g, P.RawIte):
        for sub in (g.cond, g.then, g.els):
            _goal_vars(sub, acc)
    elif isinstance(g, (P.RawNot, P.RawSome)):
        if isinstance(g, P.RawSome):
            acc.update(g.vars)
        _goal_vars(g.goal, acc)


def _rename_term(t, ren: dict[str, str], fresh: _Fresh):
    if isinstance(t, Var):
        if t.name == "_":
            return Var(fresh("_G"))
        return Var(ren.get(t.name, t.name))
    if isinstance(t, Functor):
        return Functor(t.name, tuple(_rename_term(a, ren, fresh) for a in t.args))
    if isinstance(t, ArithExpr):
        return ArithExpr(t.op, _rename_term(t.lhs, ren, fresh),
                         _rename_term(t.rhs, ren, fresh))
    return t


def _rename_goal(g, ren: dict[str, str], fresh: _Fresh):
    if g is None:
        return None
    if isinstance(g, P.RawUnify):
        return P.RawUnify(g.op, _rename_term(g.lhs, ren, fresh),
                          _rename_term(g.rhs, ren, fresh), g.line, g.col)
    if isinstance(g, P.RawCall):
        return P.RawCall(g.name, [_rename_term(a, ren, fresh) for a in g.args],
                         g.line, g.col)
    if isinstance(g, P.RawConj):
        return P.RawConj([_rename_goal(s, ren, fresh) for s in g.goals])
    if isinstance(g, P.RawDisj):
        return P.RawDisj([_rename_goal(s, ren, fresh) for s in g.goals])
    if isinstance(g, P.RawIte):
        return P.RawIte(_rename_goal(g.cond, ren, fresh),
                        _rename_goal(g.then, ren, fresh),
                        _rename_goal(g.els, ren, fresh))
    if isinstance(g, P.RawNot):
        return P.RawNot(_rename_goal(g.goal, ren, fresh))
    if isinstance(g, P.RawSome):
        return P.RawSome(list(g.vars), _rename_goal(g.goal, ren, fresh))
    raise TypeError(g)


def _pick_head_names(clauses: list[Clause], arity: int) -> list[str]:
    names: list[str] = []
    for k in range(arity):
        chosen = None
        for cl in clauses:
            pat = cl.head[k]
            if isinstance(pat, Var) and pat.name != "_" and pat.name not in names:
                # a name is usable only if that clause does not bind it twice
                if sum(1 for p in cl.head if isinstance(p, Var) and p.name == pat.name) == 1:
                    chosen = pat.name
                    break
        if chosen is None:
            chosen = f"HV_{k + 1}"
            while chosen in names:
                chosen += "_"
        names.append(chosen)
    return names


class _Normalizer:
    """Flattens one procedure's clauses into a single superhomogeneous body."""

    def __init__(self, prog: Program, proc: Procedure, filename: str):
        self.prog = prog
        self.proc = proc
        self.filename = filename

    def run(self):
        proc = self.proc
        clauses: list[Clause] = proc.clauses  # type: ignore[attr-defined]
        arity = proc.sig.arity
        head_names = _pick_head_names(clauses, arity)

        taken: set[str] = set(head_names)
        for cl in clauses:
            acc: set[str] = set()
            for t in cl.head:
                _term_vars(t, acc)
            _goal_vars(cl.body, acc)
            taken |= acc
        self.fresh = _Fresh(taken)

        bodies = [self.normalize_clause(cl, head_names) for cl in clauses]
        body = bodies[0] if len(bodies) == 1 else Disj(bodies)
        proc.head_vars = head_names
        proc.body = body
        return proc

    def normalize_clause(self, cl: Clause, head_names: list[str]):
        # alpha-rename clause vars that collide with head names they don't own
        clause_vars: set[str] = set()
        for t in cl.head:
            _term_vars(t, clause_vars)
        _goal_vars(cl.body, clause_vars)

        ren: dict[str, str] = {}
        for k, pat in enumerate(cl.head):
            if isinstance(pat, Var) and pat.name != "_" and pat.name not in ren:
                if pat.name == head_names[k] or (
                    pat.name not in head_names
                    and sum(1 for p in cl.head
                            if isinstance(p, Var) and p.name == pat.name) == 1
                ):
                    # this variable becomes (or already is) a usable name; map
                    # it onto the head variable for its first position
                    ren[pat.name] = head_names[k]
        for v in sorted(clause_vars):
            if v in head_names and ren.get(v) != v and v not in ren:
                ren[v] = self.fresh(v)

        voids = [isinstance(t, Var) and t.name == "_" for t in cl.head]
        head = [_rename_term(t, ren, self.fresh) for t in cl.head]
        body = _rename_goal(cl.body, ren, self.fresh)

        pre: list = []    # head unifications for input args
        post: list = []   # head unifications for output args
        seen: set[str] = set()
        for k, pat in enumerate(head):
            hv = head_names[k]
            if voids[k]:
                continue  # a void argument places no constraint on the clause
            target = pre if self.proc.sig.arg_modes[k] is Mode.IN else post
            if isinstance(pat, Var) and pat.name == hv and hv not in seen:
                seen.add(hv)
                continue
            goals: list = []
            self.flatten_unify("=", Var(hv), pat, goals, cl.line, 0)
            target.extend(goals)
            seen.add(hv)

        goals: list = list(pre)
        if body is not None:
            self.flatten_goal(body, goals)
        goals.extend(post)
        return goals[0] if len(goals) == 1 else Conj(goals)

    # -- goal flattening -----------------------------------------------------

    def flatten_goal(self, g, out: list):
        if isinstance(g, P.RawConj):
            for sub in g.goals:
                self.flatten_goal(sub, out)
        elif isinstance(g, P.RawDisj):
            out.append(Disj([self.flatten_subtree(b) for b in g.goals]))
        elif isinstance(g, P.RawIte):
            out.append(IfThenElse(self.flatten_subtree(g.cond),
                                  self.flatten_subtree(g.then),
                                  self.flatten_subtree(g.els)))
        elif isinstance(g, P.RawNot):
            # not G  ==>  if G then fail else true
            out.append(IfThenElse(self.flatten_subtree(g.goal),
                                  Builtin("fail", []), Builtin("true", [])))
        elif isinstance(g, P.RawSome):
            out.append(Some(list(g.vars), self.flatten_subtree(g.goal)))
        elif isinstance(g, P.RawCall):
            if g.name in BUILTINS:
                args = [self.operand(a, out, g) for a in g.args]
                b = Builtin(g.name, args)
                b.line = g.line  # type: ignore[attr-defined]
                out.append(b)
            else:
                args = [self.force_var(a, out, g) for a in g.args]
                c = Call(g.name, args)
                c.line = g.line  # type: ignore[attr-defined]
                out.append(c)
        elif isinstance(g, P.RawUnify):
            if g.op == "\\=":
                eq: list = []
                self.flatten_unify("==", g.lhs, g.rhs, eq, g.line, g.col)
                inner = eq[0] if len(eq) == 1 else Conj(eq)
                out.append(IfThenElse(inner, Builtin("fail", []), Builtin("true", [])))
            else:
                self.flatten_unify(g.op, g.lhs, g.rhs, out, g.line, g.col)
        else:
            raise TypeError(g)

    def flatten_subtree(self, g):
        out: list = []
        self.flatten_goal(g, out)
        if not out:
            return Builtin("true", [])
        return out[0] if len(out) == 1 else Conj(out)

    def flatten_unify(self, op: str, lhs, rhs, out: list, line: int, col: int):
        if not isinstance(lhs, Var) and isinstance(rhs, Var):
            lhs, rhs = rhs, lhs
        if not isinstance(lhs, Var):
            raise ModeError("one side of a unification must be a variable",
                            line, col, self.filename)
        x = lhs.name
        if isinstance(rhs, Var):
            kind = {"=": UnifyKind.GENERAL, ":=": UnifyKind.ASSIGN,
                    "==": UnifyKind.TEST}.get(op)
            if kind is None:
                raise ModeError(f"operator {op} needs a compound right side",
                                line, col, self.filename)
            u = Unify(kind, x, rhs_var=rhs.name)
            u.src_op = op  # type: ignore[attr-defined]
            u.line = line  # type: ignore[attr-defined]
            out.append(u)
            return
        if isinstance(rhs, ArithExpr):
            if op not in ("=", ":="):
                raise ModeError(f"arithmetic not allowed with {op}",
                                line, col, self.filename)
            v = self.flatten_arith(rhs, out)
            if isinstance(v, int):
                v = self.emit_const(v, out)
            u = Unify(UnifyKind.GENERAL, x, rhs_var=v)
            u.src_op = op  # type: ignore[attr-defined]
            u.line = line  # type: ignore[attr-defined]
            out.append(u)
            return
        if isinstance(rhs, IntLit):
            u = Unify(UnifyKind.GENERAL, x, functor=str(rhs.value))
            u.src_op = op  # type: ignore[attr-defined]
            u.line = line  # type: ignore[attr-defined]
            out.append(u)
            return
        # functor: flatten constructor arguments right-to-left (tail first)
        if op not in ("=", "<=", "=>", "=="):
            raise ModeError(f"operator {op} cannot take a compound term",
                            line, col, self.filename)
        argvars: list[str] = [None] * len(rhs.args)  # type: ignore[list-item]
        for i in range(len(rhs.args) - 1, -1, -1):
            argvars[i] = self.force_var(rhs.args[i], out, None, line)
        kind = {"=": UnifyKind.GENERAL, "<=": UnifyKind.CONSTRUCT,
                "=>": UnifyKind.DECONSTRUCT, "==": UnifyKind.GENERAL}[op]
        u = Unify(kind, x, functor=rhs.name, args=argvars)
        u.src_op = op  # type: ignore[attr-defined]
        u.line = line  # type: ignore[attr-defined]
        out.append(u)

    def flatten_arith(self, e, out: list):
        """Returns a variable name or a literal int operand."""
        if isinstance(e, IntLit):
            return e.value
        if isinstance(e, Var):
            if e.name == "_":
                raise ModeError("_ cannot appear in arithmetic", 0, 0, self.filename)
            return e.name
        if isinstance(e, ArithExpr):
            a = self.flatten_arith(e.lhs, out)
            b = self.flatten_arith(e.rhs, out)
            v = self.fresh()
            out.append(Builtin(e.op, [a, b, v]))
            return v
        raise ModeError("invalid arithmetic operand", 0, 0, self.filename)

    def operand(self, t, out: list, g):
        """Builtin operand: a variable name or an int literal."""
        if isinstance(t, IntLit):
            return t.value
        if isinstance(t, Var):
            if t.name == "_":
                return self.fresh("_G")
            return t.name
        if isinstance(t, ArithExpr):
            return self.flatten_arith(t, out)
        # compound term operand: build it first
        return self.force_var(t, out, g)

    def emit_const(self, value: int, out: list) -> str:
        v = self.fresh()
        out.append(Unify(UnifyKind.GENERAL, v, functor=str(value)))
        return v

    def force_var(self, t, out: list, g, line: int = 0) -> str:
        """Flattens a term to a variable, emitting construction chains."""
        if isinstance(t, Var):
            if t.name == "_":
                return self.fresh("_G")
            return t.name
        if isinstance(t, IntLit):
            v = self.fresh()
            out.append(Unify(UnifyKind.GENERAL, v, functor=str(t.value)))
            return v
        if isinstance(t, ArithExpr):
            r = self.flatten_arith(t, out)
            if isinstance(r, int):
                return self.emit_const(r, out)
            return r
        if isinstance(t, Functor):
            argvars: list[str] = [None] * len(t.args)  # type: ignore[list-item]
            for i in range(len(t.args) - 1, -1, -1):
                argvars[i] = self.force_var(t.args[i], out, g, line)
            v = self.fresh()
            out.append(Unify(UnifyKind.GENERAL, v, functor=t.name, args=argvars))
            return v
        raise TypeError(t)


def normalize(prog: Program) -> Program:
    """Merge clauses into one disjunction per procedure and flatten all
    compound-term unifications; `not` becomes if-then-else."""
    for proc in prog.procs.values():
        _Normalizer(prog, proc, prog.filename).run()
    return prog


# ---------------------------------------------------------------------------
# stage 3: mode ordering, specialization, determinism, program points

class _Order:
    def __init__(self, prog: Program, proc: Procedure, filename: str):
        self.prog = prog
        self.proc = proc
        self.filename = filename
        taken: set[str] = set(proc.head_vars)
        for a in atoms_of(proc.body):
            taken |= self.atom_vars(a)
        self.fresh = _Fresh(taken)

    @staticmethod
    def atom_vars(atom) -> set[str]:
        if isinstance(atom, Unify):
            vs = {atom.lhs} | set(atom.args)
            if atom.rhs_var:
                vs.add(atom.rhs_var)
            return vs
        if isinstance(atom, Call):
            return set(atom.args)
        if isinstance(atom, Builtin):
            return {a for a in atom.args if isinstance(a, str)}
        return set()

    def err(self, msg: str, g=None):
        line = getattr(g, "line", 0) or self.proc.sig.line
        raise ModeError(msg, line, 0, self.filename)

    def run(self):
        bound = set(self.proc.head_in_vars())
        body, outs = self.order_goal(self.proc.body, bound)
        missing = self.proc.head_out_vars() - (bound | outs)
        if missing:
            self.err(f"output arguments never produced in {self.proc.key}: "
                     f"{', '.join(sorted(missing))}")
        self.proc.body = body
        return self.proc

    # -- scheduling -----------------------------------------------------------

    def order_goal(self, g, bound: set[str]):
        """Returns (goal, outs). Raises _NotSchedulable when inputs are
        missing, ModeError on hard mode violations."""
        if isinstance(g, Conj):
            goals, outs = self.order_conj(g.goals, bound)
            return (goals[0] if len(goals) == 1 else Conj(goals)), outs
        if isinstance(g, (Unify, Call, Builtin)):
            goals, outs = self.order_conj([g], bound)
            return (goals[0] if len(goals) == 1 else Conj(goals)), outs
        if isinstance(g, Disj):
            branches, out_sets = [], []
            for b in g.goals:
                nb, o = self.order_goal(b, set(bound))
                branches.append(nb)
                out_sets.append(o)
            common = set.intersection(*out_sets) if out_sets else set()
            nd = Disj(branches)
            return nd, common
        if isinstance(g, IfThenElse):
            cond, couts = self.order_goal(g.cond, set(bound))
            then, touts = self.order_goal(g.then, bound | couts)
            els, eouts = self.order_goal(g.els, set(bound))
            return IfThenElse(cond, then, els), (couts | touts) & eouts
        if isinstance(g, Some):
            inner, outs = self.order_goal(g.goal, set(bound))
            ns = Some(list(g.vars), inner)
            return ns, outs - set(g.vars)
        raise TypeError(g)

    def order_conj(self, goals: list, bound: set[str]):
        remaining = list(goals)
        ordered: list = []
        outs: set[str] = set()
        while remaining:
            progress = False
            last_missing: set[str] = set()
            for i, g in enumerate(remaining):
                try:
                    if isinstance(g, (Unify, Call, Builtin)):
                        emitted, o = self.order_atom(g, bound)
                        ordered.extend(emitted)
                    else:
                        ng, o = self.order_goal(g, bound)
                        ordered.append(ng)
                except _NotSchedulable as e:
                    last_missing |= e.missing
                    continue
                bound |= o
                outs |= o
                remaining.pop(i)
                progress = True
                break
            if not progress:
                self.err("cannot order conjunction; variables consumed but never "
                         f"produced: {', '.join(sorted(last_missing))}",
                         remaining[0] if remaining else None)
        return ordered, outs

    def order_atom(self, g, bound: set[str]):
        if isinstance(g, Call):
            return self.order_call(g, bound)
        if isinstance(g, Builtin):
            return self.order_builtin(g, bound)
        return self.order_unify(g, bound)

    def order_unify(self, g: Unify, bound: set[str]):
        src = getattr(g, "src_op", "=")
        if g.functor is None:
            x, y = g.lhs, g.rhs_var
            if g.kind is UnifyKind.ASSIGN:
                if y not in bound:
                    raise _NotSchedulable({y})
                if x in bound:
                    self.err(f"variable {x} has two producers", g)
                return [self.mk(UnifyKind.ASSIGN, x, rhs=y, like=g)], {x}
            if g.kind is UnifyKind.TEST:
                missing = {v for v in (x, y) if v not in bound}
                if missing:
                    raise _NotSchedulable(missing)
                return [self.mk(UnifyKind.TEST, x, rhs=y, like=g)], set()
            # general var-var
            if x in bound and y in bound:
                return [self.mk(UnifyKind.TEST, x, rhs=y, like=g)], set()
            if y in bound:
                return [self.mk(UnifyKind.ASSIGN, x, rhs=y, like=g)], {x}
            if x in bound:
                return [self.mk(UnifyKind.ASSIGN, y, rhs=x, like=g)], {y}
            raise _NotSchedulable({x, y})
        # functor form
        x = g.lhs
        if g.kind is UnifyKind.CONSTRUCT or (
            g.kind is UnifyKind.GENERAL and x not in bound
        ):
            missing = {a for a in g.args if a not in bound}
            if missing:
                raise _NotSchedulable(missing)
            if x in bound:
                self.err(f"variable {x} has two producers", g)
            if src == "==":
                self.err("== requires both sides bound", g)
            pre: list = []
            args: list[str] = []
            used: set[str] = set()
            for a in g.args:
                if a in used:
                    f = self.fresh()
                    pre.append(self.mk(UnifyKind.ASSIGN, f, rhs=a, like=g))
                    args.append(f)
                else:
                    used.add(a)
                    args.append(a)
            return pre + [self.mk(UnifyKind.CONSTRUCT, x, functor=g.functor,
                                  args=args, like=g)], {x}
        if g.kind is UnifyKind.DECONSTRUCT or (
            g.kind is UnifyKind.GENERAL and x in bound
        ):
            if x not in bound:
                raise _NotSchedulable({x})
            post: list = []
            args: list[str] = []
            used: set[str] = set()
            for a in g.args:
                if a in bound or a in used:
                    f = self.fresh()
                    post.append(self.mk(UnifyKind.TEST, a, rhs=f, like=g))
                    args.append(f)
                    used.add(f)
                else:
                    used.add(a)
                    args.append(a)
            outs = {a for a in args if a not in bound}
            return [self.mk(UnifyKind.DECONSTRUCT, x, functor=g.functor,
                            args=args, like=g)] + post, outs - {x}
        raise _NotSchedulable({x})

    def order_call(self, g: Call, bound: set[str]):
        sig = self.prog.procs[g.key].sig
        missing = {a for a, m in zip(g.args, sig.arg_modes)
                   if m is Mode.IN and a not in bound}
        if missing:
            raise _NotSchedulable(missing)
        pre: list = []
        args: list[str] = []
        used: set[str] = set()
        outs: set[str] = set()
        for a, m in zip(g.args, sig.arg_modes):
            if m is Mode.IN:
                if a in used:
                    f = self.fresh()
                    pre.append(self.mk(UnifyKind.ASSIGN, f, rhs=a, like=g))
                    args.append(f)
                else:
                    used.add(a)
                    args.append(a)
            else:
                if a in bound or a in used:
                    self.err(f"output argument {a} of call to {g.key} is "
                             "already bound", g)
                used.add(a)
                args.append(a)
                outs.add(a)
        nc = Call(g.name, args)
        nc.line = getattr(g, "line", 0)  # type: ignore[attr-defined]
        return pre + [nc], outs

    def order_builtin(self, g: Builtin, bound: set[str]):
        ins, outidx = BUILTINS[g.op]
        missing = {g.args[i] for i in ins
                   if isinstance(g.args[i], str) and g.args[i] not in bound}
        if missing:
            raise _NotSchedulable(missing)
        args = list(g.args)
        post: list = []
        outs: set[str] = set()
        for i in outidx:
            a = args[i]
            if a in bound:
                f = self.fresh()
                post.append(self.mk(UnifyKind.TEST, a, rhs=f, like=g))
                args[i] = f
            else:
                outs.add(a)
        nb = Builtin(g.op, args)
        nb.line = getattr(g, "line", 0)  # type: ignore[attr-defined]
        return [nb] + post, outs

    def mk(self, kind, lhs, rhs=None, functor=None, args=None, like=None):
        u = Unify(kind, lhs, rhs_var=rhs, functor=functor, args=args or [])
        u.line = getattr(like, "line", 0)  # type: ignore[attr-defined]
        return u


# ---------------------------------------------------------------------------
# the program-level pipeline

def atom_ins_outs(atom, prog: Program) -> tuple[set[str], set[str]]:
    if isinstance(atom, Call):
        return call_in_out(atom, prog.procs[atom.key].sig)
    return in_args(atom), out_args(atom)


def _eliminate_unused(prog: Program, proc: Procedure):
    changed = True
    while changed:
        changed = False
        used = Counter()
        for a in atoms_of(proc.body):
            ins, _ = atom_ins_outs(a, prog)
            for v in ins:
                used[v] += 1
        for v in proc.head_out_vars():
            used[v] += 1

        def prune(g):
            nonlocal changed
            if isinstance(g, Conj):
                kept = []
                for sub in g.goals:
                    p = prune(sub)
                    if p is not None:
                        kept.append(p)
                if len(kept) < len(g.goals):
                    changed = True
                if not kept:
                    return Builtin("true", [])
                return kept[0] if len(kept) == 1 else Conj(kept)
            if isinstance(g, Disj):
                g.goals = [prune(s) or Builtin("true", []) for s in g.goals]
                return g
            if isinstance(g, IfThenElse):
                g.cond = prune(g.cond) or Builtin("true", [])
                g.then = prune(g.then) or Builtin("true", [])
                g.els = prune(g.els) or Builtin("true", [])
                return g
            if isinstance(g, Some):
                g.goal = prune(g.goal) or Builtin("true", [])
                return g
            if (isinstance(g, Unify) and g.kind is UnifyKind.CONSTRUCT
                    and used[g.lhs] == 0):
                changed = True
                return None
            return g

        proc.body = prune(proc.body) or Builtin("true", [])


# -- local type inference -----------------------------------------------------

def _infer_types(prog: Program, proc: Procedure):
    types: dict[str, str] = dict(zip(proc.head_vars, proc.sig.arg_types))
    functor_index: dict[tuple[str, int], list[str]] = {}
    for tname, tdef in prog.types.items():
        for f, args in tdef.constructors:
            functor_index.setdefault((f, len(args)), []).append(tname)

    def note(v: str, t: str, where):
        old = types.get(v)
        if old is None:
            types[v] = t
            return True
        if old != t:
            raise TypeError_(f"variable {v} used at type {t} but has type {old}",
                             getattr(where, "line", 0), 0, prog.filename)
        return False

    atoms = atoms_of(proc.body)
    changed = True
    while changed:
        changed = False
        for a in atoms:
            if isinstance(a, Call):
                sig = prog.procs[a.key].sig
                for v, t in zip(a.args, sig.arg_types):
                    changed |= note(v, t, a)
            elif isinstance(a, Builtin):
                ins, outs = BUILTINS[a.op]
                if a.op == "print":
                    changed |= note(a.args[1], "io", a)
                    changed |= note(a.args[2], "io", a)
                else:
                    for i in itertools.chain(ins, outs):
                        if isinstance(a.args[i], str):
                            changed |= note(a.args[i], "int", a)
            elif isinstance(a, Unify):
                if a.functor is not None:
                    if int_like(a.functor):
                        changed |= note(a.lhs, "int", a)
                        continue
                    t = types.get(a.lhs)
                    if t is None:
                        cands = functor_index.get((a.functor, len(a.args)), [])
                        if len(cands) == 1:
                            t = cands[0]
                            changed |= note(a.lhs, t, a)
                        else:
                            continue
                    tdef = prog.types.get(t)
                    if tdef is None:
                        raise TypeError_(f"type {t} has no constructors "
                                         f"(functor {a.functor})",
                                         getattr(a, "line", 0), 0, prog.filename)
                    argtypes = None
                    for f, ats in tdef.constructors:
                        if f == a.functor and len(ats) == len(a.args):
                            argtypes = ats
                            break
                    if argtypes is None:
                        raise TypeError_(
                            f"type {t} has no constructor {a.functor}/"
                            f"{len(a.args)}", getattr(a, "line", 0), 0,
                            prog.filename)
                    for v, at in zip(a.args, argtypes):
                        changed |= note(v, at, a)
                else:
                    tl, tr = types.get(a.lhs), types.get(a.rhs_var)
                    if tl and not tr:
                        changed |= note(a.rhs_var, tl, a)
                    elif tr and not tl:
                        changed |= note(a.lhs, tr, a)
                    elif tl and tr and tl != tr:
                        raise TypeError_(
                            f"unification of {a.lhs}:{tl} with "
                            f"{a.rhs_var}:{tr}", getattr(a, "line", 0), 0,
                            prog.filename)

    allvars: set[str] = set(proc.head_vars)
    for a in atoms:
        allvars |= _Order.atom_vars(a)
    unresolved = sorted(v for v in allvars if v not in types)
    if unresolved:
        raise TypeError_(f"cannot infer type of {', '.join(unresolved)} in "
                         f"{proc.key}", proc.sig.line, 0, prog.filename)
    proc.var_types = types


# -- determinism --------------------------------------------------------------

def _switch_info(prog: Program, proc: Procedure, d: Disj):
    """A switch deconstructs one variable with pairwise-distinct functors at
    the head of every disjunct."""
    var = None
    functors: list[str] = []
    for b in d.goals:
        first = b.goals[0] if isinstance(b, Conj) else b
        if not (isinstance(first, Unify) and first.kind is UnifyKind.DECONSTRUCT):
            return None
        if var is None:
            var = first.lhs
        elif first.lhs != var:
            return None
        if first.functor in functors:
            return None
        functors.append(first.functor)
    t = proc.var_types.get(var)
    tdef = prog.types.get(t) if t else None
    exhaustive = tdef is not None and set(functors) == {f for f, _ in
                                                        tdef.constructors}
    return var, exhaustive


def _escaping_outs(prog: Program, proc: Procedure, total: Counter, g) -> set[str]:
    """Outputs of a goal that are visible outside it: used beyond the goal's
    own atoms or returned by the procedure."""
    sub = Counter()
    for a in atoms_of(g):
        for v in _Order.atom_vars(a):
            sub[v] += 1
    out: set[str] = set()
    head = set(proc.head_vars)
    for v in _goal_outs(prog, g):
        if v in head or total[v] > sub[v]:
            out.add(v)
    return out


def _annotate_det(prog: Program, proc: Procedure, g, total: Counter) -> Det:
    if isinstance(g, Unify):
        if g.kind in (UnifyKind.ASSIGN, UnifyKind.CONSTRUCT):
            d = Det(False, 1)
        elif g.kind is UnifyKind.TEST:
            d = Det(True, 1)
        else:  # deconstruct: det when the type has a single constructor
            t = proc.var_types[g.lhs]
            tdef = prog.types.get(t)
            single = tdef is not None and len(tdef.constructors) == 1
            d = Det(not single, 1)
    elif isinstance(g, Call):
        d = prog.procs[g.key].sig.determinism
    elif isinstance(g, Builtin):
        if g.op == "fail":
            d = Det(True, 0)
        elif g.op in ("lt", "le", "gt", "ge"):
            d = Det(True, 1)
        else:
            d = Det(False, 1)
    elif isinstance(g, Conj):
        d = Det(False, 1)
        for sub in g.goals:
            d = det_conj(d, _annotate_det(prog, proc, sub, total))
    elif isinstance(g, Disj):
        subs = [_annotate_det(prog, proc, b, total) for b in g.goals]
        info = _switch_info(prog, proc, g)
        if info is not None:
            g.is_switch = True
            g.switch_var = info[0]
            exhaustive = info[1]
            # the guard deconstruction selects the arm; exhaustiveness covers
            # its failure, so arm determinism counts only the rest of the arm
            rests = []
            for b in g.goals:
                if isinstance(b, Conj):
                    d = Det(False, 1)
                    for sub in b.goals[1:]:
                        d = det_conj(d, sub.det)
                    rests.append(d)
                else:
                    rests.append(Det(False, 1))
            can_fail = (not exhaustive) or any(s.can_fail for s in rests)
            # arms are mutually exclusive, so solutions do not add up
            d = Det(can_fail, max(s.max_solutions for s in rests))
        else:
            outs = _escaping_outs(prog, proc, total, g)
            if not outs:
                # no visible outputs: solutions are indistinguishable, so the
                # disjunction commits to its first success
                d = Det(all(s.can_fail for s in subs),
                        0 if all(s.max_solutions == 0 for s in subs) else 1)
            else:
                d = Det(all(s.can_fail for s in subs),
                        0 if all(s.max_solutions == 0 for s in subs) else 2)
    elif isinstance(g, IfThenElse):
        dc = _annotate_det(prog, proc, g.cond, total)
        dt = _annotate_det(prog, proc, g.then, total)
        de = _annotate_det(prog, proc, g.els, total)
        can_fail = dt.can_fail or (dc.can_fail and de.can_fail)
        maxs = min(2, max(dc.max_solutions * dt.max_solutions,
                          de.max_solutions))
        d = Det(can_fail, maxs)
    elif isinstance(g, Some):
        d = _annotate_det(prog, proc, g.goal, total)
        # the commit flag is set in a separate pass; refined there
    else:
        raise TypeError(g)
    g.det = d
    return d


def _goal_outs(prog: Program, g) -> set[str]:
    """Union of output variables over a goal tree (an over-approximation for
    disjunctions, which is fine for the uses below)."""
    outs: set[str] = set()
    for a in atoms_of(g):
        _, o = atom_ins_outs(a, prog)
        outs |= o
    return outs


def _set_commit_flags(prog: Program, proc: Procedure):
    total = Counter()
    for a in atoms_of(proc.body):
        for v in _Order.atom_vars(a):
            total[v] += 1

    def walk(g):
        if isinstance(g, Conj):
            for s in g.goals:
                walk(s)
        elif isinstance(g, Disj):
            for s in g.goals:
                walk(s)
        elif isinstance(g, IfThenElse):
            walk(g.cond)
            walk(g.then)
            walk(g.els)
        elif isinstance(g, Some):
            walk(g.goal)
            inner_det = g.goal.det
            if inner_det.max_solutions >= 2:
                sub = Counter()
                for a in atoms_of(g.goal):
                    for v in _Order.atom_vars(a):
                        sub[v] += 1
                escaping = set()
                for v in _goal_outs(prog, g.goal):
                    if v in g.vars:
                        continue
                    if total[v] > sub[v] or v in proc.head_vars:
                        escaping.add(v)
                if not escaping:
                    g.commit = True
                    g.det = Det(inner_det.can_fail, 1)

    walk(proc.body)


def _assign_points(proc: Procedure):
    atoms = atoms_of(proc.body)
    for i, a in enumerate(atoms, start=1):
        a.point = i
    proc.atoms = atoms
    gid = itertools.count(0)

    def walk(g):
        g.gid = next(gid)
        if isinstance(g, (Conj, Disj)):
            for s in g.goals:
                walk(s)
        elif isinstance(g, IfThenElse):
            walk(g.cond)
            walk(g.then)
            walk(g.els)
        elif isinstance(g, Some):
            walk(g.goal)

    walk(proc.body)


def mode_order_and_annotate(prog: Program) -> Program:
    for proc in prog.procs.values():
        _Order(prog, proc, prog.filename).run()
        _eliminate_unused(prog, proc)
        _infer_types(prog, proc)
        total = Counter()
        for a in atoms_of(proc.body):
            for v in _Order.atom_vars(a):
                total[v] += 1
        body_det = _annotate_det(prog, proc, proc.body, total)
        _set_commit_flags(prog, proc)
        body_det = proc.body.det
        decl = proc.sig.determinism
        if body_det.can_fail and not decl.can_fail:
            raise DeterminismError(
                f"{proc.key} declared {decl.category} but body can fail",
                proc.sig.line, 0, prog.filename)
        if body_det.max_solutions > decl.max_solutions:
            raise DeterminismError(
                f"{proc.key} declared {decl.category} but body is "
                f"{body_det.category}", proc.sig.line, 0, prog.filename)
        _assign_points(proc)
    return prog


def load_program(text: str, filename: str = "<src>") -> Program:
    return mode_order_and_annotate(normalize(parse_program(text, filename)))


def load_file(path) -> Program:
    from pathlib import Path
    p = Path(path)
    return load_program(p.read_text(encoding="utf-8"), str(p))
