"""AST for the mini logic language, in raw (parsed) and normalized forms.

After normalization every atomic goal is one of the superhomogeneous shapes:
a call p(X1..Xn), a specialized unification (:=, ==, <=, =>) or a builtin.
Atomic goals carry dense per-procedure program points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum


# ---------------------------------------------------------------------------
# terms (parse level)

@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class Functor:
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class ArithExpr:
    op: str          # add | sub | mul | div | mod
    lhs: object
    rhs: object


Term = object  # Var | IntLit | Functor | ArithExpr


# ---------------------------------------------------------------------------
# declarations

BUILTIN_TYPES = ("int", "io")


@dataclass
class TypeDef:
    name: str
    constructors: list[tuple[str, list[str]]]   # (functor, arg type names)
    line: int = 0

    def functor_arity(self, name: str) -> int | None:
        for f, args in self.constructors:
            if f == name:
                return len(args)
        return None


class Mode(str, Enum):
    IN = "in"
    OUT = "out"


@dataclass(frozen=True)
class Det:
    """Determinism as (can_fail, max_solutions) with max_solutions in 0/1/2.

    2 stands for 'more than one'.
    """

    can_fail: bool
    max_solutions: int

    @property
    def category(self) -> str:
        if self.max_solutions == 0:
            return "failure"
        if self.max_solutions == 1:
            return "semidet" if self.can_fail else "det"
        return "nondet" if self.can_fail else "multi"

    def at_most_one(self) -> bool:
        return self.max_solutions <= 1


DET = Det(False, 1)
SEMIDET = Det(True, 1)
MULTI = Det(False, 2)
NONDET = Det(True, 2)
FAILURE = Det(True, 0)

DET_BY_NAME = {"det": DET, "semidet": SEMIDET, "multi": MULTI, "nondet": NONDET}


def det_conj(a: Det, b: Det) -> Det:
    return Det(a.can_fail or b.can_fail, min(2, a.max_solutions * b.max_solutions))


@dataclass
class ProcSignature:
    name: str
    arity: int
    arg_types: list[str]
    arg_modes: list[Mode]
    determinism: Det
    line: int = 0

    @property
    def key(self) -> str:
        return f"{self.name}/{self.arity}"


# ---------------------------------------------------------------------------
# goals (raw and normalized share these nodes; normalization constrains shape)

class UnifyKind(str, Enum):
    GENERAL = "="        # parse-level only
    ASSIGN = ":="
    TEST = "=="
    CONSTRUCT = "<="
    DECONSTRUCT = "=>"


@dataclass
class Goal:
    gid: int = field(default=-1, init=False, compare=False)
    det: Det | None = field(default=None, init=False, compare=False)


@dataclass
class Unify(Goal):
    kind: UnifyKind
    lhs: str                      # variable name
    rhs_var: str | None = None    # for :=, ==, =
    functor: str | None = None    # for <=, =>
    args: list[str] = field(default_factory=list)
    point: int = field(default=-1, init=False, compare=False)

    def is_atom(self) -> bool:
        return True


@dataclass
class Call(Goal):
    name: str
    args: list[str]
    point: int = field(default=-1, init=False, compare=False)

    @property
    def key(self) -> str:
        return f"{self.name}/{len(self.args)}"


# builtin table: name -> (input arg indices, output arg indices)
BUILTINS: dict[str, tuple[tuple[int, ...], tuple[int, ...]]] = {
    "lt": ((0, 1), ()),
    "le": ((0, 1), ()),
    "gt": ((0, 1), ()),
    "ge": ((0, 1), ()),
    "add": ((0, 1), (2,)),
    "sub": ((0, 1), (2,)),
    "mul": ((0, 1), (2,)),
    "div": ((0, 1), (2,)),
    "mod": ((0, 1), (2,)),
    "print": ((0, 1), (2,)),
    "true": ((), ()),
    "fail": ((), ()),
}

COMPARE_DISPLAY = {"lt": "<", "le": "=<", "gt": ">", "ge": ">="}
ARITH_DISPLAY = {"add": "+", "sub": "-", "mul": "*", "div": "//", "mod": "mod"}


@dataclass
class Builtin(Goal):
    op: str
    args: list[str]
    point: int = field(default=-1, init=False, compare=False)


@dataclass
class Conj(Goal):
    goals: list = field(default_factory=list)


@dataclass
class Disj(Goal):
    goals: list = field(default_factory=list)
    is_switch: bool = field(default=False, init=False, compare=False)
    switch_var: str | None = field(default=None, init=False, compare=False)


@dataclass
class IfThenElse(Goal):
    cond: object = None
    then: object = None
    els: object = None


@dataclass
class Neg(Goal):
    """Parse-level `not G`; normalization rewrites it to if-then-else."""

    goal: object = None


@dataclass
class Some(Goal):
    vars: list[str] = field(default_factory=list)
    goal: object = None
    commit: bool = field(default=False, init=False, compare=False)


ATOMS = (Unify, Call, Builtin)


def atoms_of(goal) -> list:
    """All atomic goals of a goal tree, in left-to-right order."""
    out: list = []

    def walk(g):
        if isinstance(g, ATOMS):
            out.append(g)
        elif isinstance(g, Conj):
            for sub in g.goals:
                walk(sub)
        elif isinstance(g, Disj):
            for sub in g.goals:
                walk(sub)
        elif isinstance(g, IfThenElse):
            walk(g.cond)
            walk(g.then)
            walk(g.els)
        elif isinstance(g, Some):
            walk(g.goal)
        elif isinstance(g, Neg):
            walk(g.goal)
        else:
            raise TypeError(f"unexpected goal node {g!r}")

    walk(goal)
    return out


def in_args(atom) -> set[str]:
    if isinstance(atom, Unify):
        if atom.kind is UnifyKind.CONSTRUCT:
            return set(atom.args)
        if atom.kind is UnifyKind.DECONSTRUCT:
            return {atom.lhs}
        if atom.kind is UnifyKind.TEST:
            return {atom.lhs, atom.rhs_var}
        if atom.kind is UnifyKind.ASSIGN:
            return {atom.rhs_var}
        raise ValueError("general unification survived normalization")
    if isinstance(atom, Builtin):
        ins, _ = BUILTINS[atom.op]
        return {atom.args[i] for i in ins}
    raise TypeError(atom)


def out_args(atom) -> set[str]:
    if isinstance(atom, Unify):
        if atom.kind is UnifyKind.CONSTRUCT:
            return {atom.lhs}
        if atom.kind is UnifyKind.DECONSTRUCT:
            return set(atom.args)
        return {atom.lhs} if atom.kind is UnifyKind.ASSIGN else set()
    if isinstance(atom, Builtin):
        _, outs = BUILTINS[atom.op]
        return {atom.args[i] for i in outs}
    raise TypeError(atom)


# call atoms need the program's signatures to split args by mode
def call_in_out(call: Call, sig: ProcSignature) -> tuple[set[str], set[str]]:
    ins, outs = set(), set()
    for a, m in zip(call.args, sig.arg_modes):
        (ins if m is Mode.IN else outs).add(a)
    return ins, outs


# ---------------------------------------------------------------------------
# procedures / programs

@dataclass
class Clause:
    name: str
    head: list            # terms
    body: object          # raw goal tree or None for a fact
    line: int = 0


@dataclass
class Procedure:
    sig: ProcSignature
    head_vars: list[str]
    body: object                          # normalized Goal tree
    var_types: dict[str, str]
    atoms: list = field(default_factory=list)    # point i -> atoms[i-1]

    @property
    def key(self) -> str:
        return self.sig.key

    def head_in_vars(self) -> set[str]:
        return {v for v, m in zip(self.head_vars, self.sig.arg_modes) if m is Mode.IN}

    def head_out_vars(self) -> set[str]:
        return {v for v, m in zip(self.head_vars, self.sig.arg_modes) if m is Mode.OUT}


@dataclass
class Program:
    types: dict[str, TypeDef]
    procs: dict[str, Procedure]           # keyed by "name/arity"
    filename: str = "<src>"

    def sig_of(self, key: str) -> ProcSignature:
        return self.procs[key].sig


def int_like(functor: str) -> bool:
    return functor.lstrip("-").isdigit()
