"""Tokenizer and recursive-descent parser for `.rl` source files.

Produces a raw program: type/pred/mode declarations plus clauses whose bodies
are trees of raw goals over terms. Normalization to superhomogeneous form
happens in `frontend`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .syntax import ArithExpr, Clause, Functor, IntLit, TypeDef, Var


class SourceError(Exception):
    def __init__(self, msg: str, line: int, col: int, filename: str = "<src>"):
        super().__init__(f"{filename}:{line}:{col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col
        self.filename = filename


# ---------------------------------------------------------------------------
# raw goal nodes (parser output only)

@dataclass
class RawUnify:
    op: str            # = := == <= => < =< > >= \=
    lhs: object
    rhs: object
    line: int = 0
    col: int = 0


@dataclass
class RawCall:
    name: str
    args: list
    line: int = 0
    col: int = 0


@dataclass
class RawConj:
    goals: list


@dataclass
class RawDisj:
    goals: list


@dataclass
class RawIte:
    cond: object
    then: object
    els: object


@dataclass
class RawNot:
    goal: object


@dataclass
class RawSome:
    vars: list[str]
    goal: object


@dataclass
class RawProgram:
    types: dict[str, TypeDef] = field(default_factory=dict)
    pred_decls: dict[str, tuple[list[str], int]] = field(default_factory=dict)
    mode_decls: dict[str, tuple[list[str], str, int]] = field(default_factory=dict)
    clauses: list[Clause] = field(default_factory=list)
    filename: str = "<src>"


# ---------------------------------------------------------------------------
# tokenizer

TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>%[^\n]*)
  | (?P<int>\d+)
  | (?P<name>[a-z][A-Za-z0-9_]*)
  | (?P<var>[A-Z_][A-Za-z0-9_]*)
  | (?P<punct>--->|:-|=<|<=|=>|==|:=|\\=|>=|//|[()\[\]|,;.=<>+\-*])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str        # int | name | var | punct | eof
    text: str
    line: int
    col: int


def tokenize(src: str, filename: str = "<src>") -> list[Token]:
    toks: list[Token] = []
    line, col = 1, 1
    pos = 0
    while pos < len(src):
        m = TOKEN_RE.match(src, pos)
        if not m:
            raise SourceError(f"unexpected character {src[pos]!r}", line, col, filename)
        text = m.group(0)
        kind = m.lastgroup
        if kind not in ("ws", "comment"):
            toks.append(Token(kind, text, line, col))
        nl = text.count("\n")
        if nl:
            line += nl
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    toks.append(Token("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# parser

COMPARE_OPS = {"<": "lt", "=<": "le", ">": "gt", ">=": "ge"}
UNIFY_OPS = ("=", ":=", "==", "<=", "=>", "\\=")


class Parser:
    def __init__(self, src: str, filename: str = "<src>"):
        self.toks = tokenize(src, filename)
        self.pos = 0
        self.filename = filename

    # -- token helpers ------------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def expect(self, text: str) -> Token:
        t = self.next()
        if t.text != text:
            self.err(f"expected {text!r}, found {t.text!r}", t)
        return t

    def at(self, text: str) -> bool:
        return self.peek().text == text

    def err(self, msg: str, tok: Token | None = None):
        tok = tok or self.peek()
        raise SourceError(msg, tok.line, tok.col, self.filename)

    # -- entry --------------------------------------------------------------

    def parse(self) -> RawProgram:
        prog = RawProgram(filename=self.filename)
        while self.peek().kind != "eof":
            if self.at(":-"):
                self.parse_decl(prog)
            else:
                prog.clauses.append(self.parse_clause())
        return prog

    # -- declarations -------------------------------------------------------

    def parse_decl(self, prog: RawProgram):
        self.expect(":-")
        t = self.next()
        if t.text == "type":
            self.parse_typedecl(prog, t)
        elif t.text == "pred":
            self.parse_preddecl(prog, t)
        elif t.text == "mode":
            self.parse_modedecl(prog, t)
        else:
            self.err(f"unknown declaration {t.text!r}", t)

    def parse_typedecl(self, prog: RawProgram, start: Token):
        name_tok = self.next()
        if name_tok.kind != "name":
            self.err("type name expected", name_tok)
        self.expect("--->")
        ctors = [self.parse_ctor()]
        while self.at(";"):
            self.next()
            ctors.append(self.parse_ctor())
        self.expect(".")
        if name_tok.text in prog.types:
            self.err(f"type {name_tok.text} declared twice", name_tok)
        seen = set()
        for f, _ in ctors:
            if f in seen:
                self.err(f"constructor {f} repeated in type {name_tok.text}", name_tok)
            seen.add(f)
        prog.types[name_tok.text] = TypeDef(name_tok.text, ctors, line=start.line)

    def parse_ctor(self) -> tuple[str, list[str]]:
        t = self.next()
        if t.text == "[":
            if self.at("]"):
                self.next()
                return ("[]", [])
            head = self.type_name()
            self.expect("|")
            tail = self.type_name()
            self.expect("]")
            return ("[|]", [head, tail])
        if t.kind != "name":
            self.err("constructor expected", t)
        if self.at("("):
            self.next()
            args = [self.type_name()]
            while self.at(","):
                self.next()
                args.append(self.type_name())
            self.expect(")")
            return (t.text, args)
        return (t.text, [])

    def type_name(self) -> str:
        t = self.next()
        if t.kind != "name":
            self.err("type name expected", t)
        return t.text

    def parse_preddecl(self, prog: RawProgram, start: Token):
        name_tok = self.next()
        if name_tok.kind != "name":
            self.err("predicate name expected", name_tok)
        types: list[str] = []
        if self.at("("):
            self.next()
            types.append(self.type_name())
            while self.at(","):
                self.next()
                types.append(self.type_name())
            self.expect(")")
        self.expect(".")
        key = f"{name_tok.text}/{len(types)}"
        if key in prog.pred_decls:
            self.err(f"predicate {key} declared twice", name_tok)
        prog.pred_decls[key] = (types, start.line)

    def parse_modedecl(self, prog: RawProgram, start: Token):
        name_tok = self.next()
        modes: list[str] = []
        if self.at("("):
            self.next()
            modes.append(self.mode_name())
            while self.at(","):
                self.next()
                modes.append(self.mode_name())
            self.expect(")")
        is_tok = self.next()
        if is_tok.text != "is":
            self.err("'is' expected in mode declaration", is_tok)
        det_tok = self.next()
        if det_tok.text not in ("det", "semidet", "multi", "nondet"):
            self.err(f"unknown determinism {det_tok.text!r}", det_tok)
        self.expect(".")
        key = f"{name_tok.text}/{len(modes)}"
        if key in prog.mode_decls:
            self.err(f"only one mode per predicate supported ({key})", name_tok)
        prog.mode_decls[key] = (modes, det_tok.text, start.line)

    def mode_name(self) -> str:
        t = self.next()
        if t.text not in ("in", "out"):
            self.err("mode must be 'in' or 'out'", t)
        return t.text

    # -- clauses ------------------------------------------------------------

    def parse_clause(self) -> Clause:
        name_tok = self.next()
        if name_tok.kind != "name":
            self.err("clause head expected", name_tok)
        head: list = []
        if self.at("("):
            self.next()
            head.append(self.parse_expr())
            while self.at(","):
                self.next()
                head.append(self.parse_expr())
            self.expect(")")
        body = None
        if self.at(":-"):
            self.next()
            body = self.parse_conj()
        self.expect(".")
        return Clause(name_tok.text, head, body, line=name_tok.line)

    # -- goals --------------------------------------------------------------

    def parse_conj(self):
        goals = [self.parse_goal()]
        while self.at(","):
            self.next()
            goals.append(self.parse_goal())
        return goals[0] if len(goals) == 1 else RawConj(goals)

    def parse_goal(self):
        t = self.peek()
        if t.text == "(":
            self.next()
            if self.peek().text == "if" and self.peek().kind == "name":
                self.next()
                cond = self.parse_conj()
                self.expect("then")
                then = self.parse_conj()
                self.expect("else")
                els = self.parse_conj()
                self.expect(")")
                return RawIte(cond, then, els)
            first = self.parse_conj()
            if self.at(";"):
                branches = [first]
                while self.at(";"):
                    self.next()
                    branches.append(self.parse_conj())
                self.expect(")")
                return RawDisj(branches)
            self.expect(")")
            return first
        if t.kind == "name" and t.text == "not":
            self.next()
            return RawNot(self.parse_goal())
        if t.kind == "name" and t.text == "some":
            self.next()
            self.expect("[")
            vars_: list[str] = []
            if not self.at("]"):
                vt = self.next()
                if vt.kind != "var":
                    self.err("variable expected in quantifier", vt)
                vars_.append(vt.text)
                while self.at(","):
                    self.next()
                    vt = self.next()
                    if vt.kind != "var":
                        self.err("variable expected in quantifier", vt)
                    vars_.append(vt.text)
            self.expect("]")
            return RawSome(vars_, self.parse_goal())
        if t.kind == "name" and t.text in ("true", "fail") and self.peek(1).text != "(":
            self.next()
            return RawCall(t.text, [], line=t.line, col=t.col)
        # atom: call or unification/comparison over expressions
        lhs = self.parse_expr()
        nxt = self.peek()
        if nxt.text in UNIFY_OPS or nxt.text in COMPARE_OPS:
            op_tok = self.next()
            rhs = self.parse_expr()
            if op_tok.text in COMPARE_OPS:
                return RawCall(COMPARE_OPS[op_tok.text], [lhs, rhs],
                               line=op_tok.line, col=op_tok.col)
            return RawUnify(op_tok.text, lhs, rhs, line=op_tok.line, col=op_tok.col)
        if isinstance(lhs, Functor):
            return RawCall(lhs.name, list(lhs.args), line=t.line, col=t.col)
        self.err("goal expected", t)

    # -- terms / expressions -------------------------------------------------

    def parse_expr(self):
        lhs = self.parse_mulexpr()
        while self.peek().text in ("+", "-"):
            op = self.next()
            rhs = self.parse_mulexpr()
            lhs = ArithExpr("add" if op.text == "+" else "sub", lhs, rhs)
        return lhs

    def parse_mulexpr(self):
        lhs = self.parse_primary()
        while self.peek().text in ("*", "//") or (
            self.peek().kind == "name" and self.peek().text == "mod"
        ):
            op = self.next()
            rhs = self.parse_primary()
            opname = {"*": "mul", "//": "div", "mod": "mod"}[op.text]
            lhs = ArithExpr(opname, lhs, rhs)
        return lhs

    def parse_primary(self):
        t = self.next()
        if t.kind == "int":
            return IntLit(int(t.text))
        if t.text == "-" and self.peek().kind == "int":
            return IntLit(-int(self.next().text))
        if t.kind == "var":
            return Var(t.text)
        if t.text == "(":
            e = self.parse_expr()
            self.expect(")")
            return e
        if t.text == "[":
            return self.parse_list()
        if t.kind == "name":
            if self.at("("):
                self.next()
                args = [self.parse_expr()]
                while self.at(","):
                    self.next()
                    args.append(self.parse_expr())
                self.expect(")")
                return Functor(t.text, tuple(args))
            return Functor(t.text)
        self.err("term expected", t)

    def parse_list(self):
        if self.at("]"):
            self.next()
            return Functor("[]")
        elems = [self.parse_expr()]
        while self.at(","):
            self.next()
            elems.append(self.parse_expr())
        tail: object = Functor("[]")
        if self.at("|"):
            self.next()
            tail = self.parse_expr()
        self.expect("]")
        for e in reversed(elems):
            tail = Functor("[|]", (e, tail))
        return tail


def parse_source(src: str, filename: str = "<src>") -> RawProgram:
    return Parser(src, filename).parse()
