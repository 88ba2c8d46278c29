"""Front end for the small integer language: tokenizer, recursive-descent
parser, pretty-printer, lowering to a control-flow automaton, loop discovery,
and the per-loop tracing/truncation instrumentation (plus its inverse).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

from .logic import Atom, Const, Formula, conj, disj, negate
from .poly import Poly


class ParseError(SyntaxError):
    def __init__(self, msg: str, line: int = 0, col: int = 0):
        super().__init__(f"{line}:{col}: {msg}")
        self.msg_text = msg
        self.line = line
        self.col = col


class UnsupportedFeature(ParseError):
    pass


# ---------------------------------------------------------------- AST


@dataclass(frozen=True)
class Num:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str  # '+', '-', '*'
    left: object
    right: object


class _Nondet:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "NONDET"


NONDET = _Nondet()

Expr = Union[Num, Var, Neg, BinOp]


@dataclass(frozen=True)
class Cmp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class BoolOp:
    op: str  # '&&' or '||'
    left: object
    right: object


@dataclass(frozen=True)
class NotC:
    arg: object


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class Assign:
    var: str
    expr: object  # Expr or NONDET


@dataclass(frozen=True)
class While:
    cond: object
    body: tuple


@dataclass(frozen=True)
class If:
    cond: object
    then: tuple
    orelse: tuple


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Program:
    name: str
    params: tuple
    decls: tuple  # ((name, Expr | NONDET), ...)
    body: tuple

    @property
    def variables(self) -> tuple:
        return tuple(self.params) + tuple(n for n, _ in self.decls)

    @property
    def inputs(self) -> tuple:
        return tuple(self.params) + tuple(n for n, e in self.decls if e is NONDET)


# ---------------------------------------------------------------- tokenizer

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<float>\d+\.\d*|\.\d+)
  | (?P<num>\d+)
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|&&|\|\||[-+*/%<>=!(){};,:])
  | (?P<bad>.)
    """,
    re.VERBOSE,
)

KEYWORDS = {"fun", "int", "while", "if", "else", "skip", "true", "false"}


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> List[Token]:
    out = []
    line, line_start = 1, 0
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        col = m.start() - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
            continue
        if kind in ("ws", "comment"):
            continue
        tok = m.group()
        if kind == "float":
            raise UnsupportedFeature(f"floating-point literal {tok!r}", line, col)
        if kind == "bad":
            raise ParseError(f"unexpected character {tok!r}", line, col)
        if kind == "id" and tok in KEYWORDS:
            kind = "kw"
        out.append(Token(kind, tok, line, col))
    out.append(Token("eof", "", line, len(text) - line_start + 1))
    return out


# ---------------------------------------------------------------- parser

RELOPS = ("==", "!=", "<=", ">=", "<", ">")


class Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.declared: Dict[str, Token] = {}

    # helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, expected: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        got = tok.text or "end of input"
        raise ParseError(f"expected {expected}, got {got!r}", tok.line, tok.col)

    def accept(self, text: str) -> bool:
        if self.tok.text == text and self.tok.kind in ("op", "kw"):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        tok = self.tok
        if not self.accept(text):
            self.error(f"'{text}'")
        return tok

    def ident(self) -> Token:
        tok = self.tok
        if tok.kind != "id":
            self.error("identifier")
        self.i += 1
        return tok

    def declare(self, tok: Token):
        if tok.text in self.declared:
            raise ParseError(f"variable {tok.text!r} declared twice", tok.line, tok.col)
        self.declared[tok.text] = tok

    def use(self, tok: Token):
        if tok.text not in self.declared:
            raise ParseError(f"undeclared variable {tok.text!r}", tok.line, tok.col)

    # program
    def program(self) -> Program:
        name, params = "main", []
        wrapped = self.tok.text == "fun" and self.tok.kind == "kw"
        if wrapped:
            self.i += 1
            name = self.ident().text
            self.expect("(")
            if not self.accept(")"):
                while True:
                    t = self.ident()
                    self.declare(t)
                    params.append(t.text)
                    if self.accept(")"):
                        break
                    self.expect(",")
            self.expect("{")
        decls = []
        while self.tok.kind == "kw" and self.tok.text == "int":
            decls.extend(self.decl())
        body = []
        end = "}" if wrapped else ""
        while not (self.tok.text == end and (end or self.tok.kind == "eof")):
            if self.tok.kind == "eof":
                self.error("'}'")
            if self.tok.kind == "kw" and self.tok.text == "int":
                raise ParseError("declarations must precede statements", self.tok.line, self.tok.col)
            body.append(self.stmt())
        if wrapped:
            self.expect("}")
        if self.tok.kind != "eof":
            self.error("end of input")
        return Program(name, tuple(params), tuple(decls), tuple(body))

    def decl(self) -> list:
        self.expect("int")
        out = []
        while True:
            t = self.ident()
            if self.accept("="):
                if self.accept("*"):
                    init = NONDET
                else:
                    init = self.expr()
            else:
                init = NONDET
            # initialisers may only mention earlier variables
            self.declare(t)
            out.append((t.text, init))
            if self.accept(";"):
                return out
            self.expect(",")

    def block(self) -> tuple:
        self.expect("{")
        out = []
        while not self.accept("}"):
            if self.tok.kind == "eof":
                self.error("'}'")
            out.append(self.stmt())
        return tuple(out)

    def stmt(self):
        tok = self.tok
        if tok.kind == "kw":
            if tok.text == "while":
                self.i += 1
                self.expect("(")
                c = self.cond()
                self.expect(")")
                return While(c, self.block())
            if tok.text == "if":
                self.i += 1
                self.expect("(")
                c = self.cond()
                self.expect(")")
                then = self.block()
                orelse = ()
                if self.accept("else"):
                    if self.tok.text == "if" and self.tok.kind == "kw":
                        orelse = (self.stmt(),)
                    else:
                        orelse = self.block()
                return If(c, then, orelse)
            if tok.text == "skip":
                self.i += 1
                self.expect(";")
                return Skip()
            self.error("statement")
        if tok.kind == "id":
            if self.peek().text == "(":
                raise UnsupportedFeature(f"procedure call {tok.text!r}", tok.line, tok.col)
            self.i += 1
            self.use(tok)
            self.expect("=")
            if self.tok.text == "*" and self.peek().text == ";":
                self.i += 1
                e = NONDET
            else:
                e = self.expr()
            self.expect(";")
            return Assign(tok.text, e)
        self.error("statement")

    # expressions
    def expr(self):
        e = self.term()
        while self.tok.text in ("+", "-") and self.tok.kind == "op":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self):
        e = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/", "%"):
            if self.tok.text != "*":
                raise UnsupportedFeature(f"operator {self.tok.text!r}", self.tok.line, self.tok.col)
            self.i += 1
            e = BinOp("*", e, self.unary())
        return e

    def unary(self):
        if self.tok.kind == "op" and self.tok.text == "-":
            self.i += 1
            return Neg(self.unary())
        return self.atom()

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(int(tok.text))
        if tok.kind == "id":
            if self.peek().text == "(":
                raise UnsupportedFeature(f"function call {tok.text!r}", tok.line, tok.col)
            self.i += 1
            self.use(tok)
            return Var(tok.text)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        self.error("expression")

    # conditions
    def cond(self):
        c = self.cond_and()
        while self.accept("||"):
            c = BoolOp("||", c, self.cond_and())
        return c

    def cond_and(self):
        c = self.cond_not()
        while self.accept("&&"):
            c = BoolOp("&&", c, self.cond_not())
        return c

    def cond_not(self):
        if self.accept("!"):
            return NotC(self.cond_not())
        return self.cond_atom()

    def cond_atom(self):
        tok = self.tok
        if tok.kind == "kw" and tok.text in ("true", "false"):
            self.i += 1
            return BoolLit(tok.text == "true")
        if tok.text == "(":
            # either a parenthesised condition or the start of a comparison
            save = self.i
            try:
                return self.comparison()
            except ParseError:
                self.i = save
            self.i += 1
            c = self.cond()
            self.expect(")")
            return c
        return self.comparison()

    def comparison(self):
        left = self.expr()
        if self.tok.kind != "op" or self.tok.text not in RELOPS:
            self.error("comparison operator")
        op = self.tok.text
        self.i += 1
        return Cmp(op, left, self.expr())


def parse_program(text: str) -> Program:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return Parser(text).program()


# ---------------------------------------------------------------- printing

_PREC = {"+": 1, "-": 1, "*": 2}


def expr_str(e, parent: int = 0) -> str:
    if e is NONDET:
        return "*"
    if isinstance(e, Num):
        return str(e.value) if e.value >= 0 else f"({e.value})"
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        inner = expr_str(e.arg, 3)
        s = "-" + inner
        return f"({s})" if parent >= 3 else s
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        s = f"{expr_str(e.left, p)} {e.op} {expr_str(e.right, p + 1)}"
        return f"({s})" if p < parent else s
    raise TypeError(e)


def cond_str(c, parent: int = 0) -> str:
    if isinstance(c, BoolLit):
        return "true" if c.value else "false"
    if isinstance(c, Cmp):
        s = f"{expr_str(c.left)} {c.op} {expr_str(c.right)}"
        return f"({s})" if parent >= 3 else s
    if isinstance(c, NotC):
        return "!" + cond_str(c.arg, 3)
    if isinstance(c, BoolOp):
        p = 1 if c.op == "||" else 2
        s = f"{cond_str(c.left, p)} {c.op} {cond_str(c.right, p + 1)}"
        return f"({s})" if p < parent else s
    raise TypeError(c)


def _stmts_str(stmts, indent: int) -> list:
    pad = "    " * indent
    out = []
    for s in stmts:
        if isinstance(s, Assign):
            out.append(f"{pad}{s.var} = {expr_str(s.expr)};")
        elif isinstance(s, Skip):
            out.append(f"{pad}skip;")
        elif isinstance(s, While):
            out.append(f"{pad}while ({cond_str(s.cond)}) {{")
            out.extend(_stmts_str(s.body, indent + 1))
            out.append(f"{pad}}}")
        elif isinstance(s, If):
            out.append(f"{pad}if ({cond_str(s.cond)}) {{")
            out.extend(_stmts_str(s.then, indent + 1))
            if s.orelse:
                out.append(f"{pad}}} else {{")
                out.extend(_stmts_str(s.orelse, indent + 1))
            out.append(f"{pad}}}")
        else:
            raise TypeError(s)
    return out


def pretty_print(p: Program) -> str:
    lines = [f"fun {p.name}({', '.join(p.params)}) {{"]
    for name, init in p.decls:
        lines.append(f"    int {name} = {expr_str(init)};")
    lines.extend(_stmts_str(p.body, 1))
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- semantics


def expr_to_poly(e) -> Poly:
    if isinstance(e, Num):
        return Poly.const(e.value)
    if isinstance(e, Var):
        return Poly.var(e.name)
    if isinstance(e, Neg):
        return -expr_to_poly(e.arg)
    if isinstance(e, BinOp):
        a, b = expr_to_poly(e.left), expr_to_poly(e.right)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        return a * b
    raise TypeError(e)


def cond_to_formula(c) -> Formula:
    if isinstance(c, BoolLit):
        return Const(c.value)
    if isinstance(c, Cmp):
        l, r = expr_to_poly(c.left), expr_to_poly(c.right)
        if c.op == "<=":
            return Atom.ge(r - l)
        if c.op == "<":
            return Atom.gt(r - l)
        if c.op == ">=":
            return Atom.ge(l - r)
        if c.op == ">":
            return Atom.gt(l - r)
        if c.op == "==":
            return Atom.eq(l - r)
        return negate(Atom.eq(l - r))
    if isinstance(c, NotC):
        return negate(cond_to_formula(c.arg))
    if isinstance(c, BoolOp):
        a, b = cond_to_formula(c.left), cond_to_formula(c.right)
        return conj(a, b) if c.op == "&&" else disj(a, b)
    raise TypeError(c)


# ---------------------------------------------------------------- CFA

# edge operations of the plain automaton


@dataclass(frozen=True)
class Nop:
    def __str__(self):
        return "skip"


@dataclass(frozen=True)
class AssignOp:
    var: str
    poly: Poly

    def __str__(self):
        return f"{self.var} := {self.poly}"


@dataclass(frozen=True)
class HavocOp:
    var: str

    def __str__(self):
        return f"{self.var} := *"


@dataclass(frozen=True)
class Assume:
    cond: Formula
    positive: bool = True

    def formula(self) -> Formula:
        return self.cond if self.positive else negate(self.cond)

    def __str__(self):
        return f"assume {'' if self.positive else '!'}({self.cond})"


# instrumentation operations


@dataclass(frozen=True)
class CtrInit:
    loop: int

    def __str__(self):
        return f"ctr{self.loop} := 0"


@dataclass(frozen=True)
class CtrCheck:
    loop: int
    at_bound: bool  # True: assume ctr == bnd (abort edge)

    def __str__(self):
        return f"assume ctr{self.loop} {'==' if self.at_bound else '!='} bnd"


@dataclass(frozen=True)
class CtrIncr:
    loop: int

    def __str__(self):
        return f"ctr{self.loop} := ctr{self.loop} + 1"


@dataclass(frozen=True)
class Snap:
    loop: int
    pos: str  # 'pre' | 'body' | 'post'

    def __str__(self):
        return f"trace_{self.pos}({self.loop})"


INSTR_OPS = (CtrInit, CtrCheck, CtrIncr, Snap)


@dataclass(frozen=True)
class Edge:
    src: int
    op: object
    dst: int


@dataclass
class LoopInfo:
    loop_id: int
    header: int
    body_entry: int
    exit: int
    condition: Formula
    depth: int
    children: list = field(default_factory=list)
    parent: Optional[int] = None
    entry_src: int = -1  # source of the unique entry edge


@dataclass
class Cfa:
    locations: set
    q0: int
    exit: int
    edges: list
    vars: tuple
    inputs: tuple
    loops: list
    program: Optional[Program] = None

    def out_edges(self, q: int) -> list:
        return [e for e in self.edges if e.src == q]

    def in_edges(self, q: int) -> list:
        return [e for e in self.edges if e.dst == q]

    def loop(self, loop_id: int) -> LoopInfo:
        for li in self.loops:
            if li.loop_id == loop_id:
                return li
        raise KeyError(loop_id)

    def edge_set(self) -> set:
        return {(e.src, e.op, e.dst) for e in self.edges}


class _Lowering:
    def __init__(self):
        self.n = 0
        self.edges: List[Edge] = []
        self.loops: List[LoopInfo] = []

    def fresh(self) -> int:
        q = self.n
        self.n += 1
        return q

    def edge(self, src, op, dst):
        self.edges.append(Edge(src, op, dst))

    def seq(self, stmts, entry: int, exit_: int, depth: int, parent: Optional[int]):
        if not stmts:
            self.edge(entry, Nop(), exit_)
            return
        cur = entry
        for k, s in enumerate(stmts):
            nxt = exit_ if k == len(stmts) - 1 else self.fresh()
            self.stmt(s, cur, nxt, depth, parent)
            cur = nxt

    def stmt(self, s, entry: int, exit_: int, depth: int, parent: Optional[int]):
        if isinstance(s, Assign):
            op = HavocOp(s.var) if s.expr is NONDET else AssignOp(s.var, expr_to_poly(s.expr))
            self.edge(entry, op, exit_)
        elif isinstance(s, Skip):
            self.edge(entry, Nop(), exit_)
        elif isinstance(s, If):
            c = cond_to_formula(s.cond)
            t0, e0 = self.fresh(), self.fresh()
            self.edge(entry, Assume(c, True), t0)
            self.seq(s.then, t0, exit_, depth, parent)
            self.edge(entry, Assume(c, False), e0)
            self.seq(s.orelse, e0, exit_, depth, parent)
        elif isinstance(s, While):
            c = cond_to_formula(s.cond)
            h, b0 = self.fresh(), self.fresh()
            lid = len(self.loops)
            info = LoopInfo(lid, h, b0, exit_, c, depth, parent=parent, entry_src=entry)
            self.loops.append(info)
            if parent is not None:
                self.loops[parent].children.append(lid)
            self.edge(entry, Nop(), h)
            self.edge(h, Assume(c, True), b0)
            self.seq(s.body, b0, h, depth + 1, lid)
            self.edge(h, Assume(c, False), exit_)
        else:
            raise TypeError(s)


def to_cfa(p: Program) -> Cfa:
    lw = _Lowering()
    q0 = lw.fresh()
    qx = lw.fresh()
    stmts = [Assign(n, e) for n, e in p.decls if e is not NONDET] + list(p.body)
    lw.seq(tuple(stmts), q0, qx, 0, None)
    return Cfa(set(range(lw.n)), q0, qx, lw.edges, p.variables, p.inputs, lw.loops, p)


def get_loop_seq(c: Cfa) -> list:
    """Post-order over the loop-nesting forest, siblings in source order."""
    out = []

    def visit(lid):
        for ch in c.loop(lid).children:
            visit(ch)
        out.append(lid)

    for li in c.loops:
        if li.parent is None:
            visit(li.loop_id)
    return out


# ---------------------------------------------------------------- tracing


@dataclass
class InstrumentedCfa:
    cfa: Cfa
    bnd: int
    fresh: set
    base: Cfa

    def ctr(self, loop_id: int) -> str:
        return f"__ctr{loop_id}"


def instrument(c: Cfa, bnd: int) -> InstrumentedCfa:
    if bnd < 1:
        raise ValueError("bnd must be >= 1")
    edges = list(c.edges)
    n = max(c.locations) + 1
    fresh = set()

    def new() -> int:
        nonlocal n
        q = n
        n += 1
        fresh.add(q)
        return q

    def replace(old: Edge, new_edges: list):
        i = edges.index(old)
        edges[i:i + 1] = new_edges

    for li in c.loops:
        h = li.header
        entry = next(e for e in edges if e.dst == h and e.src == li.entry_src and isinstance(e.op, Nop))
        body = next(e for e in edges if e.src == h and isinstance(e.op, Assume) and e.op.positive)
        leave = next(e for e in edges if e.src == h and isinstance(e.op, Assume) and not e.op.positive)
        i = li.loop_id
        q1, q2 = new(), new()
        replace(entry, [Edge(entry.src, entry.op, q1), Edge(q1, CtrInit(i), q2), Edge(q2, Snap(i, "pre"), h)])
        q3, q4, q5 = new(), new(), new()
        replace(body, [
            Edge(h, body.op, q3),
            Edge(q3, CtrCheck(i, True), c.exit),
            Edge(q3, CtrCheck(i, False), q4),
            Edge(q4, CtrIncr(i), q5),
            Edge(q5, Snap(i, "body"), body.dst),
        ])
        q6 = new()
        replace(leave, [Edge(h, leave.op, q6), Edge(q6, Snap(i, "post"), leave.dst)])
    ic = Cfa(set(c.locations) | fresh, c.q0, c.exit, edges, c.vars, c.inputs, c.loops, c.program)
    return InstrumentedCfa(ic, bnd, fresh, c)


def strip(ic: InstrumentedCfa) -> Cfa:
    """Remove instrumentation and contract the edges it leaves behind."""
    c = ic.cfa
    edges = [e for e in c.edges if not (isinstance(e.op, CtrCheck) and e.op.at_bound)]
    fresh = set(ic.fresh)
    while True:
        target = next((e for e in edges if isinstance(e.op, INSTR_OPS)), None)
        if target is None:
            break
        u, v = target.src, target.dst
        if v in fresh:
            keep, gone = u, v
        elif u in fresh:
            keep, gone = v, u
        else:
            raise ValueError(f"instrumentation edge between original locations {u}->{v}")
        edges.remove(target)
        edges = [Edge(keep if e.src == gone else e.src, e.op, keep if e.dst == gone else e.dst) for e in edges]
        fresh.discard(gone)
    locs = set(c.locations) - set(ic.fresh)
    return Cfa(locs, c.q0, c.exit, edges, c.vars, c.inputs, c.loops, c.program)


def loop_body_has_nondet(c: Cfa, loop_id: int) -> bool:
    return any(isinstance(e.op, HavocOp) for e in loop_edges(c, loop_id))


def loop_edges(c: Cfa, loop_id: int) -> list:
    """Edges reachable from the body entry without passing the header."""
    li = c.loop(loop_id)
    seen, stack, out = {li.body_entry}, [li.body_entry], []
    while stack:
        q = stack.pop()
        for e in c.out_edges(q):
            out.append(e)
            if e.dst != li.header and e.dst != c.exit and e.dst not in seen:
                seen.add(e.dst)
                stack.append(e.dst)
    return out
