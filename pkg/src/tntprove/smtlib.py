"""SMT-LIB 2 export of formulas and proof obligations, and a reader for the
subset that the exporter emits (plus the usual comparison operators)."""

from __future__ import annotations

import re
from typing import List, Mapping, Optional, Sequence

from .logic import (EQ, Atom, Const, FALSE, TRUE, And, Formula, Not, Or, conj, disj, negate, nnf,
                    variables_of)
from .poly import ONE, Poly

_SYMBOL = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class SmtParseError(ValueError):
    pass


def _sym(v: str) -> str:
    return v if _SYMBOL.match(v) else f"|{v}|"


def _int(c) -> str:
    if getattr(c, "denominator", 1) != 1:
        raise ValueError("SMT-LIB export needs integer coefficients")
    c = int(c)
    return str(c) if c >= 0 else f"(- {-c})"


def poly_smt(p: Poly) -> str:
    terms = []
    for m, c in p.sorted_terms():
        if m == ONE:
            terms.append(_int(c))
            continue
        factors = [_sym(v) for v, e in m for _ in range(e)]
        if c != 1:
            factors.insert(0, _int(c))
        terms.append(factors[0] if len(factors) == 1 else "(* " + " ".join(factors) + ")")
    if not terms:
        return "0"
    return terms[0] if len(terms) == 1 else "(+ " + " ".join(terms) + ")"


def formula_smt(f: Formula) -> str:
    if isinstance(f, Atom):
        op = "=" if f.rel == EQ else ">="
        return f"({op} {poly_smt(f.poly)} 0)"
    if isinstance(f, Const):
        return "true" if f.value else "false"
    if isinstance(f, Not):
        return f"(not {formula_smt(f.arg)})"
    if isinstance(f, And):
        return "(and " + " ".join(formula_smt(a) for a in f.args) + ")"
    if isinstance(f, Or):
        return "(or " + " ".join(formula_smt(a) for a in f.args) + ")"
    raise TypeError(f"not a formula: {f!r}")


def export_smtlib(f: Formula, variables: Optional[Sequence[str]] = None, comment: str = "") -> str:
    """A script asserting ``f``; its models are models of ``f``."""
    f = nnf(f)
    names = list(variables) if variables is not None else sorted(variables_of(f))
    lines = []
    if comment:
        lines.extend(f"; {c}" for c in comment.splitlines())
    lines.append("(set-logic QF_NIA)")
    lines.extend(f"(declare-const {_sym(v)} Int)" for v in names)
    lines.append(f"(assert {formula_smt(f)})")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


def export_implication(hyp: Sequence[Atom], guard: Sequence[Atom], update: Optional[Mapping[str, Poly]],
                       concl: Atom, variables: Optional[Sequence[str]] = None, comment: str = "") -> str:
    """Validity obligation ``hyp /\\ guard => concl[update]`` as a satisfiability
    query of its negation: any model is a counterexample state."""
    target = concl.subst(update) if update else concl
    f = conj(*hyp, *guard, negate(target))
    return export_smtlib(f, variables, comment)


# ---------------------------------------------------------------- reader


def _tokens(text: str) -> List[str]:
    text = re.sub(r";[^\n]*", " ", text)
    return re.findall(r"\(|\)|\|[^|]*\||[^\s()]+", text)


def _sexprs(text: str) -> list:
    toks = _tokens(text)
    pos = 0

    def read():
        nonlocal pos
        if pos >= len(toks):
            raise SmtParseError("unexpected end of input")
        t = toks[pos]
        pos += 1
        if t == "(":
            out = []
            while pos < len(toks) and toks[pos] != ")":
                out.append(read())
            if pos >= len(toks):
                raise SmtParseError("missing ')'")
            pos += 1
            return out
        if t == ")":
            raise SmtParseError("unexpected ')'")
        return t

    out = []
    while pos < len(toks):
        out.append(read())
    return out


def _term(e, names: set) -> Poly:
    if isinstance(e, str):
        if re.fullmatch(r"\d+", e):
            return Poly.const(int(e))
        name = e[1:-1] if e.startswith("|") else e
        if name not in names:
            raise SmtParseError(f"undeclared symbol {name}")
        return Poly.var(name)
    if not e:
        raise SmtParseError("empty term")
    op, args = e[0], [_term(a, names) for a in e[1:]]
    if op == "+":
        out = Poly.const(0)
        for a in args:
            out = out + a
        return out
    if op == "-":
        if len(args) == 1:
            return -args[0]
        out = args[0]
        for a in args[1:]:
            out = out - a
        return out
    if op == "*":
        out = Poly.const(1)
        for a in args:
            out = out * a
        return out
    raise SmtParseError(f"unsupported operator {op}")


def _formula(e, names: set) -> Formula:
    if e == "true":
        return TRUE
    if e == "false":
        return FALSE
    if isinstance(e, str) or not e:
        raise SmtParseError(f"not a formula: {e}")
    op = e[0]
    if op == "and":
        return conj(*[_formula(a, names) for a in e[1:]])
    if op == "or":
        return disj(*[_formula(a, names) for a in e[1:]])
    if op == "not":
        return negate(_formula(e[1], names))
    if op in (">=", "<=", ">", "<", "="):
        if len(e) != 3:
            raise SmtParseError(f"{op} expects two arguments")
        a, b = _term(e[1], names), _term(e[2], names)
        return {">=": lambda: Atom.ge(a - b), "<=": lambda: Atom.ge(b - a), ">": lambda: Atom.gt(a - b),
                "<": lambda: Atom.gt(b - a), "=": lambda: Atom.eq(a - b)}[op]()
    raise SmtParseError(f"unsupported connective {op}")


def parse_smtlib(text: str) -> Formula:
    """The conjunction of all assertions of a script."""
    names: set = set()
    asserted = []
    for cmd in _sexprs(text):
        if not isinstance(cmd, list) or not cmd:
            raise SmtParseError(f"not a command: {cmd}")
        head = cmd[0]
        if head == "declare-const":
            if len(cmd) != 3 or cmd[2] != "Int":
                raise SmtParseError("only Int constants are supported")
            names.add(cmd[1][1:-1] if cmd[1].startswith("|") else cmd[1])
        elif head == "declare-fun":
            if len(cmd) != 4 or cmd[2] != [] or cmd[3] != "Int":
                raise SmtParseError("only nullary Int functions are supported")
            names.add(cmd[1])
        elif head == "assert":
            asserted.append(_formula(cmd[1], names))
        elif head in ("set-logic", "set-option", "set-info", "check-sat", "get-model", "exit"):
            continue
        else:
            raise SmtParseError(f"unsupported command {head}")
    return nnf(conj(*asserted))
