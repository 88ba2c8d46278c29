"""Deterministic interpretation of (instrumented) automata, input generation,
and per-loop trace projection and classification.

Two interpreters are provided.  ``Machine`` compiles straight-line chains of
edges into Python closures and is what the provers use; ``interpret`` walks
one edge at a time and doubles as a reference for testing.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

from .lang import (Assume, AssignOp, Cfa, CtrCheck, CtrIncr, CtrInit, HavocOp, InstrumentedCfa,
                   Nop, Program, Snap)
from .logic import EQ, And, Atom, Const, Not, Or, holds
from .poly import Poly

PRE, BODY, POST = "pre", "body", "post"

BASE, TERM, MAYLOOP = "base", "term", "mayloop"


class EvalError(RuntimeError):
    pass


class MalformedTrace(ValueError):
    pass


@dataclass(frozen=True)
class Snapshot:
    loop_id: int
    pos: str
    seq: int
    names: tuple
    values: tuple

    @property
    def env(self) -> Dict[str, int]:
        return dict(zip(self.names, self.values))

    def __getitem__(self, name):
        return self.values[self.names.index(name)]


@dataclass
class FullTrace:
    index: int
    inputs: Dict[str, int]
    snapshots: List[Snapshot]
    status: str  # 'exit' | 'abort' | 'budget'
    aborted_loop: Optional[int] = None
    steps: int = 0
    final: Optional[Dict[str, int]] = None


@dataclass
class LoopTrace:
    loop_id: int
    snapshots: tuple
    truncated: bool
    inputs: Dict[str, int] = field(default_factory=dict)
    run: int = 0
    occurrence: int = 0

    @property
    def key(self):
        return (tuple(sorted(self.inputs.items())), self.occurrence)

    def body_states(self) -> List[Snapshot]:
        return [s for s in self.snapshots if s.pos == BODY]

    def shape(self) -> str:
        return "".join({PRE: "p", BODY: "b", POST: "q"}[s.pos] for s in self.snapshots)

    @property
    def kind(self) -> str:
        return classify(self)

    def __len__(self):
        return len(self.snapshots)


@dataclass
class TracePartition:
    base: List[LoopTrace] = field(default_factory=list)
    term: List[LoopTrace] = field(default_factory=list)
    mayloop: List[LoopTrace] = field(default_factory=list)

    def extend(self, other: "TracePartition") -> "TracePartition":
        return TracePartition(_merge(self.base, other.base), _merge(self.term, other.term),
                              _merge(self.mayloop, other.mayloop))


def _merge(a: list, b: list) -> list:
    seen = {t.key for t in a}
    out = list(a)
    for t in b:
        if t.key not in seen:
            seen.add(t.key)
            out.append(t)
    return out


# ---------------------------------------------------------------- inputs


def gen_random_inputs(p, n: int, range_: int, seed: int) -> List[Dict[str, int]]:
    if n < 1:
        raise ValueError("n must be >= 1")
    names = p.inputs if isinstance(p, Program) else tuple(p)
    rng = random.Random(seed)
    return [{v: rng.randint(-range_, range_) for v in names} for _ in range(n)]


# ---------------------------------------------------------------- compiler


def _poly_code(p: Poly, index: Mapping[str, int]) -> str:
    if p.is_zero():
        return "0"
    parts = []
    for m, c in p.sorted_terms():
        factors = []
        for v, e in m:
            factors.extend([f"v[{index[v]}]"] * e)
        if not factors:
            parts.append(f"({c!r})")
        elif c == 1:
            parts.append("*".join(factors))
        else:
            parts.append(f"({c!r})*" + "*".join(factors))
    return " + ".join(parts)


def formula_code(f, index: Mapping[str, int]) -> str:
    if isinstance(f, Atom):
        rel = "==" if f.rel == EQ else ">="
        return f"({_poly_code(f.poly, index)} {rel} 0)"
    if isinstance(f, Const):
        return "True" if f.value else "False"
    if isinstance(f, Not):
        return f"(not {formula_code(f.arg, index)})"
    if isinstance(f, And):
        return "(" + " and ".join(formula_code(a, index) for a in f.args) + ")"
    if isinstance(f, Or):
        return "(" + " or ".join(formula_code(a, index) for a in f.args) + ")"
    raise TypeError(f)


class Machine:
    """Compiled interpreter for one automaton.

    Counter variables of instrumented automata live after the source
    variables in the state vector; snapshots only copy the source part.
    """

    ABORT = -2

    def __init__(self, target):
        if isinstance(target, InstrumentedCfa):
            self.cfa, self.bnd = target.cfa, target.bnd
        else:
            self.cfa, self.bnd = target, None
        c = self.cfa
        self.names = tuple(c.vars)
        self.nv = len(self.names)
        self.index = {v: i for i, v in enumerate(self.names)}
        for li in c.loops:
            self.index[f"__ctr{li.loop_id}"] = self.nv + li.loop_id
        self.width = self.nv + len(c.loops)
        self._out: Dict[int, list] = {}
        self._in: Dict[int, int] = {}
        for e in c.edges:
            self._out.setdefault(e.src, []).append(e)
            self._in[e.dst] = self._in.get(e.dst, 0) + 1
        self.table = {}
        self._compile()

    def _op_line(self, e) -> str:
        op, ix = e.op, self.index
        if isinstance(op, Nop):
            return ""
        if isinstance(op, AssignOp):
            return f"v[{ix[op.var]}] = {_poly_code(op.poly, ix)}"
        if isinstance(op, HavocOp):
            return f"v[{ix[op.var]}] = h()"
        if isinstance(op, CtrInit):
            return f"v[{self.nv + op.loop}] = 0"
        if isinstance(op, CtrIncr):
            return f"v[{self.nv + op.loop}] += 1"
        if isinstance(op, Snap):
            k = self.nv + op.loop
            seq = {"pre": "0", "body": f"v[{k}]", "post": f"v[{k}] + 1"}[op.pos]
            return f"s(({op.loop}, {op.pos!r}, {seq}, tuple(v[:{self.nv}])))"
        raise EvalError(f"cannot compile {op!r}")

    def _branch(self, edges) -> str:
        a, b = edges
        if isinstance(a.op, Assume) and isinstance(b.op, Assume):
            pos = a if a.op.positive else b
            neg = b if pos is a else a
            if pos.op.positive == neg.op.positive or pos.op.cond != neg.op.cond:
                raise EvalError("branch guards are not complementary")
            return f"return {pos.dst} if {formula_code(pos.op.cond, self.index)} else {neg.dst}"
        if isinstance(a.op, CtrCheck) and isinstance(b.op, CtrCheck):
            hit = a if a.op.at_bound else b
            miss = b if hit is a else a
            return f"return {self.ABORT - hit.op.loop} if v[{self.nv + hit.op.loop}] == {self.bnd} else {miss.dst}"
        raise EvalError("unsupported branch")

    def _compile(self):
        c = self.cfa
        env = {}
        src = []
        for q in sorted(self._out):
            lines, q_cur, n = [], q, 0
            seen = {q}
            while True:
                outs = self._out.get(q_cur, [])
                if len(outs) == 2:
                    lines.append(self._branch(outs))
                    n += 1
                    break
                if len(outs) != 1:
                    raise EvalError(f"location {q_cur} has {len(outs)} successors")
                e = outs[0]
                if isinstance(e.op, (Assume, CtrCheck)):
                    raise EvalError("single assume edge")
                ln = self._op_line(e)
                if ln:
                    lines.append(ln)
                n += 1
                nxt = e.dst
                if (nxt == c.exit or self._in.get(nxt, 0) != 1 or nxt in seen
                        or len(self._out.get(nxt, [])) != 1):
                    lines.append(f"return {nxt}")
                    break
                seen.add(nxt)
                q_cur = nxt
            body = "\n    ".join(lines)
            src.append(f"def _b{q}(v, s, h):\n    {body}\n")
            self.table[q] = n
        code = "\n".join(src)
        exec(compile(code, "<cfa>", "exec"), env)
        self.table = {q: (env[f"_b{q}"], n) for q, n in self.table.items()}

    def run(self, inputs: Mapping[str, int], budget: int = 10 ** 6, index: int = 0,
            havoc_seed: int = 0, havoc_range: int = 300) -> FullTrace:
        c = self.cfa
        v = [0] * self.width
        for name in c.inputs:
            if name not in inputs:
                raise EvalError(f"missing input {name!r}")
            v[self.index[name]] = int(inputs[name])
        raw = []
        rng = random.Random(havoc_seed * 1_000_003 + index)

        def havoc():
            return rng.randint(-havoc_range, havoc_range)

        table, q, steps, exit_ = self.table, c.q0, 0, c.exit
        status, aborted = "exit", None
        push = raw.append
        while q != exit_:
            if q <= self.ABORT:
                status, aborted = "abort", self.ABORT - q
                break
            fn, n = table[q]
            steps += n
            if steps > budget:
                status = "budget"
                break
            q = fn(v, push, havoc)
        names = self.names
        snaps = [Snapshot(l, p, k, names, vals) for (l, p, k, vals) in raw]
        return FullTrace(index, dict(inputs), snaps, status, aborted, steps,
                         dict(zip(names, v[:self.nv])))


_MACHINES: Dict[int, Machine] = {}


def machine_for(target) -> Machine:
    m = _MACHINES.get(id(target))
    if m is None or (m.cfa is not getattr(target, "cfa", target)):
        m = Machine(target)
        _MACHINES[id(target)] = m
    return m


def execute(ic, inputs: Sequence[Mapping[str, int]], step_budget: int = 10 ** 6,
            havoc_seed: int = 0) -> List[FullTrace]:
    if step_budget < 1:
        raise ValueError("step_budget must be positive")
    m = machine_for(ic)
    return [m.run(inp, step_budget, i, havoc_seed) for i, inp in enumerate(inputs)]


def interpret(target, inputs: Mapping[str, int], budget: int = 10 ** 6, record: bool = False,
              havoc_seed: int = 0, index: int = 0):
    """Edge-at-a-time reference interpreter.

    Returns ``(FullTrace, valuations)`` where ``valuations`` lists the source
    valuation after every assignment edge when ``record`` is set.
    """
    if isinstance(target, InstrumentedCfa):
        c, bnd = target.cfa, target.bnd
    else:
        c, bnd = target, None
    env = {v: 0 for v in c.vars}
    for name in c.inputs:
        env[name] = int(inputs[name])
    ctr: Dict[int, int] = {}
    rng = random.Random(havoc_seed * 1_000_003 + index)
    out: Dict[int, list] = {}
    for e in c.edges:
        out.setdefault(e.src, []).append(e)
    snaps, vals = [], []
    names = tuple(c.vars)
    q, steps, status, aborted = c.q0, 0, "exit", None
    while q != c.exit:
        steps += 1
        if steps > budget:
            status = "budget"
            break
        enabled = []
        for e in out[q]:
            op = e.op
            if isinstance(op, Assume):
                ok = holds(op.cond, env) == op.positive
            elif isinstance(op, CtrCheck):
                ok = (ctr[op.loop] == bnd) == op.at_bound
            else:
                ok = True
            if ok:
                enabled.append(e)
        if len(enabled) != 1:
            raise EvalError(f"{len(enabled)} enabled edges at location {q}")
        e = enabled[0]
        op = e.op
        if isinstance(op, AssignOp):
            env[op.var] = op.poly.evaluate(env)
        elif isinstance(op, HavocOp):
            env[op.var] = rng.randint(-300, 300)
        elif isinstance(op, CtrInit):
            ctr[op.loop] = 0
        elif isinstance(op, CtrIncr):
            ctr[op.loop] += 1
        elif isinstance(op, Snap):
            k = {"pre": 0, "body": ctr[op.loop], "post": ctr[op.loop] + 1}[op.pos]
            snaps.append(Snapshot(op.loop, op.pos, k, names, tuple(env[n] for n in names)))
        elif isinstance(op, CtrCheck) and op.at_bound:
            status, aborted = "abort", op.loop
            break
        if record and isinstance(op, (AssignOp, HavocOp)):
            vals.append(tuple(env[n] for n in names))
        q = e.dst
    return FullTrace(index, dict(inputs), snaps, status, aborted, steps, dict(env)), vals


def run_fragment(c: Cfa, start: int, stop: int, env: Mapping[str, int], budget: int = 10 ** 5,
                 havoc_seed: int = 0) -> Optional[Dict[str, int]]:
    """Run the plain automaton from ``start`` with valuation ``env`` until
    ``stop`` is reached; None when the budget runs out or the exit is hit."""
    env = dict(env)
    rng = random.Random(havoc_seed)
    out: Dict[int, list] = {}
    for e in c.edges:
        out.setdefault(e.src, []).append(e)
    q, steps = start, 0
    while True:
        if q == stop:
            return env
        if q == c.exit or steps >= budget:
            return None
        steps += 1
        for e in out[q]:
            if not isinstance(e.op, Assume) or holds(e.op.cond, env) == e.op.positive:
                break
        else:
            raise EvalError(f"no enabled edge at location {q}")
        op = e.op
        if isinstance(op, AssignOp):
            env[op.var] = op.poly.evaluate(env)
        elif isinstance(op, HavocOp):
            env[op.var] = rng.randint(-300, 300)
        q = e.dst


# ---------------------------------------------------------------- traces


def project(traces: Sequence[FullTrace], loop_id: int) -> List[LoopTrace]:
    out = []
    for tr in traces:
        cur: Optional[list] = None
        occ = 0
        for s in tr.snapshots:
            if s.loop_id != loop_id:
                continue
            if s.pos == PRE:
                if cur is not None:
                    raise MalformedTrace("loop re-entered before exiting")
                cur = [s]
            elif cur is None:
                raise MalformedTrace(f"{s.pos} snapshot without pre")
            else:
                cur.append(s)
                if s.pos == POST:
                    out.append(LoopTrace(loop_id, tuple(cur), False, tr.inputs, tr.index, occ))
                    occ += 1
                    cur = None
        if cur is not None and len(cur) > 1:
            # run stopped inside the loop: truncated by a counter or the budget
            out.append(LoopTrace(loop_id, tuple(cur), True, tr.inputs, tr.index, occ))
    return out


def classify(t: LoopTrace) -> str:
    snaps = t.snapshots
    if not snaps or snaps[0].pos != PRE or snaps[0].seq != 0:
        raise MalformedTrace("trace must start with a pre snapshot")
    k = 0
    for s in snaps[1:]:
        if s.pos == BODY:
            k += 1
            if s.seq != k:
                raise MalformedTrace(f"body seq {s.seq}, expected {k}")
    last = snaps[-1]
    n_body = sum(1 for s in snaps if s.pos == BODY)
    n_post = sum(1 for s in snaps if s.pos == POST)
    n_pre = sum(1 for s in snaps if s.pos == PRE)
    if n_pre != 1:
        raise MalformedTrace("more than one pre snapshot")
    if n_post == 1 and last.pos == POST and not t.truncated:
        if last.seq != n_body + 1:
            raise MalformedTrace("post seq out of order")
        return TERM if n_body else BASE
    if n_post == 0 and n_body >= 1 and t.truncated:
        return MAYLOOP
    raise MalformedTrace(f"shape {t.shape()!r} (truncated={t.truncated})")


def partition(lts: Sequence[LoopTrace]) -> TracePartition:
    part = TracePartition()
    for t in lts:
        getattr(part, classify(t)).append(t)
    return part


# ---------------------------------------------------------------- dump format


def dump_snapshot(s: Snapshot) -> str:
    vals = " ".join(f"{n}={v}" for n, v in zip(s.names, s.values))
    return f"loop={s.loop_id} pos={s.pos} seq={s.seq}" + (f" {vals}" if vals else "")


def dump_traces(traces: Sequence[FullTrace]) -> str:
    lines = []
    for tr in traces:
        for s in tr.snapshots:
            lines.append(dump_snapshot(s))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_dump(text: str) -> List[Snapshot]:
    out = []
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = dict(tok.split("=", 1) for tok in line.split())
        try:
            lid, pos, seq = int(fields.pop("loop")), fields.pop("pos"), int(fields.pop("seq"))
        except KeyError as exc:
            raise MalformedTrace(f"line {ln}: missing field {exc}") from None
        if pos not in (PRE, BODY, POST):
            raise MalformedTrace(f"line {ln}: bad position {pos!r}")
        names = tuple(fields)
        out.append(Snapshot(lid, pos, seq, names, tuple(int(fields[n]) for n in names)))
    return out


def traces_from_snapshots(snaps: Sequence[Snapshot]) -> List[LoopTrace]:
    """Group a flat snapshot stream (for example a parsed dump) into loop
    traces; an unfinished trace at a new pre or at the end is truncated."""
    out: List[LoopTrace] = []
    open_: Dict[int, list] = {}
    for s in snaps:
        if s.pos == PRE:
            if s.loop_id in open_ and len(open_[s.loop_id]) > 1:
                out.append(LoopTrace(s.loop_id, tuple(open_[s.loop_id]), True, occurrence=len(out)))
            open_[s.loop_id] = [s]
        elif s.loop_id in open_:
            open_[s.loop_id].append(s)
            if s.pos == POST:
                out.append(LoopTrace(s.loop_id, tuple(open_.pop(s.loop_id)), False, occurrence=len(out)))
    for lid, cur in open_.items():
        if len(cur) > 1:
            out.append(LoopTrace(lid, tuple(cur), True, occurrence=len(out)))
    return out
