"""Symbolic summaries of a loop body and of the code leading to a loop.

A transition relation is a list of paths; each path is a guard (a conjunction
over the pre-state) and a polynomial update of every variable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

from .lang import AssignOp, Assume, Cfa, HavocOp, Nop
from .logic import Atom, Conjunction, Formula, FormulaTooLarge, dnf
from .poly import Poly

NESTED_BODY = "NestedBody"
LOOPY_STEM = "LoopyStem"
NONDET = "Nondet"

MAX_PATHS = 64


class Unsupported(Exception):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


class PathExplosion(Exception):
    pass


@dataclass
class Path:
    guard: Conjunction
    update: Dict[str, Poly]

    def enabled(self, env: Mapping[str, int]) -> bool:
        return self.guard.holds(env)

    def apply(self, env: Mapping[str, int]) -> Dict[str, int]:
        return {v: p.evaluate(env) for v, p in self.update.items()}

    def __str__(self):
        changed = [f"{v}' = {p}" for v, p in self.update.items() if p != Poly.var(v)]
        return " && ".join([str(self.guard)] + changed) if changed else str(self.guard)


@dataclass
class TransitionRelation:
    vars: tuple
    paths: List[Path] = field(default_factory=list)

    @staticmethod
    def identity(variables: Sequence[str]) -> "TransitionRelation":
        return TransitionRelation(tuple(variables), [Path(Conjunction(), {v: Poly.var(v) for v in variables})])

    def successors(self, env: Mapping[str, int]) -> List[Dict[str, int]]:
        out = []
        for p in self.paths:
            if p.enabled(env):
                nxt = p.apply(env)
                if nxt not in out:
                    out.append(nxt)
        return out

    def step(self, env: Mapping[str, int]) -> Optional[Dict[str, int]]:
        nxt = self.successors(env)
        return nxt[0] if nxt else None

    def holds(self, env: Mapping[str, int], env2: Mapping[str, int]) -> bool:
        return any(p.enabled(env) and p.apply(env) == dict(env2) for p in self.paths)

    def __len__(self):
        return len(self.paths)

    def __str__(self):
        return " || ".join(f"({p})" for p in self.paths) or "false"


@dataclass
class LoopSummary:
    loop_id: int
    cloop: Formula
    tloop: TransitionRelation
    tstem: Optional[TransitionRelation]
    stem_error: Optional[str] = None

    @property
    def exact_stem(self) -> bool:
        return self.tstem is not None


def _feasible(atoms: List[Atom]) -> bool:
    from .solver import inconsistent

    return not inconsistent(atoms)


def _extend(atoms: List[Atom], f: Formula, update: Mapping[str, Poly]) -> List[List[Atom]]:
    try:
        cases = dnf(f)
    except FormulaTooLarge as exc:
        raise PathExplosion(str(exc)) from exc
    out = []
    for case in cases:
        new = list(atoms) + [a.subst(update) for a in case]
        if any(a.is_const() and not a.const_value() for a in new):
            continue
        if _feasible(new):
            out.append(new)
    return out


def _can_reach(c: Cfa, target: int) -> set:
    """Locations with a path to ``target`` that does not pass through it."""
    seen, stack = {target}, [target]
    preds: Dict[int, list] = {}
    for e in c.edges:
        preds.setdefault(e.dst, []).append(e.src)
    while stack:
        q = stack.pop()
        for p in preds.get(q, []):
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def _symex(c: Cfa, start: int, stop: int, init: List[List[Atom]], update: Dict[str, Poly],
           on_header: str, max_paths: int) -> TransitionRelation:
    headers = {li.header for li in c.loops}
    live = _can_reach(c, stop)
    done: List[Path] = []
    stack = [(start, atoms, dict(update)) for atoms in reversed(init)]
    while stack:
        q, atoms, upd = stack.pop()
        if q == stop:
            done.append(Path(Conjunction(atoms), upd))
            if len(done) > max_paths:
                raise PathExplosion(f"more than {max_paths} paths")
            continue
        if q in headers:
            raise Unsupported(on_header, f"path passes loop header {q}")
        for e in reversed(c.out_edges(q)):
            if e.dst not in live:
                continue
            op = e.op
            if isinstance(op, Assume):
                for new in reversed(_extend(atoms, op.formula(), upd)):
                    stack.append((e.dst, new, upd))
            elif isinstance(op, AssignOp):
                nu = dict(upd)
                nu[op.var] = op.poly.subst(upd)
                stack.append((e.dst, atoms, nu))
            elif isinstance(op, HavocOp):
                raise Unsupported(NONDET, f"{op.var} := *")
            elif isinstance(op, Nop):
                stack.append((e.dst, atoms, upd))
            else:
                raise TypeError(f"unexpected edge operation {op}")
    return TransitionRelation(tuple(c.vars), done)


def summarize_loop(c: Cfa, loop_id: int, max_paths: int = MAX_PATHS) -> TransitionRelation:
    """One iteration of the loop: paths from the header back to the header,
    guards including the loop condition."""
    li = c.loop(loop_id)
    ident = {v: Poly.var(v) for v in c.vars}
    init = _extend([], li.condition, ident)
    return _symex(c, li.body_entry, li.header, init, ident, NESTED_BODY, max_paths)


def summarize_stem(c: Cfa, loop_id: int, max_paths: int = MAX_PATHS) -> TransitionRelation:
    """Paths from program entry to the loop header; guards and updates are over
    the program inputs (other variables start at 0)."""
    li = c.loop(loop_id)
    start = {v: (Poly.var(v) if v in c.inputs else Poly.const(0)) for v in c.vars}
    return _symex(c, c.q0, li.header, [[]], start, LOOPY_STEM, max_paths)


def summarize(c: Cfa, loop_id: int, max_paths: int = MAX_PATHS) -> LoopSummary:
    """Loop summary; raises Unsupported/PathExplosion when the body cannot be
    summarised.  A stem that cannot be summarised is recorded, not raised."""
    li = c.loop(loop_id)
    tloop = summarize_loop(c, loop_id, max_paths)
    try:
        tstem, err = summarize_stem(c, loop_id, max_paths), None
    except (Unsupported, PathExplosion) as exc:
        tstem, err = None, str(exc)
    return LoopSummary(loop_id, li.condition, tloop, tstem, err)


def compose(t1: TransitionRelation, t2: TransitionRelation, max_paths: int = MAX_PATHS) -> TransitionRelation:
    """Relational composition: a step of ``t1`` followed by a step of ``t2``."""
    out: List[Path] = []
    for p1 in t1.paths:
        for p2 in t2.paths:
            atoms = list(p1.guard) + [a.subst(p1.update) for a in p2.guard]
            if any(a.is_const() and not a.const_value() for a in atoms) or not _feasible(atoms):
                continue
            upd = {v: p.subst(p1.update) for v, p in p2.update.items()}
            for v, p in p1.update.items():
                upd.setdefault(v, p)
            out.append(Path(Conjunction(atoms), upd))
            if len(out) > max_paths:
                raise PathExplosion(f"more than {max_paths} paths")
    return TransitionRelation(tuple(dict.fromkeys(t1.vars + t2.vars)), out)
