"""Termination and non-termination provers and the driver that combines them.

``prove_t`` learns ranking functions from terminating traces and validates
them on program runs, feeding counterexamples back as new inputs.
``prove_nt`` searches a stack of candidate recurrent sets, refining failed
candidates with invariants learnt from the runs that escape them.
``prove_tnt`` runs both per loop, innermost loops first, and hands traces
from one prover to the other.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import os
import random
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import Config
from .dinfer import dinfer
from .execution import (TracePartition, execute, gen_random_inputs, interpret, partition, project, run_fragment,
                        _merge)
from .lang import Cfa, Program, get_loop_seq, instrument, loop_body_has_nondet, to_cfa
from .logic import EQ, Atom, Conjunction, atoms_of, conj, disj, dnf, holds_np, negate
from .rank import RankingFunction, RfSet, infer_rf
from .smtlib import export_implication
from .solver import (BOUNDED, CEX, SYMBOLIC, VALID, CheckResult, check_implication, check_recurrent,
                     RfCex, find_models, inconsistent, prove_implication, sample_models, validate_rfs)
from .summary import NONDET, LoopSummary, PathExplosion, Unsupported, summarize

log = logging.getLogger(__name__)

TERM = "term"
NONTERM = "nonterm"
UNKNOWN = "unknown"


class Timeout(Exception):
    pass


# ---------------------------------------------------------------- results


@dataclass
class TResult:
    outcome: str
    rfs: RfSet = field(default_factory=RfSet)
    confidence: str = BOUNDED
    rounds: int = 0
    reason: str = ""


@dataclass
class NtResult:
    outcome: str
    recurrent: Optional[Conjunction] = None
    witness: Optional[Dict[str, int]] = None
    confidence: str = BOUNDED
    depth: Optional[int] = None
    candidates: int = 0
    reason: str = ""


@dataclass
class LoopVerdict:
    loop_id: int
    outcome: str
    confidence: str = BOUNDED
    rfs: Optional[RfSet] = None
    recurrent: Optional[Conjunction] = None
    witness: Optional[Dict[str, int]] = None
    depth: Optional[int] = None
    first: str = ""
    switches: int = 0
    handoff: int = 0
    counts: Dict[str, int] = field(default_factory=dict)
    reason: str = ""


@dataclass
class Verdict:
    outcome: str
    confidence: str = BOUNDED
    loops: List[LoopVerdict] = field(default_factory=list)
    switches: int = 0
    timings: Dict[str, float] = field(default_factory=dict)
    reason: str = ""

    @property
    def deciding(self) -> Optional[LoopVerdict]:
        for lv in self.loops:
            if lv.outcome == self.outcome:
                return lv
        return None

    @property
    def rfs(self) -> Optional[RfSet]:
        d = self.deciding
        return d.rfs if d else None

    @property
    def recurrent(self) -> Optional[Conjunction]:
        d = self.deciding
        return d.recurrent if self.outcome == NONTERM and d else None

    @property
    def witness(self) -> Optional[Dict[str, int]]:
        d = self.deciding
        return d.witness if self.outcome == NONTERM and d else None


# ---------------------------------------------------------------- session


class Session:
    """Program, configuration and bookkeeping shared by the provers."""

    def __init__(self, program: Program, config: Optional[Config] = None):
        self.program = program
        self.config = config or Config()
        self.cfa: Cfa = to_cfa(program)
        self.ic = instrument(self.cfa, self.config.bnd)
        self.timings = {"learn": 0.0, "validate": 0.0}
        self.start = time.monotonic()
        self.deadline = self.start + self.config.timeout_secs
        self.runs: list = []
        self._summaries: Dict[int, object] = {}
        self._smt = 0
        self._salt = 0

    @contextmanager
    def phase(self, name: str):
        t0 = time.monotonic()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.monotonic() - t0

    def check_time(self):
        if time.monotonic() > self.deadline:
            raise Timeout(f"timeout after {self.config.timeout_secs}s")

    def execute(self, inputs: Sequence[Dict[str, int]]) -> list:
        self.check_time()
        runs = execute(self.ic, inputs, self.config.step_budget, self.config.seed)
        self.runs.extend(runs)
        return runs

    def next_seed(self) -> int:
        self._salt += 1
        return self.config.seed * 1_000_003 + self._salt

    def summary(self, loop_id: int):
        """LoopSummary or the exception explaining why there is none."""
        if loop_id not in self._summaries:
            try:
                self._summaries[loop_id] = summarize(self.cfa, loop_id)
            except (Unsupported, PathExplosion) as exc:
                self._summaries[loop_id] = exc
        return self._summaries[loop_id]

    def emit(self, text: str, tag: str):
        d = self.config.emit_smt_dir
        if not d:
            return
        os.makedirs(d, exist_ok=True)
        self._smt += 1
        with open(os.path.join(d, f"{self._smt:04d}_{tag}.smt2"), "w") as fh:
            fh.write(text)


def _traces_for(sess: Session, runs, loop_id: int) -> TracePartition:
    return partition(project(runs, loop_id))


# ---------------------------------------------------------------- termination


def _symbolic_rf(rf: RankingFunction, summary: LoopSummary) -> bool:
    """rf is bounded and decreases on every summarised path of the loop."""
    for path in summary.tloop.paths:
        g = list(path.guard)
        dec = rf.poly - rf.poly.subst(path.update) - 1
        if prove_implication(g, Atom.ge(rf.poly)) is None or prove_implication(g, Atom.ge(dec)) is None:
            return False
    return True


def _neighbours(sess: Session, inputs: Dict[str, int]) -> List[Dict[str, int]]:
    cfg = sess.config
    rng = random.Random(sess.next_seed())
    out = [dict(inputs)]
    names = list(sess.cfa.inputs)
    for _ in range(cfg.cex_neighbors):
        out.append({v: inputs[v] + rng.randint(-cfg.cex_radius, cfg.cex_radius) for v in names})
    return out


def prove_t(sess: Session, loop_id: int, term_traces: Sequence) -> Tuple[TResult, list]:
    """Learn-and-validate loop; returns the result and the MayLoop traces met
    along the way."""
    cfg = sess.config
    rfset = RfSet()
    traces = list(term_traces)
    mayloop: list = []
    new_runs: list = []
    summary = sess.summary(loop_id)
    result = TResult(UNKNOWN, rfset, reason="iteration cap reached")
    for rnd in range(cfg.cegis_rounds):
        sess.check_time()
        with sess.phase("learn"):
            inferred = infer_rf(traces, sess.cfa.vars, cfg.k_pairs, cfg.seed + rnd)
        added = [rf for rf in inferred.rfs if rfset.add(rf)]
        if not added:
            result = TResult(UNKNOWN, rfset, rounds=rnd, reason="no new ranking functions")
            break
        with sess.phase("validate"):
            res = validate_rfs(sess.ic, loop_id, rfset, cfg.box, cfg.validate_points, cfg.step_budget,
                               cfg.seed, stop=sess.check_time)
        if res.valid:
            conf = BOUNDED
            if isinstance(summary, LoopSummary) and any(_symbolic_rf(rf, summary) for rf in rfset):
                conf = SYMBOLIC
            result = TResult(TERM, rfset, conf, rnd + 1, "validated")
            break
        runs = sess.execute(_neighbours(sess, res.inputs))
        new_runs.extend(runs)
        part = _traces_for(sess, runs, loop_id)
        mayloop = _merge(mayloop, part.mayloop)
        traces = _merge(traces, part.term)
    # the hand-off set is exactly the MayLoop part of the runs made here
    again = _traces_for(sess, new_runs, loop_id).mayloop
    assert {t.key for t in again} == {t.key for t in mayloop}
    return result, mayloop


# ---------------------------------------------------------------- non-termination


def _implies(hyp: Sequence[Atom], f) -> bool:
    """Symbolic check that the conjunction ``hyp`` implies formula ``f``."""
    for case in dnf(f):
        if all(prove_implication(hyp, a) is not None for a in case):
            return True
    return False


def _closure_failures(sess: Session, r: Conjunction, summary: LoopSummary) -> List[Tuple[int, Atom, CheckResult]]:
    cfg = sess.config
    out = []
    for pi, path in enumerate(summary.tloop.paths):
        for a in r:
            res = check_implication(list(r), (path.guard, path.update), a, cfg.box, cfg.sat_budget,
                                    sess.cfa.vars, cfg.seed)
            sess.emit(export_implication(list(r), list(path.guard), path.update, a, sess.cfa.vars,
                                         f"closure of {a} along path {pi}: {res.kind}"), "closure")
            if res.kind != VALID:
                out.append((pi, a, res))
    return out


def _concrete_recurrent(sess: Session, r: Conjunction, loop_id: int) -> Tuple[CheckResult, List[Atom]]:
    """Bounded one-step closure check by running the loop body on sampled
    states of ``r``."""
    cfg = sess.config
    li = sess.cfa.loop(loop_id)
    states = sample_models(list(r), 500, cfg.box, sess.next_seed(), sess.cfa.vars, budget=200_000)
    if not states:
        return CheckResult("unknown", None, BOUNDED, "no states sampled"), []
    failed: List[Atom] = []
    first = None
    for s in states:
        nxt = run_fragment(sess.cfa, li.body_entry, li.header, s, budget=cfg.step_budget // 10)
        if nxt is None:
            continue
        bad = [a for a in r if not a.holds(nxt)]
        if bad:
            first = first or s
            failed.extend(a for a in bad if a not in failed)
    if failed:
        return CheckResult(CEX, first, BOUNDED, "one concrete step leaves the set"), failed
    return CheckResult(VALID, None, BOUNDED, f"closed on {len(states)} sampled states"), []


def _witness_from_runs(runs, loop_id: int, r: Conjunction) -> Optional[Dict[str, int]]:
    for run in runs:
        for s in run.snapshots:
            if s.loop_id == loop_id and s.pos == "body" and r.holds(s.env):
                return dict(run.inputs)
    return None


def _stem_formula(summary: LoopSummary, f_of_state):
    return disj(*[conj(*p.guard, f_of_state(p.update)) for p in summary.tstem.paths])


def reach(sess: Session, r: Conjunction, loop_id: int) -> Optional[Dict[str, int]]:
    """An input whose run enters the loop body in a state of ``r``."""
    cfg = sess.config
    summary = sess.summary(loop_id)
    if isinstance(summary, LoopSummary) and summary.exact_stem:
        f = _stem_formula(summary, lambda upd: conj(*[a.subst(upd) for a in r]))
        models, _ = find_models(f, 1, cfg.reach_box, cfg.sat_budget, sess.cfa.inputs, cfg.seed)
        if models:
            w = _witness_from_runs(sess.execute([models[0]]), loop_id, r)
            if w is not None:
                return w
    w = _witness_from_runs(sess.runs, loop_id, r)
    if w is not None:
        return w
    inputs = gen_random_inputs(sess.cfa.inputs, cfg.inputs, cfg.reach_box, sess.next_seed())
    return _witness_from_runs(sess.execute(inputs), loop_id, r)


def _violating_inputs(sess: Session, r: Conjunction, loop_id: int, failures) -> List[Dict[str, int]]:
    """Inputs whose runs reach a state of ``r`` whose successor leaves ``r``."""
    cfg = sess.config
    summary = sess.summary(loop_id)
    out: List[Dict[str, int]] = []
    if isinstance(summary, LoopSummary) and summary.exact_stem:
        for pi, a, _ in failures:
            path = summary.tloop.paths[pi] if pi is not None else None

            def bad(upd, path=path, a=a):
                if path is None:
                    return conj(*[b.subst(upd) for b in r], negate(a.subst(upd)))
                after = {v: p.subst(upd) for v, p in path.update.items()}
                return conj(*[b.subst(upd) for b in r], *[g.subst(upd) for g in path.guard],
                            negate(a.subst(after)))

            f = _stem_formula(summary, bad)
            for box in dict.fromkeys((cfg.box, cfg.reach_box, 1000)):
                models, _ = find_models(f, cfg.guess_models, box, cfg.sat_budget, sess.cfa.inputs, cfg.seed)
                if models:
                    break
            out.extend(m for m in models if m not in out)
        return out
    # no exact stem: look for escaping steps in runs
    pool = list(sess.runs)
    pool += sess.execute(gen_random_inputs(sess.cfa.inputs, cfg.inputs, cfg.range, sess.next_seed()))
    for run in pool:
        body = [s for s in run.snapshots if s.loop_id == loop_id and s.pos == "body"]
        for s, t in zip(body, body[1:]):
            if t.seq == s.seq + 1 and r.holds(s.env) and not r.holds(t.env):
                if run.inputs not in out:
                    out.append(dict(run.inputs))
                break
        if len(out) >= cfg.guess_models:
            break
    return out


def _distinct_body_states(traces) -> int:
    return len({s.values for t in traces for s in t.body_states()})


def refine_rs(sess: Session, r: Conjunction, loop_id: int, failures) -> Tuple[List[Conjunction], list]:
    """Children of a failed candidate and the terminating traces seen."""
    cfg = sess.config
    with sess.phase("learn"):
        inputs = _violating_inputs(sess, r, loop_id, failures)
        if not inputs:
            return [], []
        part = _traces_for(sess, sess.execute(inputs), loop_id)
        children: List[Conjunction] = []

        def add(c: Conjunction):
            if c != r and c not in children and not c.is_false() and not inconsistent(list(c)):
                children.append(c)

        if part.term and _distinct_body_states(part.term) >= cfg.min_refine_states:
            c_term = dinfer(part.term, "body", cfg.degree, cfg.max_conjuncts, variables=sess.cfa.vars)
            log.debug("violating inputs %s; C_term = %s", inputs, c_term)
            for ci in c_term:
                for case in atoms_of(ci.negate()):
                    add(r.extend([case]))
        if part.mayloop:
            add(dinfer(part.mayloop, "body", cfg.degree, cfg.max_conjuncts, variables=sess.cfa.vars))
    return children, part.term


def _generalize(sess: Session, r: Conjunction, summary: LoopSummary, condition) -> Conjunction:
    """Drop conjuncts of a symbolically valid recurrent set while it stays one.
    Sample-specific bounds (large constants) are tried first."""
    cfg = sess.config
    order = sorted(r, key=lambda a: (a.rel == EQ, -abs(a.poly.constant), str(a)))
    cur = list(r)
    for a in order:
        trial = [b for b in cur if b != a]
        if not trial or not _implies(trial, condition):
            continue
        cand = Conjunction(trial)
        if _closure_failures(sess, cand, summary):
            continue
        res = check_recurrent(cand, summary.tloop, cfg.box, cfg.sat_budget, sess.cfa.vars, seed=cfg.seed)
        if res.valid and res.confidence == SYMBOLIC:
            cur = trial
    return Conjunction(cur)


class _Pool:
    """Distinct body states of possibly non-terminating traces, used to rank
    candidates: sets holding more of them are tried first."""

    def __init__(self, traces, variables, limit: int = 20000):
        rows = list(dict.fromkeys(s.values for t in traces for s in t.body_states()))
        if len(rows) > limit:
            rows = random.Random(0).sample(rows, limit)
        self.n = len(rows)
        X = np.array(rows, dtype=object) if rows else np.zeros((0, len(variables)), dtype=object)
        self.cols = {v: X[:, i] for i, v in enumerate(variables)} if rows else {}

    def score(self, r: Conjunction) -> int:
        if not self.n:
            return 0
        return int(holds_np(r.formula(), self.cols, 0, self.n).sum())


def prove_nt(sess: Session, loop_id: int, mayloop_traces: Sequence) -> Tuple[NtResult, list]:
    """Search candidate recurrent sets, shallowest first; within one depth,
    candidates containing more observed MayLoop states come first."""
    cfg = sess.config
    li = sess.cfa.loop(loop_id)
    if loop_body_has_nondet(sess.cfa, loop_id):
        return NtResult(UNKNOWN, reason=f"Unsupported({NONDET})"), []
    summary = sess.summary(loop_id)
    exact = isinstance(summary, LoopSummary)
    pool = _Pool(mayloop_traces, sess.cfa.vars)
    queue: list = []
    order = itertools.count()

    def push(depth: int, r: Conjunction):
        heapq.heappush(queue, (depth, -pool.score(r), next(order), r))

    # the loop condition goes in before the MayLoop invariant and wins ties
    for case in dnf(li.condition):
        push(0, Conjunction(case))
    if mayloop_traces and exact:
        with sess.phase("learn"):
            push(0, dinfer(mayloop_traces, "body", cfg.degree, cfg.max_conjuncts, variables=sess.cfa.vars))
    seen = set()
    terms: list = []
    count = 0
    while queue:
        sess.check_time()
        depth, _, _, r = heapq.heappop(queue)
        if depth > cfg.upperbound or r in seen:
            continue
        seen.add(r)
        count += 1
        log.debug("candidate depth=%d: %s", depth, r)
        with sess.phase("validate"):
            if inconsistent(list(r)) or not _implies(list(r), li.condition):
                continue
            if exact:
                failures = _closure_failures(sess, r, summary)
                res = None
                if not failures:
                    res = check_recurrent(r, summary.tloop, cfg.box, cfg.sat_budget, sess.cfa.vars,
                                          seed=cfg.seed)
                    if not res.valid:
                        failures = [(res.path, res.conjunct or next(iter(r)), res)]
            else:
                res, bad = _concrete_recurrent(sess, r, loop_id)
                failures = [(None, a, res) for a in bad]
            if res is not None and res.valid:
                if exact and res.confidence == SYMBOLIC:
                    r = _generalize(sess, r, summary, li.condition)
                w = reach(sess, r, loop_id)
                if w is not None:
                    return NtResult(NONTERM, r, w, res.confidence, depth, count, "recurrent and reachable"), terms
                continue
        if depth < cfg.upperbound and failures:
            children, t = refine_rs(sess, r, loop_id, failures)
            log.debug("refined into %d children", len(children))
            terms = _merge(terms, t)
            for c in children:
                if c not in seen:
                    push(depth + 1, c)
    return NtResult(UNKNOWN, candidates=count, reason="no recurrent set found"), terms


# ---------------------------------------------------------------- driver


def _loop_verdict_t(lv: LoopVerdict, res: TResult):
    lv.outcome, lv.confidence, lv.rfs, lv.reason = TERM, res.confidence, res.rfs, res.reason


def _loop_verdict_nt(lv: LoopVerdict, res: NtResult):
    lv.outcome, lv.confidence = NONTERM, res.confidence
    lv.recurrent, lv.witness, lv.depth, lv.reason = res.recurrent, res.witness, res.depth, res.reason


def analyze_loop(sess: Session, loop_id: int, part: TracePartition) -> LoopVerdict:
    cfg = sess.config
    lv = LoopVerdict(loop_id, UNKNOWN, counts={"base": len(part.base), "term": len(part.term),
                                                "mayloop": len(part.mayloop)})
    if cfg.mode == "term":
        lv.first = TERM
        res, _ = prove_t(sess, loop_id, part.term)
        if res.outcome == TERM:
            _loop_verdict_t(lv, res)
        else:
            lv.reason = res.reason
        return lv
    if cfg.mode == "nonterm":
        lv.first = NONTERM
        res, _ = prove_nt(sess, loop_id, part.mayloop)
        if res.outcome == NONTERM:
            _loop_verdict_nt(lv, res)
        else:
            lv.reason = res.reason
        return lv
    if len(part.mayloop) > 4 * (len(part.base) + len(part.term)):
        lv.first = NONTERM
        nt, terms = prove_nt(sess, loop_id, part.mayloop)
        if nt.outcome == NONTERM:
            _loop_verdict_nt(lv, nt)
            return lv
        lv.switches += 1
        lv.handoff = len(terms)
        t, _ = prove_t(sess, loop_id, _merge(part.term, terms))
        if t.outcome == TERM:
            _loop_verdict_t(lv, t)
        else:
            lv.reason = f"{nt.reason}; {t.reason}"
        return lv
    lv.first = TERM
    t, mayloop = prove_t(sess, loop_id, part.term)
    if t.outcome == TERM:
        _loop_verdict_t(lv, t)
        return lv
    lv.switches += 1
    lv.handoff = len(mayloop)
    nt, _ = prove_nt(sess, loop_id, _merge(part.mayloop, mayloop))
    if nt.outcome == NONTERM:
        _loop_verdict_nt(lv, nt)
    else:
        lv.reason = f"{t.reason}; {nt.reason}"
    return lv


def prove_tnt(program: Program, config: Optional[Config] = None) -> Verdict:
    sess = Session(program, config)
    cfg = sess.config
    verdict = Verdict(UNKNOWN, timings=sess.timings)
    try:
        if not sess.cfa.loops:
            verdict.outcome, verdict.confidence, verdict.reason = TERM, SYMBOLIC, "no loops"
            return verdict
        inputs = gen_random_inputs(sess.cfa.inputs, cfg.inputs, cfg.range, cfg.seed)
        runs = sess.execute(inputs)
        unresolved = False
        confidence = SYMBOLIC
        for lid in get_loop_seq(sess.cfa):
            lv = analyze_loop(sess, lid, _traces_for(sess, runs, lid))
            verdict.loops.append(lv)
            verdict.switches += lv.switches
            if lv.outcome == NONTERM:
                verdict.outcome, verdict.confidence = NONTERM, lv.confidence
                verdict.reason = f"loop {lid}: {lv.reason}"
                return verdict
            if lv.outcome == UNKNOWN:
                unresolved = True
            elif lv.confidence != SYMBOLIC:
                confidence = BOUNDED
        if unresolved:
            verdict.reason = "; ".join(f"loop {lv.loop_id}: {lv.reason}" for lv in verdict.loops
                                       if lv.outcome == UNKNOWN)
        else:
            verdict.outcome, verdict.confidence, verdict.reason = TERM, confidence, "all loops terminate"
        return verdict
    except Timeout as exc:
        verdict.outcome, verdict.confidence, verdict.reason = UNKNOWN, BOUNDED, str(exc)
        return verdict
    finally:
        verdict.timings["total"] = time.monotonic() - sess.start


# ---------------------------------------------------------------- evidence re-checks


def recheck_rfs(sess: Session, loop_id: int, rfs: RfSet) -> CheckResult:
    """Re-validate a ranking-function set on the input grid."""
    cfg = sess.config
    res = validate_rfs(sess.ic, loop_id, rfs, cfg.box, cfg.validate_points, cfg.step_budget, cfg.seed)
    if isinstance(res, RfCex):
        return CheckResult(CEX, res.inputs, BOUNDED, f"pair {res.s1} -> {res.s2} not ordered")
    return res


def recheck_recurrent(sess: Session, loop_id: int, r: Conjunction, witness: Dict[str, int]) -> CheckResult:
    """Closure of ``r``, its witness run entering ``r`` and the uninstrumented
    run from the witness staying in the program for 10 * bnd steps."""
    cfg = sess.config
    li = sess.cfa.loop(loop_id)
    if not _implies(list(r), li.condition):
        return CheckResult(CEX, None, BOUNDED, "set does not imply the loop condition")
    summary = sess.summary(loop_id)
    if isinstance(summary, LoopSummary):
        res = check_recurrent(r, summary.tloop, cfg.box, cfg.sat_budget, sess.cfa.vars, seed=cfg.seed)
    else:
        res, _ = _concrete_recurrent(sess, r, loop_id)
    if not res.valid:
        return res
    if _witness_from_runs(sess.execute([witness]), loop_id, r) is None:
        return CheckResult(CEX, witness, res.confidence, "witness run never enters the set")
    trace, _ = interpret(sess.cfa, witness, budget=10 * cfg.bnd)
    if trace.status == "exit":
        return CheckResult(CEX, witness, res.confidence, f"witness run exits after {trace.steps} steps")
    return res
