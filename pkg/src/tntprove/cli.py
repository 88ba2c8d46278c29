"""Command-line driver: prove, bench, trace and check."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, List, Optional

from .analysis import NONTERM, TERM, Session, Verdict, prove_tnt, recheck_recurrent, recheck_rfs
from .config import Config, MODES, REPORTS
from .execution import dump_traces, gen_random_inputs
from .lang import ParseError, parse_program
from .logic import Conjunction, atoms_of
from .rank import RankingFunction, RfSet
from .smtlib import SmtParseError, formula_smt, parse_smtlib

REPORT_VERSION = 1
EXIT = {TERM: 0, NONTERM: 1}
EXIT_UNKNOWN, EXIT_ERROR = 2, 3
CSV_HEADER = "name,verdict,confidence,learn_s,validate_s,total_s,switches"


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors share the error exit code; 2 means Unknown here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- reports


def _atoms_json(r: Conjunction) -> List[dict]:
    return [{"text": str(a), "smt": formula_smt(a)} for a in r]


def _atoms_from_json(items: List[dict], variables) -> Conjunction:
    decls = "".join(f"(declare-const {v} Int)" for v in variables)
    atoms = []
    for it in items:
        atoms.extend(atoms_of(parse_smtlib(decls + f"(assert {it['smt']})")))
    return Conjunction(atoms)


def build_report(path: str, config: Config, verdict: Verdict) -> dict:
    loops = []
    for lv in verdict.loops:
        entry = {"loop": lv.loop_id, "verdict": lv.outcome, "confidence": lv.confidence, "first": lv.first,
                 "switches": lv.switches, "handoff": lv.handoff, "traces": dict(lv.counts), "reason": lv.reason}
        if lv.rfs is not None and lv.outcome == TERM:
            entry["ranking_functions"] = [rf.to_json() for rf in lv.rfs]
        if lv.recurrent is not None and lv.outcome == NONTERM:
            entry["recurrent_set"] = _atoms_json(lv.recurrent)
            entry["witness"] = dict(lv.witness or {})
            entry["depth"] = lv.depth
        loops.append(entry)
    evidence: Dict[str, object] = {}
    if verdict.outcome == TERM:
        evidence["ranking_functions"] = {str(e["loop"]): e.get("ranking_functions", []) for e in loops}
    elif verdict.outcome == NONTERM:
        evidence["loop"] = verdict.deciding.loop_id
        evidence["recurrent_set"] = _atoms_json(verdict.recurrent)
    t = verdict.timings
    return {
        "version": REPORT_VERSION,
        "file": path,
        "verdict": verdict.outcome,
        "confidence": verdict.confidence,
        "evidence": evidence,
        "witness": dict(verdict.witness) if verdict.outcome == NONTERM and verdict.witness is not None else None,
        "switches": verdict.switches,
        "timings": {"learn_s": round(t.get("learn", 0.0), 3), "validate_s": round(t.get("validate", 0.0), 3),
                    "total_s": round(t.get("total", 0.0), 3)},
        "seed": config.seed,
        "config": config.to_json(),
        "loops": loops,
        "reason": verdict.reason,
    }


def render_text(rep: dict) -> str:
    lines = [f"file: {rep['file']}", f"verdict: {rep['verdict']} ({rep['confidence']})"]
    ev = rep["evidence"]
    if rep["verdict"] == TERM:
        for lid, rfs in ev["ranking_functions"].items():
            shown = ", ".join(str(RankingFunction.from_json(d)) for d in rfs) or "(no loop iterations)"
            lines.append(f"ranking functions (loop {lid}): {shown}")
    elif rep["verdict"] == NONTERM:
        lines.append(f"recurrent set (loop {ev['loop']}): " + " && ".join(a["text"] for a in ev["recurrent_set"]))
        lines.append("witness: " + (" ".join(f"{k}={v}" for k, v in rep["witness"].items()) or "(no inputs)"))
    if rep["reason"]:
        lines.append(f"reason: {rep['reason']}")
    t = rep["timings"]
    lines.append(f"switches: {rep['switches']}")
    lines.append(f"timings: learn {t['learn_s']:.3f}s, validate {t['validate_s']:.3f}s, total {t['total_s']:.3f}s")
    lines.append(f"seed: {rep['seed']}")
    return "\n".join(lines) + "\n"


def _load(path: str):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return parse_program(text)
    except ParseError as exc:
        raise CliError(f"{path}: {exc}") from exc


def run_prove(path: str, config: Config) -> dict:
    return build_report(path, config, prove_tnt(_load(path), config))


# ---------------------------------------------------------------- check


def check_report(rep: dict) -> List[str]:
    """Re-validate the evidence of a report; returns the disagreements."""
    if rep.get("version") != REPORT_VERSION:
        raise CliError(f"unsupported report version {rep.get('version')!r}")
    known = {k: v for k, v in rep.get("config", {}).items() if k in Config.__dataclass_fields__}
    known["emit_smt_dir"] = None
    sess = Session(_load(rep["file"]), Config(**known))
    problems = []
    if rep["verdict"] == TERM:
        for lid, rfs in rep["evidence"]["ranking_functions"].items():
            res = recheck_rfs(sess, int(lid), RfSet(RankingFunction.from_json(d) for d in rfs))
            if not res.valid:
                problems.append(f"loop {lid}: {res.info}")
    elif rep["verdict"] == NONTERM:
        lid = rep["evidence"]["loop"]
        try:
            r = _atoms_from_json(rep["evidence"]["recurrent_set"], sess.cfa.vars)
        except SmtParseError as exc:
            raise CliError(f"bad recurrent set: {exc}") from exc
        res = recheck_recurrent(sess, lid, r, rep["witness"] or {})
        if not res.valid:
            problems.append(f"loop {lid}: {res.info}")
    return problems


# ---------------------------------------------------------------- bench


def _bench_one(args):
    path, config = args
    name = os.path.basename(path)
    try:
        rep = run_prove(path, config)
    except Exception as exc:  # a broken file becomes an error row
        logging.getLogger(__name__).warning("%s: %s", name, exc)
        return name, ["error", "none", "0.000", "0.000", "0.000", "0"]
    t = rep["timings"]
    return name, [rep["verdict"], rep["confidence"], f"{t['learn_s']:.3f}", f"{t['validate_s']:.3f}",
                  f"{t['total_s']:.3f}", str(rep["switches"])]


def run_bench(directory: str, config: Config, jobs: int = 1) -> str:
    if not os.path.isdir(directory):
        raise CliError(f"{directory}: not a directory")
    files = sorted(os.path.join(directory, f) for f in os.listdir(directory) if f.endswith(".imp"))
    work = [(f, config) for f in files]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_bench_one, work))
    else:
        rows = [_bench_one(w) for w in work]
    rows.sort(key=lambda r: r[0])
    return "\n".join([CSV_HEADER] + [",".join([n] + cols) for n, cols in rows]) + "\n"


# ---------------------------------------------------------------- trace


def run_trace(path: str, config: Config) -> str:
    sess = Session(_load(path), config)
    inputs = gen_random_inputs(sess.cfa.inputs, config.inputs, config.range, config.seed)
    return dump_traces(sess.execute(inputs))


# ---------------------------------------------------------------- argument parsing


def _add_flags(p: argparse.ArgumentParser):
    d = Config()
    p.add_argument("--mode", choices=MODES, default=d.mode)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--bnd", type=int, default=d.bnd)
    p.add_argument("--upperbound", type=int, default=d.upperbound)
    p.add_argument("--inputs", type=int, default=d.inputs)
    p.add_argument("--range", type=int, default=d.range)
    p.add_argument("--degree", type=int, default=d.degree)
    p.add_argument("--k-pairs", type=int, default=d.k_pairs)
    p.add_argument("--timeout", type=float, default=d.timeout_secs, metavar="SECS")
    p.add_argument("--emit-smt", default=None, metavar="DIR")
    p.add_argument("--report", choices=REPORTS, default=d.report)
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")


def _config(ns) -> Config:
    return Config(mode=ns.mode, seed=ns.seed, bnd=ns.bnd, upperbound=ns.upperbound, inputs=ns.inputs,
                  range=ns.range, degree=ns.degree, k_pairs=ns.k_pairs, timeout_secs=ns.timeout,
                  emit_smt_dir=ns.emit_smt, report=ns.report)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tntprove", description="Termination and non-termination prover "
                                     "for small integer programs.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("prove", help="analyse one program")
    p.add_argument("file")
    _add_flags(p)
    b = sub.add_parser("bench", help="analyse every .imp file of a directory, CSV on stdout")
    b.add_argument("dir")
    _add_flags(b)
    b.add_argument("--jobs", type=int, default=1)
    t = sub.add_parser("trace", help="dump the instrumented traces of random runs")
    t.add_argument("file")
    _add_flags(t)
    c = sub.add_parser("check", help="re-validate the evidence of a JSON report")
    c.add_argument("report")
    c.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    ns = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if ns.command == "check":
            try:
                with open(ns.report) as fh:
                    rep = json.load(fh)
            except (OSError, ValueError) as exc:
                raise CliError(f"{ns.report}: {exc}") from exc
            problems = check_report(rep)
            for msg in problems:
                print(f"disagree: {msg}")
            if not problems:
                print(f"agree: {rep['verdict']}")
            return 0 if not problems else 1
        try:
            config = _config(ns)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        if ns.command == "prove":
            rep = run_prove(ns.file, config)
            if config.report == "json":
                sys.stdout.write(json.dumps(rep, indent=2, sort_keys=True) + "\n")
            else:
                sys.stdout.write(render_text(rep))
            return EXIT.get(rep["verdict"], EXIT_UNKNOWN)
        if ns.command == "bench":
            if ns.jobs < 1:
                raise CliError("--jobs must be positive")
            sys.stdout.write(run_bench(ns.dir, config, ns.jobs))
            return 0
        sys.stdout.write(run_trace(ns.file, config))
        return 0
    except CliError as exc:
        print(f"tntprove: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
