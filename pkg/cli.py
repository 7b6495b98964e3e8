import argparse
import logging
import os
import sys
from dataclasses import dataclass
from typing import List, Optional, Tuple

import chase
import generator
import reasoner
import validator
from graph_core import GraphError, PropertyGraph, open_graph
from ggd_lang import GgdError, load_ggds
from matcher import MatchGuardExceeded, plan_pattern

logger = logging.getLogger(__name__)

COMMANDS = ("validate", "sat", "implies", "wacyclic", "gen", "explain")
LOG_FORMAT = "[%(levelname)s] %(name)s: %(message)s"

EXIT_OK, EXIT_FAIL, EXIT_ERROR, EXIT_UNKNOWN = 0, 1, 2, 3
VERDICT_EXIT = {
    reasoner.SATISFIABLE: EXIT_OK,
    reasoner.IMPLIED: EXIT_OK,
    "true": EXIT_OK,
    reasoner.UNSATISFIABLE: EXIT_FAIL,
    reasoner.NOT_IMPLIED: EXIT_FAIL,
    "false": EXIT_FAIL,
    reasoner.UNKNOWN: EXIT_UNKNOWN,
}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    graph: Optional[str] = None
    ggds: Optional[str] = None
    ggd: Optional[str] = None
    plan: str = "anti"
    cap: int = chase.DEFAULT_STEP_CAP
    seed: int = 0
    scale: float = 1.0
    out: Optional[str] = None
    workers: int = 1
    explain: bool = False
    timings: bool = False
    spec: Optional[str] = None
    graphml: Optional[str] = None
    log_level: Optional[str] = None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ggd", description="Validate and reason about graph generating dependencies.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--graph", help="graph directory (vertices.csv, edges.csv) or .xlsx workbook")
    p.add_argument("--ggds", help="GGD file")
    p.add_argument("--ggd", help="name of the GGD tested by `implies`")
    p.add_argument("--plan", choices=validator.PLANS, default="anti")
    p.add_argument("--cap", type=int, default=chase.DEFAULT_STEP_CAP, help="chase step cap")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", help="output file (directory for `gen`); stdout when omitted")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--explain", action="store_true", help="print match plans to stderr")
    p.add_argument("--timings", action="store_true", help="include ms fields in documents")
    p.add_argument("--spec", help="generator spec (JSON)")
    p.add_argument("--graphml", help="write the dependency graph of `wacyclic` here")
    p.add_argument("--log-level", dest="log_level", help="overrides GGD_LOG_LEVEL")
    return p


def parse_config(argv: Optional[List[str]] = None) -> RunConfig:
    ns = build_parser().parse_args(argv)
    return RunConfig(**vars(ns))


def setup_logging(level: Optional[str]) -> None:
    name = (level or os.environ.get("GGD_LOG_LEVEL") or "WARNING").upper()
    root = logging.getLogger()
    for h in list(root.handlers):
        root.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(getattr(logging, name, logging.WARNING))


def _require(cfg: RunConfig, *names: str) -> None:
    for n in names:
        if not getattr(cfg, n):
            raise UsageError(f"{cfg.command} needs --{n}")


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def explain_text(ggds, graph: Optional[PropertyGraph] = None) -> str:
    out = []
    for g in ggds:
        out.append(f"ggd {g.name}")
        out.append(plan_pattern(g.source, g.source_constraints, graph).explain())
        out.append(plan_pattern(g.target, g.target_constraints, graph, bound=g.shared_vars).explain())
    return "\n".join(out) + "\n"


def cmd_validate(cfg: RunConfig) -> Tuple[int, str]:
    _require(cfg, "graph", "ggds")
    graph = open_graph(cfg.graph)
    ggds = load_ggds(cfg.ggds)
    if cfg.explain:
        sys.stderr.write(explain_text(ggds, graph))
    reports = validator.validate_set(graph, ggds, cfg.plan, cfg.workers)
    code = EXIT_OK if all(r.valid for r in reports) else EXIT_FAIL
    return code, validator.report_document(reports, cfg.timings)


def _verdict_exit(cfg: RunConfig, verdict: reasoner.Verdict) -> Tuple[int, str]:
    return VERDICT_EXIT[verdict.verdict], reasoner.verdict_document(verdict, cfg.timings)


def cmd_sat(cfg: RunConfig) -> Tuple[int, str]:
    _require(cfg, "ggds")
    return _verdict_exit(cfg, reasoner.check_satisfiability(load_ggds(cfg.ggds), cfg.cap))


def cmd_implies(cfg: RunConfig) -> Tuple[int, str]:
    _require(cfg, "ggds", "ggd")
    ggds = load_ggds(cfg.ggds)
    try:
        target = ggds.get(cfg.ggd)
    except KeyError:
        raise UsageError(f"no GGD named {cfg.ggd!r} in {cfg.ggds}") from None
    return _verdict_exit(cfg, reasoner.check_implication(ggds.without(cfg.ggd), target, cfg.cap))


def cmd_wacyclic(cfg: RunConfig) -> Tuple[int, str]:
    _require(cfg, "ggds")
    verdict, dg = reasoner.check_weak_acyclicity(load_ggds(cfg.ggds))
    if cfg.graphml:
        with open(cfg.graphml, "w", encoding="utf-8") as fh:
            fh.write(dg.to_graphml())
    return _verdict_exit(cfg, verdict)


def cmd_gen(cfg: RunConfig) -> Tuple[int, str]:
    _require(cfg, "out")
    spec = generator.load_spec(cfg.spec) if cfg.spec else generator.default_spec()
    generator.gen_graph(spec, cfg.seed, cfg.scale, cfg.out)
    return EXIT_OK, ""


def cmd_explain(cfg: RunConfig) -> Tuple[int, str]:
    _require(cfg, "ggds")
    graph = open_graph(cfg.graph) if cfg.graph else None
    return EXIT_OK, explain_text(load_ggds(cfg.ggds), graph)


HANDLERS = {
    "validate": cmd_validate,
    "sat": cmd_sat,
    "implies": cmd_implies,
    "wacyclic": cmd_wacyclic,
    "gen": cmd_gen,
    "explain": cmd_explain,
}


def execute(cfg: RunConfig) -> Tuple[int, str]:
    """Run a command and return its exit code and document; library errors propagate."""
    return HANDLERS[cfg.command](cfg)


def run(cfg: RunConfig) -> int:
    try:
        code, text = execute(cfg)
        if text:
            _emit(cfg, text)
        return code
    except (UsageError, GraphError, GgdError, MatchGuardExceeded, reasoner.ReasonerError, ValueError) as e:
        sys.stderr.write(f"error: {e}\n")
    except OSError as e:
        sys.stderr.write(f"error: {e.filename or ''}: {e.strerror}\n")
    return EXIT_ERROR


def main(argv: Optional[List[str]] = None) -> int:
    try:
        cfg = parse_config(argv)
    except SystemExit as e:
        return EXIT_ERROR if e.code else EXIT_OK
    setup_logging(cfg.log_level)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
