import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

from graph_core import PropertyGraph
from ggd_lang import Ggd, holds_all
from matcher import Match, brute_force_match, extend_match, match_key, match_pattern

logger = logging.getLogger(__name__)

PLANS = ("anti", "outer")


@dataclass
class ViolationReport:
    ggd: str
    source_matches: int
    violated: List[Match] = field(default_factory=list)
    plan: str = "anti"
    ms: float = 0.0

    @property
    def valid(self) -> bool:
        return not self.violated


def validate_ggd(graph: PropertyGraph, ggd: Ggd) -> bool:
    """True iff every source match satisfying phi_s extends to a target match satisfying phi_t."""
    for h_s in match_pattern(graph, ggd.source, ggd.source_constraints):
        if not extend_match(graph, ggd, h_s, with_constraints=True).matches:
            logger.debug("%s violated at %s", ggd.name, h_s)
            return False
    return True


def split_target_constraints(ggd: Ggd):
    """phi_t1: constraints over target-only variables; phi_t2: everything else."""
    ys = set(ggd.y_vars)
    t1 = [c for c in ggd.target_constraints if c.variables and c.variables <= ys]
    t2 = [c for c in ggd.target_constraints if not (c.variables and c.variables <= ys)]
    return t1, t2


def _join_key(m: Match, shared: Sequence[str]) -> Tuple[str, ...]:
    return tuple(m[v] for v in shared)


def _index(rows: Iterable[Match], shared: Sequence[str]) -> Dict[Tuple[str, ...], List[Match]]:
    out: Dict[Tuple[str, ...], List[Match]] = {}
    for r in rows:
        out.setdefault(_join_key(r, shared), []).append(r)
    return out


def _anti_join(graph: PropertyGraph, ggd: Ggd):
    source = match_pattern(graph, ggd.source, ggd.source_constraints).matches
    t1, t2 = split_target_constraints(ggd)
    target = match_pattern(graph, ggd.target, t1).matches
    shared = ggd.shared_vars
    by_key = _index(target, shared)
    satisfied = set()
    for s in source:
        for t in by_key.get(_join_key(s, shared), ()):
            if holds_all(t2, {**s, **t}, graph):
                satisfied.add(match_key(s))
                break
    return source, [s for s in source if match_key(s) not in satisfied]


def _outer_join(graph: PropertyGraph, ggd: Ggd):
    source_all = match_pattern(graph, ggd.source).matches
    target_all = match_pattern(graph, ggd.target).matches
    shared = ggd.shared_vars
    by_key = _index(target_all, shared)
    rows = []
    for s in source_all:
        joined = by_key.get(_join_key(s, shared))
        if not joined:
            rows.append((s, None))
        else:
            rows.extend((s, t) for t in joined)
    rows = [(s, t) for s, t in rows if holds_all(ggd.source_constraints, s, graph)]
    satisfied = set()
    source, seen = [], set()
    for s, t in rows:
        key = match_key(s)
        if key not in seen:
            seen.add(key)
            source.append(s)
        if t is not None and holds_all(ggd.target_constraints, {**s, **t}, graph):
            satisfied.add(key)
    return source, [s for s in source if match_key(s) not in satisfied]


def find_violations(graph: PropertyGraph, ggd: Ggd, plan: str = "anti") -> ViolationReport:
    if plan not in PLANS:
        raise ValueError(f"unknown plan {plan!r}")
    start = time.perf_counter()
    source, violated = (_anti_join if plan == "anti" else _outer_join)(graph, ggd)
    ms = (time.perf_counter() - start) * 1000.0
    violated.sort(key=match_key)
    logger.info("%s: %d source matches, %d violated (%s plan, %.1f ms)",
                ggd.name, len(source), len(violated), plan, ms)
    return ViolationReport(ggd.name, len(source), violated, plan, ms)


def validate_set(graph: PropertyGraph, ggds: Iterable[Ggd], plan: str = "anti", workers: int = 1) -> List[ViolationReport]:
    """find_violations for each GGD; reports come back in input order."""
    ggds = list(ggds)
    if workers <= 1 or len(ggds) <= 1:
        return [find_violations(graph, g, plan) for g in ggds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda g: find_violations(graph, g, plan), ggds))


def direct_violations(graph: PropertyGraph, ggd: Ggd) -> List[Match]:
    """Per-match loop over the brute-force matcher."""
    out = []
    targets = brute_force_match(graph, ggd.target).matches
    for h_s in brute_force_match(graph, ggd.source, ggd.source_constraints):
        ok = False
        for h_t in targets:
            if all(h_t[v] == h_s[v] for v in ggd.shared_vars) and holds_all(ggd.target_constraints, {**h_s, **h_t}, graph):
                ok = True
                break
        if not ok:
            out.append(h_s)
    return sorted(out, key=match_key)


def report_dict(report: ViolationReport, timings: bool = False) -> dict:
    doc = {
        "ggd": report.ggd,
        "sourceMatches": report.source_matches,
        "violated": [{v: m[v] for v in sorted(m)} for m in report.violated],
        "plan": report.plan,
    }
    if timings:
        doc["ms"] = round(report.ms, 3)
    return doc


def report_document(reports: Sequence[ViolationReport], timings: bool = False) -> str:
    doc = {
        "reports": [report_dict(r, timings) for r in reports],
        "totalSourceMatches": sum(r.source_matches for r in reports),
        "totalViolated": sum(len(r.violated) for r in reports),
    }
    if timings:
        doc["ms"] = round(sum(r.ms for r in reports), 3)
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
