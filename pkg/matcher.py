import bisect
import itertools
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import networkx as nx

from graph_core import VERTEX, WILDCARD, PropertyGraph, is_numeric, value_kind
from ggd_lang import (ATTR, FLOAT_TOLERANCE, IDENT_EQ, AttrRef, DifferentialConstraint, Ggd, GraphPattern,
                      MissingProperty, eval_constraint, feasible, format_constraint, holds_all, tokens)

logger = logging.getLogger(__name__)

Match = Dict[str, str]

BRUTE_FORCE_LIMIT = 10 ** 7


class MatchGuardExceeded(Exception):
    pass


@dataclass
class MatchSet:
    pattern: GraphPattern
    matches: List[Match] = field(default_factory=list)

    def __len__(self):
        return len(self.matches)

    def __iter__(self):
        return iter(self.matches)

    def keys(self) -> List[Tuple[str, ...]]:
        return [match_key(m) for m in self.matches]


def match_key(m: Mapping[str, str]) -> Tuple[str, ...]:
    return tuple(m[v] for v in sorted(m))


def _sorted_matches(pattern: GraphPattern, matches: Iterable[Match]) -> MatchSet:
    return MatchSet(pattern, sorted(matches, key=match_key))


def label_ok(graph: PropertyGraph, oid: str, label: str) -> bool:
    return label == WILDCARD or label in graph.get(oid).labels


# ---------------------------------------------------------------------------
# planning

@dataclass
class Step:
    action: str                 # "vertex" or "edge"
    var: str
    anchor: Optional[str] = None
    checks: List[DifferentialConstraint] = field(default_factory=list)


@dataclass
class ComponentPlan:
    vertices: List[str]
    steps: List[Step]


@dataclass
class JoinPlan:
    left: Tuple[int, ...]
    right: Tuple[int, ...]
    constraint: Optional[DifferentialConstraint]
    contract: str


@dataclass
class PatternPlan:
    pattern: GraphPattern
    components: List[ComponentPlan]
    joins: List[JoinPlan]
    residual: List[DifferentialConstraint]

    def explain(self) -> str:
        lines = [f"pattern {self.pattern.name or '<anonymous>'}: {len(self.components)} component(s)"]
        for i, comp in enumerate(self.components):
            lines.append(f"  component {i}:")
            for s in comp.steps:
                via = f" via {s.anchor}" if s.anchor else ""
                check = "".join(f" [check {format_constraint(c)}]" for c in s.checks)
                lines.append(f"    {s.action} {s.var}{via}{check}")
        for j in self.joins:
            on = f" on {format_constraint(j.constraint)}" if j.constraint else ""
            lines.append(f"  join {list(j.left)} x {list(j.right)}: {j.contract}{on}")
        for c in self.residual:
            lines.append(f"  filter {format_constraint(c)}")
        return "\n".join(lines)


def _components(pattern: GraphPattern) -> List[List[str]]:
    g = nx.Graph()
    g.add_nodes_from(v.var for v in pattern.vertices)
    g.add_edges_from((e.src, e.dst) for e in pattern.edges)
    order = {v.var: i for i, v in enumerate(pattern.vertices)}
    comps = [sorted(c, key=order.get) for c in nx.connected_components(g)]
    return sorted(comps, key=lambda c: order[c[0]])


def _plan_component(pattern: GraphPattern, members: List[str], freq: Mapping[str, int],
                    constraints: List[DifferentialConstraint]) -> ComponentPlan:
    member_set = set(members)
    edges = [e for e in pattern.edges if e.src in member_set]
    start = min(members, key=lambda v: (freq.get(v, 0), v))
    bound = {start}
    steps = [Step("vertex", start)]
    closed = set()

    def close_edges():
        for e in edges:
            if e.var not in closed and e.src in bound and e.dst in bound:
                closed.add(e.var)
                steps.append(Step("edge", e.var))

    close_edges()
    while len(bound) < len(members):
        frontier = []
        for e in edges:
            if e.var in closed:
                continue
            if e.src in bound and e.dst not in bound:
                frontier.append((freq.get(e.dst, 0), e.dst, e.var))
            elif e.dst in bound and e.src not in bound:
                frontier.append((freq.get(e.src, 0), e.src, e.var))
        _, var, anchor = min(frontier)
        bound.add(var)
        closed.add(anchor)
        steps.append(Step("vertex", var, anchor))
        close_edges()

    pending = [c for c in constraints if c.variables <= set(members) | {e.var for e in edges}]
    seen = set()
    for s in steps:
        seen.add(s.var)
        if s.anchor:
            seen.add(s.anchor)
        for c in pending:
            if c not in s.checks and c.variables <= seen and not any(c in t.checks for t in steps):
                s.checks.append(c)
    return ComponentPlan(members, steps)


def _join_contract(c: DifferentialConstraint) -> str:
    if c.form == IDENT_EQ:
        return "hash join"
    if c.form != ATTR:
        return "nested loop"
    upper = c.op in ("<=", "<", "=")
    if c.distance == "eq" and c.op in ("<=", "<", "=") and c.threshold < 1 and not (c.op == "<" and c.threshold == 0):
        return "hash join"
    if c.distance == "edit" and upper:
        return "length filter"
    if c.distance == "jaccard" and upper and c.threshold < 1:
        return "prefix filter"
    if c.distance == "absdiff" and upper:
        return "range probe"
    return "nested loop"


def plan_pattern(pattern: GraphPattern, constraints: Sequence[DifferentialConstraint] = (),
                 graph: Optional[PropertyGraph] = None, bound: Iterable[str] = (),
                 strategy: str = "auto") -> PatternPlan:
    """Build the execution plan: components, their search order and the joins between them."""
    constraints = list(constraints)
    bound = set(bound)
    freq = {}
    for v in pattern.vertices:
        if v.var in bound:
            freq[v.var] = 0
        elif graph is not None:
            freq[v.var] = graph.label_count(v.label, VERTEX)
    comps = [_plan_component(pattern, members, freq, constraints) for members in _components(pattern)]

    owner: Dict[str, int] = {}
    for i, comp in enumerate(comps):
        for s in comp.steps:
            owner[s.var] = i
            if s.anchor:
                owner[s.anchor] = i
    inside = {id(c) for comp in comps for s in comp.steps for c in s.checks}
    linking = [c for c in constraints if id(c) not in inside]

    groups = [(i,) for i in range(len(comps))]
    joins: List[JoinPlan] = []
    residual: List[DifferentialConstraint] = []

    def group_of(i):
        return next(g for g in groups if i in g)

    for c in linking:
        parts = sorted({owner[v] for v in c.variables if v in owner})
        if len(parts) != 2 or group_of(parts[0]) == group_of(parts[1]):
            residual.append(c)
            continue
        gl, gr = group_of(parts[0]), group_of(parts[1])
        contract = "nested loop" if strategy == "nested" else _join_contract(c)
        joins.append(JoinPlan(gl, gr, c, contract))
        groups.remove(gl)
        groups.remove(gr)
        groups.append(tuple(sorted(gl + gr)))
    while len(groups) > 1:
        gl, gr = groups[0], groups[1]
        logger.warning("pattern %s: cross product between components %s and %s",
                       pattern.name or "<anonymous>", list(gl), list(gr))
        joins.append(JoinPlan(gl, gr, None, "cross product"))
        groups = [tuple(sorted(gl + gr))] + groups[2:]
    return PatternPlan(pattern, comps, joins, residual)


# ---------------------------------------------------------------------------
# execution

def _run_component(graph: PropertyGraph, pattern: GraphPattern, comp: ComponentPlan,
                   bound: Mapping[str, str]) -> List[Match]:
    labels = {v.var: v.label for v in pattern.vertices}
    edges = {e.var: e for e in pattern.edges}
    out: List[Match] = []

    def vertex_candidates(step: Step, h: Match) -> Iterator[Tuple[Optional[str], str]]:
        var = step.var
        if step.anchor is None:
            if var in bound:
                oid = bound[var]
                if oid in graph.vertices and label_ok(graph, oid, labels[var]):
                    yield None, oid
                return
            for oid in graph.objects_with_label(labels[var], VERTEX):
                yield None, oid
            return
        e = edges[step.anchor]
        if e.dst == var:
            eids = graph.out_edges(h[e.src])
        else:
            eids = graph.in_edges(h[e.dst])
        for eid in eids:
            if step.anchor in bound and bound[step.anchor] != eid:
                continue
            if not label_ok(graph, eid, e.label):
                continue
            obj = graph.edges[eid]
            oid = obj.dst if e.dst == var else obj.src
            if var in bound and bound[var] != oid:
                continue
            if label_ok(graph, oid, labels[var]):
                yield eid, oid

    def edge_candidates(var: str, h: Match) -> Iterator[str]:
        e = edges[var]
        dst = h[e.dst]
        for eid in graph.out_edges(h[e.src]):
            if graph.edges[eid].dst != dst:
                continue
            if var in bound and bound[var] != eid:
                continue
            if label_ok(graph, eid, e.label):
                yield eid

    def search(i: int, h: Match) -> None:
        if i == len(comp.steps):
            out.append(dict(h))
            return
        step = comp.steps[i]
        if step.action == "vertex":
            for eid, oid in vertex_candidates(step, h):
                h[step.var] = oid
                if eid is not None:
                    h[step.anchor] = eid
                if holds_all(step.checks, h, graph):
                    search(i + 1, h)
                del h[step.var]
                if eid is not None:
                    del h[step.anchor]
        else:
            for eid in edge_candidates(step.var, h):
                h[step.var] = eid
                if holds_all(step.checks, h, graph):
                    search(i + 1, h)
                del h[step.var]

    search(0, {})
    return out


def _attr_side(c: DifferentialConstraint, rows_vars) -> Tuple[AttrRef, AttrRef]:
    if c.left.var in rows_vars:
        return c.left, c.right
    return c.right, c.left


def _value(graph: PropertyGraph, row: Match, ref: AttrRef):
    if ref.key.startswith("_"):
        return MissingProperty
    return graph.get(row[ref.var]).properties.get(ref.key, MissingProperty)


def _nested(graph, left, right, c):
    out = []
    for l in left:
        for r in right:
            m = {**l, **r}
            if c is None or eval_constraint(c, m, graph) is True:
                out.append(m)
    return out


def _similarity_join(graph: PropertyGraph, left: List[Match], right: List[Match],
                     c: DifferentialConstraint, contract: str) -> List[Match]:
    if not left or not right:
        return []
    if contract == "hash join" and c.form == IDENT_EQ:
        lvar, rvar = (c.left, c.right) if c.left in left[0] else (c.right, c.left)
        index: Dict[str, List[Match]] = {}
        for r in right:
            index.setdefault(r[rvar], []).append(r)
        return [{**l, **r} for l in left for r in index.get(l[lvar], ())]
    if contract in ("nested loop", "cross product"):
        return _nested(graph, left, right, c)

    lref, rref = _attr_side(c, left[0])
    lvals = [(_value(graph, l, lref), l) for l in left]
    rvals = [(_value(graph, r, rref), r) for r in right]
    lvals = [(v, l) for v, l in lvals if v is not MissingProperty]
    rvals = [(v, r) for v, r in rvals if v is not MissingProperty]
    values = [v for v, _ in lvals] + [v for v, _ in rvals]

    def verify(pairs):
        out = []
        for l, r in pairs:
            m = {**l, **r}
            if eval_constraint(c, m, graph) is True:
                out.append(m)
        return out

    if contract == "hash join":
        index = {}
        for v, r in rvals:
            index.setdefault((is_numeric(v) or value_kind(v), v), []).append(r)
        return verify((l, r) for v, l in lvals for r in index.get((is_numeric(v) or value_kind(v), v), ()))

    if contract == "range probe":
        if not all(is_numeric(v) for v in values):
            return _nested(graph, left, right, c)
        rvals.sort(key=lambda p: p[0])
        keys = [v for v, _ in rvals]
        t = c.threshold
        if isinstance(t, float):
            t += FLOAT_TOLERANCE
        pairs = []
        for v, l in lvals:
            lo = bisect.bisect_left(keys, v - t)
            hi = bisect.bisect_right(keys, v + t)
            pairs.extend((l, r) for _, r in rvals[lo:hi])
        return verify(pairs)

    if not all(value_kind(v) == "text" for v in values):
        return _nested(graph, left, right, c)

    if contract == "length filter":
        bound = int(math.floor(c.threshold))
        rvals.sort(key=lambda p: len(p[0]))
        lengths = [len(v) for v, _ in rvals]
        pairs = []
        for v, l in lvals:
            lo = bisect.bisect_left(lengths, len(v) - bound)
            hi = bisect.bisect_right(lengths, len(v) + bound)
            pairs.extend((l, r) for _, r in rvals[lo:hi])
        return verify(pairs)

    # prefix filter: sim >= s implies the prefixes share a token
    s = 1 - Fraction(str(c.threshold))
    ltoks = [(tokens(v), l) for v, l in lvals]
    rtoks = [(tokens(v), r) for v, r in rvals]
    freq: Dict[str, int] = {}
    for toks, _ in ltoks + rtoks:
        for tok in toks:
            freq[tok] = freq.get(tok, 0) + 1

    def prefix(toks):
        ordered = sorted(toks, key=lambda tok: (freq[tok], tok))
        return ordered[: len(ordered) - math.ceil(s * len(ordered)) + 1]

    index: Dict[str, List[int]] = {}
    empty_right = []
    for j, (toks, _) in enumerate(rtoks):
        if not toks:
            empty_right.append(j)
        for tok in prefix(toks):
            index.setdefault(tok, []).append(j)
    pairs = []
    for toks, l in ltoks:
        if not toks:
            cand = empty_right
        else:
            cand = sorted({j for tok in prefix(toks) for j in index.get(tok, ())})
        pairs.extend((l, rtoks[j][1]) for j in cand)
    return verify(pairs)


def match_pattern(graph: PropertyGraph, pattern: GraphPattern,
                  constraints: Sequence[DifferentialConstraint] = (),
                  bound: Optional[Mapping[str, str]] = None, strategy: str = "auto") -> MatchSet:
    """All homomorphic matches of `pattern` in `graph` satisfying `constraints`.

    `bound` fixes some pattern variables in advance; `strategy="nested"`
    disables the similarity joins between components.
    """
    constraints = list(constraints)
    bound = {k: v for k, v in (bound or {}).items() if k in set(pattern.variables)}
    if not feasible(constraints):
        return MatchSet(pattern, [])
    if pattern.is_empty():
        return MatchSet(pattern, [{}])
    plan = plan_pattern(pattern, constraints, graph, bound, strategy)
    return execute_plan(graph, plan, bound)


def execute_plan(graph: PropertyGraph, plan: PatternPlan, bound: Optional[Mapping[str, str]] = None) -> MatchSet:
    bound = bound or {}
    results: Dict[Tuple[int, ...], List[Match]] = {}
    for i, comp in enumerate(plan.components):
        rows = _run_component(graph, plan.pattern, comp, bound)
        if not rows:
            return MatchSet(plan.pattern, [])
        results[(i,)] = rows
    for j in plan.joins:
        rows = _similarity_join(graph, results.pop(j.left), results.pop(j.right), j.constraint, j.contract)
        results[tuple(sorted(j.left + j.right))] = rows
    (rows,) = results.values()
    rows = [m for m in rows if holds_all(plan.residual, m, graph)]
    return _sorted_matches(plan.pattern, rows)


def extend_match(graph: PropertyGraph, ggd: Ggd, h_s: Mapping[str, str], with_constraints: bool = False) -> MatchSet:
    """Target matches agreeing with h_s on the shared variables, optionally filtered by phi_t."""
    target_vars = set(ggd.target.variables)
    shared = {v: h_s[v] for v in ggd.shared_vars}
    if not with_constraints:
        return match_pattern(graph, ggd.target, (), bound=shared)
    inner = [c for c in ggd.target_constraints if c.variables <= target_vars]
    outer = [c for c in ggd.target_constraints if not c.variables <= target_vars]
    ms = match_pattern(graph, ggd.target, inner, bound=shared)
    ms.matches = [m for m in ms.matches if holds_all(outer, {**h_s, **m}, graph)]
    return ms


def brute_force_match(graph: PropertyGraph, pattern: GraphPattern,
                      constraints: Sequence[DifferentialConstraint] = ()) -> MatchSet:
    """Check every assignment of pattern variables to graph objects."""
    vvars = [v.var for v in pattern.vertices]
    evars = [e.var for e in pattern.edges]
    space = len(graph.vertices) ** len(vvars) * len(graph.edges) ** len(evars)
    if space > BRUTE_FORCE_LIMIT:
        raise MatchGuardExceeded(f"assignment space {space} exceeds {BRUTE_FORCE_LIMIT}")
    vids = sorted(graph.vertices)
    eids = sorted(graph.edges)
    out = []
    for vs in itertools.product(vids, repeat=len(vvars)):
        h = dict(zip(vvars, vs))
        if not all(label_ok(graph, h[v.var], v.label) for v in pattern.vertices):
            continue
        for es in itertools.product(eids, repeat=len(evars)):
            m = dict(h)
            m.update(zip(evars, es))
            ok = True
            for e in pattern.edges:
                obj = graph.edges[m[e.var]]
                if obj.endpoints != (m[e.src], m[e.dst]) or not label_ok(graph, obj.id, e.label):
                    ok = False
                    break
            if ok and holds_all(constraints, m, graph):
                out.append(m)
    return _sorted_matches(pattern, out)
