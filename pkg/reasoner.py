import json
import logging
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx

import chase
from graph_core import WILDCARD, PropertyGraph
from ggd_lang import (DifferentialConstraint, EdgePattern, Ggd, GraphPattern, VertexPattern, entails, feasible,
                      negate, rename, subjugates)
from matcher import match_pattern
from validator import validate_set

logger = logging.getLogger(__name__)

INTERSECTION_GUARD = 200000
DEFAULT_BRANCH_CAP = 64

SATISFIABLE = "Satisfiable"
UNSATISFIABLE = "Unsatisfiable"
IMPLIED = "Implied"
NOT_IMPLIED = "NotImplied"
UNKNOWN = "Unknown"


class ReasonerError(Exception):
    pass


class IntersectionTooLarge(ReasonerError):
    pass


class InfeasibleConstraints(ReasonerError):
    pass


def labels_compatible(a: str, b: str) -> bool:
    return a == b or WILDCARD in (a, b)


# ---------------------------------------------------------------------------
# intersection and interaction

@dataclass
class PatternIntersection:
    pattern: GraphPattern
    mapping: Dict[str, str] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return self.pattern.is_empty()


def _local(phi: Sequence[DifferentialConstraint], var: str) -> List[DifferentialConstraint]:
    return [c for c in phi if c.variables == {var}]


def intersect_patterns(q1: GraphPattern, phi1: Sequence[DifferentialConstraint],
                       q2: GraphPattern, phi2: Sequence[DifferentialConstraint],
                       guard: int = INTERSECTION_GUARD) -> PatternIntersection:
    """Maximal common sub-pattern of q1 and q2; variables and labels are taken from q1.

    Objects correspond injectively. A pair is admitted when the labels are
    compatible and the constraints attached to the two objects are jointly
    feasible; the whole correspondence must be jointly feasible too.
    """
    phi1, phi2 = list(phi1), list(phi2)

    def locally_ok(u: str, w: str) -> bool:
        return feasible(_local(phi1, u) + [rename(c, {w: u}) for c in _local(phi2, w)])

    cand_v = {
        u.var: [w.var for w in q2.vertices if labels_compatible(u.label, w.label) and locally_ok(u.var, w.var)]
        for u in q1.vertices
    }
    order = [u.var for u in q1.vertices]
    best: Dict[str, object] = {"score": None, "names": None, "mapping": {}}
    explored = [0]

    def tick():
        explored[0] += 1
        if explored[0] > guard:
            raise IntersectionTooLarge(
                f"pattern intersection explored more than {guard} correspondences "
                f"({len(q1.variables)} x {len(q2.variables)} variables)")

    def jointly_ok(m: Dict[str, str]) -> bool:
        inverse = {w: u for u, w in m.items()}
        mine = [c for c in phi1 if c.variables <= set(m)]
        theirs = [rename(c, inverse) for c in phi2 if c.variables <= set(inverse)]
        return feasible(mine + theirs)

    def consider(m: Dict[str, str]) -> None:
        n_e = sum(1 for e in q1.edges if e.var in m)
        score = (n_e, len(m) - n_e)
        names = sorted(m.items())
        if best["score"] is not None:
            if score < best["score"] or (score == best["score"] and names >= best["names"]):
                return
        if jointly_ok(m):
            best.update(score=score, names=names, mapping=dict(m))

    def edges_rec(edges: List[EdgePattern], i: int, m: Dict[str, str], used: set) -> None:
        tick()
        if i == len(edges):
            consider(m)
            return
        e1 = edges[i]
        for e2 in q2.edges:
            if e2.var in used or not labels_compatible(e1.label, e2.label):
                continue
            if (m[e1.src], m[e1.dst]) != (e2.src, e2.dst) or not locally_ok(e1.var, e2.var):
                continue
            m[e1.var] = e2.var
            used.add(e2.var)
            edges_rec(edges, i + 1, m, used)
            used.discard(e2.var)
            del m[e1.var]
        edges_rec(edges, i + 1, m, used)

    def vertices_rec(i: int, m: Dict[str, str], used: set) -> None:
        tick()
        if best["score"] is not None:
            reach = set(m) | set(order[i:])
            ub = (sum(1 for e in q1.edges if e.src in reach and e.dst in reach), len(reach))
            if (ub[0], ub[1]) < (best["score"][0], best["score"][1]):
                return
        if i == len(order):
            edges = [e for e in q1.edges if e.src in m and e.dst in m]
            edges_rec(edges, 0, dict(m), set())
            return
        u = order[i]
        for w in cand_v[u]:
            if w in used:
                continue
            m[u] = w
            used.add(w)
            vertices_rec(i + 1, m, used)
            used.discard(w)
            del m[u]
        vertices_rec(i + 1, m, used)

    vertices_rec(0, {}, set())
    m = best["mapping"]
    pattern = GraphPattern(
        tuple(v for v in q1.vertices if v.var in m),
        tuple(e for e in q1.edges if e.var in m),
        name="intersection",
    )
    return PatternIntersection(pattern, m)


SIDES = ("source", "target", "target-source")


def _side(ggd: Ggd, which: str) -> Tuple[GraphPattern, List[DifferentialConstraint]]:
    if which == "source":
        return ggd.source, list(ggd.source_constraints)
    tv = set(ggd.target.variables)
    return ggd.target, [c for c in ggd.target_constraints if c.variables <= tv]


def interacts(s1: Ggd, s2: Ggd, side: str = "source") -> bool:
    """Non-empty intersection of the chosen sides; `target-source` compares s1's target with s2's source."""
    if side not in SIDES:
        raise ValueError(f"unknown side {side!r}")
    a = "source" if side == "source" else "target"
    b = "target" if side == "target" else "source"
    q1, phi1 = _side(s1, a)
    q2, phi2 = _side(s2, b)
    return not intersect_patterns(q1, phi1, q2, phi2).is_empty()


def is_transitive(ggd: Ggd, ggds: Iterable[Ggd]) -> bool:
    """Some GGD's target can produce new matches of this GGD's source."""
    return any(interacts(other, ggd, "target-source") for other in ggds)


def pattern_graph(pattern: GraphPattern) -> PropertyGraph:
    """A pattern read as a graph: variables become ids, wildcards become empty label sets."""
    g = PropertyGraph()
    for v in pattern.vertices:
        g.add_vertex(v.var, [] if v.label == WILDCARD else [v.label])
    for e in pattern.edges:
        g.add_edge(e.var, e.src, e.dst, [] if e.label == WILDCARD else [e.label])
    return g


def is_contained(q_alpha: GraphPattern, phi_alpha: Sequence[DifferentialConstraint],
                 q_beta: GraphPattern, phi_beta: Sequence[DifferentialConstraint]) -> Optional[Dict[str, str]]:
    """A homomorphism from q_beta into q_alpha under which phi_beta subjugates phi_alpha, if any.

    When it exists every match of (q_alpha, phi_alpha) is a match of (q_beta, phi_beta).
    """
    g = pattern_graph(q_alpha)
    for h in match_pattern(g, q_beta):
        if subjugates(phi_beta, phi_alpha, h):
            return dict(h)
    return None


# ---------------------------------------------------------------------------
# canonical graphs

@dataclass
class CanonicalGraph:
    graph: PropertyGraph
    pattern: GraphPattern
    seeds: List[DifferentialConstraint] = field(default_factory=list)
    images: Dict[str, Dict[str, str]] = field(default_factory=dict)
    provenance: Dict[str, str] = field(default_factory=dict)


def _alias(ggd: Ggd, var: str, taken) -> str:
    alias = f"{ggd.name}.{var}"
    while alias in taken:
        alias += "'"
    return alias


def _add_image(canon: CanonicalGraph, ggd: Ggd, mapping: Dict[str, str]) -> None:
    """Add ggd's source image, reusing the objects in `mapping` (variable -> id)."""
    image = dict(mapping)
    vertices = list(canon.pattern.vertices)
    edges = list(canon.pattern.edges)
    for v in ggd.source.vertices:
        if v.var in image:
            oid = image[v.var]
            if v.label != WILDCARD and not canon.graph.get(oid).labels:
                canon.graph.add_labels(oid, [v.label])
                vertices = [VertexPattern(x.var, v.label if x.var == oid else x.label) for x in vertices]
            continue
        oid = _alias(ggd, v.var, canon.graph)
        canon.graph.add_vertex(oid, [] if v.label == WILDCARD else [v.label])
        vertices.append(VertexPattern(oid, v.label))
        canon.provenance[oid] = ggd.name
        image[v.var] = oid
    for e in ggd.source.edges:
        if e.var in image:
            continue
        oid = _alias(ggd, e.var, canon.graph)
        canon.graph.add_edge(oid, image[e.src], image[e.dst], [] if e.label == WILDCARD else [e.label])
        edges.append(EdgePattern(oid, e.label, image[e.src], image[e.dst]))
        canon.provenance[oid] = ggd.name
        image[e.var] = oid
    canon.pattern = GraphPattern(tuple(vertices), tuple(edges), name="canonical")
    canon.images[ggd.name] = image
    canon.seeds.extend(rename(c, image) for c in ggd.source_constraints)


def build_canonical_graph(ggds: Iterable[Ggd]) -> CanonicalGraph:
    """One image of every source pattern, interacting variables aliased onto existing objects."""
    canon = CanonicalGraph(PropertyGraph(), GraphPattern(name="canonical"))
    for ggd in ggds:
        if not feasible(ggd.source_constraints):
            raise InfeasibleConstraints(f"{ggd.name}: source constraints are infeasible")
        if canon.pattern.is_empty():
            _add_image(canon, ggd, {})
            continue
        inter = intersect_patterns(ggd.source, ggd.source_constraints, canon.pattern, canon.seeds)
        logger.debug("%s shares %s with the canonical graph", ggd.name, inter.mapping)
        _add_image(canon, ggd, inter.mapping)
    return canon


def build_closure_graph(ggd: Ggd) -> CanonicalGraph:
    if not feasible(ggd.source_constraints):
        raise InfeasibleConstraints(f"{ggd.name}: source constraints are infeasible")
    canon = CanonicalGraph(PropertyGraph(), GraphPattern(name="closure"))
    _add_image(canon, ggd, {})
    return canon


# ---------------------------------------------------------------------------
# verdicts

@dataclass
class Verdict:
    problem: str
    verdict: str
    witness: object = None
    steps: List[str] = field(default_factory=list)
    reason: str = ""
    ms: float = 0.0


def _seeded_state(canon: CanonicalGraph, mode: str):
    state = chase.init_chase(canon.graph, mode)
    for c in canon.seeds:
        r = chase.assume(state, c)
        if not r.consistent:
            return state, r.reason
    return state, ""


def _log_lines(state) -> List[str]:
    return chase.format_step_log(state).splitlines()


def check_satisfiability(ggds: Sequence[Ggd], step_cap: int = chase.DEFAULT_STEP_CAP) -> Verdict:
    """Chase the canonical graph in possible mode and extract a witness model."""
    start = time.perf_counter()
    ggds = list(ggds)

    def done(verdict: str, **kw) -> Verdict:
        v = Verdict("sat", verdict, ms=(time.perf_counter() - start) * 1000.0, **kw)
        logger.info("satisfiability: %s %s", v.verdict, v.reason)
        return v

    for g in ggds:
        if not feasible(g.target_constraints):
            return done(UNSATISFIABLE, reason=f"{g.name}: target constraints are infeasible")
    try:
        canon = build_canonical_graph(ggds)
    except InfeasibleConstraints as e:
        return done(UNSATISFIABLE, reason=str(e))
    state, failure = _seeded_state(canon, chase.POSSIBLE)
    if failure:
        return done(UNSATISFIABLE, reason=failure, steps=_log_lines(state))
    outcome = chase.run_chase(state, ggds, step_cap)
    steps = _log_lines(state)
    if outcome.verdict == chase.INCONSISTENT:
        return done(UNSATISFIABLE, reason=f"step {outcome.failed_step}: {outcome.witness}",
                    witness=steps[outcome.failed_step - 1], steps=steps)
    if outcome.verdict == chase.STEP_CAP_EXCEEDED:
        return done(UNKNOWN, reason=f"step cap {step_cap} reached", steps=steps)
    model = chase.extract_model(state)
    if model is None:
        return done(UNKNOWN, reason="no concrete values satisfy the range classes", steps=steps)
    broken = [r.ggd for r in validate_set(model, ggds) if r.violated]
    if broken:
        logger.warning("extracted model violates %s", ", ".join(broken))
        return done(UNKNOWN, reason=f"extracted model violates {', '.join(broken)}", steps=steps)
    return done(SATISFIABLE, witness=model, steps=steps)


def _deducible(state, ggd: Ggd, image: Dict[str, str]) -> bool:
    bound = {v: state.find(image[v]) for v in ggd.shared_vars}
    reps = {v: state.find(x) for v, x in image.items()}
    for ext in match_pattern(chase.quotient(state), ggd.target, bound=bound):
        phi_t = [rename(c, {**reps, **ext}) for c in ggd.target_constraints]
        slots = [(s.var, s.key) for c in phi_t for s in (c.left, c.right) if hasattr(s, "key")]
        context = chase.slot_constraints(state, slots)
        if all(entails(context, c) for c in phi_t):
            return True
    return False


def check_implication(ggds: Sequence[Ggd], ggd: Ggd, step_cap: int = chase.DEFAULT_STEP_CAP,
                      branch_cap: int = DEFAULT_BRANCH_CAP) -> Verdict:
    """Chase ggd's source image with the set in certain mode, splitting on undecided triggers."""
    start = time.perf_counter()
    ggds = list(ggds)
    canon = build_closure_graph(ggd)
    image = canon.images[ggd.name]
    root, failure = _seeded_state(canon, chase.CERTAIN)
    branches = [0]
    steps: List[str] = []

    def done(verdict: str, reason: str = "") -> Verdict:
        v = Verdict("implies", verdict, steps=steps, reason=reason, ms=(time.perf_counter() - start) * 1000.0)
        logger.info("implication of %s: %s %s", ggd.name, v.verdict, reason)
        return v

    if failure:
        return done(NOT_IMPLIED, failure)

    def explore(state, depth: int) -> Tuple[str, str]:
        outcome = chase.run_chase(state, ggds, step_cap)
        if depth == 0:
            steps.extend(_log_lines(state))
        if outcome.verdict == chase.STEP_CAP_EXCEEDED:
            return UNKNOWN, f"step cap {step_cap} reached"
        if outcome.verdict == chase.INCONSISTENT:
            if depth == 0:
                return NOT_IMPLIED, f"closure inconsistent: {outcome.witness}"
            return IMPLIED, ""
        split = chase.pending_split(state, ggds)
        if split is None:
            if _deducible(state, ggd, image):
                return IMPLIED, ""
            return NOT_IMPLIED, "target not deducible" + (f" in case split depth {depth}" if depth else "")
        trigger, _, undecided = split
        cases = [list(undecided)] + [[negate(c)] for c in undecided]
        unknown = ""
        for case in cases:
            branches[0] += 1
            if branches[0] > branch_cap:
                return UNKNOWN, f"branch cap {branch_cap} reached"
            child = state.copy()
            if not all(chase.assume(child, c).consistent for c in case):
                continue
            verdict, reason = explore(child, depth + 1)
            if verdict == NOT_IMPLIED:
                return verdict, reason or f"case {', '.join(map(str, case))} on {trigger.name}"
            if verdict == UNKNOWN:
                unknown = reason
        if unknown:
            return UNKNOWN, unknown
        return IMPLIED, ""

    verdict, reason = explore(root, 0)
    return done(verdict, reason)


# ---------------------------------------------------------------------------
# weak acyclicity

class DependencyGraph:
    """Positions (label, key) of a GGD set; key `*` stands for the object itself.

    Regular edges carry values from source to target positions of shared
    variables; special edges point to the positions of generated objects.
    """

    ENTITY = "*"

    def __init__(self, ggds: Iterable[Ggd]):
        self.graph = nx.DiGraph()
        self._build(list(ggds))

    @staticmethod
    def _keys(constraints, var: str) -> List[str]:
        keys = set()
        for c in constraints:
            for side in (c.left, c.right):
                if hasattr(side, "key") and side.var == var:
                    keys.add(side.key)
        return sorted(keys)

    def _positions(self, pattern: GraphPattern, constraints, var: str) -> List[Tuple[str, str]]:
        label = pattern.label_of(var)
        return [(label, self.ENTITY)] + [(label, k) for k in self._keys(constraints, var)]

    def _edge(self, u, v, special: bool) -> None:
        for n in (u, v):
            if n not in self.graph:
                self.graph.add_node(n, label=n[0], key=n[1])
        if self.graph.has_edge(u, v):
            special = special or self.graph.edges[u, v]["special"]
        self.graph.add_edge(u, v, special=special)

    def _build(self, ggds: List[Ggd]) -> None:
        for g in ggds:
            source_positions = []
            for x in g.source.variables:
                src = self._positions(g.source, g.source_constraints, x)
                source_positions.extend(src)
                for n in src:
                    if n not in self.graph:
                        self.graph.add_node(n, label=n[0], key=n[1])
                if x in g.target.variables:
                    for u in src:
                        for v in self._positions(g.target, g.target_constraints, x):
                            self._edge(u, v, False)
            for y in g.y_vars:
                for v in self._positions(g.target, g.target_constraints, y):
                    for u in source_positions:
                        self._edge(u, v, True)
                    if not source_positions and v not in self.graph:
                        self.graph.add_node(v, label=v[0], key=v[1])
        labels = sorted({n[0] for n in self.graph.nodes if n[0] != WILDCARD})
        for n in list(self.graph.nodes):
            if n[0] == WILDCARD:
                for label in labels:
                    self._edge(n, (label, n[1]), False)
                    self._edge((label, n[1]), n, False)

    @property
    def special_edges(self) -> List[Tuple]:
        return sorted((u, v) for u, v, s in self.graph.edges(data="special") if s)

    def cycle_through_special(self) -> Optional[List[Tuple[str, str]]]:
        for u, v in self.special_edges:
            if nx.has_path(self.graph, v, u):
                return [u] + nx.shortest_path(self.graph, v, u)
        return None

    def to_graphml(self) -> str:
        g = nx.DiGraph()
        for n, data in sorted(self.graph.nodes(data=True)):
            g.add_node(f"{n[0]}.{n[1]}", **data)
        for u, v, s in sorted(self.graph.edges(data="special")):
            g.add_edge(f"{u[0]}.{u[1]}", f"{v[0]}.{v[1]}", special=bool(s))
        return "\n".join(nx.generate_graphml(g)) + "\n"


def is_weakly_acyclic(ggds: Iterable[Ggd]) -> Tuple[bool, DependencyGraph]:
    dg = DependencyGraph(ggds)
    cycle = dg.cycle_through_special()
    if cycle is not None:
        logger.info("cycle through a special edge: %s", " -> ".join(f"{l}.{k}" for l, k in cycle))
    return cycle is None, dg


# ---------------------------------------------------------------------------
# documents

def graph_dict(graph: PropertyGraph) -> dict:
    def props(obj):
        return {k: obj.properties[k] for k in sorted(obj.properties) if not k.startswith("_")}

    return {
        "vertices": [{"id": v.id, "labels": sorted(v.labels), "props": props(v)}
                     for _, v in sorted(graph.vertices.items())],
        "edges": [{"id": e.id, "src": e.src, "dst": e.dst, "labels": sorted(e.labels), "props": props(e)}
                  for _, e in sorted(graph.edges.items())],
    }


def verdict_dict(v: Verdict, timings: bool = False) -> dict:
    doc = {"problem": v.problem, "verdict": v.verdict}
    if isinstance(v.witness, PropertyGraph):
        doc["witness"] = graph_dict(v.witness)
    elif v.witness is not None:
        doc["witness"] = v.witness
    if v.reason:
        doc["reason"] = v.reason
    doc["steps"] = list(v.steps)
    if timings:
        doc["ms"] = round(v.ms, 3)
    return doc


def verdict_document(v: Verdict, timings: bool = False) -> str:
    return json.dumps(verdict_dict(v, timings), indent=2, ensure_ascii=False) + "\n"


def check_weak_acyclicity(ggds: Iterable[Ggd]) -> Tuple[Verdict, DependencyGraph]:
    start = time.perf_counter()
    ok, dg = is_weakly_acyclic(ggds)
    cycle = dg.cycle_through_special()
    v = Verdict("wacyclic", "true" if ok else "false",
                witness=None if ok else " -> ".join(f"{label}.{key}" for label, key in cycle),
                ms=(time.perf_counter() - start) * 1000.0)
    return v, dg
