"""Chase over range classes.

A state keeps a working graph whose objects may be merged by identity
constraints (union-find over ids, the representative being the least id) and,
for every representative, a range class: its member ids and, per attribute, a
list of rcqs describing the admissible values. Concrete values only exist as
own-value rcqs; everything generated lives in the classes until
`extract_model` turns a state into a plain graph.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple, Union

from sympy import FiniteSet, Interval, S, Union as SetUnion

from graph_core import EDGE, VERTEX, WILDCARD, PropertyGraph, Value
from ggd_lang import (ATTR, CONST, IDENT_EQ, IDENT_NEQ, AttrRef, DifferentialConstraint, Ggd, analyze,
                      constraint_region, entails, holds_all, rename)
from matcher import Match, match_pattern

logger = logging.getLogger(__name__)

POSSIBLE = "possible"
CERTAIN = "certain"

TERMINATED_VALID = "TerminatedValid"
INCONSISTENT = "Inconsistent"
STEP_CAP_EXCEEDED = "StepCapExceeded"

DEFAULT_STEP_CAP = 10000


@dataclass(frozen=True)
class Rcq:
    distance: Optional[str]
    val: Union[Value, AttrRef]
    threshold: Union[int, float]
    op: str
    assumed: bool = False


@dataclass
class RangeClass:
    members: Set[str]
    attrs: Dict[str, List[Rcq]] = field(default_factory=dict)


@dataclass
class StepResult:
    ggd: str
    binding: Dict[str, str]
    action: str
    consistent: bool = True
    reason: str = ""
    generated: List[str] = field(default_factory=list)

    @property
    def consistency(self) -> str:
        return "consistent" if self.consistent else f"inconsistent: {self.reason}"


@dataclass
class ChaseState:
    graph: PropertyGraph
    mode: str = POSSIBLE
    classes: Dict[str, RangeClass] = field(default_factory=dict)
    parent: Dict[str, str] = field(default_factory=dict)
    neq: Set[Tuple[str, str]] = field(default_factory=set)
    fired: Set[tuple] = field(default_factory=set)
    log: List[StepResult] = field(default_factory=list)

    def find(self, oid: str) -> str:
        root = oid
        while self.parent.get(root, root) != root:
            root = self.parent[root]
        while self.parent.get(oid, oid) != root:
            self.parent[oid], oid = root, self.parent[oid]
        return root

    @property
    def merged(self) -> bool:
        return any(k != v for k, v in self.parent.items())

    def range_class(self, oid: str) -> RangeClass:
        return self.classes[self.find(oid)]

    def copy(self) -> "ChaseState":
        return ChaseState(
            graph=self.graph.copy(),
            mode=self.mode,
            classes={k: RangeClass(set(c.members), {a: list(r) for a, r in c.attrs.items()})
                     for k, c in self.classes.items()},
            parent=dict(self.parent),
            neq=set(self.neq),
            fired=set(self.fired),
            log=list(self.log),
        )


@dataclass
class ChaseOutcome:
    verdict: str
    state: ChaseState
    failed_step: Optional[int] = None
    witness: str = ""
    steps: int = 0


# ---------------------------------------------------------------------------
# initialization and class bookkeeping

def _new_class(state: ChaseState, oid: str) -> None:
    obj = state.graph.get(oid)
    rc = RangeClass({oid})
    for key in sorted(obj.properties):
        if not key.startswith("_"):
            rc.attrs[key] = [Rcq(None, AttrRef(oid, key), 0, "=")]
    state.classes[oid] = rc
    state.parent[oid] = oid


def init_chase(graph: PropertyGraph, mode: str = POSSIBLE) -> ChaseState:
    """One range class per object, each attribute holding its own value."""
    state = ChaseState(graph.copy(), mode)
    for oid in sorted(graph.vertices) + sorted(graph.edges):
        _new_class(state, oid)
    return state


def rcq_constraint(state: ChaseState, rep: str, key: str, rcq: Rcq) -> DifferentialConstraint:
    left = AttrRef(rep, key)
    if rcq.distance is None:
        value = state.graph.get(rcq.val.var).properties[rcq.val.key]
        return DifferentialConstraint(CONST, left, value, "eq", "=", 0)
    if isinstance(rcq.val, AttrRef):
        return DifferentialConstraint(ATTR, left, AttrRef(state.find(rcq.val.var), rcq.val.key),
                                      rcq.distance, rcq.op, rcq.threshold)
    return DifferentialConstraint(CONST, left, rcq.val, rcq.distance, rcq.op, rcq.threshold)


def slot_constraints(state: ChaseState, slots: Iterable[Tuple[str, str]]) -> List[DifferentialConstraint]:
    """Constraints of the given slots and of every slot linked to them."""
    todo = [(state.find(o), k) for o, k in slots]
    seen = set()
    out: List[DifferentialConstraint] = []
    while todo:
        slot = todo.pop()
        if slot in seen:
            continue
        seen.add(slot)
        rep, key = slot
        for rcq in state.classes[rep].attrs.get(key, ()):
            c = rcq_constraint(state, rep, key, rcq)
            out.append(c)
            if c.form == ATTR:
                todo.append((c.right.var, c.right.key))
    for a, b in sorted(state.neq):
        out.append(DifferentialConstraint(IDENT_NEQ, state.find(a), state.find(b)))
    return out


def all_constraints(state: ChaseState) -> List[DifferentialConstraint]:
    slots = [(rep, key) for rep, rc in sorted(state.classes.items()) for key in sorted(rc.attrs)]
    return slot_constraints(state, slots)


def _slots_of(constraints: Iterable[DifferentialConstraint]) -> List[Tuple[str, str]]:
    out = []
    for c in constraints:
        for side in (c.left, c.right):
            if isinstance(side, AttrRef):
                out.append((side.var, side.key))
    return out


def _region(c: DifferentialConstraint):
    if c.distance is None:
        return None, None
    return constraint_region(c)


def _subset(a, b) -> bool:
    return a.is_subset(b) is True


def _fold_rcq(state: ChaseState, rep: str, key: str, rcq: Rcq) -> bool:
    slot = state.classes[rep].attrs.setdefault(key, [])
    if rcq in slot:
        return False
    new_space, new_set = _region(rcq_constraint(state, rep, key, rcq))
    peers = []
    for r in slot:
        if r.assumed != rcq.assumed or r.distance is None:
            continue
        space, s = _region(rcq_constraint(state, rep, key, r))
        if space == new_space:
            peers.append((r, s))
    if rcq.assumed:
        if any(_subset(new_set, s) for _, s in peers):
            return False
        drop = {r for r, s in peers if _subset(s, new_set)}
    else:
        if any(_subset(s, new_set) for _, s in peers):
            return False
        drop = {r for r, s in peers if _subset(new_set, s)}
    slot[:] = [r for r in slot if r not in drop] + [rcq]
    return True


def fold(state: ChaseState, c: DifferentialConstraint, assumed: bool) -> Tuple[bool, str]:
    """Fold a constraint over object ids into the classes. Returns (changed, failure)."""
    if c.form == IDENT_EQ:
        return _merge(state, c.left, c.right)
    if c.form == IDENT_NEQ:
        pair = tuple(sorted((c.left, c.right)))
        if pair in state.neq:
            return False, ""
        state.neq.add(pair)
        return True, ""
    left = AttrRef(state.find(c.left.var), c.left.key)
    if c.form == CONST:
        return _fold_rcq(state, left.var, left.key, Rcq(c.distance, c.right, c.threshold, c.op, assumed)), ""
    right = AttrRef(state.find(c.right.var), c.right.key)
    a = _fold_rcq(state, left.var, left.key, Rcq(c.distance, right, c.threshold, c.op, assumed))
    b = _fold_rcq(state, right.var, right.key, Rcq(c.distance, left, c.threshold, c.op, assumed))
    return a or b, ""


def _merge(state: ChaseState, a: str, b: str) -> Tuple[bool, str]:
    ra, rb = state.find(a), state.find(b)
    if ra == rb:
        return False, ""
    oa, ob = state.graph.get(ra), state.graph.get(rb)
    if oa.kind != ob.kind:
        return True, f"cannot identify {oa.kind} {ra} with {ob.kind} {rb}"
    if oa.labels and ob.labels and not (oa.labels & ob.labels):
        return True, f"label conflict: {ra} {sorted(oa.labels)} vs {rb} {sorted(ob.labels)}"
    if oa.kind == EDGE:
        ends_a = tuple(state.find(x) for x in oa.endpoints)
        ends_b = tuple(state.find(x) for x in ob.endpoints)
        if ends_a != ends_b:
            return True, f"edge endpoint conflict: {ra} {ends_a} vs {rb} {ends_b}"
    keep, gone = sorted((ra, rb))
    state.parent[gone] = keep
    state.graph.add_labels(keep, state.graph.get(gone).labels)
    kc, gc = state.classes[keep], state.classes.pop(gone)
    kc.members |= gc.members
    for key, rcqs in gc.attrs.items():
        slot = kc.attrs.setdefault(key, [])
        slot.extend(r for r in rcqs if r not in slot)
    logger.debug("merged %s into %s", gone, keep)
    return True, ""


# ---------------------------------------------------------------------------
# matching

def quotient(state: ChaseState) -> PropertyGraph:
    """The working graph seen through the identity merges."""
    if not state.merged:
        return state.graph
    q = PropertyGraph()
    for vid in sorted(state.graph.vertices):
        if state.find(vid) == vid:
            q.add_vertex(vid, state.graph.vertices[vid].labels)
    for eid in sorted(state.graph.edges):
        if state.find(eid) == eid:
            e = state.graph.edges[eid]
            q.add_edge(eid, state.find(e.src), state.find(e.dst), e.labels)
    return q


def _bind(h: Mapping[str, str], constraints) -> List[DifferentialConstraint]:
    return [rename(c, h) for c in constraints]


def admits(state: ChaseState, ggd: Ggd, h: Mapping[str, str], mode: Optional[str] = None) -> bool:
    phi = _bind(h, ggd.source_constraints)
    context = slot_constraints(state, _slots_of(phi))
    if (mode or state.mode) == CERTAIN:
        return all(entails(context, c) for c in phi)
    return analyze(context + phi) is not None


def chase_match_source(state: ChaseState, ggd: Ggd, mode: Optional[str] = None) -> List[Match]:
    """Structural source matches whose range classes admit phi_s."""
    g = quotient(state)
    return [h for h in match_pattern(g, ggd.source).matches if admits(state, ggd, h, mode)]


def trigger_key(state: ChaseState, ggd: Ggd, h: Mapping[str, str]) -> tuple:
    return (ggd.name,) + tuple(state.find(h[v]) for v in sorted(h))


# ---------------------------------------------------------------------------
# steps

def _check(state: ChaseState, slots: Iterable[Tuple[str, str]]) -> str:
    slots = sorted(set((state.find(o), k) for o, k in slots))
    for a, b in sorted(state.neq):
        if state.find(a) == state.find(b):
            return f"identified objects {a} and {b} must differ"
    if analyze(slot_constraints(state, slots)) is not None:
        return ""
    for rep, key in slots:
        if analyze(slot_constraints(state, [(rep, key)])) is None:
            return f"infeasible range class {rep}.{key}"
    return "infeasible range classes " + ", ".join(f"{r}.{k}" for r, k in slots)


def _materialize_labels(state: ChaseState, ggd: Ggd, h: Mapping[str, str]) -> None:
    for var in ggd.shared_vars:
        label = ggd.target.label_of(var)
        if label != WILDCARD and label not in state.graph.get(state.find(h[var])).labels:
            state.graph.add_labels(state.find(h[var]), [label])


def _generate(state: ChaseState, ggd: Ggd, h_s: Mapping[str, str]) -> Dict[str, str]:
    h = {v: state.find(h_s[v]) for v in ggd.source.variables}
    ys = set(ggd.y_vars)
    for v in ggd.target.vertices:
        if v.var in ys:
            labels = [] if v.label == WILDCARD else [v.label]
            h[v.var] = state.graph.create_object(VERTEX, labels, provenance=ggd.name)
            _new_class(state, h[v.var])
    for e in ggd.target.edges:
        if e.var in ys:
            labels = [] if e.label == WILDCARD else [e.label]
            h[e.var] = state.graph.create_object(EDGE, labels, endpoints=(h[e.src], h[e.dst]), provenance=ggd.name)
            _new_class(state, h[e.var])
    return h


def _fold_all(state: ChaseState, constraints, assumed: bool) -> Tuple[bool, str]:
    changed = False
    for c in constraints:
        ch, failure = fold(state, c, assumed)
        changed = changed or ch
        if failure:
            return changed, failure
    return changed, ""


def apply_step(state: ChaseState, ggd: Ggd, h_s: Mapping[str, str]) -> StepResult:
    """Fold phi_s, reuse or generate the target, then check consistency. Never raises."""
    binding = {v: h_s[v] for v in sorted(h_s)}
    result = StepResult(ggd.name, binding, "update")
    state.log.append(result)
    phi_s = _bind(h_s, ggd.source_constraints)
    _, failure = _fold_all(state, phi_s, assumed=True)
    if failure:
        result.consistent, result.reason = False, failure
        return result

    shared = {v: state.find(h_s[v]) for v in ggd.shared_vars}
    extensions = match_pattern(quotient(state), ggd.target, bound=shared).matches
    chosen = None
    for ext in extensions:
        phi_t = _bind({**h_s, **ext}, ggd.target_constraints)
        context = slot_constraints(state, _slots_of(phi_t))
        if state.mode == CERTAIN:
            ok = all(entails(context, c) for c in phi_t)
        else:
            ok = analyze(context + phi_t) is not None
        if ok:
            chosen = ext
            break
    if chosen is None and not ggd.y_vars:
        chosen = {v: state.find(h_s[v]) for v in ggd.target.variables}
        _materialize_labels(state, ggd, h_s)
    if chosen is None:
        full = _generate(state, ggd, h_s)
        _materialize_labels(state, ggd, h_s)
        result.action = "generate"
        result.generated = [full[v] for v in ggd.y_vars]
    else:
        full = {**{v: state.find(x) for v, x in h_s.items()}, **chosen}

    phi_t = _bind(full, ggd.target_constraints)
    _, failure = _fold_all(state, phi_t, assumed=False)
    if not failure:
        failure = _check(state, _slots_of(phi_s + phi_t))
    if failure:
        result.consistent, result.reason = False, failure
    logger.debug("step %d: %s %s %s", len(state.log), ggd.name, result.action, result.consistency)
    return result


def assume(state: ChaseState, c: DifferentialConstraint) -> StepResult:
    """Fold a constraint over object ids as an enforced fact."""
    result = StepResult("<assume>", {}, f"assume {c}")
    state.log.append(result)
    _, failure = fold(state, c, assumed=False)
    if not failure:
        failure = _check(state, _slots_of([c]))
    if failure:
        result.consistent, result.reason = False, failure
    return result


def run_chase(state: ChaseState, ggds: Iterable[Ggd], step_cap: int = DEFAULT_STEP_CAP) -> ChaseOutcome:
    """Apply admissible triggers in declaration order until a pass changes nothing."""
    if step_cap < 1:
        raise ValueError("step_cap must be at least 1")
    ggds = list(ggds)
    steps = 0
    while True:
        progressed = False
        for ggd in ggds:
            for h in chase_match_source(state, ggd):
                if any(state.find(x) != x for x in h.values()):
                    continue
                key = trigger_key(state, ggd, h)
                if key in state.fired or not admits(state, ggd, h):
                    continue
                if steps >= step_cap:
                    logger.info("chase stopped after %d steps", steps)
                    return ChaseOutcome(STEP_CAP_EXCEEDED, state, steps=steps)
                state.fired.add(key)
                result = apply_step(state, ggd, h)
                steps += 1
                progressed = True
                if not result.consistent:
                    logger.info("chase inconsistent at step %d: %s", len(state.log), result.reason)
                    return ChaseOutcome(INCONSISTENT, state, len(state.log), result.reason, steps)
        if not progressed:
            return ChaseOutcome(TERMINATED_VALID, state, steps=steps)


def pending_split(state: ChaseState, ggds: Iterable[Ggd]):
    """First unfired trigger that is possible but not certain, with its undecided constraints."""
    for ggd in ggds:
        for h in chase_match_source(state, ggd, POSSIBLE):
            if trigger_key(state, ggd, h) in state.fired:
                continue
            phi = _bind(h, ggd.source_constraints)
            context = slot_constraints(state, _slots_of(phi))
            undecided = [c for c in phi if not entails(context, c)]
            if undecided:
                return ggd, h, undecided
    return None


def format_step_log(state: ChaseState) -> str:
    lines = []
    for i, r in enumerate(state.log, start=1):
        binding = ",".join(f"{k}={v}" for k, v in r.binding.items())
        lines.append(f"{i}; {r.ggd}; {binding}; {r.action}; {r.consistency}")
    return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# model extraction

def _py_number(x):
    if x.is_Integer:
        return int(x)
    return float(x)


def _number_candidates(s) -> List:
    pieces = s.args if isinstance(s, SetUnion) else (s,)
    out = []
    for p in pieces:
        if isinstance(p, FiniteSet):
            out.extend(sorted(p))
        elif isinstance(p, Interval):
            a, b = p.start, p.end
            if a.is_finite and b.is_finite:
                out.append((a + b) / 2)
            elif a.is_finite:
                out.append(a + 1)
            elif b.is_finite:
                out.append(b - 1)
            else:
                out.append(S.Zero)
    out.extend([S.Zero, S.One, -S.One])
    return [_py_number(x) for x in out]


def _text_candidates(analysis, term: AttrRef) -> List[str]:
    out = []
    for key, dset in analysis.distances.items():
        if len(key) != 5 or key[2] != term or key[3] != "text":
            continue
        dist, comparand = key[1], key[4]
        out.append(comparand)
        if dist == "edit":
            try:
                low = dset.inf if dset.inf.is_finite else 0
            except NotImplementedError:
                low = 0
            out.append(comparand + "#" * int(low))
            out.append(comparand + "#" * (int(low) + 1))
        elif dist == "jaccard":
            for k in range(1, 4):
                out.append(comparand + "".join(f" w{term.var}{i}" for i in range(k)))
            out.append(f"z{term.var}{term.key}")
        else:
            out.append(comparand + "#")
    out.append(f"v:{term.var}:{term.key}")
    return out


def _candidates(analysis, term: AttrRef) -> List[Value]:
    kind = analysis.kinds.get(term)
    if kind == "numeric" or (kind is None and term in analysis.numeric):
        return _number_candidates(analysis.numeric.get(term, S.Reals))
    if kind == "boolean":
        return [True, False]
    text = _text_candidates(analysis, term)
    if kind == "text":
        return text
    comparands = [key[4] for key in analysis.distances if len(key) == 5 and key[2] == term]
    return comparands + text + [0]


def extract_model(state: ChaseState) -> Optional[PropertyGraph]:
    """Turn the classes into concrete values; None when no assignment is found."""
    constraints = all_constraints(state)
    pins: Dict[AttrRef, Value] = {}
    analysis = analyze(constraints)
    if analysis is None:
        return None
    slots = sorted({(rep, key) for rep, rc in state.classes.items() for key in rc.attrs if rc.attrs[key]})
    for rep, key in slots:
        term = AttrRef(rep, key)
        if term in analysis.pins:
            pins[term] = analysis.pins[term]
            continue
        for value in _candidates(analysis, term):
            trial = analyze(constraints, {**pins, term: value})
            if trial is not None:
                pins[term] = value
                analysis = trial
                break
        else:
            logger.warning("no value found for %s.%s", rep, key)
            return None

    model = PropertyGraph()
    for vid in sorted(state.graph.vertices):
        if state.find(vid) == vid:
            model.add_vertex(vid, state.graph.vertices[vid].labels, _props(state, vid, pins))
    for eid in sorted(state.graph.edges):
        if state.find(eid) == eid:
            e = state.graph.edges[eid]
            model.add_edge(eid, state.find(e.src), state.find(e.dst), e.labels, _props(state, eid, pins))
    if not all(holds_all([c], {v: v for v in c.variables}, model) for c in constraints):
        logger.warning("extracted values do not satisfy the range classes")
        return None
    return model


def _props(state: ChaseState, rep: str, pins: Mapping[AttrRef, Value]) -> Dict[str, Value]:
    props: Dict[str, Value] = {}
    for member in sorted(state.classes[rep].members):
        for k, v in state.graph.get(member).properties.items():
            props.setdefault(k, v)
    for term, v in pins.items():
        if term.var == rep:
            props[term.key] = v
    return props
