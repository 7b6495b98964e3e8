import logging
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from sympy import FiniteSet, Intersection, Interval, Rational, S, Union as SetUnion, oo

from graph_core import EDGE, VERTEX, WILDCARD, PropertyGraph, Value, is_numeric, value_kind, values_equal

logger = logging.getLogger(__name__)

CONST = "const"          # delta(x.A, c) op t
ATTR = "attr"            # delta(x.A, y.B) op t
IDENT_EQ = "ident_eq"    # x = y
IDENT_NEQ = "ident_neq"  # x != y

DISTANCES = ("absdiff", "edit", "jaccard", "eq")
OPERATORS = ("<=", ">=", "!=", "<", ">", "=")
NEGATED_OP = {"<=": ">", ">": "<=", "<": ">=", ">=": "<", "=": "!=", "!=": "="}

FLOAT_TOLERANCE = 1e-9


class GgdError(Exception):
    """Base class for GGD language errors."""


class GgdSyntaxError(GgdError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col


class GgdValidationError(GgdError):
    pass


class DistanceError(GgdError):
    pass


class _Missing:
    def __bool__(self):
        return False

    def __repr__(self):
        return "MissingProperty"


MissingProperty = _Missing()


# ---------------------------------------------------------------------------
# object model

@dataclass(frozen=True)
class AttrRef:
    var: str
    key: str

    def __str__(self):
        return f"{self.var}.{self.key}"


Operand = Union[AttrRef, Value, str]


@dataclass(frozen=True)
class VertexPattern:
    var: str
    label: str


@dataclass(frozen=True)
class EdgePattern:
    var: str
    label: str
    src: str
    dst: str


@dataclass(frozen=True)
class GraphPattern:
    vertices: Tuple[VertexPattern, ...] = ()
    edges: Tuple[EdgePattern, ...] = ()
    name: Optional[str] = field(default=None, compare=False)

    @property
    def variables(self) -> List[str]:
        return [v.var for v in self.vertices] + [e.var for e in self.edges]

    def label_of(self, var: str) -> str:
        for v in self.vertices:
            if v.var == var:
                return v.label
        for e in self.edges:
            if e.var == var:
                return e.label
        raise KeyError(var)

    def kind_of(self, var: str) -> str:
        if any(v.var == var for v in self.vertices):
            return VERTEX
        if any(e.var == var for e in self.edges):
            return EDGE
        raise KeyError(var)

    def edge(self, var: str) -> EdgePattern:
        for e in self.edges:
            if e.var == var:
                return e
        raise KeyError(var)

    def is_empty(self) -> bool:
        return not self.vertices and not self.edges


@dataclass(frozen=True)
class DifferentialConstraint:
    form: str
    left: Union[AttrRef, str]
    right: Operand
    distance: Optional[str] = None
    op: Optional[str] = None
    threshold: Optional[Union[int, float]] = None

    @property
    def variables(self) -> FrozenSet[str]:
        out = set()
        for side in (self.left, self.right):
            if isinstance(side, AttrRef):
                out.add(side.var)
        if self.form in (IDENT_EQ, IDENT_NEQ):
            out.update((self.left, self.right))
        return frozenset(out)

    def __str__(self):
        return format_constraint(self)


@dataclass(frozen=True)
class Ggd:
    name: str
    source: GraphPattern
    source_constraints: Tuple[DifferentialConstraint, ...]
    target: GraphPattern
    target_constraints: Tuple[DifferentialConstraint, ...]

    @property
    def x_vars(self) -> List[str]:
        return self.source.variables

    @property
    def y_vars(self) -> List[str]:
        xs = set(self.source.variables)
        return [v for v in self.target.variables if v not in xs]

    @property
    def shared_vars(self) -> List[str]:
        xs = set(self.source.variables)
        return [v for v in self.target.variables if v in xs]


@dataclass(frozen=True)
class GgdSet:
    ggds: Tuple[Ggd, ...] = ()

    def __iter__(self):
        return iter(self.ggds)

    def __len__(self):
        return len(self.ggds)

    def __getitem__(self, i):
        return self.ggds[i]

    def get(self, name: str) -> Ggd:
        for g in self.ggds:
            if g.name == name:
                return g
        raise KeyError(name)

    def without(self, name: str) -> "GgdSet":
        return GgdSet(tuple(g for g in self.ggds if g.name != name))


def make_ggd_set(ggds: Iterable[Ggd]) -> GgdSet:
    ggds = tuple(ggds)
    seen = set()
    for g in ggds:
        if g.name in seen:
            raise GgdValidationError(f"duplicate GGD name {g.name!r}")
        seen.add(g.name)
    return GgdSet(ggds)


def rename(c: DifferentialConstraint, mapping: Mapping[str, str]) -> DifferentialConstraint:
    """Rename the variables of a constraint; unmapped variables are kept."""
    def ren(side):
        if isinstance(side, AttrRef):
            return AttrRef(mapping.get(side.var, side.var), side.key)
        return side

    if c.form in (IDENT_EQ, IDENT_NEQ):
        return replace(c, left=mapping.get(c.left, c.left), right=mapping.get(c.right, c.right))
    return replace(c, left=ren(c.left), right=ren(c.right))


def negate(c: DifferentialConstraint) -> DifferentialConstraint:
    if c.form == IDENT_EQ:
        return replace(c, form=IDENT_NEQ)
    if c.form == IDENT_NEQ:
        return replace(c, form=IDENT_EQ)
    return replace(c, op=NEGATED_OP[c.op])


# ---------------------------------------------------------------------------
# distances and evaluation

def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def tokens(text: str) -> FrozenSet[str]:
    return frozenset(text.casefold().split())


def jaccard_distance(a: str, b: str) -> Fraction:
    ta, tb = tokens(a), tokens(b)
    union = ta | tb
    if not union:
        return Fraction(0)
    return 1 - Fraction(len(ta & tb), len(union))


def distance(name: str, a: Value, b: Value):
    """Compute a built-in distance; raise DistanceError on a kind mismatch."""
    if name == "eq":
        return 0 if values_equal(a, b) else 1
    if name == "absdiff":
        if not (is_numeric(a) and is_numeric(b)):
            raise DistanceError(f"absdiff needs numbers, got {value_kind(a)} and {value_kind(b)}")
        return abs(a - b)
    if name in ("edit", "jaccard"):
        if value_kind(a) != "text" or value_kind(b) != "text":
            raise DistanceError(f"{name} needs text, got {value_kind(a)} and {value_kind(b)}")
        return levenshtein(a, b) if name == "edit" else jaccard_distance(a, b)
    raise DistanceError(f"unknown distance {name!r}")


def compare(d, op: str, t) -> bool:
    loose = isinstance(d, float) or isinstance(t, float)
    if op == "=":
        return abs(d - t) <= FLOAT_TOLERANCE if loose else d == t
    if op == "!=":
        return abs(d - t) > FLOAT_TOLERANCE if loose else d != t
    if op == "<=":
        return d <= t
    if op == "<":
        return d < t
    if op == ">=":
        return d >= t
    if op == ">":
        return d > t
    raise GgdError(f"unknown operator {op!r}")


def _lookup(graph: PropertyGraph, binding: Mapping[str, str], ref: AttrRef):
    if ref.key.startswith("_"):
        return MissingProperty
    props = graph.get(binding[ref.var]).properties
    if ref.key not in props:
        return MissingProperty
    return props[ref.key]


def eval_constraint(c: DifferentialConstraint, binding: Mapping[str, str], graph: PropertyGraph):
    """Evaluate one constraint under a binding; MissingProperty if an operand is absent."""
    if c.form == IDENT_EQ:
        return binding[c.left] == binding[c.right]
    if c.form == IDENT_NEQ:
        return binding[c.left] != binding[c.right]
    left = _lookup(graph, binding, c.left)
    if left is MissingProperty:
        return MissingProperty
    right = _lookup(graph, binding, c.right) if isinstance(c.right, AttrRef) else c.right
    if right is MissingProperty:
        return MissingProperty
    return compare(distance(c.distance, left, right), c.op, c.threshold)


def holds_all(constraints: Iterable[DifferentialConstraint], binding: Mapping[str, str], graph: PropertyGraph) -> bool:
    return all(eval_constraint(c, binding, graph) is True for c in constraints)


# ---------------------------------------------------------------------------
# interval analysis

NUMERIC = "numeric"

DOMAINS = {
    "absdiff": Interval(0, oo),
    "jaccard": Interval(0, 1),
    "edit": S.Naturals0,
    "eq": FiniteSet(0, 1),
}


def exact(x) -> Rational:
    return Rational(str(x))


def op_region(op: str, t):
    loose = isinstance(t, float)
    t = exact(t)
    if op == "<=":
        return Interval(-oo, t)
    if op == "<":
        return Interval(-oo, t, True, True)
    if op == ">=":
        return Interval(t, oo)
    if op == ">":
        return Interval(t, oo, True, True)
    # float equality carries the same band as compare
    band = exact(FLOAT_TOLERANCE) if loose else 0
    if op == "=":
        return Interval(t - band, t + band) if loose else FiniteSet(t)
    if op == "!=":
        return SetUnion(Interval(-oo, t - band, True, True), Interval(t + band, oo, True, True))
    raise GgdError(f"unknown operator {op!r}")


def distance_set(dist: str, op: str, t):
    """Admissible distances of `dist op t` within the distance's domain."""
    return Intersection(DOMAINS[dist], op_region(op, t))


def is_empty(s) -> bool:
    # undecided counts as non-empty
    return s.is_empty is True


def member(x, s) -> bool:
    return bool(s.contains(exact(x)) == S.true)


def absdiff_preimage(c, dset):
    """All reals v with |v - c| in dset."""
    c = exact(c)
    pieces = dset.args if isinstance(dset, SetUnion) else (dset,)
    out = []
    for p in pieces:
        if p is S.EmptySet:
            continue
        if isinstance(p, Interval):
            out.append(Interval(c + p.start, c + p.end, p.left_open, p.right_open))
            out.append(Interval(c - p.end, c - p.start, p.right_open, p.left_open))
        elif isinstance(p, FiniteSet):
            out.extend(FiniteSet(c + d, c - d) for d in p)
        else:
            return S.Reals
    return SetUnion(*out) if out else S.EmptySet


def _kind_class(v: Value) -> str:
    return NUMERIC if is_numeric(v) else value_kind(v)


REQUIRED_KIND = {"absdiff": NUMERIC, "edit": "text", "jaccard": "text"}


def _canonical_pair(a: AttrRef, b: AttrRef) -> Tuple[AttrRef, AttrRef]:
    return (a, b) if (a.var, a.key) <= (b.var, b.key) else (b, a)


def constraint_region(c: DifferentialConstraint):
    """Return (space, set) for a distance constraint.

    Constraints sharing a space can be compared by set inclusion. absdiff
    against a constant lives in value space so different constants interact.
    """
    dset = distance_set(c.distance, c.op, c.threshold)
    if c.form == CONST and c.distance == "absdiff" and is_numeric(c.right):
        return ("value", c.left), absdiff_preimage(c.right, dset)
    if c.form == ATTR:
        return ("distance", c.distance) + _canonical_pair(c.left, c.right), dset
    return ("distance", c.distance, c.left, value_kind(c.right), c.right), dset


class _UnionFind:
    def __init__(self):
        self.parent: Dict[str, str] = {}

    def find(self, x: str) -> str:
        self.parent.setdefault(x, x)
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: str, b: str) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            lo, hi = sorted((ra, rb))
            self.parent[hi] = lo


@dataclass
class Analysis:
    rep: Dict[str, str]
    kinds: Dict[AttrRef, str]
    pins: Dict[AttrRef, Value]
    numeric: Dict[AttrRef, object]
    distances: Dict[tuple, object]

    def term(self, ref: AttrRef) -> AttrRef:
        return AttrRef(self.rep.get(ref.var, ref.var), ref.key)


def _holds(dist, a, b, op, t) -> bool:
    try:
        return compare(distance(dist, a, b), op, t)
    except DistanceError:
        return False


def _pins_term(dist: str, dset, constant: Value) -> bool:
    if dist == "jaccard" or not member(0, dset):
        return False
    if not is_empty(Intersection(dset, Interval(0, oo, True, True))):
        return False
    required = REQUIRED_KIND.get(dist)
    return required is None or _kind_class(constant) == required


def analyze(constraints: Iterable[DifferentialConstraint],
            pins: Optional[Mapping[AttrRef, Value]] = None) -> Optional[Analysis]:
    """Jointly analyse a constraint set; None when it is infeasible.

    The analysis never reports infeasibility wrongly. Interactions it does not
    model (e.g. two edit bounds against different constants) are assumed
    satisfiable.
    """
    constraints = list(constraints)
    uf = _UnionFind()
    for c in constraints:
        if c.form == IDENT_EQ:
            uf.union(c.left, c.right)
    for c in constraints:
        if c.form == IDENT_NEQ and uf.find(c.left) == uf.find(c.right):
            return None

    def term(ref: AttrRef) -> AttrRef:
        return AttrRef(uf.find(ref.var), ref.key)

    pinned: Dict[AttrRef, Value] = {}

    def pin(t: AttrRef, v: Value) -> bool:
        if t in pinned:
            return values_equal(pinned[t], v) and _kind_class(pinned[t]) == _kind_class(v)
        pinned[t] = v
        return True

    for ref, v in (pins or {}).items():
        if not pin(term(ref), v):
            return None

    items = []
    for c in constraints:
        if c.form in (IDENT_EQ, IDENT_NEQ):
            continue
        right = term(c.right) if isinstance(c.right, AttrRef) else c.right
        items.append((c.distance, term(c.left), right, c.op, c.threshold))

    changed = True
    while changed:
        changed = False
        rest = []
        for dist, lt, r, op, t in items:
            if isinstance(r, AttrRef):
                if lt in pinned and r in pinned:
                    if not _holds(dist, pinned[lt], pinned[r], op, t):
                        return None
                    continue
                if lt in pinned:
                    lt, r = r, pinned[lt]
                elif r in pinned:
                    r = pinned[r]
                else:
                    rest.append((dist, lt, r, op, t))
                    continue
            if lt in pinned:
                if not _holds(dist, pinned[lt], r, op, t):
                    return None
                continue
            dset = distance_set(dist, op, t)
            if is_empty(dset):
                return None
            if _pins_term(dist, dset, r):
                if not pin(lt, r):
                    return None
                changed = True
                continue
            rest.append((dist, lt, r, op, t))
        items = rest

    kinds: Dict[AttrRef, str] = {t: _kind_class(v) for t, v in pinned.items()}

    def need(t: AttrRef, kind: str) -> bool:
        if kinds.setdefault(t, kind) != kind:
            return False
        return True

    numeric: Dict[AttrRef, object] = {}
    distances: Dict[tuple, object] = {}
    for dist, lt, r, op, t in items:
        required = REQUIRED_KIND.get(dist)
        if required is not None:
            if not need(lt, required):
                return None
            if isinstance(r, AttrRef):
                if not need(r, required):
                    return None
            elif _kind_class(r) != required:
                return None
        dset = distance_set(dist, op, t)
        if not isinstance(r, AttrRef) and dist == "absdiff":
            numeric[lt] = Intersection(numeric.get(lt, S.Reals), absdiff_preimage(r, dset))
            continue
        if not isinstance(r, AttrRef) and dist == "eq" and is_numeric(r) and not member(0, dset):
            numeric[lt] = Intersection(numeric.get(lt, S.Reals), S.Reals - FiniteSet(exact(r)))
        if isinstance(r, AttrRef):
            key = ("distance", dist) + _canonical_pair(lt, r)
        else:
            key = ("distance", dist, lt, value_kind(r), r)
        distances[key] = Intersection(distances.get(key, DOMAINS[dist]), dset)
        if is_empty(distances[key]):
            return None

    for t, s in numeric.items():
        if kinds.get(t) == NUMERIC and is_empty(s):
            return None

    rep = {v: uf.find(v) for v in uf.parent}
    return Analysis(rep, kinds, pinned, numeric, distances)


def feasible(constraints: Iterable[DifferentialConstraint]) -> bool:
    return analyze(constraints) is not None


def entails(constraints: Sequence[DifferentialConstraint], c: DifferentialConstraint,
            pins: Optional[Mapping[AttrRef, Value]] = None) -> bool:
    """True when every assignment satisfying `constraints` also satisfies `c`."""
    constraints = list(constraints)
    if analyze(constraints, pins) is None:
        return True
    if analyze(constraints + [c], pins) is None:
        return False
    return analyze(constraints + [negate(c)], pins) is None


def subjugates(tau: Iterable[DifferentialConstraint], omega: Iterable[DifferentialConstraint],
               mapping: Optional[Mapping[str, str]] = None) -> bool:
    """tau subjugates omega: whatever satisfies omega satisfies tau (renamed by mapping)."""
    omega = list(omega)
    mapping = mapping or {}
    return all(entails(omega, rename(c, mapping)) for c in tau)


# ---------------------------------------------------------------------------
# DSL

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<arrow_open>-\[)
  | (?P<arrow_close>\]->)
  | (?P<op><=|>=|!=|<|>|=)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}(),;:.\-])
""", re.VERBOSE)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> List[_Token]:
    out = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise GgdSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tk = "punct" if kind in ("arrow_open", "arrow_close") else kind
            out.append(_Token(tk, m.group(), line, pos - line_start + 1))
        pos = m.end()
    out.append(_Token("eof", "", line, pos - line_start + 1))
    return out


def _unquote(s: str) -> str:
    body = s[1:-1]
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), body)


def _number(text: str) -> Union[int, float]:
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    return float(text)


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def error(self, message: str, tok: Optional[_Token] = None):
        tok = tok or self.tok
        return GgdSyntaxError(message, tok.line, tok.col)

    def accept(self, text: str) -> Optional[_Token]:
        if self.tok.kind != "string" and self.tok.text == text:
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text: str) -> _Token:
        t = self.accept(text)
        if t is None:
            shown = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {shown!r}")
        return t

    def ident(self, what: str) -> _Token:
        if self.tok.kind != "ident":
            raise self.error(f"expected {what}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.i += 1
        return t

    def parse(self) -> GgdSet:
        ggds = []
        names = set()
        while self.tok.kind != "eof":
            kw = self.ident("'ggd'")
            if kw.text != "ggd":
                raise self.error("expected 'ggd'", kw)
            name_tok = self.ident("GGD name")
            if name_tok.text in names:
                raise GgdValidationError(f"duplicate GGD name {name_tok.text!r} (line {name_tok.line})")
            names.add(name_tok.text)
            ggds.append(self.ggd(name_tok.text))
        return GgdSet(tuple(ggds))

    def ggd(self, name: str) -> Ggd:
        self.expect("{")
        self.keyword("source")
        source = self.pattern(name, "source", None)
        where = self.constraints_block("where")
        self.keyword("target")
        target = self.pattern(name, "target", source)
        having = self.constraints_block("having")
        self.expect("}")
        x_vars = set(source.variables)
        _check_constraints(name, "where", where, x_vars)
        _check_constraints(name, "having", having, x_vars | set(target.variables))
        return Ggd(name, source, tuple(where), target, tuple(having))

    def keyword(self, word: str) -> None:
        t = self.ident(f"'{word}'")
        if t.text != word:
            raise self.error(f"expected '{word}', found {t.text!r}", t)

    def constraints_block(self, word: str) -> List[DifferentialConstraint]:
        if not (self.tok.kind == "ident" and self.tok.text == word):
            return []
        self.i += 1
        self.expect("{")
        out = []
        while not self.accept("}"):
            out.append(self.constraint())
            self.expect(";")
        return out

    # patterns

    def pattern(self, ggd_name: str, side: str, source: Optional[GraphPattern]) -> GraphPattern:
        self.expect("{")
        b = _PatternBuilder(ggd_name, side, source)
        if not self.accept("}"):
            while True:
                self.element(b)
                if self.accept("}"):
                    break
                self.expect(",")
        return b.build()

    def element(self, b: "_PatternBuilder") -> None:
        prev = self.node(b)
        while self.accept("-["):
            etok = self.ident("edge variable")
            self.expect(":")
            label = self.label()
            self.expect("]->")
            nxt = self.node(b)
            b.edge(etok, label, prev, nxt)
            prev = nxt

    def node(self, b: "_PatternBuilder") -> str:
        self.expect("(")
        vtok = self.ident("vertex variable")
        label = None
        if self.accept(":"):
            label = self.label()
        self.expect(")")
        b.vertex(vtok, label)
        return vtok.text

    def label(self) -> str:
        if self.accept("-"):
            return WILDCARD
        return self.ident("label").text

    # constraints

    def constraint(self) -> DifferentialConstraint:
        start = self.tok
        if start.kind == "ident" and start.text in DISTANCES and self.tokens[self.i + 1].text == "(":
            dist = start.text
            self.i += 1
            self.expect("(")
            a = self.term()
            self.expect(",")
            b = self.term()
            self.expect(")")
            if self.tok.kind != "op":
                raise self.error("expected comparison operator")
            op = self.tok.text
            self.i += 1
            if self.tok.kind != "number":
                raise self.error("expected threshold")
            t = _number(self.tok.text)
            if t < 0:
                raise self.error("threshold must be non-negative")
            self.i += 1
            return _distance_constraint(dist, a, b, op, t, start)
        left = self.ident("variable")
        if self.tok.kind != "op" or self.tok.text not in ("=", "!="):
            raise self.error("expected '=' or '!=' between variables")
        form = IDENT_EQ if self.tok.text == "=" else IDENT_NEQ
        self.i += 1
        right = self.ident("variable")
        return DifferentialConstraint(form, left.text, right.text)

    def term(self):
        t = self.tok
        if t.kind == "string":
            self.i += 1
            return _unquote(t.text)
        if t.kind == "number":
            self.i += 1
            return _number(t.text)
        if t.kind == "ident" and t.text in ("true", "false") and self.tokens[self.i + 1].text != ".":
            self.i += 1
            return t.text == "true"
        var = self.ident("term")
        self.expect(".")
        key = self.ident("property key")
        if key.text.startswith("_"):
            raise GgdValidationError(f"property key {key.text!r} is reserved (line {key.line})")
        return AttrRef(var.text, key.text)


def _distance_constraint(dist, a, b, op, t, tok: _Token) -> DifferentialConstraint:
    if not isinstance(a, AttrRef) and isinstance(b, AttrRef):
        a, b = b, a
    if not isinstance(a, AttrRef):
        raise GgdSyntaxError(f"{dist} compares two constants", tok.line, tok.col)
    if not isinstance(b, AttrRef):
        required = REQUIRED_KIND.get(dist)
        if required is not None and _kind_class(b) != required:
            raise GgdValidationError(
                f"{dist}({a}, {format_operand(b)}) needs a {required} constant (line {tok.line})")
        return DifferentialConstraint(CONST, a, b, dist, op, t)
    return DifferentialConstraint(ATTR, a, b, dist, op, t)


class _PatternBuilder:
    def __init__(self, ggd_name: str, side: str, source: Optional[GraphPattern]):
        self.ggd_name = ggd_name
        self.side = side
        self.source = source
        self.vertices: Dict[str, str] = {}
        self.edges: Dict[str, EdgePattern] = {}

    def _where(self, tok: _Token) -> str:
        return f"{self.ggd_name} {self.side}, line {tok.line}"

    def _inherited(self, var: str, kind: str) -> Optional[str]:
        if self.source is None or var not in self.source.variables:
            return None
        if self.source.kind_of(var) != kind:
            raise GgdValidationError(f"{var} is a {self.source.kind_of(var)} in the source")
        return self.source.label_of(var)

    def _merge_label(self, var: str, old: Optional[str], new: Optional[str], tok: _Token) -> Optional[str]:
        if old is None:
            return new
        if new is None or new == old:
            return old
        if self.side == "target" and WILDCARD in (old, new):
            return new if old == WILDCARD else old
        raise GgdValidationError(f"label clash on {var}: {old} vs {new} ({self._where(tok)})")

    def vertex(self, tok: _Token, label: Optional[str]) -> None:
        var = tok.text
        if var in self.edges:
            raise GgdValidationError(f"{var} declared as both vertex and edge ({self._where(tok)})")
        if var in self.vertices:
            self.vertices[var] = self._merge_label(var, self.vertices[var], label, tok)
            return
        try:
            inherited = self._inherited(var, VERTEX)
        except GgdValidationError as e:
            raise GgdValidationError(f"{e} ({self._where(tok)})") from None
        if inherited is not None:
            label = self._merge_label(var, inherited, label, tok)
        if label is None:
            raise GgdValidationError(f"undeclared variable {var} ({self._where(tok)})")
        self.vertices[var] = label

    def edge(self, tok: _Token, label: str, src: str, dst: str) -> None:
        var = tok.text
        if var in self.vertices or var in self.edges:
            raise GgdValidationError(f"variable {var} declared twice ({self._where(tok)})")
        try:
            inherited = self._inherited(var, EDGE)
        except GgdValidationError as e:
            raise GgdValidationError(f"{e} ({self._where(tok)})") from None
        if inherited is not None:
            label = self._merge_label(var, inherited, label, tok)
            old = self.source.edge(var)
            if (old.src, old.dst) != (src, dst):
                raise GgdValidationError(f"edge {var} changes endpoints ({self._where(tok)})")
        self.edges[var] = EdgePattern(var, label, src, dst)

    def build(self) -> GraphPattern:
        return GraphPattern(
            tuple(VertexPattern(v, lab) for v, lab in self.vertices.items()),
            tuple(self.edges.values()),
            name=f"{self.ggd_name}/{self.side}",
        )


def _check_constraints(name: str, block: str, constraints, declared) -> None:
    for c in constraints:
        missing = sorted(c.variables - set(declared))
        if missing:
            raise GgdValidationError(f"{name} {block}: undeclared variable {missing[0]} in {format_constraint(c)}")


def parse_ggds(text: str) -> GgdSet:
    """Parse GGD DSL text into a GgdSet."""
    ggds = _Parser(text).parse()
    logger.info("parsed %d GGDs", len(ggds))
    return ggds


def load_ggds(path: str) -> GgdSet:
    with open(path, encoding="utf-8") as fh:
        return parse_ggds(fh.read())


# ---------------------------------------------------------------------------
# pretty printing

def format_operand(v) -> str:
    if isinstance(v, AttrRef):
        return str(v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t") + '"'
    return repr(v)


def format_constraint(c: DifferentialConstraint) -> str:
    if c.form == IDENT_EQ:
        return f"{c.left} = {c.right}"
    if c.form == IDENT_NEQ:
        return f"{c.left} != {c.right}"
    return f"{c.distance}({format_operand(c.left)}, {format_operand(c.right)}) {c.op} {c.threshold!r}"


def format_pattern(p: GraphPattern) -> str:
    parts = [f"({v.var}:{v.label})" for v in p.vertices]
    parts += [f"({e.src})-[{e.var}:{e.label}]->({e.dst})" for e in p.edges]
    return ", ".join(parts)


def format_ggd(g: Ggd) -> str:
    lines = [f"ggd {g.name} {{", f"  source {{ {format_pattern(g.source)} }}"]
    if g.source_constraints:
        lines.append("  where { " + " ".join(f"{format_constraint(c)};" for c in g.source_constraints) + " }")
    lines.append(f"  target {{ {format_pattern(g.target)} }}")
    if g.target_constraints:
        lines.append("  having { " + " ".join(f"{format_constraint(c)};" for c in g.target_constraints) + " }")
    lines.append("}")
    return "\n".join(lines)


def format_ggds(ggds: Iterable[Ggd]) -> str:
    return "\n\n".join(format_ggd(g) for g in ggds) + "\n"
