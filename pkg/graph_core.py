import csv
import logging
import math
import os
import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Set, Tuple, Union

logger = logging.getLogger(__name__)

Value = Union[str, float, int, bool]

VERTEX = "vertex"
EDGE = "edge"
WILDCARD = "-"
GEN_PREFIX = "gen:"
PROVENANCE_KEY = "_gen_by"

VERTEX_HEADER = ["id", "labels", "props"]
EDGE_HEADER = ["id", "src", "dst", "labels", "props"]


class GraphError(Exception):
    """Base class for graph model errors."""


class GraphParseError(GraphError):
    def __init__(self, source: str, line: int, message: str):
        super().__init__(f"{source}:{line}: {message}")
        self.source = source
        self.line = line


class IntegrityError(GraphError):
    pass


def value_kind(v: Value) -> str:
    # bool first: bool is a subclass of int
    if isinstance(v, bool):
        return "boolean"
    if isinstance(v, int):
        return "integer"
    if isinstance(v, float):
        return "number"
    return "text"


def is_numeric(v: Value) -> bool:
    return value_kind(v) in ("integer", "number")


def values_equal(a: Value, b: Value) -> bool:
    """Kind-aware equality: 1 and 1.0 are equal numbers, 1 and True are not."""
    ka, kb = value_kind(a), value_kind(b)
    if ka == kb:
        return a == b
    if is_numeric(a) and is_numeric(b):
        return a == b
    return False


_NUMBER_RE = re.compile(r"[+-]?[0-9]+(\.[0-9]+)?([eE][+-]?[0-9]+)?")


def parse_value(text: str) -> Value:
    """Type a raw CSV value: integer, then float, then true/false, else text."""
    m = _NUMBER_RE.fullmatch(text)
    if m:
        if not (m.group(1) or m.group(2)):
            return int(text)
        f = float(text)
        if not math.isfinite(f):
            raise ValueError(f"non-finite number {text!r}")
        return f
    if text == "true":
        return True
    if text == "false":
        return False
    return text


def format_value(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class GraphObject:
    id: str
    kind: str
    labels: FrozenSet[str]
    properties: Dict[str, Value] = field(default_factory=dict)
    endpoints: Optional[Tuple[str, str]] = None

    @property
    def src(self) -> str:
        return self.endpoints[0]

    @property
    def dst(self) -> str:
        return self.endpoints[1]


class PropertyGraph:
    """Vertices and edges with label sets and property maps, plus the
    adjacency and label indexes the matcher relies on."""

    def __init__(self):
        self.vertices: Dict[str, GraphObject] = {}
        self.edges: Dict[str, GraphObject] = {}
        self._out: Dict[str, Set[str]] = {}
        self._in: Dict[str, Set[str]] = {}
        self._labels: Dict[str, Dict[str, Set[str]]] = {VERTEX: {}, EDGE: {}}
        self._gen_counter = 0

    def __len__(self) -> int:
        return len(self.vertices) + len(self.edges)

    def __contains__(self, oid: str) -> bool:
        return oid in self.vertices or oid in self.edges

    def get(self, oid: str) -> GraphObject:
        obj = self.vertices.get(oid) or self.edges.get(oid)
        if obj is None:
            raise KeyError(oid)
        return obj

    def objects(self, kind: str) -> Dict[str, GraphObject]:
        return self.vertices if kind == VERTEX else self.edges

    def add_vertex(self, oid: str, labels: Iterable[str], properties: Optional[Mapping[str, Value]] = None) -> GraphObject:
        if oid in self:
            raise IntegrityError(f"duplicate id {oid}")
        obj = GraphObject(oid, VERTEX, frozenset(labels), dict(properties or {}))
        self.vertices[oid] = obj
        self._out[oid] = set()
        self._in[oid] = set()
        self._index_labels(obj)
        return obj

    def add_edge(self, oid: str, src: str, dst: str, labels: Iterable[str],
                 properties: Optional[Mapping[str, Value]] = None) -> GraphObject:
        if oid in self:
            raise IntegrityError(f"duplicate id {oid}")
        for end in (src, dst):
            if end not in self.vertices:
                raise IntegrityError(f"edge {oid} references missing vertex {end}")
        obj = GraphObject(oid, EDGE, frozenset(labels), dict(properties or {}), (src, dst))
        self.edges[oid] = obj
        self._out[src].add(oid)
        self._in[dst].add(oid)
        self._index_labels(obj)
        return obj

    def _index_labels(self, obj: GraphObject) -> None:
        index = self._labels[obj.kind]
        for label in obj.labels:
            index.setdefault(label, set()).add(obj.id)

    def add_labels(self, oid: str, labels: Iterable[str]) -> None:
        obj = self.get(oid)
        obj.labels = obj.labels | frozenset(labels)
        self._index_labels(obj)

    def _fresh_id(self) -> str:
        while True:
            self._gen_counter += 1
            oid = f"{GEN_PREFIX}{self._gen_counter}"
            if oid not in self:
                return oid

    def create_object(self, kind: str, labels: Iterable[str], properties: Optional[Mapping[str, Value]] = None,
                      endpoints: Optional[Tuple[str, str]] = None, provenance: Optional[str] = None) -> str:
        """Create a vertex or edge under a fresh `gen:` id and return the id."""
        if (kind == EDGE) != (endpoints is not None):
            raise IntegrityError("endpoints are required for edges and only for edges")
        if endpoints is not None:
            for end in endpoints:
                if end not in self.vertices:
                    raise IntegrityError(f"missing endpoint {end}")
        props = dict(properties or {})
        if provenance is not None:
            props[PROVENANCE_KEY] = provenance
        oid = self._fresh_id()
        if kind == VERTEX:
            self.add_vertex(oid, labels, props)
        else:
            self.add_edge(oid, endpoints[0], endpoints[1], labels, props)
        return oid

    def objects_with_label(self, label: str, kind: str = VERTEX) -> List[str]:
        if label == WILDCARD:
            return sorted(self.objects(kind))
        return sorted(self._labels[kind].get(label, ()))

    def label_count(self, label: str, kind: str = VERTEX) -> int:
        if label == WILDCARD:
            return len(self.objects(kind))
        return len(self._labels[kind].get(label, ()))

    def out_edges(self, vid: str) -> List[str]:
        return sorted(self._out.get(vid, ()))

    def in_edges(self, vid: str) -> List[str]:
        return sorted(self._in.get(vid, ()))

    def audit(self) -> List[str]:
        """Return every inconsistency between the object maps and the indexes."""
        problems: List[str] = []
        overlap = set(self.vertices) & set(self.edges)
        if overlap:
            problems.append(f"ids used as vertex and edge: {sorted(overlap)}")
        expected_out: Dict[str, Set[str]] = {v: set() for v in self.vertices}
        expected_in: Dict[str, Set[str]] = {v: set() for v in self.vertices}
        for e in self.edges.values():
            if e.src not in self.vertices or e.dst not in self.vertices:
                problems.append(f"edge {e.id} has a dangling endpoint")
                continue
            expected_out[e.src].add(e.id)
            expected_in[e.dst].add(e.id)
        if expected_out != self._out:
            problems.append("outgoing adjacency out of sync")
        if expected_in != self._in:
            problems.append("incoming adjacency out of sync")
        for kind in (VERTEX, EDGE):
            expected: Dict[str, Set[str]] = {}
            for obj in self.objects(kind).values():
                for label in obj.labels:
                    expected.setdefault(label, set()).add(obj.id)
            actual = {k: v for k, v in self._labels[kind].items() if v}
            if expected != actual:
                problems.append(f"{kind} label index out of sync")
        return problems

    def copy(self) -> "PropertyGraph":
        g = PropertyGraph()
        for v in self.vertices.values():
            g.add_vertex(v.id, v.labels, v.properties)
        for e in self.edges.values():
            g.add_edge(e.id, e.src, e.dst, e.labels, e.properties)
        g._gen_counter = self._gen_counter
        return g


# ---------------------------------------------------------------------------
# CSV ingestion and dumping

def _parse_labels(raw: str) -> List[str]:
    return [lab.strip() for lab in raw.split("|") if lab.strip()]


def _parse_props(raw: str) -> Dict[str, Value]:
    props: Dict[str, Value] = {}
    if not raw.strip():
        return props
    for pair in raw.split(","):
        if "=" not in pair:
            raise ValueError(f"property {pair!r} is not k=v")
        key, _, val = pair.partition("=")
        key = key.strip()
        if not key:
            raise ValueError(f"empty property key in {pair!r}")
        if key in props:
            raise ValueError(f"duplicate property {key!r}")
        props[key] = parse_value(val.strip())
    return props


def _format_props(props: Mapping[str, Value]) -> str:
    parts = []
    for key in sorted(props):
        text = format_value(props[key])
        if any(ch in text for ch in ",;=\n") or any(ch in key for ch in ",;=\n"):
            raise GraphError(f"property {key}={text!r} cannot be written to CSV")
        parts.append(f"{key}={text}")
    return ",".join(parts)


def _read_rows(path: str, header: List[str]):
    if not os.path.exists(path):
        raise GraphParseError(path, 0, "file not found")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=";")
        first = next(reader, None)
        if first is None:
            return
        if [c.strip() for c in first] != header:
            raise GraphParseError(path, 1, f"expected header {';'.join(header)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise GraphParseError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, [c.strip() for c in row]


def load_graph(directory: str) -> PropertyGraph:
    """Load `vertices.csv` and `edges.csv` from a directory."""
    g = PropertyGraph()
    vpath = os.path.join(directory, "vertices.csv")
    epath = os.path.join(directory, "edges.csv")
    for line, (oid, labels, props) in _read_rows(vpath, VERTEX_HEADER):
        try:
            parsed_labels = _parse_labels(labels)
            if not parsed_labels:
                raise ValueError("vertex without labels")
            parsed = _parse_props(props)
        except ValueError as e:
            raise GraphParseError(vpath, line, str(e)) from None
        if not oid:
            raise GraphParseError(vpath, line, "empty id")
        g.add_vertex(oid, parsed_labels, parsed)
    for line, (oid, src, dst, labels, props) in _read_rows(epath, EDGE_HEADER):
        try:
            parsed_labels = _parse_labels(labels)
            if not parsed_labels:
                raise ValueError("edge without labels")
            parsed = _parse_props(props)
        except ValueError as e:
            raise GraphParseError(epath, line, str(e)) from None
        if not oid:
            raise GraphParseError(epath, line, "empty id")
        g.add_edge(oid, src, dst, parsed_labels, parsed)
    logger.info("loaded %d vertices and %d edges from %s", len(g.vertices), len(g.edges), directory)
    return g


def dump_graph(graph: PropertyGraph, directory: str) -> None:
    """Write the graph as the two CSV files, rows sorted by id."""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "vertices.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=";", lineterminator="\n")
        writer.writerow(VERTEX_HEADER)
        for oid in sorted(graph.vertices):
            v = graph.vertices[oid]
            writer.writerow([oid, "|".join(sorted(v.labels)), _format_props(v.properties)])
    with open(os.path.join(directory, "edges.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=";", lineterminator="\n")
        writer.writerow(EDGE_HEADER)
        for oid in sorted(graph.edges):
            e = graph.edges[oid]
            writer.writerow([oid, e.src, e.dst, "|".join(sorted(e.labels)), _format_props(e.properties)])


# ---------------------------------------------------------------------------
# Workbook ingestion: one worksheet per label, "V <Label>" or "E <Label>"

def load_graph_workbook(xlsx_path: str) -> PropertyGraph:
    """Load a graph from an .xlsx workbook holding one table per label.

    Vertex sheets are titled `V <Label>` with header `id` followed by property
    columns; edge sheets are titled `E <Label>` with header `id, src, dst`
    followed by property columns. An id listed on several sheets of the same
    kind collects all of their labels and properties.
    """
    from openpyxl import load_workbook

    if not os.path.exists(xlsx_path):
        raise GraphParseError(xlsx_path, 0, "file not found")

    vertex_rows: Dict[str, Tuple[Set[str], Dict[str, Value]]] = {}
    edge_rows: Dict[str, Tuple[str, str, Set[str], Dict[str, Value]]] = {}
    order_v: List[str] = []
    order_e: List[str] = []

    wb = load_workbook(xlsx_path, read_only=True, data_only=True)
    try:
        for ws in wb.worksheets:
            title = ws.title.strip()
            kind, _, label = title.partition(" ")
            label = label.strip()
            if kind not in ("V", "E") or not label:
                logger.warning("skipping worksheet %r (expected 'V <Label>' or 'E <Label>')", title)
                continue
            where = f"{xlsx_path}[{title}]"
            rows = ws.iter_rows(values_only=True)
            first = next(rows, None)
            if first is None:
                continue
            headers = ["" if c is None else str(c).strip() for c in first]
            fixed = ["id"] if kind == "V" else ["id", "src", "dst"]
            if [h.lower() for h in headers[: len(fixed)]] != fixed:
                raise GraphParseError(where, 1, f"expected leading columns {', '.join(fixed)}")
            prop_cols = headers[len(fixed):]
            for rownum, row in enumerate(rows, start=2):
                cells = list(row) + [None] * (len(headers) - len(row))
                if all(c is None or (isinstance(c, str) and not c.strip()) for c in cells):
                    continue
                oid = "" if cells[0] is None else str(cells[0]).strip()
                if not oid:
                    raise GraphParseError(where, rownum, "empty id")
                props: Dict[str, Value] = {}
                for key, cell in zip(prop_cols, cells[len(fixed):]):
                    if not key or cell is None:
                        continue
                    try:
                        props[key] = _cell_value(cell)
                    except ValueError as e:
                        raise GraphParseError(where, rownum, str(e)) from None
                if kind == "V":
                    if oid not in vertex_rows:
                        vertex_rows[oid] = (set(), {})
                        order_v.append(oid)
                    vertex_rows[oid][0].add(label)
                    vertex_rows[oid][1].update(props)
                else:
                    src = "" if cells[1] is None else str(cells[1]).strip()
                    dst = "" if cells[2] is None else str(cells[2]).strip()
                    if oid in edge_rows and edge_rows[oid][:2] != (src, dst):
                        raise IntegrityError(f"edge {oid} listed with different endpoints")
                    if oid not in edge_rows:
                        edge_rows[oid] = (src, dst, set(), {})
                        order_e.append(oid)
                    edge_rows[oid][2].add(label)
                    edge_rows[oid][3].update(props)
    finally:
        wb.close()

    g = PropertyGraph()
    for oid in order_v:
        labels, props = vertex_rows[oid]
        g.add_vertex(oid, labels, props)
    for oid in order_e:
        src, dst, labels, props = edge_rows[oid]
        g.add_edge(oid, src, dst, labels, props)
    logger.info("loaded %d vertices and %d edges from workbook %s", len(g.vertices), len(g.edges), xlsx_path)
    return g


def _cell_value(cell) -> Value:
    if isinstance(cell, bool):
        return cell
    if isinstance(cell, int):
        return cell
    if isinstance(cell, float):
        if not math.isfinite(cell):
            raise ValueError(f"non-finite number {cell!r}")
        return cell
    return parse_value(str(cell).strip())


def open_graph(path: str) -> PropertyGraph:
    """Load from a CSV directory or an .xlsx workbook, by path shape."""
    if path.lower().endswith(".xlsx"):
        return load_graph_workbook(path)
    return load_graph(path)
