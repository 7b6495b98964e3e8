import json
import logging
import os
import random
import string
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

from graph_core import PropertyGraph, dump_graph

logger = logging.getLogger(__name__)

BASE_COUNTS = {"Person": 30000, "City": 500, "Company": 2000, "Post": 20000, "Tag": 500}
COUNTRIES = ["Austria", "Brazil", "Chile", "Denmark", "Egypt", "France", "Ghana", "India", "Japan", "Kenya"]
GGD_NAMES = ("located", "works_country", "creator", "company_city", "same_name", "nick_interest")
# letters appended to the nickname base; none of them occur in it
NICK_ALPHABET = "".join(ch for ch in string.ascii_lowercase if ch not in "meadow")


@dataclass
class EdgeRule:
    src: str
    label: str
    dst: str
    degree: float = 1.0


@dataclass
class PropertyRule:
    label: str
    key: str
    kind: str = "serial"  # serial | choice | int
    vocabulary: List[str] = field(default_factory=list)
    low: int = 0
    high: int = 100


@dataclass
class GenSpec:
    counts: Dict[str, int]
    edges: List[EdgeRule] = field(default_factory=list)
    properties: List[PropertyRule] = field(default_factory=list)
    rates: Dict[str, float] = field(default_factory=dict)
    duplicate_fraction: float = 0.01
    nick_base: str = "meadow"
    nick_threshold: int = 2
    max_edits: int = 12

    def validate(self) -> None:
        for name, rate in self.rates.items():
            if name not in GGD_NAMES:
                raise ValueError(f"unknown GGD {name!r} in rates")
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"rate for {name} must be in [0, 1], got {rate}")
        missing = sorted(set(BASE_COUNTS) - set(self.counts))
        if missing:
            raise ValueError(f"counts missing for {', '.join(missing)}")
        if not 0.0 <= self.duplicate_fraction <= 0.5:
            raise ValueError("duplicate_fraction must be in [0, 0.5]")
        if self.nick_threshold < 0 or self.max_edits < 0:
            raise ValueError("nick_threshold and max_edits must be non-negative")
        for rule in self.properties:
            if rule.kind not in ("serial", "choice", "int"):
                raise ValueError(f"unknown property kind {rule.kind!r}")
            if rule.kind == "choice" and not rule.vocabulary:
                raise ValueError(f"{rule.label}.{rule.key}: choice needs a vocabulary")

    def rate(self, name: str) -> float:
        return self.rates.get(name, 0.0)


def default_spec() -> GenSpec:
    """The built-in six-GGD workload at 1x."""
    return GenSpec(
        counts=dict(BASE_COUNTS),
        edges=[EdgeRule("Post", "hasTag", "Tag", 1.5), EdgeRule("Person", "knows", "Person", 2.0)],
        properties=[
            PropertyRule("Person", "name"),
            PropertyRule("Person", "age", "int", low=18, high=80),
            PropertyRule("City", "name"),
            PropertyRule("City", "country", "choice", COUNTRIES),
            PropertyRule("Company", "name"),
            PropertyRule("Company", "country", "choice", COUNTRIES),
            PropertyRule("Post", "length", "int", low=1, high=2000),
            PropertyRule("Tag", "name"),
        ],
        rates={"located": 0.05, "works_country": 0.05, "creator": 0.05,
               "company_city": 0.0, "same_name": 0.1, "nick_interest": 0.1},
    )


def load_spec(path: str) -> GenSpec:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    base = asdict(default_spec())
    base.update(raw)
    spec = GenSpec(
        counts=dict(base["counts"]),
        edges=[EdgeRule(**e) for e in base["edges"]],
        properties=[PropertyRule(**p) for p in base["properties"]],
        rates=dict(base["rates"]),
        duplicate_fraction=base["duplicate_fraction"],
        nick_base=base["nick_base"],
        nick_threshold=base["nick_threshold"],
        max_edits=base["max_edits"],
    )
    spec.validate()
    return spec


def scaled_counts(spec: GenSpec, scale: float) -> Dict[str, int]:
    return {label: max(1, round(n * scale)) for label, n in spec.counts.items()}


def ggd_text(spec: GenSpec, nick_threshold: Optional[int] = None) -> str:
    t = spec.nick_threshold if nick_threshold is None else nick_threshold
    return f"""# generated workload
ggd located {{
  source {{ (p:Person) }}
  target {{ (p)-[l:isLocatedIn]->(y:City) }}
}}

ggd works_country {{
  source {{ (p:Person)-[w:worksAt]->(c:Company) }}
  target {{ (p)-[w:worksAt]->(c) }}
  having {{ eq(w.country, c.country) = 0; }}
}}

ggd creator {{
  source {{ (x:Post) }}
  target {{ (x)-[h:hasCreator]->(p:Person) }}
}}

ggd company_city {{
  source {{ (c:Company) }}
  target {{ (c)-[l:isLocatedIn]->(y:City) }}
}}

ggd same_name {{
  source {{ (a:Person)-[w1:worksAt]->(c:Company), (b:Person)-[w2:worksAt]->(c) }}
  where {{ eq(a.name, b.name) = 0; a != b; }}
  target {{ (a)-[s:sameAs]->(b) }}
}}

ggd nick_interest {{
  source {{ (p:Person) }}
  where {{ edit(p.nick, "{spec.nick_base}") <= {t}; }}
  target {{ (p)-[i:hasInterest]->(g:Tag) }}
}}
"""


@dataclass
class Workload:
    graph: PropertyGraph
    ggds: str
    truth: Dict[str, List[Dict[str, str]]]
    counts: Dict[str, int]


class _Builder:
    def __init__(self, spec: GenSpec, seed: int, counts: Dict[str, int]):
        self.spec = spec
        self.rng = random.Random(seed)
        self.counts = counts
        self.graph = PropertyGraph()
        self.truth: Dict[str, List[Dict[str, str]]] = {name: [] for name in GGD_NAMES}
        self._edge_no = 0
        self.ids = {label: [f"{label.lower()}{i}" for i in range(n)] for label, n in counts.items()}

    def edge(self, src: str, label: str, dst: str, props=None) -> str:
        eid = f"e{self._edge_no}"
        self._edge_no += 1
        self.graph.add_edge(eid, src, dst, [label], props)
        return eid

    def injected(self, name: str) -> bool:
        return self.rng.random() < self.spec.rate(name)

    def property_value(self, rule: PropertyRule, label: str, i: int):
        if rule.kind == "serial":
            return f"{label.lower()} {rule.key} {i}"
        if rule.kind == "choice":
            return self.rng.choice(rule.vocabulary)
        return self.rng.randint(rule.low, rule.high)

    def vertices(self) -> None:
        rules: Dict[str, List[PropertyRule]] = {}
        for rule in self.spec.properties:
            rules.setdefault(rule.label, []).append(rule)
        for label in sorted(self.counts):
            for i, vid in enumerate(self.ids[label]):
                props = {r.key: self.property_value(r, label, i) for r in rules.get(label, ())}
                self.graph.add_vertex(vid, [label], props)

    def nick(self) -> tuple:
        k = self.rng.randint(0, self.spec.max_edits)
        return self.spec.nick_base + "".join(self.rng.choice(NICK_ALPHABET) for _ in range(k)), k

    def people(self) -> None:
        people, cities, companies, tags = (self.ids[x] for x in ("Person", "City", "Company", "Tag"))
        n_dup = min(round(len(people) * self.spec.duplicate_fraction), len(people) // 2)
        originals = self.rng.sample(people[:len(people) - n_dup], n_dup)
        twin_of = dict(zip(people[len(people) - n_dup:], originals))
        employer, works = {}, {}
        for pid in people:
            obj = self.graph.get(pid)
            if pid in twin_of:
                obj.properties["name"] = self.graph.get(twin_of[pid]).properties["name"]
                employer[pid] = employer[twin_of[pid]]
            else:
                employer[pid] = self.rng.choice(companies)
            if self.injected("located"):
                self.truth["located"].append({"p": pid})
            else:
                self.edge(pid, "isLocatedIn", self.rng.choice(cities))
            company = self.graph.get(employer[pid])
            country = company.properties.get("country", COUNTRIES[0])
            if self.injected("works_country"):
                country = self.rng.choice([c for c in COUNTRIES if c != country])
                wid = self.edge(pid, "worksAt", company.id, {"country": country})
                self.truth["works_country"].append({"c": company.id, "p": pid, "w": wid})
            else:
                wid = self.edge(pid, "worksAt", company.id, {"country": country})
            works[pid] = wid
            nick, k = self.nick()
            obj.properties["nick"] = nick
            if k <= self.spec.nick_threshold:
                if self.injected("nick_interest"):
                    self.truth["nick_interest"].append({"p": pid})
                else:
                    self.edge(pid, "hasInterest", self.rng.choice(tags))
            elif self.rng.random() < 0.5:
                self.edge(pid, "hasInterest", self.rng.choice(tags))
        for twin, original in twin_of.items():
            a, b = sorted((original, twin))
            if self.injected("same_name"):
                for x, y in ((a, b), (b, a)):
                    self.truth["same_name"].append({
                        "a": x, "b": y, "c": employer[x],
                        "w1": works[x], "w2": works[y],
                    })
            else:
                self.edge(a, "sameAs", b)
                self.edge(b, "sameAs", a)

    def posts_and_companies(self) -> None:
        for xid in self.ids["Post"]:
            if self.injected("creator"):
                self.truth["creator"].append({"x": xid})
            else:
                self.edge(xid, "hasCreator", self.rng.choice(self.ids["Person"]))
        for cid in self.ids["Company"]:
            if self.injected("company_city"):
                self.truth["company_city"].append({"c": cid})
            else:
                self.edge(cid, "isLocatedIn", self.rng.choice(self.ids["City"]))

    def background(self) -> None:
        for rule in self.spec.edges:
            srcs, dsts = self.ids.get(rule.src, []), self.ids.get(rule.dst, [])
            if not srcs or not dsts:
                continue
            for _ in range(round(len(srcs) * rule.degree)):
                self.edge(self.rng.choice(srcs), rule.label, self.rng.choice(dsts))


def generate(spec: GenSpec, seed: int = 0, scale: float = 1.0) -> Workload:
    """Build a graph and its GGDs; `truth` lists every injected violation, sorted."""
    spec.validate()
    if scale <= 0:
        raise ValueError("scale must be positive")
    counts = scaled_counts(spec, scale)
    b = _Builder(spec, seed, counts)
    b.vertices()
    b.people()
    b.posts_and_companies()
    b.background()
    for name in b.truth:
        b.truth[name].sort(key=lambda m: tuple(m[v] for v in sorted(m)))
    logger.info("generated %d vertices, %d edges; injected %s",
                len(b.graph.vertices), len(b.graph.edges),
                ", ".join(f"{k}={len(v)}" for k, v in b.truth.items()))
    return Workload(b.graph, ggd_text(spec), b.truth, counts)


def write_workload(work: Workload, out_dir: str, seed: int, scale: float) -> None:
    os.makedirs(out_dir, exist_ok=True)
    dump_graph(work.graph, out_dir)
    with open(os.path.join(out_dir, "ggds.ggd"), "w", encoding="utf-8") as fh:
        fh.write(work.ggds)
    doc = {"seed": seed, "scale": scale, "counts": work.counts, "violations": work.truth}
    with open(os.path.join(out_dir, "truth.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def gen_graph(spec: GenSpec, seed: int, scale: float, out_dir: str) -> str:
    """Generate and write a workload; returns the directory."""
    write_workload(generate(spec, seed, scale), out_dir, seed, scale)
    return out_dir
