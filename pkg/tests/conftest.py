import random

import pytest

from graph_core import PropertyGraph
from ggd_lang import parse_ggds


def make_graph(vertices, edges=()):
    """vertices: (id, labels, props); edges: (id, src, dst, labels, props)."""
    g = PropertyGraph()
    for vid, labels, props in vertices:
        g.add_vertex(vid, labels, props)
    for eid, src, dst, labels, props in edges:
        g.add_edge(eid, src, dst, labels, props)
    return g


def random_graph(rng: random.Random, n_vertices: int = 12, n_edges: int = 24,
                 labels=("A", "B"), edge_labels=("r", "s")) -> PropertyGraph:
    g = PropertyGraph()
    for i in range(rng.randint(1, n_vertices)):
        g.add_vertex(f"v{i}", [rng.choice(labels)], {"n": rng.randint(0, 5), "w": rng.choice(["ab", "abc", "b"])})
    vids = sorted(g.vertices)
    for i in range(rng.randint(0, n_edges)):
        g.add_edge(f"e{i}", rng.choice(vids), rng.choice(vids), [rng.choice(edge_labels)], {"n": rng.randint(0, 5)})
    return g


SAME_AS = """
ggd same_as {
  source { (a:Person)-[w1:worksAt]->(c:Company), (b:Person)-[w2:worksAt]->(c) }
  where { eq(a.name, b.name) = 0; a != b; }
  target { (a)-[s:sameAs]->(b) }
}
"""

FUNDING = """
ggd funded_far {
  source { (b:Project)-[c:managedBy]->(a:Employee) }
  target { (b)-[f:fundedBy]->(x:Funder) }
  having { absdiff(b.budget, 100) > 10; }
}

ggd funded_near {
  source { (b:Project)-[c:managedBy]->(a:Employee), (a)-[w:worksIn]->(d:Dept) }
  target { (b)-[f:fundedBy]->(x:Funder) }
  having { absdiff(b.budget, 100) <= 10; }
}
"""

CREDITS = """
ggd senior {
  source { (s:Student) }
  where { absdiff(s.year, 2020) > 2; }
  target { (s)-[t:takes]->(l:LearningActivity) }
  having { absdiff(l.credits, 10) <= 2; }
}

ggd junior {
  source { (s:Student) }
  where { absdiff(s.year, 2020) <= 2; }
  target { (s)-[t:takes]->(l:LearningActivity) }
  having { absdiff(l.credits, 10) <= 3; }
}

ggd any_student {
  source { (s:Student) }
  target { (s)-[t:takes]->(l:LearningActivity) }
  having { absdiff(l.credits, 10) <= %s; }
}
"""

CONTRACTS = """
ggd staffed {
  source { (p:Project) }
  target { (e:Employee)-[a:assignedTo]->(p) }
  having { absdiff(a.hours, 40) <= 4; }
}

ggd contracted {
  source { (e:Employee)-[a:assignedTo]->(p:Project) }
  where { absdiff(a.hours, 40) <= 8; }
  target { (p)-[h:hasContract]->(c:Contract) }
  having { absdiff(c.duration, 12) <= 1; }
}

ggd has_contract {
  source { (p:Project) }
  target { (p)-[h:hasContract]->(c:Contract) }
  having { absdiff(c.duration, 12) <= 2; }
}
"""

SELF_CYCLE = """
ggd knows_someone {
  source { (p:Person) }
  target { (p)-[k:knows]->(q:Person) }
}
"""

PLACE = """
ggd has_place {
  source { (x:Org) }
  target { (x)-[l:isLocatedIn]->(y:Place) }
}
"""


@pytest.fixture
def same_as_graph():
    """Two Annas at the same company with no sameAs edge, plus a correctly linked pair."""
    return make_graph(
        [
            ("p1", ["Person"], {"name": "Anna"}),
            ("p2", ["Person"], {"name": "Anna"}),
            ("p3", ["Person"], {"name": "Ben"}),
            ("p4", ["Person"], {"name": "Ben"}),
            ("c1", ["Company"], {"name": "Acme"}),
            ("c2", ["Company"], {"name": "Initech"}),
        ],
        [
            ("w1", "p1", "c1", ["worksAt"], {}),
            ("w2", "p2", "c1", ["worksAt"], {}),
            ("w3", "p3", "c2", ["worksAt"], {}),
            ("w4", "p4", "c2", ["worksAt"], {}),
            ("s1", "p1", "p2", ["sameAs"], {}),
            ("s3", "p3", "p4", ["sameAs"], {}),
            ("s4", "p4", "p3", ["sameAs"], {}),
        ],
    )


@pytest.fixture
def same_as():
    return parse_ggds(SAME_AS)


@pytest.fixture
def funding():
    return parse_ggds(FUNDING)


@pytest.fixture
def credits():
    def build(threshold=3):
        ggds = parse_ggds(CREDITS % threshold)
        return ggds.without("any_student"), ggds.get("any_student")
    return build


@pytest.fixture
def contracts():
    ggds = parse_ggds(CONTRACTS)
    return ggds.without("has_contract"), ggds.get("has_contract")


@pytest.fixture
def self_cycle():
    return parse_ggds(SELF_CYCLE)
