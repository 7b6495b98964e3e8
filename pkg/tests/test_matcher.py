import logging
import random

import pytest

from ggd_lang import ATTR, CONST, IDENT_NEQ, AttrRef, DifferentialConstraint, EdgePattern, GraphPattern, VertexPattern
from matcher import MatchGuardExceeded, brute_force_match, extend_match, match_pattern, plan_pattern
from tests.conftest import make_graph, random_graph


def random_pattern(rng: random.Random) -> GraphPattern:
    n_v = rng.randint(1, 3)
    vs = [VertexPattern(f"x{i}", rng.choice(["A", "B", "-"])) for i in range(n_v)]
    es = [EdgePattern(f"y{j}", rng.choice(["r", "s", "-"]), rng.choice(vs).var, rng.choice(vs).var)
          for j in range(rng.randint(0, 4 - n_v))]
    return GraphPattern(tuple(vs), tuple(es))


def random_constraints(rng: random.Random, pattern: GraphPattern):
    vs = [v.var for v in pattern.vertices]
    out = []
    if rng.random() < 0.4:
        out.append(DifferentialConstraint(CONST, AttrRef(vs[0], "n"), rng.randint(0, 5), "absdiff", "<=", rng.randint(0, 2)))
    if len(vs) >= 2 and rng.random() < 0.7:
        a = AttrRef(vs[0], rng.choice("nw"))
        b = AttrRef(vs[-1], a.key)
        if a.key == "n":
            dist, t = rng.choice([("absdiff", 1), ("eq", 0)])
        else:
            dist, t = rng.choice([("edit", 1), ("jaccard", 0.5), ("eq", 0)])
        out.append(DifferentialConstraint(ATTR, a, b, dist, rng.choice(["<=", "=", ">"]) if dist == "absdiff" else "<=", t))
    if len(vs) >= 2 and rng.random() < 0.3:
        out.append(DifferentialConstraint(IDENT_NEQ, vs[0], vs[1]))
    return out


@pytest.fixture
def chain_graph():
    return make_graph(
        [
            ("a1", ["A"], {"n": 1, "w": "ab"}),
            ("a2", ["A"], {"n": 4, "w": "abc"}),
            ("b1", ["B"], {"n": 2, "w": "b"}),
            ("b2", ["B", "A"], {"n": 2}),
        ],
        [
            ("e1", "a1", "b1", ["r"], {"n": 0}),
            ("e2", "a2", "b1", ["r"], {}),
            ("e3", "b1", "b2", ["s"], {}),
            ("e4", "a1", "a1", ["s"], {}),
        ],
    )


class TestMatchPattern:
    def test_single_edge(self, chain_graph):
        p = GraphPattern((VertexPattern("x", "A"), VertexPattern("y", "B")), (EdgePattern("e", "r", "x", "y"),))
        assert match_pattern(chain_graph, p).keys() == [("e1", "a1", "b1"), ("e2", "a2", "b1")]

    def test_wildcard_and_multi_label(self, chain_graph):
        p = GraphPattern((VertexPattern("x", "-"), VertexPattern("y", "A")), (EdgePattern("e", "s", "x", "y"),))
        assert sorted(m["y"] for m in match_pattern(chain_graph, p)) == ["a1", "b2"]

    def test_self_loop(self, chain_graph):
        p = GraphPattern((VertexPattern("x", "A"),), (EdgePattern("e", "-", "x", "x"),))
        assert match_pattern(chain_graph, p).matches == [{"x": "a1", "e": "e4"}]

    def test_homomorphism_allows_reuse(self, chain_graph):
        p = GraphPattern((VertexPattern("x", "A"), VertexPattern("z", "A")))
        assert len(match_pattern(chain_graph, p)) == 9

    def test_missing_property_fails_constraint(self, chain_graph):
        p = GraphPattern((VertexPattern("x", "A"),))
        c = DifferentialConstraint(CONST, AttrRef("x", "w"), "ab", "edit", "<=", 1)
        assert [m["x"] for m in match_pattern(chain_graph, p, [c])] == ["a1", "a2"]

    def test_infeasible_constraints_short_circuit(self, chain_graph):
        p = GraphPattern((VertexPattern("x", "A"),))
        cs = [DifferentialConstraint(CONST, AttrRef("x", "n"), 0, "absdiff", "<=", 1),
              DifferentialConstraint(CONST, AttrRef("x", "n"), 10, "absdiff", "<=", 1)]
        assert len(match_pattern(chain_graph, p, cs)) == 0

    def test_empty_pattern_has_one_match(self, chain_graph):
        assert match_pattern(chain_graph, GraphPattern()).matches == [{}]

    def test_bound(self, chain_graph):
        p = GraphPattern((VertexPattern("x", "A"), VertexPattern("y", "B")), (EdgePattern("e", "r", "x", "y"),))
        assert match_pattern(chain_graph, p, bound={"x": "a2"}).keys() == [("e2", "a2", "b1")]
        assert len(match_pattern(chain_graph, p, bound={"x": "b1"})) == 0

    def test_similarity_join_matches_nested(self, chain_graph):
        p = GraphPattern((VertexPattern("x", "A"), VertexPattern("y", "-")))
        for c in [
            DifferentialConstraint(ATTR, AttrRef("x", "n"), AttrRef("y", "n"), "absdiff", "<=", 1),
            DifferentialConstraint(ATTR, AttrRef("x", "w"), AttrRef("y", "w"), "edit", "<=", 1),
            DifferentialConstraint(ATTR, AttrRef("x", "w"), AttrRef("y", "w"), "jaccard", "<=", 0.5),
            DifferentialConstraint(ATTR, AttrRef("x", "n"), AttrRef("y", "n"), "eq", "=", 0),
        ]:
            auto = match_pattern(chain_graph, p, [c])
            nested = match_pattern(chain_graph, p, [c], strategy="nested")
            assert auto.keys() == nested.keys() == brute_force_match(chain_graph, p, [c]).keys()


class TestPlans:
    def test_contracts(self):
        p = GraphPattern((VertexPattern("x", "A"), VertexPattern("y", "B")))
        cases = {
            ("edit", "<=", 2): "length filter",
            ("jaccard", "<=", 0.3): "prefix filter",
            ("absdiff", "<=", 1): "range probe",
            ("eq", "=", 0): "hash join",
            ("absdiff", ">", 1): "nested loop",
        }
        for (dist, op, t), contract in cases.items():
            key = "w" if dist in ("edit", "jaccard") else "n"
            c = DifferentialConstraint(ATTR, AttrRef("x", key), AttrRef("y", key), dist, op, t)
            plan = plan_pattern(p, [c])
            assert [j.contract for j in plan.joins] == [contract]
            assert contract in plan.explain()

    def test_starts_at_rarest_label(self, chain_graph):
        p = GraphPattern((VertexPattern("x", "A"), VertexPattern("y", "B")), (EdgePattern("e", "r", "x", "y"),))
        plan = plan_pattern(p, graph=chain_graph)
        assert plan.components[0].steps[0].var == "y"

    def test_cross_product_is_logged(self, caplog):
        p = GraphPattern((VertexPattern("x", "A"), VertexPattern("y", "B")), name="pair")
        with caplog.at_level(logging.WARNING, logger="matcher"):
            plan = plan_pattern(p)
        assert [j.contract for j in plan.joins] == ["cross product"]
        assert "cross product" in caplog.text


class TestOracle:
    @pytest.mark.parametrize("seed", range(30))
    def test_matches_brute_force(self, seed):
        rng = random.Random(seed)
        g = random_graph(rng)
        for _ in range(10):
            p = random_pattern(rng)
            cs = random_constraints(rng, p)
            assert match_pattern(g, p, cs).keys() == brute_force_match(g, p, cs).keys()

    @pytest.mark.slow
    def test_matches_brute_force_full(self):
        for seed in range(200):
            rng = random.Random(1000 + seed)
            g = random_graph(rng)
            for _ in range(20):
                p = random_pattern(rng)
                cs = random_constraints(rng, p)
                assert match_pattern(g, p, cs).keys() == brute_force_match(g, p, cs).keys()

    def test_float_equality_band(self):
        g = make_graph([("v1", ["A"], {"x": 1.0})])
        p = GraphPattern((VertexPattern("a", "A"),))
        cs = [DifferentialConstraint(CONST, AttrRef("a", "x"), 0, "absdiff", "=", 1.0),
              DifferentialConstraint(CONST, AttrRef("a", "x"), 0, "absdiff", "=", 1.0000000001)]
        assert match_pattern(g, p, cs).matches == brute_force_match(g, p, cs).matches == [{"a": "v1"}]

    def test_float_equality_join(self):
        g = make_graph([("v1", ["A"], {"x": 1.0}), ("v2", ["B"], {"x": 2.0000000005})])
        p = GraphPattern((VertexPattern("a", "A"), VertexPattern("b", "B")))
        c = DifferentialConstraint(ATTR, AttrRef("a", "x"), AttrRef("b", "x"), "absdiff", "=", 1.0)
        assert plan_pattern(p, [c]).joins[0].contract == "range probe"
        assert match_pattern(g, p, [c]).matches == [{"a": "v1", "b": "v2"}]

    def test_guard(self):
        g = make_graph([(f"v{i}", ["A"], {}) for i in range(12)])
        vs = tuple(VertexPattern(f"x{i}", "-") for i in range(8))
        with pytest.raises(MatchGuardExceeded):
            brute_force_match(g, GraphPattern(vs))


class TestMonotonicity:
    @pytest.mark.parametrize("seed", range(20))
    def test_extra_constraint_never_adds_matches(self, seed):
        rng = random.Random(seed)
        g = random_graph(rng)
        for _ in range(10):
            p = random_pattern(rng)
            cs = random_constraints(rng, p)
            extra = random_constraints(rng, p) or [
                DifferentialConstraint(CONST, AttrRef(p.vertices[0].var, "n"), rng.randint(0, 5), "absdiff", "<=", 1)]
            narrowed = set(match_pattern(g, p, cs + extra).keys())
            assert narrowed <= set(match_pattern(g, p, cs).keys())

    @pytest.mark.parametrize("seed", range(20))
    def test_looser_threshold_never_drops_matches(self, seed):
        rng = random.Random(seed)
        g = random_graph(rng)
        p = random_pattern(rng)
        first, last = p.vertices[0].var, p.vertices[-1].var
        centre = rng.randint(0, 5)
        families = [
            lambda t: DifferentialConstraint(CONST, AttrRef(first, "n"), centre, "absdiff", "<=", t),
            lambda t: DifferentialConstraint(CONST, AttrRef(first, "w"), "abd", "edit", "<=", t),
            lambda t: DifferentialConstraint(ATTR, AttrRef(first, "w"), AttrRef(last, "w"), "edit", "<=", t),
            lambda t: DifferentialConstraint(ATTR, AttrRef(first, "n"), AttrRef(last, "n"), "absdiff", "<=", t),
        ]
        for family in families:
            previous = set()
            for t in range(4):
                keys = set(match_pattern(g, p, [family(t)]).keys())
                assert previous <= keys
                previous = keys


def test_extend_match(same_as_graph, same_as):
    ggd = same_as.get("same_as")
    assert extend_match(same_as_graph, ggd, {"a": "p1", "b": "p2"}).keys() == [("p1", "p2", "s1")]
    assert len(extend_match(same_as_graph, ggd, {"a": "p2", "b": "p1"})) == 0
