import pytest

import chase
from chase import CERTAIN, INCONSISTENT, POSSIBLE, STEP_CAP_EXCEEDED, TERMINATED_VALID, Rcq
from ggd_lang import CONST, IDENT_EQ, AttrRef, DifferentialConstraint, parse_ggds
from matcher import match_pattern
from validator import validate_set
from tests.conftest import CONTRACTS, PLACE, make_graph


def hours(var, op, t):
    return DifferentialConstraint(CONST, AttrRef(var, "hours"), 40, "absdiff", op, t)


@pytest.fixture
def orgs():
    return make_graph(
        [("o1", ["Org"], {}), ("o2", ["Org"], {}), ("o3", ["Org"], {"size": 3}), ("pl", ["Place"], {})],
        [("l1", "o1", "pl", ["isLocatedIn"], {})],
    )


class TestInit:
    def test_empty_graph(self):
        assert chase.init_chase(make_graph([])).classes == {}

    def test_own_value_classes(self):
        state = chase.init_chase(make_graph([("p", ["P"], {"a": 1, "b": "x"})]))
        rc = state.range_class("p")
        assert rc.members == {"p"}
        assert rc.attrs == {
            "a": [Rcq(None, AttrRef("p", "a"), 0, "=")],
            "b": [Rcq(None, AttrRef("p", "b"), 0, "=")],
        }

    def test_init_does_not_touch_input(self, orgs):
        state = chase.init_chase(orgs)
        state.graph.add_vertex("extra", ["X"])
        assert "extra" not in orgs


class TestMatchSource:
    def test_fresh_state_agrees_with_matcher(self, same_as_graph, same_as):
        ggd = same_as.get("same_as")
        state = chase.init_chase(same_as_graph)
        expected = match_pattern(same_as_graph, ggd.source, ggd.source_constraints).matches
        assert chase.chase_match_source(state, ggd) == expected
        assert len(expected) == 4

    def test_class_constraints_decide_admission(self, credits):
        sigma, _ = credits()
        senior, junior = sigma.get("senior"), sigma.get("junior")
        state = chase.init_chase(make_graph([("st", ["Student"], {})]))
        chase.assume(state, DifferentialConstraint(CONST, AttrRef("st", "year"), 2020, "absdiff", ">", 2))
        assert chase.chase_match_source(state, senior) == [{"s": "st"}]
        assert chase.chase_match_source(state, junior) == []

    def test_certain_mode_needs_entailment(self, credits):
        sigma, _ = credits()
        state = chase.init_chase(make_graph([("st", ["Student"], {})]), CERTAIN)
        assert chase.chase_match_source(state, sigma.get("senior")) == []
        assert chase.chase_match_source(state, sigma.get("senior"), POSSIBLE) == [{"s": "st"}]
        ggd, h, undecided = chase.pending_split(state, sigma)
        assert (ggd.name, h) == ("senior", {"s": "st"})
        assert [str(c) for c in undecided] == ["absdiff(st.year, 2020) > 2"]


class TestFold:
    def test_loosest_assumed_threshold_wins(self):
        state = chase.init_chase(make_graph([("a", ["A"], {})]))
        chase.fold(state, hours("a", "<=", 4), assumed=True)
        chase.fold(state, hours("a", "<=", 8), assumed=True)
        assert state.range_class("a").attrs["hours"] == [Rcq("absdiff", 40, 8, "<=", True)]
        chase.fold(state, hours("a", "<=", 2), assumed=True)
        assert state.range_class("a").attrs["hours"] == [Rcq("absdiff", 40, 8, "<=", True)]

    def test_enforced_only_tightens(self):
        state = chase.init_chase(make_graph([("a", ["A"], {})]))
        chase.fold(state, hours("a", "<=", 8), assumed=False)
        chase.fold(state, hours("a", "<=", 4), assumed=False)
        chase.fold(state, hours("a", "<=", 6), assumed=False)
        assert state.range_class("a").attrs["hours"] == [Rcq("absdiff", 40, 4, "<=")]

    def test_identity_merge(self):
        state = chase.init_chase(make_graph([("a", ["P"], {"n": 1}), ("b", ["P"], {"m": 2})]))
        changed, failure = chase.fold(state, DifferentialConstraint(IDENT_EQ, "b", "a"), assumed=True)
        assert changed and failure == ""
        assert state.find("b") == "a"
        assert state.range_class("b").members == {"a", "b"}
        assert set(state.range_class("a").attrs) == {"n", "m"}


class TestSteps:
    def test_generation_per_violated_match(self, orgs):
        ggds = parse_ggds(PLACE)
        state = chase.init_chase(orgs)
        outcome = chase.run_chase(state, ggds)
        assert outcome.verdict == TERMINATED_VALID
        assert [r.action for r in state.log] == ["update", "generate", "generate"]
        new_places = [v for v in state.graph.objects_with_label("Place") if v != "pl"]
        assert len(new_places) == 2
        assert all(state.graph.get(v).properties == {"_gen_by": "has_place"} for v in new_places)
        assert len(state.graph.objects_with_label("isLocatedIn", "edge")) == 3
        assert all(r.valid for r in validate_set(state.graph, ggds))

    def test_label_conflict(self):
        ggds = parse_ggds("ggd same { source { (a:Person), (b:Company) } where { a = b; } target { } }")
        state = chase.init_chase(make_graph([("p1", ["Person"], {}), ("c1", ["Company"], {})]))
        outcome = chase.run_chase(state, ggds)
        assert outcome.verdict == INCONSISTENT
        assert outcome.failed_step == 1
        assert "label conflict" in outcome.witness

    def test_infeasible_class(self, funding):
        state = chase.init_chase(make_graph(
            [("b", ["Project"], {}), ("a", ["Employee"], {}), ("d", ["Dept"], {})],
            [("c", "b", "a", ["managedBy"], {}), ("w", "a", "d", ["worksIn"], {})],
        ))
        outcome = chase.run_chase(state, funding)
        assert outcome.verdict == INCONSISTENT
        assert "b.budget" in outcome.witness
        assert not state.log[-1].consistent

    def test_cascading_generation_terminates(self):
        sigma = parse_ggds(CONTRACTS).without("has_contract")
        state = chase.init_chase(make_graph([("proj", ["Project"], {})]))
        outcome = chase.run_chase(state, sigma)
        assert outcome.verdict == TERMINATED_VALID
        assert chase.format_step_log(state) == (
            "1; staffed; p=proj; generate; consistent\n"
            "2; contracted; a=gen:2,e=gen:1,p=proj; generate; consistent\n"
        )

    def test_replay_is_deterministic(self):
        sigma = parse_ggds(CONTRACTS).without("has_contract")
        logs = []
        for _ in range(2):
            state = chase.init_chase(make_graph([("p1", ["Project"], {}), ("p2", ["Project"], {})]))
            chase.run_chase(state, sigma)
            logs.append(chase.format_step_log(state))
        assert logs[0] == logs[1]

    def test_empty_set(self, orgs):
        outcome = chase.run_chase(chase.init_chase(orgs), [])
        assert outcome.verdict == TERMINATED_VALID and outcome.steps == 0

    def test_step_cap(self, self_cycle):
        state = chase.init_chase(make_graph([("p", ["Person"], {})]))
        outcome = chase.run_chase(state, self_cycle, step_cap=100)
        assert outcome.verdict == STEP_CAP_EXCEEDED
        assert outcome.steps == 100

    def test_bad_cap(self, orgs):
        with pytest.raises(ValueError):
            chase.run_chase(chase.init_chase(orgs), [], step_cap=0)

    def test_copy_is_independent(self, orgs):
        state = chase.init_chase(orgs)
        branch = state.copy()
        chase.assume(branch, DifferentialConstraint(CONST, AttrRef("o3", "size"), 3, "absdiff", "<=", 1))
        assert state.range_class("o3").attrs["size"] == [Rcq(None, AttrRef("o3", "size"), 0, "=")]
        assert len(branch.range_class("o3").attrs["size"]) == 2


class TestModel:
    def test_values_satisfy_classes(self):
        state = chase.init_chase(make_graph([("a", ["A"], {}), ("b", ["B"], {"name": "Anna"})]))
        chase.assume(state, hours("a", "<=", 4))
        chase.assume(state, hours("a", ">", 2))
        chase.assume(state, DifferentialConstraint(CONST, AttrRef("b", "nick"), "meadow", "edit", "<=", 2))
        model = chase.extract_model(state)
        assert model is not None
        h = model.get("a").properties["hours"]
        assert 2 < abs(h - 40) <= 4
        assert model.get("b").properties["name"] == "Anna"
        assert model.get("b").properties["nick"] == "meadow"

    def test_no_model_for_infeasible_classes(self):
        state = chase.init_chase(make_graph([("a", ["A"], {})]))
        chase.assume(state, hours("a", "<=", 1))
        chase.assume(state, hours("a", ">", 5))
        assert chase.extract_model(state) is None
