import json

import pytest

import generator
from generator import (GGD_NAMES, GenSpec, default_spec, gen_graph, generate, ggd_text, load_spec, scaled_counts,
                       write_workload)
from graph_core import load_graph
from ggd_lang import parse_ggds
from reasoner import graph_dict
from validator import find_violations, validate_set


def small_spec(**rates) -> GenSpec:
    spec = default_spec()
    spec.counts = {"Person": 60, "City": 3, "Company": 4, "Post": 40, "Tag": 3}
    spec.duplicate_fraction = 0.1
    spec.rates = {name: rates.get(name, 0.2) for name in GGD_NAMES}
    return spec


def found(work):
    by_name = {}
    for report in validate_set(work.graph, parse_ggds(work.ggds)):
        by_name[report.ggd] = sorted(report.violated, key=lambda m: tuple(m[v] for v in sorted(m)))
    return by_name


class TestSpec:
    def test_default_is_valid(self):
        default_spec().validate()

    def test_scaled_counts(self):
        spec = default_spec()
        assert scaled_counts(spec, 2.0) == {k: 2 * v for k, v in generator.BASE_COUNTS.items()}
        assert min(scaled_counts(spec, 1e-9).values()) == 1

    @pytest.mark.parametrize("patch", [
        {"rates": {"bogus": 0.1}},
        {"rates": {"located": 1.5}},
        {"counts": {"Person": 10}},
        {"duplicate_fraction": 0.9},
        {"properties": [{"label": "City", "key": "country", "kind": "choice"}]},
    ])
    def test_load_spec_rejects(self, tmp_path, patch):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(patch), encoding="utf-8")
        with pytest.raises(ValueError):
            load_spec(str(path))

    def test_load_spec_merges_defaults(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"nick_threshold": 3, "rates": {"creator": 0.5}}), encoding="utf-8")
        spec = load_spec(str(path))
        assert spec.nick_threshold == 3
        assert spec.rates == {"creator": 0.5}
        assert spec.counts == generator.BASE_COUNTS

    def test_ggd_text_parses(self):
        ggds = parse_ggds(ggd_text(default_spec()))
        assert [g.name for g in ggds] == list(GGD_NAMES)

    def test_bad_scale(self):
        with pytest.raises(ValueError):
            generate(small_spec(), scale=0)


class TestGenerate:
    def test_counts(self):
        work = generate(small_spec(), seed=1)
        for label, n in work.counts.items():
            assert work.graph.label_count(label) == n

    def test_deterministic(self):
        a, b = generate(small_spec(), seed=7), generate(small_spec(), seed=7)
        assert graph_dict(a.graph) == graph_dict(b.graph)
        assert a.truth == b.truth
        assert graph_dict(generate(small_spec(), seed=8).graph) != graph_dict(a.graph)

    @pytest.mark.parametrize("seed", range(5))
    def test_truth_is_recovered(self, seed):
        work = generate(small_spec(), seed=seed)
        assert found(work) == work.truth

    def test_zero_rates_give_valid_graph(self):
        work = generate(small_spec(**{name: 0.0 for name in GGD_NAMES}), seed=3)
        assert all(r.valid for r in validate_set(work.graph, parse_ggds(work.ggds)))
        assert all(not v for v in work.truth.values())

    def test_same_name_pairs_come_in_both_orders(self):
        work = generate(small_spec(same_name=1.0), seed=2)
        pairs = {(m["a"], m["b"]) for m in work.truth["same_name"]}
        assert pairs
        assert all((b, a) in pairs for a, b in pairs)

    def test_threshold_widens_nick_matches(self):
        spec = small_spec()
        work = generate(spec, seed=4)
        counts = []
        for t in range(0, spec.max_edits + 1, 2):
            ggd = parse_ggds(ggd_text(spec, t)).get("nick_interest")
            counts.append(find_violations(work.graph, ggd).source_matches)
        assert counts == sorted(counts)
        assert counts[-1] == work.counts["Person"]


def test_write_workload(tmp_path):
    work = generate(small_spec(), seed=5)
    out = tmp_path / "w"
    write_workload(work, str(out), seed=5, scale=1.0)
    truth = json.loads((out / "truth.json").read_text(encoding="utf-8"))
    assert sorted(truth) == ["counts", "scale", "seed", "violations"]
    assert truth["violations"] == work.truth
    graph = load_graph(str(out))
    ggds = parse_ggds((out / "ggds.ggd").read_text(encoding="utf-8"))
    reports = {r.ggd: r for r in validate_set(graph, ggds)}
    assert {name: len(r.violated) for name, r in reports.items()} == {k: len(v) for k, v in work.truth.items()}


def test_gen_graph_is_deterministic(tmp_path):
    dirs = [gen_graph(small_spec(), 9, 1.0, str(tmp_path / name)) for name in ("a", "b")]
    for f in ("vertices.csv", "edges.csv", "ggds.ggd", "truth.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert dirs == [str(tmp_path / "a"), str(tmp_path / "b")]


def test_threshold_sweep():
    spec = default_spec()
    work = generate(spec, seed=11, scale=0.2)
    counts = []
    for t in range(0, 11, 2):
        ggd = parse_ggds(ggd_text(spec, t)).get("nick_interest")
        counts.append(find_violations(work.graph, ggd).source_matches)
    assert counts == sorted(counts)
    assert sum(b > a for a, b in zip(counts, counts[1:])) >= 2


@pytest.mark.slow
@pytest.mark.parametrize("scale", [0.1, 0.3, 1.0])
def test_full_scale_truth(scale):
    work = generate(default_spec(), seed=0, scale=scale)
    assert work.graph.label_count("Person") == round(generator.BASE_COUNTS["Person"] * scale)
    assert found(work) == work.truth
