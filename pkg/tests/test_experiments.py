import pytest

from pregelfl import generators
from pregelfl.experiments import (
    baseline_cost,
    compare_costs,
    default_ladder,
    median_by,
    mis_rounds,
    sketch_errors,
)
from pregelfl.graph import CostAssignment
from pregelfl.oracles import OracleCache


def test_saturated_sketch_has_no_error():
    g = generators.forest_fire(120, seed=1)
    recs = sketch_errors(g, g.n, 0, samples=20, ladder=[1, 2, 4])
    assert [r["mean_error"] for r in recs] == [0.0, 0.0, 0.0]
    assert all(r["samples"] == 20 for r in recs)


def test_default_ladders():
    g = generators.path_graph(4)
    assert default_ladder(g)[:3] == (1, 2, 3) and len(default_ladder(g)) == 20
    w = generators.assign_uniform_weights(g, 1, 100, seed=0)
    assert default_ladder(w)[0] == 100 and default_ladder(w)[-1] == 2000


def test_sample_seed_fixes_vertices():
    g = generators.forest_fire(300, seed=2)
    a = sketch_errors(g, 300, 1, samples=15, ladder=[2], sample_seed=9)
    b = sketch_errors(g, 300, 2, samples=15, ladder=[2], sample_seed=9)
    assert a == b


def test_baseline_cache_hit(tmp_path):
    g = generators.forest_fire(150, seed=3)
    costs = CostAssignment.default_for(g)
    cache = OracleCache(tmp_path)
    a = baseline_cost(g, costs, cache)
    b = baseline_cost(g, costs, cache)
    assert (a.objective, a.opened, a.seconds) == (b.objective, b.opened, b.seconds)


def test_compare_orientation_and_median():
    g = generators.forest_fire(200, seed=4)
    costs = CostAssignment.default_for(g)
    recs = compare_costs(g, costs, [0.1, 1.0], 16, [0, 1, 2])
    assert len(recs) == 6
    for r in recs:
        assert r["relative_cost"] == pytest.approx(r["objective"] / r["baseline_objective"])
        assert r["relative_cost"] * r["baseline_over_ours"] == pytest.approx(1.0)
        assert r["relative_cost"] >= 1 / 2.5 - 1e-9  # local search is within 2.5x of optimal
    med = median_by(recs, "eps", "relative_cost")
    assert list(med) == [0.1, 1.0]


def test_median_by_groups():
    recs = [{"e": 1, "v": 3}, {"e": 1, "v": 1}, {"e": 1, "v": 2}, {"e": 0, "v": 5}]
    assert median_by(recs, "e", "v") == {0: 5, 1: 2}


def test_mis_rounds_record():
    g = generators.forest_fire(400, seed=5)
    rec = mis_rounds(g, CostAssignment.default_for(g), 0.3, 16, 0, runs=3)
    assert rec["valid"]
    assert rec["conflict_nodes"] >= 1
    assert rec["greedy_supersteps"] >= 2 and rec["luby_supersteps"] >= 3
    assert rec["implicit_supersteps"] > 0
