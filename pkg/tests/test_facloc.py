import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_instance
from pregelfl import generators
from pregelfl.errors import InfeasibleError, ValidationError
from pregelfl.facloc import (
    ClientBook,
    RadiusSchedule,
    assign_residual,
    compute_gamma,
    freeze_clients,
    solve,
)
from pregelfl.graph import CostAssignment, Graph, distances_from
from pregelfl.oracles import all_pairs, brute_force_opt, evaluate_cost, matrix_for


def audit_ok(g, costs, res) -> bool:
    a = evaluate_cost(g, costs, res.opened, res.assignment, res.service)
    return not a.flagged and math.isclose(a.objective, res.objective, rel_tol=1e-9)


# ---------------------------------------------------------------- gamma and ladder

def test_gamma_single_vertex():
    g = Graph.from_edges(1, [], [])
    assert compute_gamma(g, CostAssignment.uniform(1, 7.0)).value == 7.0


def test_gamma_one_term():
    g = Graph.from_edges(2, [0], [1], [3.0])
    costs = CostAssignment.uniform(2, 2.0, facilities=[0], clients=[1])
    assert compute_gamma(g, costs).value == 5.0


def test_gamma_matches_all_pairs():
    for seed in range(5):
        g, costs = random_instance(50, 120, seed, facilities=15)
        d = all_pairs(g).data  # d[c, f] = d(f, c)
        per = (costs.cost[costs.facilities][None, :] + d[:, costs.facilities]).min(axis=1)
        assert compute_gamma(g, costs).value == pytest.approx(per[costs.clients].max(), rel=1e-12)


def test_gamma_unreachable_client_named():
    g = Graph.from_edges(4, [0, 2], [1, 3])
    costs = CostAssignment.uniform(4, 1.0, facilities=[0])
    with pytest.raises(InfeasibleError) as exc:
        compute_gamma(g, costs)
    assert exc.value.vertex == 2


@given(st.floats(0.01, 2.0), st.floats(0.1, 1e4), st.integers(1, 10**6))
def test_ladder_geometric(eps, gamma, pairs):
    s = RadiusSchedule.build(eps, gamma, pairs)
    assert s.base == pytest.approx(gamma / pairs ** 2 * (1 + eps), rel=1e-12)
    lad = s.ladder()
    assert len(lad) == s.num_steps >= 1
    assert np.allclose(lad[1:] / lad[:-1], 1 + eps, rtol=1e-12)
    if s.num_steps > 1:
        assert lad[-1] <= s.cap * (1 + 1e-12)
    assert s.alpha(s.num_steps) > s.cap * (1 - 1e-12)
    assert s.reach(3) == s.alpha(4)


def test_ladder_rejects_bad_eps():
    with pytest.raises(ValidationError):
        RadiusSchedule.build(0.0, 1.0, 4)


def test_ladder_zero_gamma_uses_fallback():
    s = RadiusSchedule.build(0.5, 0.0, 2, fallback_scale=3.0)
    assert s.base > 0 and s.num_steps == 1


# ---------------------------------------------------------------- freezing

def schedule_with_reach(r: float, eps: float = 1.0) -> RadiusSchedule:
    """Schedule whose step 0 reaches exactly ``r``."""
    return RadiusSchedule.build(eps, r / (1 + eps) ** 2, 1)


def test_freeze_star_one_round():
    g = generators.star_graph(6)
    book = ClientBook(g.n, np.ones(g.n, dtype=bool))
    sched = schedule_with_reach(1.0)
    freeze_clients(g, book, [0], 0, sched)
    assert (book.step == 0).all()


def test_freeze_overlap_records_both():
    g = generators.path_graph(7, weights=[1, 1, 1, 1, 1, 1])
    book = ClientBook(g.n, np.ones(g.n, dtype=bool))
    sched = schedule_with_reach(2.0)
    freeze_clients(g, book, [1, 4], 0, sched)
    c, f = book.records()
    got = {(int(a), int(b)) for a, b in zip(c, f)}
    expect = set()
    for fac in (1, 4):
        d = distances_from(g, fac)
        expect |= {(int(v), fac) for v in np.flatnonzero(d <= sched.reach(0))}
    assert got == expect
    assert {2, 3} <= {v for v, fac in got if fac == 1} & {v for v, fac in got if fac == 4}


def test_freeze_once():
    g = generators.path_graph(5)
    book = ClientBook(g.n, np.ones(g.n, dtype=bool))
    sched = schedule_with_reach(1.0)
    freeze_clients(g, book, [0], 0, sched)
    freeze_clients(g, book, [2], 1, sched)
    assert book.step[1] == 0 and book.step[3] == 1
    c, f = book.records()
    assert (1, 2) not in set(zip(c.tolist(), f.tolist()))


# ---------------------------------------------------------------- residual

def test_residual_single_edge():
    g = Graph.from_edges(2, [0], [1], [4.0])
    mask = np.array([True, False])
    owner, dist, extra, _ = assign_residual(g, [1], mask, mask)
    assert owner.tolist() == [0] and dist.tolist() == [4.0] and len(extra) == 0


def test_residual_tie_smaller_id():
    g = generators.path_graph(5)
    fac = np.array([False, True, False, True, False])
    owner, dist, _, _ = assign_residual(g, [2], fac, fac)
    assert owner.tolist() == [1] and dist.tolist() == [1.0]


def test_residual_noop_and_infeasible():
    g = Graph.from_edges(4, [0, 2], [1, 3])
    fac = np.array([True, False, False, False])
    owner, dist, extra, _ = assign_residual(g, [], fac, fac)
    assert len(owner) == len(dist) == len(extra) == 0
    with pytest.raises(InfeasibleError):
        assign_residual(g, [3], fac, fac)


def test_residual_opens_closed_facility_when_needed():
    g = Graph.from_edges(3, [0, 2], [1, 1], directed=True)
    is_fac = np.array([True, False, True])
    opened = np.array([False, False, True])
    owner, _, extra, _ = assign_residual(g, [0], opened, is_fac)
    assert owner.tolist() == [0] and extra.tolist() == [0]


# ---------------------------------------------------------------- opening rule

def test_free_facility_opens_first_step():
    g, costs = random_instance(30, 60, 1)
    costs.cost[7] = 0.0
    res = solve(g, costs, eps=0.2, mode="exact", trace=True)
    assert res.trace["fac_step"][7] == 0


def test_isolated_facility_never_opens_in_loop():
    g = Graph.from_edges(6, [0, 1, 2, 3], [1, 2, 3, 4])
    costs = CostAssignment.uniform(6, 2.0, clients=[0, 1, 2, 3, 4])
    res = solve(g, costs, eps=0.3, mode="exact", trace=True)
    assert res.trace["fac_step"][5] == -1
    assert 5 not in res.opened


def direct_growth(g, costs, sched, snap):
    d = all_pairs(g).data  # d[c, f] = d(f, c)
    rad = sched.reach_array(snap["client_step"])
    cli = costs.clients
    return np.maximum(rad[cli][:, None] - d[np.ix_(cli, snap["unopened"])], 0.0).sum(axis=0)


@pytest.mark.parametrize("eps", [0.1, 0.5])
def test_exact_mode_growth_band(eps):
    for seed in range(4):
        g, costs = random_instance(60, 150, seed)
        res = solve(g, costs, eps=eps, mode="exact", seed=seed, trace=True)
        sched = res.trace["schedule"]
        for snap in res.trace["growth"]:
            lhs = direct_growth(g, costs, sched, snap)
            q = snap["q"]
            assert (q >= lhs / (1 + eps) - 1e-9).all() and (q <= lhs * (1 + eps) + 1e-9).all()
            assert np.allclose(q, lhs, rtol=1e-9, atol=1e-9)


@pytest.mark.parametrize("mode,rule", [("exact", "entry"), ("sketch", "entry"),
                                       ("sketch", "bucketed")])
def test_q_monotone(mode, rule):
    g, costs = random_instance(80, 200, 2)
    res = solve(g, costs, eps=0.2, k=8, mode=mode, rule=rule, trace=True)
    prev: dict[int, float] = {}
    steps = [s["step"] for s in res.trace["growth"]]
    assert steps == list(range(len(steps)))
    for snap in res.trace["growth"]:
        for f, q in zip(snap["unopened"].tolist(), snap["q"].tolist()):
            assert q >= prev.get(f, 0.0) - 1e-12
            prev[f] = q
    assert audit_ok(g, costs, res)


def test_freeze_soundness(ff300):
    g = generators.assign_uniform_weights(ff300, 1, 10, seed=5)
    costs = CostAssignment.default_for(g)
    res = solve(g, costs, eps=0.2, k=16, seed=5, trace=True)
    sched = res.trace["schedule"]
    fstep, cstep = res.trace["fac_step"], res.trace["client_step"]
    rec_c, rec_f = res.trace["records"]
    assert set(rec_c.tolist()) == set(np.flatnonzero(cstep >= 0).tolist())
    for c, f in zip(rec_c.tolist(), rec_f.tolist()):
        assert cstep[c] == fstep[f]
        assert distances_from(g, f)[c] <= sched.reach(int(fstep[f])) * (1 + 1e-12)


def test_loop_terminates_on_condition(ff300):
    costs = CostAssignment.default_for(ff300)
    res = solve(ff300, costs, eps=0.3, k=16, seed=1, trace=True)
    steps = res.counters["ladder_steps"]
    live_left = (res.trace["client_step"][costs.clients] < 0).any()
    all_open = (res.trace["fac_step"][costs.facilities] >= 0).all()
    assert steps == res.counters["ladder_length"] or not live_left or all_open
    assert len(res.trace["opened_by_step"]) == steps


# ---------------------------------------------------------------- solve

def test_free_facilities_zero_opening_cost():
    g, costs = random_instance(40, 90, 3)
    costs.cost[:] = 0.0
    res = solve(g, costs, eps=0.2, mode="exact")
    assert res.opening_cost == 0.0
    a = evaluate_cost(g, costs, res.opened, res.assignment, res.service)
    assert res.objective == pytest.approx(a.service_cost)


def test_hand_instance_within_bound():
    # two clusters joined by a long edge; cheap and expensive sites in each
    g = Graph.from_edges(8, [0, 0, 1, 2, 4, 4, 5, 6, 3],
                         [1, 2, 3, 3, 5, 6, 7, 7, 4],
                         [1, 1, 1, 1, 1, 1, 1, 1, 6])
    costs = CostAssignment.uniform(8, 0.0)
    costs.cost[:] = [3, 9, 9, 4, 2, 9, 9, 5]
    eps = 0.1
    opt, _ = brute_force_opt(matrix_for(g, costs), costs)
    for seed in range(5):
        for mode in ("exact", "sketch"):
            res = solve(g, costs, eps=eps, k=8, mode=mode, seed=seed)
            assert res.objective <= (3 + eps) * opt + 1e-9
            assert audit_ok(g, costs, res)


def test_exhaustive_bound_exact_mode():
    eps = 0.1
    for seed in range(15):
        g, costs = random_instance(12, 22, seed, facilities=7)
        opt, _ = brute_force_opt(matrix_for(g, costs), costs)
        res = solve(g, costs, eps=eps, mode="exact", seed=seed)
        assert res.objective <= (3 + eps) * opt + 1e-9


def test_saturated_sketch_equals_exact():
    g, costs = random_instance(70, 160, 4)
    a = solve(g, costs, eps=0.2, k=g.n, mode="sketch", seed=3)
    b = solve(g, costs, eps=0.2, mode="exact", seed=3)
    assert a.objective == b.objective and a.opened == b.opened


def test_bsp_sketches_give_same_result():
    g = generators.forest_fire(150, seed=6)
    a = solve(g, eps=0.3, k=6, seed=2)
    b = solve(g, eps=0.3, k=6, seed=2, ads_builder="bsp")
    assert a.opened == b.opened and a.objective == b.objective


def test_worker_count_invariance(ff300):
    a = solve(ff300, eps=0.2, k=16, seed=4, workers=1)
    b = solve(ff300, eps=0.2, k=16, seed=4, workers=4)
    assert a.to_json() == b.to_json()


def test_luby_selector_valid(ff300):
    costs = CostAssignment.default_for(ff300)
    res = solve(ff300, costs, eps=0.3, k=16, seed=1, mis="luby")
    assert audit_ok(ff300, costs, res)


def test_directed_instance_audits():
    for seed in range(6):
        g = generators.gnm_random(60, 200, seed=seed, directed=True, connected=True)
        costs = CostAssignment.uniform(60, 3.0)
        res = solve(g, costs, eps=0.3, k=8, seed=seed)
        assert audit_ok(g, costs, res)


def test_supersteps_grow_as_eps_shrinks(ff300):
    costs = CostAssignment.default_for(ff300)
    steps = [solve(ff300, costs, eps=e, k=32, seed=0).counters["supersteps"]
             for e in (1.0, 0.1, 0.01)]
    assert steps[0] <= steps[1] <= steps[2]


def test_infeasible_and_validation():
    g = Graph.from_edges(4, [0, 2], [1, 3])
    with pytest.raises(InfeasibleError):
        solve(g, CostAssignment.uniform(4, 1.0, facilities=[0]))
    h = generators.path_graph(4)
    for kwargs in ({"mode": "fast"}, {"k": 0}, {"mis": "other"}, {"eps": 0.0}, {"rule": "x"}):
        with pytest.raises(ValidationError):
            solve(h, **kwargs)
    with pytest.raises(ValidationError):
        solve(h, CostAssignment.uniform(3, 1.0))


def test_result_json_roundtrip(ff300):
    import json

    res = solve(ff300, eps=0.5, k=8, seed=0)
    obj = json.loads(res.to_json())
    assert obj["opened"] == res.opened
    assert obj["objective"] == res.objective
    assert set(obj["counters"]) >= {"supersteps", "messages", "ladder_steps"}
