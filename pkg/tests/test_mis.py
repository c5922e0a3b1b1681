import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_instance
from pregelfl import generators
from pregelfl.errors import ValidationError
from pregelfl.facloc import RadiusSchedule, solve
from pregelfl.graph import CostAssignment, Graph
from pregelfl.mis import (
    conflict_graph,
    connections,
    draw_priorities,
    finalize_assignment,
    greedy_mis_explicit,
    greedy_mis_implicit,
    luby_mis,
    round_cap,
    verify_mis,
)


def reach_one() -> RadiusSchedule:
    # step 0 reaches distance 1 exactly
    return RadiusSchedule.build(1.0, 0.25, 1)


def brute_greedy(g: Graph, prio) -> list[int]:
    """Sequential greedy in (priority, id) order."""
    order = sorted(range(g.n), key=lambda v: (prio[v], v))
    nbrs = [set() for _ in range(g.n)]
    src, dst, _ = g.arcs()
    for u, v in zip(src.tolist(), dst.tolist()):
        nbrs[u].add(v)
        nbrs[v].add(u)
    taken, blocked = [], set()
    for v in order:
        if v not in blocked:
            taken.append(v)
            blocked |= nbrs[v] | {v}
    return sorted(taken)


# ---------------------------------------------------------------- verify_mis

def test_verify_rejects_edge_inside():
    k3 = Graph.from_edges(3, [0, 1, 0], [1, 2, 2])
    chk = verify_mis(k3, [0, 2])
    assert not chk and chk.witness == (0, 2)


def test_verify_rejects_non_maximal():
    chk = verify_mis(generators.path_graph(5), [0])
    assert not chk and chk.witness == (2,)


def test_verify_accepts_path_ends():
    assert verify_mis(generators.path_graph(3), [0, 2])


# ---------------------------------------------------------------- explicit routines

def test_greedy_picks_middle_of_path():
    assert greedy_mis_explicit(generators.path_graph(3), [2, 1, 3]).selected.tolist() == [1]


def test_empty_graph_takes_everything():
    g = Graph.from_edges(5, [], [])
    assert greedy_mis_explicit(g).selected.tolist() == list(range(5))
    assert luby_mis(g).selected.tolist() == list(range(5))


def test_complete_graph_single_pick():
    u, v = np.triu_indices(5, 1)
    k5 = Graph.from_edges(5, u, v)
    for seed in range(10):
        assert len(greedy_mis_explicit(k5, seed=seed).selected) == 1
        assert len(luby_mis(k5, seed=seed).selected) == 1


def test_tied_priorities_break_by_id():
    g = generators.path_graph(4)
    assert greedy_mis_explicit(g, [5, 5, 5, 5]).selected.tolist() == [0, 2]


@settings(max_examples=60)
@given(st.integers(2, 60), st.integers(0, 200), st.integers(0, 10**6))
def test_explicit_routines_valid(n, m, seed):
    m = min(m, n * (n - 1) // 2)
    g = generators.gnm_random(n, m, seed=seed)
    prio = draw_priorities(n, n, seed)
    gr = greedy_mis_explicit(g, prio)
    assert verify_mis(g, gr.selected)
    assert gr.selected.tolist() == brute_greedy(g, prio)
    for variant in ("marking", "priority"):
        assert verify_mis(g, luby_mis(g, seed=seed, variant=variant).selected)


def test_greedy_permutation_invariant():
    g = generators.gnm_random(40, 90, seed=3)
    prio = draw_priorities(40, 40, 3)
    perm = np.random.default_rng(0).permutation(40)
    inv = np.argsort(perm)
    src, dst, _ = g.arcs()
    h = Graph.from_edges(40, inv[src], inv[dst])
    a = greedy_mis_explicit(g, prio).selected
    b = greedy_mis_explicit(h, prio[perm]).selected
    assert sorted(perm[b].tolist()) == a.tolist()


def test_worker_count_does_not_matter():
    g = generators.gnm_random(300, 1200, seed=2)
    for fn in (lambda w: greedy_mis_explicit(g, seed=1, workers=w),
               lambda w: luby_mis(g, seed=1, workers=w)):
        assert np.array_equal(fn(1).selected, fn(4).selected)


def test_directed_rejected_and_bad_variant():
    d = generators.gnm_random(10, 20, seed=0, directed=True)
    with pytest.raises(ValidationError):
        greedy_mis_explicit(d)
    with pytest.raises(ValidationError):
        luby_mis(generators.path_graph(3), variant="fast")
    with pytest.raises(ValidationError):
        greedy_mis_explicit(generators.path_graph(3), [1, 2])


def test_priority_range_and_round_cap():
    p = draw_priorities(10, 5000, 1)
    assert p.min() >= 1 and p.max() <= 1000
    assert round_cap(1024) == 100


# ---------------------------------------------------------------- conflict graph

def test_single_facility_selected_alone():
    g = generators.star_graph(4)
    step = np.zeros(g.n, dtype=np.int64)
    res = greedy_mis_implicit(g, [0], step, step, reach_one())
    assert res.selected.tolist() == [0]


def test_shared_client_yields_one_facility():
    g = generators.path_graph(3)
    step = np.zeros(3, dtype=np.int64)
    cg = conflict_graph(g, [0, 2], step, step, reach_one())
    assert cg.graph.num_arcs == 2
    for seed in range(6):
        res = greedy_mis_implicit(g, [0, 2], step, step, reach_one(), seed=seed)
        assert len(res.selected) == 1


def test_different_steps_do_not_conflict():
    g = generators.path_graph(3)
    fac = np.array([0, -1, 1])
    cli = np.array([0, 0, 1])
    cg = conflict_graph(g, [0, 2], fac, cli, RadiusSchedule.build(1.0, 0.25, 1))
    assert cg.graph.num_arcs == 0
    res = greedy_mis_implicit(g, [0, 2], fac, cli, RadiusSchedule.build(1.0, 0.25, 1))
    assert res.selected.tolist() == [0, 2]


def test_connections_match_distances():
    g = generators.path_graph(5)
    step = np.zeros(5, dtype=np.int64)
    c, f = connections(g, [0, 4], step, step, reach_one())
    assert sorted(zip(c.tolist(), f.tolist())) == [(0, 0), (1, 0), (3, 4), (4, 4)]


def solver_state(g, costs, eps, seed):
    res = solve(g, costs, eps=eps, k=16, seed=seed, trace=True)
    t = res.trace
    return res, t["opened_before_selection"], t["fac_step"], t["client_step"], t["schedule"]


@pytest.mark.parametrize("seed", range(5))
def test_implicit_equals_explicit_on_materialized(seed):
    g = generators.assign_uniform_weights(generators.forest_fire(400, seed=seed), 1, 5, seed=seed)
    g_unit = generators.forest_fire(400, seed=seed)
    for graph in (g, g_unit):
        costs = CostAssignment.default_for(graph)
        _, opened, fstep, cstep, sched = solver_state(graph, costs, 0.3, seed)
        imp = greedy_mis_implicit(graph, opened, fstep, cstep, sched, seed=seed)
        cg = conflict_graph(graph, opened, fstep, cstep, sched, costs.is_client)
        prio = imp.priorities[cg.facilities]
        exp = greedy_mis_explicit(cg.graph, prio)
        assert np.array_equal(cg.to_vertices(exp.selected), imp.selected)
        assert verify_mis(cg.graph, np.searchsorted(cg.facilities, imp.selected))


def test_solver_selection_is_mis_of_conflict_graph():
    for seed in range(4):
        g, costs = random_instance(120, 300, seed)
        res, opened, fstep, cstep, sched = solver_state(g, costs, 0.2, seed)
        cg = conflict_graph(g, opened, fstep, cstep, sched, costs.is_client)
        ids = np.searchsorted(cg.facilities, res.opened)
        assert np.array_equal(cg.facilities[ids], res.opened)
        assert verify_mis(cg.graph, ids)


def test_selected_facilities_share_no_client():
    g = generators.forest_fire(500, seed=9)
    costs = CostAssignment.default_for(g)
    res, opened, fstep, cstep, sched = solver_state(g, costs, 0.1, 9)
    c, f = connections(g, res.opened, fstep, cstep, sched, costs.is_client)
    assert len(np.unique(c)) == len(c)


# ---------------------------------------------------------------- assignment

def test_finalize_nearest_and_ties():
    g = generators.path_graph(5)
    is_client = np.ones(5, dtype=bool)
    a = finalize_assignment(g, is_client, [0, 4])
    assert a.facility.tolist() == [0, 0, 0, 4, 4]
    assert a.distance.tolist() == [0, 1, 2, 1, 0]


def test_finalize_counts_reassigned():
    g = generators.path_graph(4)
    is_client = np.array([True, True, True, False])
    a = finalize_assignment(g, is_client, [0], serving=np.array([0, 3, 0, -1]))
    assert a.reassigned == 1
    assert a.facility[3] == -1
    with pytest.raises(ValidationError):
        finalize_assignment(g, is_client, [])
