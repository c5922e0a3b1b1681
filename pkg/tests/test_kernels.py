"""Compiled kernels against their pure-Python twins."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from pregelfl import _pycore, generators, kernels
from pregelfl.ads import build_ads_sequential, hash_ranks
from pregelfl.facloc.ladder import EntryTable
from pregelfl.graph import CostAssignment

core = pytest.importorskip("pregelfl._core")


def graphs():
    for directed in (False, True):
        for weighted in (False, True):
            g = generators.gnm_random(80, 200, seed=3, directed=directed, connected=True)
            if weighted:
                g = generators.assign_uniform_weights(g, 1, 7, seed=3)
            yield g


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")


def test_sssp_parity():
    for g in graphs():
        for src, cutoff in [(0, np.inf), (5, 4.0), (17, 0.0)]:
            a = core.sssp(g.indptr, g.indices, g.weights, src, cutoff, g.weighted)
            b = _pycore.sssp(g.indptr, g.indices, g.weights, src, cutoff, g.weighted)
            assert np.array_equal(a, b)


def test_multi_source_parity():
    for g in graphs():
        src = np.array([3, 40, 41, 77], dtype=np.int64)
        init = np.array([0.0, 1.5, 0.0, 2.0])
        da, oa = core.multi_source(g.indptr, g.indices, g.weights, g.weighted, src, init)
        db, ob = _pycore.multi_source(g.indptr, g.indices, g.weights, g.weighted, src, init)
        assert np.array_equal(da, db) and np.array_equal(oa, ob)


def test_distance_rows_parity():
    for g in graphs():
        src = np.arange(0, g.n, 9, dtype=np.int64)
        a = np.empty((len(src), g.n))
        b = np.empty((len(src), g.n))
        core.distance_rows(g.indptr, g.indices, g.weights, g.weighted, src, a)
        _pycore.distance_rows(g.indptr, g.indices, g.weights, g.weighted, src, b)
        assert np.array_equal(a, b)


@pytest.mark.parametrize("k", [1, 4])
def test_ads_and_hip_parity(k):
    for g in graphs():
        r = hash_ranks(g.n, 7)
        t = g.reverse()
        for cutoff in (np.inf, 3.0):
            a = core.ads_build(t.indptr, t.indices, t.weights, g.weighted, r, k, cutoff)
            b = _pycore.ads_build(t.indptr, t.indices, t.weights, g.weighted, r, k, cutoff)
            for x, y in zip(a, b):
                assert np.array_equal(x, y)
            ranks = r[a[1]]
            assert np.array_equal(core.hip_weights(a[0], ranks, k),
                                  _pycore.hip_weights(a[0], ranks, k))


def _ladder_state(table, is_client):
    return {"ptr": table.offsets[:-1].copy(), "inner": np.zeros(table.n),
            "q": np.zeros(table.n), "live": np.asarray(is_client, dtype=np.uint8).copy()}


def test_ladder_step_and_frozen_delta_parity():
    g = generators.assign_uniform_weights(generators.forest_fire(300, seed=2), 1, 5, seed=2)
    costs = CostAssignment.default_for(g)
    sk = build_ads_sequential(g, 6, 1)
    t = EntryTable.from_sketches(sk, costs.is_facility, costs.is_client)
    states = [_ladder_state(t, costs.is_client) for _ in range(2)]
    rng = np.random.default_rng(0)
    fac = np.arange(g.n, dtype=np.int64)
    alpha = 0.5
    for j in range(25):
        reach = alpha * 1.3
        for mod, s in zip((core, _pycore), states):
            mod.ladder_step(fac, t.offsets, t.vertices, t.distances, t.weights, s["live"],
                            s["ptr"], s["inner"], s["q"], alpha, reach, j == 0)
        frozen = np.unique(rng.choice(g.n, 10)).astype(np.int64)
        skip = (rng.random(g.n) < 0.2).astype(np.uint8)
        for mod, s in zip((core, _pycore), states):
            s["live"][frozen] = 0
            mod.frozen_delta(frozen, t.rev_offsets, t.rev_fac, t.rev_pos, s["ptr"], s["inner"],
                             t.weights, skip)
        alpha = reach
    for key in ("ptr", "inner", "q"):
        assert np.allclose(states[0][key], states[1][key], rtol=1e-12, atol=1e-9), key


@pytest.mark.parametrize("dtype", [np.float64, np.float32])
def test_local_search_kernels_parity(dtype):
    rng = np.random.default_rng(5)
    d = rng.uniform(0, 20, size=(60, 25)).astype(dtype)
    costs = rng.uniform(1, 30, size=25)
    for opened in ([3], [0, 7, 19], list(range(25))):
        idx = np.array(opened, dtype=np.int64)
        mask = np.zeros(25, dtype=np.uint8)
        mask[idx] = 1
        na = core.ls_nearest(d, idx)
        nb = _pycore.ls_nearest(d, idx)
        for x, y in zip(na, nb):
            assert np.allclose(x, y)
        ma = core.ls_best_move(d, costs, mask, *na)
        mb = _pycore.ls_best_move(d, costs, mask, *nb)
        assert ma[:3] == mb[:3]
        assert ma[3] == pytest.approx(mb[3], rel=1e-9, abs=1e-9)


def test_solve_identical_under_pure_backend(tmp_path):
    code = (
        "import sys; from pregelfl import generators, solve, kernels;"
        "g = generators.forest_fire(150, seed=4);"
        "r = solve(g, eps=0.2, k=8, seed=1);"
        "print(kernels.BACKEND); print(r.to_json())"
    )
    outs = []
    for pure in ("0", "1"):
        env = dict(os.environ, PREGELFL_PURE=pure)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                             text=True, check=True)
        backend, payload = res.stdout.strip().split("\n")
        outs.append((backend, json.loads(payload)))
    assert [o[0] for o in outs] == ["cython", "python"]
    assert outs[0][1] == outs[1][1]
