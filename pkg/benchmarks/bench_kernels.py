"""Compiled kernels vs the pure-Python fallback.

    python3 benchmarks/bench_kernels.py --n 2000 --repeat 3

Prints one line per kernel with the best-of-``repeat`` time of each
backend and the speedup. Both backends get identical inputs.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from pregelfl import _pycore, generators
from pregelfl.ads import build_ads_sequential, hash_ranks
from pregelfl.facloc.ladder import EntryTable
from pregelfl.graph import CostAssignment

try:
    from pregelfl import _core
except ImportError:  # pragma: no cover
    _core = None


def cases(n: int, k: int):
    g = generators.assign_uniform_weights(generators.forest_fire(n, seed=1), 1, 10, seed=1)
    t = g.reverse()
    ranks = hash_ranks(n, 3)
    src = np.arange(0, n, max(1, n // 20), dtype=np.int64)
    rows = np.empty((len(src), n))
    costs = CostAssignment.default_for(g)
    table = EntryTable.from_sketches(build_ads_sequential(g, k, 3), costs.is_facility,
                                     costs.is_client)
    fac = np.arange(n, dtype=np.int64)
    rng = np.random.default_rng(0)
    d = rng.uniform(0, 50, size=(min(n, 1500), min(n, 400)))
    fcost = rng.uniform(1, 100, size=d.shape[1])
    opened = np.sort(rng.choice(d.shape[1], 20, replace=False)).astype(np.int64)
    mask = np.zeros(d.shape[1], dtype=np.uint8)
    mask[opened] = 1

    def ladder(mod):
        ptr, inner, q = table.offsets[:-1].copy(), np.zeros(n), np.zeros(n)
        live = costs.is_client.astype(np.uint8)
        alpha = 0.5
        for j in range(10):
            mod.ladder_step(fac, table.offsets, table.vertices, table.distances, table.weights,
                            live, ptr, inner, q, alpha, alpha * 1.5, j == 0)
            alpha *= 1.5

    def ls(mod):
        near = mod.ls_nearest(d, opened)
        mod.ls_best_move(d, fcost, mask, *near)

    return {
        "sssp": lambda m: m.sssp(g.indptr, g.indices, g.weights, 0, np.inf, True),
        "distance_rows": lambda m: m.distance_rows(g.indptr, g.indices, g.weights, True, src,
                                                   rows),
        "ads_build": lambda m: m.ads_build(t.indptr, t.indices, t.weights, True, ranks, k,
                                           np.inf),
        "ladder_step x10": ladder,
        "local_search_move": ls,
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--k", type=int, default=16)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    if _core is None:
        raise SystemExit("compiled core not built; run pip install -e . first")
    print(f"{'kernel':<20}{'cython s':>12}{'python s':>12}{'speedup':>10}")
    for name, fn in cases(a.n, a.k).items():
        fast = min(timeit.repeat(lambda: fn(_core), number=1, repeat=a.repeat))
        slow = min(timeit.repeat(lambda: fn(_pycore), number=1, repeat=a.repeat))
        print(f"{name:<20}{fast:>12.4f}{slow:>12.4f}{slow / fast:>9.1f}x")


if __name__ == "__main__":
    main()
