"""Experiment drivers behind the command line: sketch error, cost ratios, MIS rounds."""

from __future__ import annotations

import hashlib
import math
import statistics
import time
from dataclasses import dataclass

import numpy as np

from .ads import build_ads_sequential
from .graph import CostAssignment, Graph, distances_from, within
from .facloc import solve
from .mis import conflict_graph, greedy_mis_explicit, luby_mis, verify_mis
from .oracles import OracleCache, local_search_baseline, matrix_for
from .rng import derive_seed, generator

UNWEIGHTED_LADDER = tuple(range(1, 21))
WEIGHTED_LADDER = tuple(range(100, 2001, 100))


def default_ladder(g: Graph) -> tuple:
    return WEIGHTED_LADDER if g.weighted else UNWEIGHTED_LADDER


def sketch_errors(g: Graph, k: int, seed: int, samples: int = 100, ladder=None,
                  sample_seed: int | None = None) -> list[dict]:
    """Relative error of sketch neighborhood sizes against exact ball sizes.

    One record per distance: mean and variance of ``|exact - est| / exact``
    over ``samples`` random vertices. The vertex sample depends on
    ``sample_seed`` (default: ``seed``) so hash seeds can be varied over a
    fixed sample.
    """
    ladder = default_ladder(g) if ladder is None else tuple(ladder)
    sk = build_ads_sequential(g, int(k), seed)
    rng = generator(seed if sample_seed is None else sample_seed, "sample")
    picks = rng.choice(g.n, size=min(samples, g.n), replace=False)
    errs = np.zeros((len(ladder), len(picks)))
    for col, v in enumerate(picks.tolist()):
        dist = np.sort(distances_from(g, v))
        for row, d in enumerate(ladder):
            exact = int(np.searchsorted(dist, within(d), side="right"))
            est = sk.hip_estimate(v, float(d))
            errs[row, col] = abs(exact - est) / exact
    return [{"k": int(k), "distance": float(d), "mean_error": float(errs[i].mean()),
             "variance": float(errs[i].var()), "samples": int(len(picks))}
            for i, d in enumerate(ladder)]


@dataclass
class Baseline:
    objective: float
    opened: int
    seconds: float


def baseline_cost(g: Graph, costs: CostAssignment, cache: OracleCache | None = None) -> Baseline:
    """Local-search objective under ``costs``, optionally cached on disk."""
    key = None
    if cache is not None:
        h = hashlib.sha1()
        for arr in (costs.cost, costs.is_facility, costs.is_client):
            h.update(np.ascontiguousarray(arr).tobytes())
        key = cache.key(g, baseline="local-search", costs=h.hexdigest())
        hit = cache.load(key)
        if hit is not None:
            return Baseline(float(hit["objective"]), int(hit["opened"]), float(hit["seconds"]))
    t0 = time.perf_counter()
    matrix = matrix_for(g, costs, dtype=np.float32)
    res = local_search_baseline(matrix, costs, n=g.n)
    out = Baseline(res.objective, len(res.opened), time.perf_counter() - t0)
    if cache is not None:
        cache.save(key, objective=np.float64(out.objective), opened=np.int64(out.opened),
                   seconds=np.float64(out.seconds))
    return out


def compare_costs(g: Graph, costs: CostAssignment, eps_list, k: int, seeds, mode: str = "sketch",
                  cache: OracleCache | None = None, baseline: Baseline | None = None) -> list[dict]:
    """One ratio record per (eps, seed) against one local-search run.

    ``relative_cost`` is our objective over the baseline objective, so a
    value above 1 means the baseline is cheaper; ``baseline_over_ours`` is
    the reciprocal.
    """
    base = baseline if baseline is not None else baseline_cost(g, costs, cache)
    out = []
    for eps in eps_list:
        for seed in seeds:
            t0 = time.perf_counter()
            res = solve(g, costs, eps=float(eps), k=int(k), seed=int(seed), mode=mode)
            ours = res.objective
            out.append({
                "eps": float(eps), "seed": int(seed), "k": int(k),
                "objective": ours, "baseline_objective": base.objective,
                "relative_cost": ours / base.objective if base.objective > 0 else math.nan,
                "baseline_over_ours": base.objective / ours if ours > 0 else math.nan,
                "selected": len(res.opened), "baseline_opened": base.opened,
                "supersteps": res.counters["supersteps"], "messages": res.counters["messages"],
                "seconds": time.perf_counter() - t0, "baseline_seconds": base.seconds,
            })
    return out


def median_by(records: list[dict], key: str, field: str) -> dict:
    groups: dict = {}
    for r in records:
        groups.setdefault(r[key], []).append(r[field])
    return {k: statistics.median(v) for k, v in sorted(groups.items())}


def mis_rounds(g: Graph, costs: CostAssignment, eps: float, k: int, seed: int,
               runs: int = 3) -> dict:
    """Supersteps of each selection routine on the conflict graph of one solve run.

    The solve run supplies the opened facilities and steps; the conflict
    graph is then materialized from exact distances. Greedy (fixed random
    priorities) and Luby run ``runs`` times with derived seeds; medians
    are reported along with the implicit run inside the solver.
    """
    t0 = time.perf_counter()
    res = solve(g, costs, eps=eps, k=k, seed=seed, trace=True)
    tr = res.trace
    cg = conflict_graph(g, tr["opened_before_selection"], tr["fac_step"], tr["client_step"],
                        tr["schedule"], costs.is_client)
    build = time.perf_counter() - t0
    greedy, luby, greedy_t, luby_t = [], [], [], []
    valid = True
    for r in range(runs):
        s = derive_seed(seed, "bench", r)
        t = time.perf_counter()
        gm = greedy_mis_explicit(cg.graph, seed=s)
        greedy_t.append(time.perf_counter() - t)
        t = time.perf_counter()
        lm = luby_mis(cg.graph, seed=s)
        luby_t.append(time.perf_counter() - t)
        valid &= bool(verify_mis(cg.graph, gm.selected)) and bool(verify_mis(cg.graph, lm.selected))
        greedy.append((gm.supersteps, gm.rounds))
        luby.append((lm.supersteps, lm.rounds))
    return {
        "n": g.n, "eps": eps, "seed": seed, "conflict_nodes": cg.graph.n,
        "conflict_edges": int(cg.graph.m),
        "greedy_supersteps": statistics.median(x[0] for x in greedy),
        "greedy_rounds": statistics.median(x[1] for x in greedy),
        "luby_supersteps": statistics.median(x[0] for x in luby),
        "luby_rounds": statistics.median(x[1] for x in luby),
        "implicit_supersteps": res.counters["supersteps_mis"],
        "implicit_rounds": res.counters["mis_rounds"],
        "greedy_seconds": statistics.median(greedy_t),
        "luby_seconds": statistics.median(luby_t),
        "setup_seconds": build, "valid": valid,
    }
