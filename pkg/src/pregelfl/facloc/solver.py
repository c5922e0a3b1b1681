"""End-to-end facility location on the superstep engine."""

from __future__ import annotations

import math
import time

import numpy as np

from ..ads import AdsSketches, build_ads_bsp, build_ads_sequential
from ..errors import InfeasibleError, ValidationError
from ..graph import CostAssignment, Graph
from ..mis import conflict_graph, greedy_mis_implicit, luby_mis
from ..results import SolveResult
from ..rng import derive_seed
from .ladder import Accumulator, EntryTable
from .programs import ClientBook, nearest_source, run_ladder
from .schedule import RadiusSchedule, compute_gamma, gamma_fallback

MODES = ("sketch", "exact")
SELECTORS = ("greedy", "luby")


def _merge(counters: dict, name: str, metrics) -> None:
    counters[f"supersteps_{name}"] = counters.get(f"supersteps_{name}", 0) + metrics.supersteps
    counters[f"messages_{name}"] = counters.get(f"messages_{name}", 0) + metrics.messages
    counters["supersteps"] = counters.get("supersteps", 0) + metrics.supersteps
    counters["messages"] = counters.get("messages", 0) + metrics.messages


def assign_residual(g: Graph, clients, opened_mask: np.ndarray, is_facility: np.ndarray,
                    workers: int | None = 1):
    """Nearest facility for each leftover client, open ones first.

    Returns (facility, distance, newly opened, metrics). A client that no
    open facility reaches falls back to its nearest closed facility, which
    is then opened.
    """
    clients = np.asarray(clients, dtype=np.int64)
    fac = np.flatnonzero(is_facility)
    tiers = np.where(opened_mask[fac], 0, 1)
    near = nearest_source(g, fac, tiers, workers=workers)
    owner = near.owner[clients]
    if len(clients) and (owner < 0).any():
        c = int(clients[np.flatnonzero(owner < 0)[0]])
        raise InfeasibleError(f"client {c} cannot reach any facility", c)
    extra = np.unique(owner[near.tier[clients] > 0]) if len(clients) else np.zeros(0, np.int64)
    return owner, near.distance[clients], extra, near.metrics


def solve(g: Graph, costs: CostAssignment | None = None, eps: float = 0.1, k: int = 64,
          seed: int = 0, mode: str = "sketch", *, rule: str = "entry", workers: int | None = 1,
          max_supersteps: int = 2_000_000, sketches: AdsSketches | None = None,
          ads_builder: str = "kernel", mis: str = "greedy", trace: bool = False) -> SolveResult:
    """Approximate uncapacitated facility location.

    ``mode="sketch"`` estimates neighborhood sizes from all-distances
    sketches with ``k`` entries per rank level; ``mode="exact"`` uses full
    neighborhood lists instead. The pipeline is: upper bound gamma,
    ladder loop of opening and freezing steps, leftover client
    assignment, selection of an independent subset of the opened
    facilities, and final nearest-facility assignment.

    ``mis="greedy"`` selects with the implicit greedy program;
    ``mis="luby"`` materializes the conflict graph from exact distances
    and runs Luby's algorithm on it (a reference path, not a scalable one).
    """
    t0 = time.perf_counter()
    if costs is None:
        costs = CostAssignment.default_for(g)
    if len(costs.cost) != g.n:
        raise ValidationError("cost assignment does not match the graph size")
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    if mis not in SELECTORS:
        raise ValidationError(f"mis must be one of {SELECTORS}")
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValidationError("k must be a positive integer")
    counters: dict = {}
    gm = compute_gamma(g, costs, workers=workers, max_supersteps=max_supersteps)
    _merge(counters, "gamma", gm.metrics)
    gamma = gm.value
    schedule = RadiusSchedule.build(eps, gamma, costs.pair_count, gamma_fallback(g, costs))
    cutoff = schedule.max_reach()

    if mode == "exact":
        table = EntryTable.exact(g, costs.is_facility, costs.is_client, cutoff)
    else:
        if sketches is None:
            if ads_builder == "bsp":
                sketches = build_ads_bsp(g, int(k), seed, workers=workers)
                _merge(counters, "sketch", sketches.metrics)
            elif ads_builder == "kernel":
                sketches = build_ads_sequential(g, int(k), seed, cutoff=cutoff)
            else:
                raise ValidationError(f"unknown sketch builder {ads_builder!r}")
        elif sketches.n != g.n:
            raise ValidationError("sketches were built for a different graph")
        table = EntryTable.from_sketches(sketches, costs.is_facility, costs.is_client)

    acc = Accumulator(table, costs.cost, costs.is_client, schedule, rule)
    book = ClientBook(g.n, costs.is_client)
    prog, metrics = run_ladder(g, acc, book, costs.is_facility, schedule, workers,
                               max_supersteps, trace)
    _merge(counters, "ladder", metrics)

    opened_mask = acc.opened.copy()
    rec_c, rec_f = book.records()
    leftover = np.flatnonzero(book.is_client & (book.live == 1))
    residual_fac = np.zeros(0, dtype=np.int64)
    if len(leftover):
        owner, _, extra, m = assign_residual(g, leftover, opened_mask, costs.is_facility, workers)
        _merge(counters, "residual", m)
        opened_mask[extra] = True
        residual_fac = owner
    opened = np.flatnonzero(opened_mask)
    if len(opened) == 0:
        raise InfeasibleError("no facility opened")

    fac_step = np.where(opened_mask, acc.fac_step, -1)
    if mis == "greedy":
        sel = greedy_mis_implicit(g, opened, fac_step, book.step, schedule,
                                  seed=derive_seed(seed, "select"), workers=workers,
                                  max_supersteps=max_supersteps)
        selected = sel.selected
    else:
        cg = conflict_graph(g, opened, fac_step, book.step, schedule, costs.is_client)
        sel = luby_mis(cg.graph, seed=derive_seed(seed, "select"), workers=workers)
        selected = cg.to_vertices(sel.selected)
    _merge(counters, "mis", sel.metrics)

    near = nearest_source(g, selected, workers=workers, max_supersteps=max_supersteps)
    _merge(counters, "finalize", near.metrics)
    cli = costs.is_client
    repaired = 0
    stranded = cli & (near.owner < 0)
    if stranded.any():
        # only possible on directed graphs: reopen the nearest dropped facility for such clients
        tiers = np.where(np.isin(opened, selected), 0, 1)
        alt = nearest_source(g, opened, tiers, workers=workers, max_supersteps=max_supersteps)
        _merge(counters, "repair", alt.metrics)
        own = alt.owner[stranded]
        extra = np.unique(own[own >= 0])
        repaired = len(extra)
        if repaired:
            selected = np.union1d(selected, extra)
            near = nearest_source(g, selected, workers=workers, max_supersteps=max_supersteps)
            _merge(counters, "finalize", near.metrics)
    if not np.all(near.owner[cli] >= 0):
        c = int(np.flatnonzero(cli & (near.owner < 0))[0])
        raise InfeasibleError(f"client {c} cannot reach a selected facility", c)
    assignment = np.where(cli, near.owner, -1).astype(np.int64)
    service = np.where(cli, near.distance, np.nan)

    serving = np.full(g.n, -1, dtype=np.int64)
    first = np.ones(len(rec_c), dtype=bool)
    first[1:] = rec_c[1:] != rec_c[:-1]
    serving[rec_c[first]] = rec_f[first]
    serving[leftover] = residual_fac
    sel_mask = np.zeros(g.n, dtype=bool)
    sel_mask[selected] = True
    rec_in_s = np.zeros(g.n, dtype=bool)
    rec_in_s[rec_c[sel_mask[rec_f]]] = True
    rec_in_s[leftover[sel_mask[residual_fac]]] = True
    kept = cli & rec_in_s & sel_mask[np.maximum(serving, 0)]

    counters.update({
        "ladder_steps": prog.steps_run,
        "ladder_length": schedule.num_steps,
        "opened_before_selection": int(len(opened)),
        "selected": int(len(selected)),
        "residual_clients": int(len(leftover)),
        "reassigned_clients": int(np.sum(cli & ~rec_in_s)),
        "mis_rounds": sel.rounds,
        "repair_opened": repaired,
    })
    out = SolveResult(
        opened=[int(f) for f in selected],
        assignment=assignment,
        service=service,
        opening_cost=math.fsum(costs.cost[selected].tolist()),
        service_cost=math.fsum(service[cli].tolist()),
        counters=counters,
        trace={
            "gamma": gamma,
            "schedule": schedule,
            "fac_step": fac_step,
            "client_step": book.step.copy(),
            "records": (rec_c, rec_f),
            "opened_by_step": prog.opened_by_step,
            "frozen_by_step": prog.frozen_by_step,
            "opened_before_selection": opened.tolist(),
            "kept_clients": int(kept.sum()),
            "wall_time": time.perf_counter() - t0,
            "growth": prog.trace,
            "mis_priorities": getattr(sel, "priorities", None),
            "params": {"eps": eps, "k": int(k), "seed": seed, "mode": mode, "rule": rule,
                       "mis": mis},
        },
    )
    return out
