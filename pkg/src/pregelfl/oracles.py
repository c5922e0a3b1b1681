"""Exact reference computations and sequential baselines.

Everything here works from exact shortest-path distances, so it is only
meant for graphs small enough to hold a dense client-by-facility matrix.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InfeasibleError, NonConvergenceError, ValidationError
from .graph import CostAssignment, Graph, within
from .results import SolveResult

__all__ = [
    "exact_neighborhood",
    "DistanceMatrix",
    "all_pairs",
    "distance_matrix",
    "matrix_for",
    "brute_force_opt",
    "evaluate_cost",
    "Audit",
    "pram_facility_location",
    "local_search_baseline",
    "OracleCache",
]

DEFAULT_LIMIT = 20_000


def exact_neighborhood(g: Graph, v: int, d: float, exclude=None) -> int:
    """Number of vertices u with d(v, u) <= d, skipping ``exclude``."""
    if d < 0:
        return 0
    dist = kernels.sssp(g.indptr, g.indices, g.weights, int(v), within(float(d)), g.weighted)
    inside = np.isfinite(dist)
    if exclude:
        ex = np.fromiter((int(x) for x in exclude), dtype=np.int64)
        inside[ex[(ex >= 0) & (ex < g.n)]] = False
    return int(inside.sum())


@dataclass
class DistanceMatrix:
    """Dense distances ``data[i, j] = d(facilities[j], clients[i])``.

    Rows are clients so the per-client scans of the baselines stay
    contiguous.
    """

    data: np.ndarray
    clients: np.ndarray
    facilities: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def distance(self, client: int, facility: int) -> float:
        i = int(np.searchsorted(self.clients, client))
        j = int(np.searchsorted(self.facilities, facility))
        if i >= len(self.clients) or self.clients[i] != client:
            raise ValidationError(f"{client} is not a client of this matrix")
        if j >= len(self.facilities) or self.facilities[j] != facility:
            raise ValidationError(f"{facility} is not a facility of this matrix")
        return float(self.data[i, j])

    def check_feasible(self) -> None:
        reach = np.isfinite(self.data).any(axis=1)
        if not reach.all():
            c = int(self.clients[np.flatnonzero(~reach)[0]])
            raise InfeasibleError(f"client {c} cannot reach any facility", c)


def distance_matrix(g: Graph, clients=None, facilities=None, dtype=np.float64,
                    limit: int = DEFAULT_LIMIT) -> DistanceMatrix:
    """Exact client-by-facility distances, one traversal per client on reversed arcs."""
    if g.n > limit:
        raise ValidationError(f"graph has {g.n} vertices, above the all-pairs limit {limit}")
    cli = np.arange(g.n) if clients is None else np.asarray(clients, dtype=np.int64)
    fac = np.arange(g.n) if facilities is None else np.asarray(facilities, dtype=np.int64)
    rev = g.reverse()
    out = np.empty((len(cli), len(fac)), dtype=dtype)
    block = max(1, min(len(cli), 8_000_000 // max(g.n, 1)))
    rows = np.empty((block, g.n), dtype=dtype)
    for lo in range(0, len(cli), block):
        src = np.ascontiguousarray(cli[lo:lo + block], dtype=np.int64)
        part = rows[: len(src)]
        kernels.distance_rows(rev.indptr, rev.indices, rev.weights, g.weighted, src, part)
        out[lo:lo + len(src)] = part[:, fac]
    return DistanceMatrix(out, cli, fac)


def all_pairs(g: Graph, limit: int = DEFAULT_LIMIT) -> DistanceMatrix:
    """Full n x n matrix with ``data[u, v] = d(v, u)``; transpose for d(u, v)."""
    return distance_matrix(g, limit=limit)


def matrix_for(g: Graph, costs: CostAssignment, dtype=np.float64,
               limit: int = DEFAULT_LIMIT) -> DistanceMatrix:
    return distance_matrix(g, costs.clients, costs.facilities, dtype=dtype, limit=limit)


def _facility_costs(matrix: DistanceMatrix, costs) -> np.ndarray:
    if isinstance(costs, CostAssignment):
        return costs.cost[matrix.facilities]
    c = np.asarray(costs, dtype=np.float64)
    if len(c) != len(matrix.facilities):
        raise ValidationError("need one cost per matrix facility")
    return c


def brute_force_opt(matrix: DistanceMatrix, costs, max_facilities: int = 20) -> tuple[float, list[int]]:
    """Exact optimum over all nonempty facility subsets.

    Subsets are enumerated in chunks: the low bits index a precomputed
    table of per-client minima, the high bits are folded in per chunk.
    Ties go to the subset with the smallest bitmask.
    """
    nf = len(matrix.facilities)
    if nf > max_facilities:
        raise ValidationError(f"{nf} facilities exceed the exhaustive limit {max_facilities}")
    cost = _facility_costs(matrix, costs)
    d = np.asarray(matrix.data, dtype=np.float64)
    nc = d.shape[0]
    low_bits = min(nf, 10)
    high_bits = nf - low_bits
    nlow = 1 << low_bits
    low_min = np.full((nlow, nc), math.inf)
    low_cost = np.zeros(nlow)
    for mask in range(1, nlow):
        b = (mask & -mask).bit_length() - 1
        prev = mask & (mask - 1)
        low_min[mask] = np.minimum(low_min[prev], d[:, b])
        low_cost[mask] = low_cost[prev] + cost[b]
    best_val, best_mask = math.inf, 0
    hi_min = np.full(nc, math.inf)
    for high in range(1 << high_bits):
        if high:
            idx = [low_bits + i for i in range(high_bits) if high >> i & 1]
            hi_min = d[:, idx].min(axis=1)
            hi_cost = float(cost[idx].sum())
        else:
            hi_min = np.full(nc, math.inf)
            hi_cost = 0.0
        tot = np.minimum(low_min, hi_min[None, :]).sum(axis=1) + low_cost + hi_cost
        if high == 0:
            tot[0] = math.inf
        i = int(np.argmin(tot))
        if tot[i] < best_val:
            best_val, best_mask = float(tot[i]), (high << low_bits) | i
    chosen = [int(matrix.facilities[b]) for b in range(nf) if best_mask >> b & 1]
    return best_val, chosen


@dataclass
class Audit:
    objective: float
    opening_cost: float
    service_cost: float
    distance: np.ndarray
    flagged: list[int] = field(default_factory=list)


def evaluate_cost(g: Graph, costs: CostAssignment, opened, assignment=None,
                  recorded=None, rtol: float = 1e-9) -> Audit:
    """Recompute the objective of ``opened`` from scratch.

    ``assignment`` (client -> facility, -1 elsewhere) must point into
    ``opened``. Clients whose ``recorded`` service distance differs from
    the true distance to the nearest open facility are listed in
    ``flagged``.
    """
    s = np.unique(np.asarray(list(opened), dtype=np.int64))
    if len(s) == 0:
        raise ValidationError("the open set is empty")
    if not costs.is_facility[s].all():
        bad = int(s[~costs.is_facility[s]][0])
        raise ValidationError(f"vertex {bad} is not a facility")
    cli = costs.clients
    if assignment is not None:
        a = np.asarray(assignment)[cli]
        member = np.isin(a, s)
        if not member.all():
            c = int(cli[np.flatnonzero(~member)[0]])
            raise ValidationError(f"client {c} is assigned outside the open set")
    dist, _ = kernels.multi_source(g.indptr, g.indices, g.weights, g.weighted, s, np.zeros(len(s)))
    if not np.isfinite(dist[cli]).all():
        c = int(cli[np.flatnonzero(~np.isfinite(dist[cli]))[0]])
        raise InfeasibleError(f"client {c} cannot reach the open set", c)
    opening = math.fsum(costs.cost[s].tolist())
    service = math.fsum(dist[cli].tolist())
    flagged: list[int] = []
    if recorded is not None:
        rec = np.asarray(recorded, dtype=np.float64)[cli]
        off = ~np.isclose(rec, dist[cli], rtol=rtol, atol=0.0)
        flagged = cli[off].tolist()
    return Audit(opening + service, opening, service, dist, flagged)


def _result(matrix: DistanceMatrix, cost: np.ndarray, open_cols: np.ndarray, n: int | None,
            counters: dict, trace: dict | None = None) -> SolveResult:
    sub = np.asarray(matrix.data[:, open_cols], dtype=np.float64)
    pick = np.argmin(sub, axis=1)
    best = sub[np.arange(len(sub)), pick]
    fac = matrix.facilities[open_cols][pick]
    size = n if n is not None else int(max(matrix.clients.max(), matrix.facilities.max())) + 1
    assignment = np.full(size, -1, dtype=np.int64)
    service = np.full(size, np.nan)
    assignment[matrix.clients] = fac
    service[matrix.clients] = best
    opened = sorted(int(f) for f in matrix.facilities[open_cols])
    return SolveResult(opened, assignment, service, math.fsum(cost[open_cols].tolist()),
                       math.fsum(best.tolist()), counters, trace or {})


def pram_facility_location(matrix: DistanceMatrix, costs, eps: float, seed: int = 0,
                           schedule=None, n: int | None = None) -> SolveResult:
    """Round-synchronous reference of the ball-growing algorithm on a full matrix.

    Each round grows every unfrozen client's radius to the next ladder
    value, opens facilities whose total contribution covers their cost,
    then freezes every unfrozen client within ``(1+eps) * alpha`` of any
    open facility and records a conflict edge to each such facility.
    Remaining clients go to their nearest facility. A greedy MIS over the
    explicit conflict graph picks the final set.
    """
    from .facloc.schedule import RadiusSchedule
    from .mis import draw_priorities, greedy_mis_explicit

    matrix.check_feasible()
    cost = _facility_costs(matrix, costs)
    d = np.asarray(matrix.data, dtype=np.float64)
    nc, nf = d.shape
    if schedule is None:
        gamma = float((cost[None, :] + d).min(axis=1).max())
        fallback = min([c for c in cost if c > 0] + [x for x in d[d > 0]] + [1.0])
        schedule = RadiusSchedule.build(eps, gamma, nc * nf, fallback)
    frozen = np.zeros(nc, dtype=bool)
    cstep = np.full(nc, -1, dtype=np.int64)
    opened = np.zeros(nf, dtype=bool)
    fstep = np.full(nf, -1, dtype=np.int64)
    h_edges: list[tuple[int, int]] = []
    opened_by_step: list[list[int]] = []
    frozen_by_step: list[list[int]] = []
    j = 0
    while not opened.all() and not frozen.all() and j < schedule.num_steps:
        reach = schedule.reach(j)
        cstep[~frozen] = j
        radius = schedule.reach_array(cstep)
        lhs = np.maximum(radius[:, None] - d, 0.0).sum(axis=0)
        new = ~opened & (lhs >= cost)
        opened |= new
        fstep[new] = j
        opened_by_step.append(matrix.facilities[new].tolist())
        near = (d[:, opened] <= reach) & ~frozen[:, None]
        caught = near.any(axis=1)
        cols = np.flatnonzero(opened)
        for i in np.flatnonzero(caught).tolist():
            for jj in cols[near[i]].tolist():
                h_edges.append((i, jj))
        frozen |= caught
        frozen_by_step.append(matrix.clients[caught].tolist())
        j += 1
    residual = np.flatnonzero(~frozen)
    for i in residual.tolist():
        pool = np.flatnonzero(opened) if opened.any() else np.arange(nf)
        row = d[i, pool]
        jj = int(pool[np.argmin(row)])
        h_edges.append((i, jj))
        if not opened[jj]:
            opened[jj] = True
            fstep[jj] = j
    open_cols = np.flatnonzero(opened)
    node = np.full(nf, -1, dtype=np.int64)
    node[open_cols] = np.arange(len(open_cols))
    by_client: dict[int, list[int]] = {}
    for i, jj in h_edges:
        by_client.setdefault(i, []).append(int(node[jj]))
    src, dst = [], []
    for fs in by_client.values():
        for a, b in itertools.combinations(sorted(set(fs)), 2):
            src.append(a)
            dst.append(b)
    hbar = Graph.from_edges(len(open_cols), src, dst)
    prio = draw_priorities(max(nf, 1), len(open_cols), seed)
    mis = greedy_mis_explicit(hbar, priorities=prio)
    chosen = open_cols[mis.selected]
    trace = {
        "opened_by_step": opened_by_step,
        "frozen_by_step": frozen_by_step,
        "opened_before_selection": matrix.facilities[open_cols].tolist(),
        "residual_clients": matrix.clients[residual].tolist(),
        "conflict_edges": hbar.m,
    }
    counters = {"ladder_steps": j, "rounds": mis.rounds}
    return _result(matrix, cost, chosen, n, counters, trace)


def local_search_baseline(matrix: DistanceMatrix, costs, n: int | None = None,
                          rel_tol: float = 1e-9, max_moves: int | None = None) -> SolveResult:
    """Best-improvement local search over add, drop and swap moves.

    Starts from the single facility with the lowest cost plus total
    service distance and stops when no move improves the objective by
    more than ``rel_tol`` relative to it.
    """
    matrix.check_feasible()
    cost = np.ascontiguousarray(_facility_costs(matrix, costs), dtype=np.float64)
    d = np.ascontiguousarray(matrix.data)
    nc, nf = d.shape
    colsum = np.zeros(nf)
    step = max(1, 4_000_000 // max(nf, 1))
    for lo in range(0, nc, step):
        colsum += np.asarray(d[lo:lo + step], dtype=np.float64).sum(axis=0)
    start = int(np.argmin(cost + colsum))
    open_mask = np.zeros(nf, dtype=bool)
    open_mask[start] = True
    cap = max_moves if max_moves is not None else 50 * nf + 100
    moves = {"add": 0, "drop": 0, "swap": 0}
    names = {1: "add", 2: "drop", 3: "swap"}
    while True:
        idx = np.flatnonzero(open_mask).astype(np.int64)
        assigned, best, second = kernels.ls_nearest(d, idx)
        objective = float(cost[open_mask].sum() + best.sum())
        kind, f_in, f_out, delta = kernels.ls_best_move(d, cost, open_mask.view(np.uint8),
                                                          assigned, best, second)
        if kind == 0 or not delta < -rel_tol * abs(objective):
            break
        if sum(moves.values()) >= cap:
            raise NonConvergenceError(f"local search exceeded {cap} moves")
        moves[names[kind]] += 1
        if f_in >= 0:
            open_mask[f_in] = True
        if f_out >= 0:
            open_mask[f_out] = False
    counters = {"moves": sum(moves.values()), **{f"moves_{k}": v for k, v in moves.items()}}
    return _result(matrix, cost, np.flatnonzero(open_mask), n, counters)


class OracleCache:
    """Small on-disk store for expensive oracle outputs, keyed by graph digest and parameters."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def key(self, g: Graph, **params) -> str:
        blob = json.dumps({"graph": g.digest(), **params}, sort_keys=True, default=str)
        return hashlib.sha1(blob.encode()).hexdigest()

    def load(self, key: str) -> dict | None:
        path = self.root / f"{key}.npz"
        if not path.exists():
            return None
        with np.load(path, allow_pickle=False) as z:
            return {k: z[k] for k in z.files}

    def save(self, key: str, **arrays) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.root / f"{key}.tmp.npz"
        np.savez(tmp, **arrays)
        os.replace(tmp, self.root / f"{key}.npz")

    def matrix(self, g: Graph, costs: CostAssignment, dtype=np.float64) -> DistanceMatrix:
        key = self.key(g, kind="matrix", clients=costs.clients.tolist(),
                       facilities=costs.facilities.tolist(), dtype=np.dtype(dtype).name)
        hit = self.load(key)
        if hit is not None:
            return DistanceMatrix(hit["data"], hit["clients"], hit["facilities"])
        m = matrix_for(g, costs, dtype=dtype)
        self.save(key, data=m.data, clients=m.clients, facilities=m.facilities)
        return m
