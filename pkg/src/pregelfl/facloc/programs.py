"""Vertex programs for the ladder loop, client freezing and nearest-facility search."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..bsp import (
    Aggregator,
    BoundedBroadcast,
    LabelFlood,
    MasterContext,
    PhaseSwitch,
    RunMetrics,
    ShardContext,
    VertexProgram,
    expand_arcs,
    run,
)
from ..errors import NonConvergenceError
from ..graph import Graph
from .ladder import Accumulator
from .schedule import RadiusSchedule

OPEN, FREEZE = "open", "freeze"


class ClientBook:
    """Freeze state of clients plus their serving records.

    Records are (client, facility) pairs; a client may hold several, all
    from facilities that opened at the client's own step. The ladder loop
    floods labels, so there a client records the smallest-id facility in
    range (plus any it heard before a smaller one); ``freeze_clients``
    floods per facility and records every one in range.
    """

    def __init__(self, n: int, is_client: np.ndarray):
        self.is_client = np.asarray(is_client, dtype=bool)
        self.live = self.is_client.astype(np.uint8)
        self.step = np.full(n, -1, dtype=np.int64)
        self._parts: dict[int, list[tuple[np.ndarray, np.ndarray]]] = {}

    def absorb(self, key: int, vertex: np.ndarray, origin: np.ndarray, j: int) -> np.ndarray:
        """Apply freeze receipts for step ``j``; return the clients frozen now."""
        if len(vertex) == 0:
            return vertex
        cli = self.is_client[vertex]
        vertex, origin = vertex[cli], origin[cli]
        fresh = np.unique(vertex[self.live[vertex] == 1])
        self.live[fresh] = 0
        self.step[fresh] = j
        same = self.step[vertex] == j
        if same.any():
            self._parts.setdefault(key, []).append((vertex[same], origin[same]))
        return fresh

    def records(self) -> tuple[np.ndarray, np.ndarray]:
        parts = [p for key in sorted(self._parts) for p in self._parts[key]]
        if not parts:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        c = np.concatenate([p[0] for p in parts]).astype(np.int64)
        f = np.concatenate([p[1] for p in parts]).astype(np.int64)
        order = np.lexsort((f, c))
        c, f = c[order], f[order]
        keep = np.ones(len(c), dtype=bool)
        keep[1:] = (c[1:] != c[:-1]) | (f[1:] != f[:-1])
        return c[keep], f[keep]


class LadderProgram(VertexProgram):
    """Alternates one opening superstep per ladder step with a freeze broadcast.

    In an opening superstep each shard first discounts clients frozen
    since its last opening step, then advances its unopened facilities by
    one ladder step. Facilities that open start a broadcast of radius
    ``reach(j)``; the freeze phase relays it until quiescence, freezing
    every live client it reaches. The master advances the ladder and
    stops once every facility is open, every client is frozen or the
    ladder is exhausted.
    """

    def __init__(self, g: Graph, acc: Accumulator, book: ClientBook, is_facility: np.ndarray,
                 schedule: RadiusSchedule, trace: bool = False):
        self.g = g
        self.acc = acc
        self.book = book
        self.is_facility = np.asarray(is_facility, dtype=bool)
        self.schedule = schedule
        self.bcast = LabelFlood(g, "freeze")
        self.switch = PhaseSwitch([OPEN, FREEZE], OPEN)
        self.j = 0
        self.steps_run = 0
        self.pending = np.zeros(0, dtype=np.int64)
        self.collected: list[np.ndarray] = []
        self.opened_by_step: list[list[int]] = []
        self.frozen_by_step: list[list[int]] = []
        self.trace_on = trace
        self.trace: list[dict] = []
        self._snap: dict | None = None

    def aggregators(self) -> list[Aggregator]:
        return self.switch.aggregators() + [
            Aggregator("Frozen", "union"),
            Aggregator("NewOpen", "sum"),
        ]

    # master ------------------------------------------------------------
    def master(self, m: MasterContext) -> None:
        fresh = m.get("Frozen")
        if fresh:
            self.collected.append(np.fromiter(fresh, dtype=np.int64, count=len(fresh)))
        if m.superstep == 0:
            self._begin_step(m)
            return
        cur = self.switch.current(m)
        if cur == OPEN:
            self._after_open(m)
            if m.messages_in_flight > 0:
                self.switch.enter(m, FREEZE)
                return
        elif not self.switch.switch_requested(m):
            return
        self._finish_step()
        self.j += 1
        if self._done():
            m.halt()
            return
        self._begin_step(m)

    def _done(self) -> bool:
        acc = self.acc
        if self.j >= self.schedule.num_steps:
            return True
        if acc.opened[self.is_facility].all():
            return True
        return not (self.book.live[self.book.is_client] == 1).any()

    def _begin_step(self, m: MasterContext) -> None:
        self.pending = (np.unique(np.concatenate(self.collected))
                        if self.collected else np.zeros(0, dtype=np.int64))
        self.collected = []
        # the accumulator reads a copy so freezing inside an opening superstep cannot race with it
        self.acc.live[:] = self.book.live
        if self.trace_on:
            self._snap = {
                "step": self.j,
                "unopened": np.flatnonzero(self.is_facility & ~self.acc.opened),
                "client_step": np.where(self.acc.live == 1, self.j, self.book.step),
            }
        self.bcast.reset()
        self.switch.enter(m, OPEN)

    def _after_open(self, m: MasterContext) -> None:
        self.steps_run += 1
        self.opened_by_step.append(np.flatnonzero(self.acc.fac_step == self.j).tolist())
        if self._snap is not None:
            snap = self._snap
            snap["q"] = self.acc.q[snap["unopened"]].copy()
            self.trace.append(snap)
            self._snap = None

    def _finish_step(self) -> None:
        self.frozen_by_step.append(np.flatnonzero(self.book.step == self.j).tolist())

    # shards ------------------------------------------------------------
    def compute_shard(self, shard: ShardContext) -> None:
        lo, hi = shard.lo, shard.hi
        before = shard._out.messages
        if self.switch.current(shard) == OPEN:
            owned = np.zeros(self.g.n, dtype=bool)
            owned[lo:hi] = True
            self.acc.discount(self.pending, owned)
            fac = np.flatnonzero(self.is_facility[lo:hi] & ~self.acc.opened[lo:hi]) + lo
            new = self.acc.step(self.j, fac)
            shard.aggregate("NewOpen", len(new))
            rec = self.bcast.start(shard, new, self.schedule.reach(self.j), new, self.j)
        else:
            rec, _ = self.bcast.relay(shard)
        if rec:
            fresh = self.book.absorb(shard.index, rec["vertex"], rec["label"], self.j)
            if len(fresh):
                shard.aggregate("Frozen", frozenset(fresh.tolist()))
        shard.aggregate("SwitchState", shard._out.messages == before)


def run_ladder(g: Graph, acc: Accumulator, book: ClientBook, is_facility, schedule: RadiusSchedule,
               workers: int | None, max_supersteps: int, trace: bool = False) -> tuple[LadderProgram, RunMetrics]:
    prog = LadderProgram(g, acc, book, is_facility, schedule, trace)
    res = run(g, prog, master=prog.master, aggregators=prog.aggregators(),
              max_supersteps=max_supersteps, workers=workers)
    if not res.converged:
        raise NonConvergenceError(f"ladder loop hit the superstep cap ({max_supersteps})")
    return prog, res.metrics


class _FreezeOnce(VertexProgram):
    def __init__(self, g: Graph, book: ClientBook, origins: np.ndarray, radius: float, j: int):
        self.bcast = BoundedBroadcast(g, "freeze")
        self.book = book
        self.origins = origins
        self.radius = radius
        self.j = j

    def compute_shard(self, shard: ShardContext) -> None:
        if shard.superstep == 0:
            mine = self.origins[(self.origins >= shard.lo) & (self.origins < shard.hi)]
            rec = self.bcast.start(shard, mine, np.full(len(mine), self.radius))
        else:
            rec, _ = self.bcast.relay(shard)
        if rec:
            self.book.absorb(shard.index, rec["vertex"], rec["origin"], self.j)
        shard.halt_all()


def freeze_clients(g: Graph, book: ClientBook, newly_opened, step: int, schedule: RadiusSchedule,
                   workers: int | None = 1) -> RunMetrics:
    """Freeze every live client within ``reach(step)`` of a newly opened facility."""
    origins = np.unique(np.asarray(newly_opened, dtype=np.int64))
    prog = _FreezeOnce(g, book, origins, schedule.reach(step), step)
    res = run(g, prog, aggregators=[Aggregator("unused", "or")], workers=workers)
    return res.metrics


@dataclass
class Nearest:
    distance: np.ndarray
    owner: np.ndarray
    tier: np.ndarray
    metrics: RunMetrics


class _NearestProgram(VertexProgram):
    """Relaxation keeping the smallest (tier, distance, source id) per vertex."""

    def __init__(self, g: Graph, sources: np.ndarray, tiers: np.ndarray):
        n = g.n
        self.g = g
        self.dist = np.full(n, math.inf)
        self.owner = np.full(n, -1, dtype=np.int64)
        self.tier = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
        order = np.lexsort((sources, tiers))
        sources, tiers = sources[order], tiers[order]
        first = np.ones(len(sources), dtype=bool)
        _, idx = np.unique(sources, return_index=True)
        first[:] = False
        first[idx] = True
        self.sources = sources[first]
        self.dist[self.sources] = 0.0
        self.owner[self.sources] = self.sources
        self.tier[self.sources] = tiers[first]

    def compute_shard(self, shard: ShardContext) -> None:
        lo, hi = shard.lo, shard.hi
        if shard.superstep == 0:
            mine = self.sources[(self.sources >= lo) & (self.sources < hi)]
        else:
            box = shard.channel("near")
            mine = np.zeros(0, dtype=np.int64)
            if box:
                dst, t, d, o = box["dst"], box["tier"], box["dist"], box["owner"]
                order = np.lexsort((o, d, t, dst))
                dst, t, d, o = dst[order], t[order], d[order], o[order]
                first = np.ones(len(dst), dtype=bool)
                first[1:] = dst[1:] != dst[:-1]
                dst, t, d, o = dst[first], t[first], d[first], o[first]
                ct, cd, co = self.tier[dst], self.dist[dst], self.owner[dst]
                better = (t < ct) | ((t == ct) & ((d < cd) | ((d == cd) & (o < co))))
                mine = dst[better]
                self.tier[mine], self.dist[mine], self.owner[mine] = t[better], d[better], o[better]
        if len(mine):
            pos, nbr, w = expand_arcs(self.g, mine)
            if len(nbr):
                src = mine[pos]
                shard.send_batch("near", src, nbr, tier=self.tier[src],
                                 dist=self.dist[src] + w, owner=self.owner[src])
        shard.halt_all()


def nearest_source(g: Graph, sources, tiers=None, workers: int | None = 1,
                   max_supersteps: int = 1_000_000) -> Nearest:
    """For every vertex, the best source by (tier, distance, id) on the engine.

    With all tiers equal this is the nearest source with ties to the
    smaller id; tiers let open facilities take precedence over closed ones.
    """
    sources = np.asarray(sources, dtype=np.int64)
    tiers = np.zeros(len(sources), dtype=np.int64) if tiers is None else np.asarray(tiers, dtype=np.int64)
    prog = _NearestProgram(g, sources, tiers)
    res = run(g, prog, aggregators=[Aggregator("unused", "or")],
              max_supersteps=max_supersteps, workers=workers)
    if not res.converged:
        raise NonConvergenceError("nearest-source relaxation hit the superstep cap")
    return Nearest(prog.dist, prog.owner, prog.tier, res.metrics)
