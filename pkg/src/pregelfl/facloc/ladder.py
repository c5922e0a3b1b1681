"""Per-facility contribution bookkeeping for the ladder loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels
from ..ads import AdsSketches, build_ads_sequential
from ..errors import ValidationError
from ..graph import Graph
from .schedule import RadiusSchedule

EXACT_LIMIT = 6000
RULES = ("entry", "bucketed")


@dataclass
class EntryTable:
    """Sorted (vertex, distance, weight) lists, one per vertex, plus a reverse index.

    The list of f holds vertices u reachable from f with d(f, u) in
    increasing (distance, id) order and a weight estimating how many
    vertices u stands for. ``rev_*`` lists, for each client, the facility
    lists it appears in and at which position.
    """

    n: int
    offsets: np.ndarray
    vertices: np.ndarray
    distances: np.ndarray
    weights: np.ndarray
    rev_offsets: np.ndarray
    rev_fac: np.ndarray
    rev_pos: np.ndarray

    @classmethod
    def build(cls, offsets, vertices, distances, weights, is_facility, is_client) -> "EntryTable":
        n = len(offsets) - 1
        offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        vertices = np.ascontiguousarray(vertices, dtype=np.int32)
        owner = np.repeat(np.arange(n, dtype=np.int64), np.diff(offsets))
        keep = np.asarray(is_facility)[owner] & np.asarray(is_client)[vertices]
        pos = np.flatnonzero(keep)
        cli = vertices[pos].astype(np.int64)
        order = np.argsort(cli, kind="stable")
        rev_offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(cli, minlength=n), out=rev_offsets[1:])
        return cls(n, offsets, vertices,
                   np.ascontiguousarray(distances, dtype=np.float64),
                   np.ascontiguousarray(weights, dtype=np.float64),
                   rev_offsets,
                   np.ascontiguousarray(owner[pos][order]),
                   np.ascontiguousarray(pos[order].astype(np.int64)))

    @classmethod
    def from_sketches(cls, sk: AdsSketches, is_facility, is_client) -> "EntryTable":
        return cls.build(sk.offsets, sk.vertices, sk.distances, sk.weights, is_facility, is_client)

    @classmethod
    def exact(cls, g: Graph, is_facility, is_client, cutoff: float) -> "EntryTable":
        """Every reachable vertex within ``cutoff`` with weight 1 (a saturated sketch)."""
        if g.n > EXACT_LIMIT:
            raise ValidationError(f"exact-count mode is limited to {EXACT_LIMIT} vertices")
        sk = build_ads_sequential(g, max(g.n, 1), 0, cutoff=cutoff)
        return cls.build(sk.offsets, sk.vertices, sk.distances, np.ones(len(sk.vertices)),
                         is_facility, is_client)


class Accumulator:
    """Opening test for unopened facilities, one ladder step at a time.

    ``entry`` rule: at each step every live client in f's list adds the
    growth of ``max(0, reach - d)``, so after step j the total equals
    the sum over clients of ``max(0, reach(j_c) - d(f, c))`` with j_c the
    client's current or frozen step. ``bucketed`` rule: distances are
    rounded up to the ladder value of their shell and only clients
    already inside the current radius contribute ``reach - alpha``.
    """

    def __init__(self, table: EntryTable, cost: np.ndarray, is_client: np.ndarray,
                 schedule: RadiusSchedule, rule: str = "entry"):
        if rule not in RULES:
            raise ValidationError(f"unknown accumulation rule {rule!r}")
        n = table.n
        self.table = table
        self.cost = np.asarray(cost, dtype=np.float64)
        self.schedule = schedule
        self.rule = rule
        self.q = np.zeros(n)
        self.ptr = table.offsets[:-1].copy()
        self.inner = np.zeros(n)
        self.live = np.asarray(is_client, dtype=np.uint8).copy()
        self.opened = np.zeros(n, dtype=bool)
        self.fac_step = np.full(n, -1, dtype=np.int64)

    def step(self, j: int, facilities: np.ndarray) -> np.ndarray:
        """Run step ``j`` for ``facilities``; return those that open now."""
        fac = np.asarray(facilities, dtype=np.int64)
        fac = np.ascontiguousarray(fac[~self.opened[fac]])
        if len(fac) == 0:
            return fac
        t = self.table
        alpha, reach = self.schedule.alpha(j), self.schedule.reach(j)
        if self.rule == "entry":
            kernels.ladder_step(fac, t.offsets, t.vertices, t.distances, t.weights, self.live,
                                self.ptr, self.inner, self.q, alpha, reach, j == 0)
        else:
            scratch = np.zeros(len(self.q))
            kernels.ladder_step(fac, t.offsets, t.vertices, t.distances, t.weights, self.live,
                                self.ptr, self.inner, scratch, alpha, alpha, j == 0)
            self.q[fac] += (reach - alpha) * np.maximum(self.inner[fac], 0.0)
        new = fac[self.q[fac] >= self.cost[fac]]
        self.opened[new] = True
        self.fac_step[new] = j
        return new

    def discount(self, clients: np.ndarray, owned: np.ndarray | None = None) -> None:
        """Drop frozen ``clients`` from the interior weight of unopened facilities.

        ``owned`` restricts the update to a facility mask (one shard's part).
        """
        clients = np.ascontiguousarray(clients, dtype=np.int64)
        if len(clients) == 0:
            return
        skip = self.opened.copy()
        if owned is not None:
            skip |= ~owned
        t = self.table
        kernels.frozen_delta(clients, t.rev_offsets, t.rev_fac, t.rev_pos, self.ptr, self.inner,
                             t.weights, skip.view(np.uint8))
