"""Maximal independent sets over the facility conflict graph.

The conflict graph links two open facilities when some client is
connected to both, a client c being connected to facility f when both
were settled at the same ladder step and f lies within the step's reach
of c. ``greedy_mis_implicit`` selects facilities on the engine without
ever building that graph; the explicit variants run over a materialized
copy and serve as references and as the comparison baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from . import kernels
from .ads import hash_ranks
from .bsp import (
    Aggregator,
    LabelFlood,
    MasterContext,
    PhaseSwitch,
    RunMetrics,
    ShardContext,
    VertexProgram,
    expand_arcs,
    run,
)
from .errors import NonConvergenceError, ValidationError
from .graph import Graph
from .rng import derive_seed, generator

__all__ = [
    "MisResult",
    "MisCheck",
    "ConflictGraph",
    "Assignment",
    "verify_mis",
    "greedy_mis_explicit",
    "luby_mis",
    "conflict_graph",
    "greedy_mis_implicit",
    "draw_priorities",
    "finalize_assignment",
    "round_cap",
]

ACTIVE, SELECTED, REMOVED = 0, 1, 2


class StepReach(Protocol):
    def reach_array(self, steps: np.ndarray) -> np.ndarray: ...


@dataclass
class MisResult:
    selected: np.ndarray
    rounds: int
    metrics: RunMetrics

    @property
    def supersteps(self) -> int:
        return self.metrics.supersteps


@dataclass
class MisCheck:
    ok: bool
    reason: str = ""
    witness: tuple | None = None

    def __bool__(self) -> bool:
        return self.ok


def verify_mis(g: Graph, selected) -> MisCheck:
    """Independence and maximality check; arcs are read as undirected edges."""
    sel = np.zeros(g.n, dtype=bool)
    sel[np.asarray(list(selected), dtype=np.int64)] = True
    src, dst, _ = g.arcs()
    both = sel[src] & sel[dst]
    if both.any():
        i = int(np.flatnonzero(both)[0])
        u, v = sorted((int(src[i]), int(dst[i])))
        return MisCheck(False, "edge inside the set", (u, v))
    covered = sel.copy()
    covered[dst[sel[src]]] = True
    covered[src[sel[dst]]] = True
    loose = np.flatnonzero(~covered)
    if len(loose):
        return MisCheck(False, "vertex with no selected neighbor", (int(loose[0]),))
    return MisCheck(True)


def _group_min(dst: np.ndarray, key: np.ndarray, tie: np.ndarray):
    """Per destination, the lexicographically smallest (key, tie)."""
    order = np.lexsort((tie, key, dst))
    d = dst[order]
    first = np.ones(len(d), dtype=bool)
    first[1:] = d[1:] != d[:-1]
    pick = order[first]
    return dst[pick], key[pick], tie[pick]


def _notify(shard: ShardContext, channel: str, verts: np.ndarray, **cols) -> None:
    if len(verts) == 0:
        return
    pos, nbr, _ = expand_arcs(shard.graph, verts)
    if len(nbr):
        shard.send_batch(channel, verts[pos], nbr, **{k: np.asarray(v)[pos] for k, v in cols.items()})


class _PriorityMis(VertexProgram):
    """Two supersteps per round: exchange priorities, then local minima join.

    ``fixed`` priorities give the deterministic greedy rule; otherwise
    fresh uniforms are drawn every round (Luby with random priorities).
    """

    def __init__(self, g: Graph, priorities: np.ndarray | None, seed: int):
        self.status = np.zeros(g.n, dtype=np.int8)
        self.fixed = priorities
        self.seed = seed

    def _prio(self, rnd: int) -> np.ndarray:
        if self.fixed is not None:
            return self.fixed
        return hash_ranks(len(self.status), derive_seed(self.seed, "luby-priority", rnd))

    def compute_shard(self, shard: ShardContext) -> None:
        lo, hi = shard.lo, shard.hi
        st = self.status
        rnd = shard.superstep // 2
        if shard.superstep % 2 == 0:
            box = shard.channel("sel")
            if box:
                hit = np.unique(box["dst"])
                st[hit[st[hit] == ACTIVE]] = REMOVED
            act = np.flatnonzero(st[lo:hi] == ACTIVE) + lo
            _notify(shard, "prio", act, prio=self._prio(rnd)[act])
        else:
            act = np.flatnonzero(st[lo:hi] == ACTIVE) + lo
            prio = self._prio(rnd)
            winners = act
            box = shard.channel("prio")
            if box:
                d, p, s = _group_min(box["dst"], box["prio"], box["src"])
                mine = prio[d]
                beaten = d[(p < mine) | ((p == mine) & (s < d))]
                winners = act[~np.isin(act, beaten)]
            st[winners] = SELECTED
            _notify(shard, "sel", winners)
        shard.vote_to_halt(np.flatnonzero(st[lo:hi] != ACTIVE) + lo)


class _MarkingLuby(VertexProgram):
    """Luby's marking algorithm, three supersteps per round.

    Mark with probability 1/(2 deg); of two adjacent marked vertices the
    lower degree one (then the larger id) backs off; survivors join, their
    neighbors drop out and tell their own neighbors so degrees stay exact.
    """

    def __init__(self, g: Graph, seed: int):
        self.status = np.zeros(g.n, dtype=np.int8)
        self.deg = np.diff(g.indptr).astype(np.int64)
        self.marked = np.zeros(g.n, dtype=bool)
        self.seed = seed

    def compute_shard(self, shard: ShardContext) -> None:
        lo, hi = shard.lo, shard.hi
        st, deg = self.status, self.deg
        phase = shard.superstep % 3
        if phase == 0:
            box = shard.channel("rem")
            if box:
                d = box["dst"]
                d = d[st[d] == ACTIVE]
                np.subtract.at(deg, d, 1)
            act = np.flatnonzero(st[lo:hi] == ACTIVE) + lo
            lonely = act[deg[act] <= 0]
            st[lonely] = SELECTED
            act = act[deg[act] > 0]
            u = hash_ranks(len(st), derive_seed(self.seed, "luby-mark", shard.superstep // 3))[act]
            mark = u * (2.0 * deg[act]) < 1.0
            self.marked[lo:hi] = False
            chosen = act[mark]
            self.marked[chosen] = True
            _notify(shard, "mark", chosen, deg=deg[chosen])
        elif phase == 1:
            chosen = np.flatnonzero(self.marked[lo:hi]) + lo
            lose = np.zeros(len(chosen), dtype=bool)
            box = shard.channel("mark")
            if box and len(chosen):
                d, s, sd = box["dst"], box["src"], box["deg"]
                keep = self.marked[d]
                d, s, sd = d[keep], s[keep], sd[keep]
                md = deg[d]
                beats = (sd > md) | ((sd == md) & (s < d))
                losers = np.unique(d[beats])
                lose = np.isin(chosen, losers)
            winners = chosen[~lose]
            st[winners] = SELECTED
            _notify(shard, "sel", winners)
        else:
            box = shard.channel("sel")
            gone = np.zeros(0, dtype=np.int64)
            if box:
                hit = np.unique(box["dst"])
                gone = hit[st[hit] == ACTIVE]
                st[gone] = REMOVED
            _notify(shard, "rem", gone)
        shard.vote_to_halt(np.flatnonzero(st[lo:hi] != ACTIVE) + lo)


def _check_undirected(g: Graph) -> None:
    if g.directed:
        raise ValidationError("MIS routines expect an undirected graph")


def _selected(status: np.ndarray) -> np.ndarray:
    return np.flatnonzero(status == SELECTED).astype(np.int64)


def greedy_mis_explicit(g: Graph, priorities=None, seed: int = 0,
                        workers: int | None = 1) -> MisResult:
    """Greedy MIS under fixed priorities: a vertex joins once it beats every active neighbor.

    Priorities compare as (priority, id). Drawn from ``seed`` when omitted.
    """
    _check_undirected(g)
    prio = (draw_priorities(g.n, g.n, seed) if priorities is None
            else np.asarray(priorities, dtype=np.int64))
    if len(prio) != g.n:
        raise ValidationError("one priority per vertex is required")
    prog = _PriorityMis(g, prio, seed)
    res = run(g, prog, aggregators=[Aggregator("unused", "or")], workers=workers)
    return MisResult(_selected(prog.status), math.ceil(res.metrics.supersteps / 2), res.metrics)


def luby_mis(g: Graph, seed: int = 0, variant: str = "marking",
             workers: int | None = 1) -> MisResult:
    """Luby's algorithm. ``marking`` is the degree-based original; ``priority``
    draws a fresh random priority per vertex and round."""
    _check_undirected(g)
    if variant == "marking":
        prog: VertexProgram = _MarkingLuby(g, seed)
        per_round = 3
    elif variant == "priority":
        prog = _PriorityMis(g, None, seed)
        per_round = 2
    else:
        raise ValidationError(f"unknown Luby variant {variant!r}")
    res = run(g, prog, aggregators=[Aggregator("unused", "or")], workers=workers)
    return MisResult(_selected(prog.status), math.ceil(res.metrics.supersteps / per_round),
                     res.metrics)


def draw_priorities(n: int, count: int, seed: int) -> np.ndarray:
    """``count`` integers uniform in [1, n**3] (capped to stay inside int64)."""
    hi = min(max(n, 1) ** 3, 2 ** 62)
    return generator(seed, "mis-priority").integers(1, hi + 1, size=count, dtype=np.int64)


def round_cap(n: int) -> int:
    return max(1, math.ceil(math.log2(max(n, 2)) ** 2))


# ---------------------------------------------------------------- conflict graph

@dataclass
class ConflictGraph:
    """Materialized conflict graph on compact ids; ``facilities[i]`` is the vertex of node i."""

    graph: Graph
    facilities: np.ndarray
    edges_h: int

    def to_vertices(self, nodes) -> np.ndarray:
        return np.sort(self.facilities[np.asarray(nodes, dtype=np.int64)])


def connections(g: Graph, opened, fac_step, client_step, schedule: StepReach,
                is_client=None) -> tuple[np.ndarray, np.ndarray]:
    """All (client, facility) connections as parallel arrays."""
    opened = np.asarray(opened, dtype=np.int64)
    fac_step = np.asarray(fac_step)
    client_step = np.asarray(client_step)
    reach = schedule.reach_array(fac_step[opened])
    cs, fs = [], []
    for f, r in zip(opened.tolist(), reach.tolist()):
        if not r >= 0:
            continue
        d = kernels.sssp(g.indptr, g.indices, g.weights, f, r, g.weighted)
        hit = np.flatnonzero(np.isfinite(d))
        ok = client_step[hit] == fac_step[f]
        if is_client is not None:
            ok &= np.asarray(is_client)[hit]
        hit = hit[ok]
        cs.append(hit)
        fs.append(np.full(len(hit), f, dtype=np.int64))
    if not cs:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(cs).astype(np.int64), np.concatenate(fs)


def conflict_graph(g: Graph, opened, fac_step, client_step, schedule: StepReach,
                   is_client=None) -> ConflictGraph:
    """Build the facility conflict graph explicitly from exact distances.

    Only facilities of one step can share a client, so each step is
    handled on its own: every facility's clients become a packed bit row
    and two facilities conflict when their rows intersect. This stays
    linear in the number of connections even when one client is shared by
    thousands of facilities.
    """
    opened = np.unique(np.asarray(opened, dtype=np.int64))
    fac_step = np.asarray(fac_step)
    client_step = np.asarray(client_step)
    cmask = np.ones(g.n, dtype=bool) if is_client is None else np.asarray(is_client, dtype=bool)
    reach = schedule.reach_array(fac_step[opened])
    steps = fac_step[opened]
    src, dst = [], []
    edges_h = 0
    for st in np.unique(steps[steps >= 0]).tolist():
        members = np.flatnonzero(steps == st)
        col = np.full(g.n, -1, dtype=np.int64)
        pool = np.flatnonzero(cmask & (client_step == st))
        col[pool] = np.arange(len(pool))
        words = max(1, (len(pool) + 63) // 64)
        bits = np.zeros((len(members), words * 64), dtype=bool)
        for row, i in enumerate(members.tolist()):
            d = kernels.sssp(g.indptr, g.indices, g.weights, int(opened[i]), float(reach[i]),
                             g.weighted)
            hit = col[np.flatnonzero(np.isfinite(d))]
            hit = hit[hit >= 0]
            edges_h += len(hit)
            bits[row, hit] = True
        packed = np.packbits(bits, axis=1).view(np.uint64)
        del bits
        for row in range(len(members) - 1):
            share = (packed[row + 1:] & packed[row]).any(axis=1)
            other = np.flatnonzero(share) + row + 1
            if len(other):
                src.append(np.full(len(other), members[row], dtype=np.int64))
                dst.append(members[other])
    if src:
        s, d = np.concatenate(src), np.concatenate(dst)
    else:
        s = d = np.zeros(0, dtype=np.int64)
    h = Graph.from_edges(len(opened), s, d)
    return ConflictGraph(h, opened, edges_h)


# ---------------------------------------------------------------- implicit greedy

_PI, _ANNOUNCE, _REPLY, _SELECT, _RELAY = "pi", "announce", "reply", "select", "relay"


class _ImplicitGreedy(VertexProgram):
    """Greedy MIS on the conflict graph driven by bounded label floods.

    Each round: active facilities flood their priority rank within their
    reach; each client keeps the smallest rank among facilities of its own
    step and floods it back within its reach; a facility whose own rank is
    the smallest it hears joins and announces that; clients of its step
    relay the news and facilities of the same step drop out. Client floods
    travel reversed arcs so they reach exactly the facilities whose
    forward ball contains the client. Ranks order facilities by
    (priority, id), so the smallest rank is the smallest priority.
    """

    def __init__(self, g: Graph, opened, fac_step, client_step, schedule: StepReach,
                 pi: np.ndarray, seed: int, cap: int):
        n = g.n
        self.g = g
        self.fwd = LabelFlood(g, "fwd")
        self.back = LabelFlood(g.reverse(), "back")
        self.fac_step = np.asarray(fac_step, dtype=np.int64)
        self.client_step = np.asarray(client_step, dtype=np.int64)
        self.fac_reach = schedule.reach_array(self.fac_step)
        self.client_reach = schedule.reach_array(self.client_step)
        self.opened = np.asarray(opened, dtype=np.int64)
        self.active = np.zeros(n, dtype=bool)
        self.active[self.opened] = True
        self.selected = np.zeros(n, dtype=bool)
        self.pi = np.zeros(n, dtype=np.int64)
        self.pi[self.opened] = pi
        self.rank = np.full(n, -1, dtype=np.int64)
        self.cbest = np.full(n, -1, dtype=np.int64)
        self.fmin = np.full(n, -1, dtype=np.int64)
        self.hit = np.zeros(n, dtype=bool)
        self.seed = seed
        self.cap = cap
        self.rounds = 0
        self.redrawn = 0
        self.phase_start = 0
        self.switch = PhaseSwitch([_PI, _ANNOUNCE, _REPLY, _SELECT, _RELAY], _PI)

    # master ------------------------------------------------------------
    def master(self, m: MasterContext) -> None:
        if m.superstep == 0:
            self.switch.enter(m, _PI)
            return
        if not self.switch.switch_requested(m):
            return
        cur = self.switch.current(m)
        if cur == _PI:
            self._redraw(m.get("claims"))
            order = np.lexsort((self.opened, self.pi[self.opened]))
            self.rank[self.opened[order]] = np.arange(len(order))
            nxt = _ANNOUNCE
        elif cur == _ANNOUNCE:
            nxt = _REPLY
        elif cur == _REPLY:
            nxt = _SELECT
        elif cur == _SELECT:
            nxt = _RELAY
        else:
            self.rounds += 1
            if not self.active.any():
                m.halt()
                return
            if self.rounds >= self.cap:
                raise NonConvergenceError(f"MIS did not finish within {self.cap} rounds")
            nxt = _ANNOUNCE
        self.fwd.reset()
        self.back.reset()
        self.phase_start = m.superstep
        self.switch.enter(m, nxt)

    def _redraw(self, claims) -> None:
        # claims: set of (pi, facility); redraw all but the smallest id of each clash
        by_pi: dict[int, list[int]] = {}
        for p, f in claims or ():
            by_pi.setdefault(p, []).append(f)
        clash = sorted(f for fs in by_pi.values() if len(fs) > 1 for f in sorted(fs)[1:])
        if clash:
            n = self.g.n
            hi = min(max(n, 1) ** 3, 2 ** 62)
            fresh = generator(self.seed, "mis-redraw").integers(1, hi + 1, size=len(clash))
            self.pi[np.asarray(clash)] = fresh
            self.redrawn = len(clash)

    # shards ------------------------------------------------------------
    def compute_shard(self, shard: ShardContext) -> None:
        state = self.switch.current(shard)
        lo, hi = shard.lo, shard.hi
        first = shard.superstep == self.phase_start
        sent_before = shard._out.messages
        if state == _PI:
            fac = np.flatnonzero(self.active[lo:hi]) + lo
            shard.aggregate("claims", frozenset(zip(self.pi[fac].tolist(), fac.tolist())))
        elif state == _ANNOUNCE:
            if first:
                self.cbest[lo:hi] = -1
                self.fmin[lo:hi] = -1
                self.hit[lo:hi] = False
                # facilities without a step have no conflicts and need not announce
                fac = np.flatnonzero(self.active[lo:hi] & (self.fac_step[lo:hi] >= 0)) + lo
                rec = self.fwd.start(shard, fac, self.fac_reach[fac], self.rank[fac],
                                     self.fac_step[fac])
            else:
                rec, _ = self.fwd.relay(shard)
            v, ok = self._matching(rec, self.client_step)
            if v is not None:
                self._keep_min(self.cbest, v, rec["label"][ok])
        elif state == _REPLY:
            if first:
                cli = np.flatnonzero(self.cbest[lo:hi] >= 0) + lo
                rec = self.back.start(shard, cli, self.client_reach[cli], self.cbest[cli],
                                      self.client_step[cli])
            else:
                rec, _ = self.back.relay(shard)
            v, ok = self._matching(rec, self.fac_step, self.active)
            if v is not None:
                self._keep_min(self.fmin, v, rec["label"][ok])
        elif state == _SELECT:
            if first:
                fac = np.flatnonzero(self.active[lo:hi]) + lo
                own = self.fmin[fac] == self.rank[fac]
                join = fac[(self.fmin[fac] < 0) | own]
                self.selected[join] = True
                self.active[join] = False
                join = join[self.fac_step[join] >= 0]
                rec = self.fwd.start(shard, join, self.fac_reach[join], 0, self.fac_step[join])
            else:
                rec, _ = self.fwd.relay(shard)
            v, _ = self._matching(rec, self.client_step)
            if v is not None:
                self.hit[v] = True
        elif state == _RELAY:
            if first:
                cli = np.flatnonzero(self.hit[lo:hi]) + lo
                rec = self.back.start(shard, cli, self.client_reach[cli], 0, self.client_step[cli])
            else:
                rec, _ = self.back.relay(shard)
            v, _ = self._matching(rec, self.fac_step, self.active)
            if v is not None:
                self.active[v] = False
        shard.aggregate("SwitchState", shard._out.messages == sent_before)

    @staticmethod
    def _matching(rec: dict, step: np.ndarray, mask: np.ndarray | None = None):
        """Receipts whose group equals the receiver's own step."""
        if not rec or len(rec["vertex"]) == 0:
            return None, None
        v, grp = rec["vertex"], rec["group"]
        ok = (step[v] == grp) & (grp >= 0)
        if mask is not None:
            ok &= mask[v]
        if not ok.any():
            return None, None
        return v[ok], ok

    @staticmethod
    def _keep_min(arr: np.ndarray, v: np.ndarray, lab: np.ndarray) -> None:
        # several receipts can target one vertex: reduce per vertex first
        order = np.lexsort((lab, v))
        v, lab = v[order], lab[order]
        first = np.ones(len(v), dtype=bool)
        first[1:] = v[1:] != v[:-1]
        v, lab = v[first], lab[first]
        cur = arr[v]
        better = (cur < 0) | (lab < cur)
        arr[v[better]] = lab[better]


def greedy_mis_implicit(g: Graph, opened, fac_step, client_step, schedule: StepReach,
                        seed: int = 0, workers: int | None = 1,
                        max_supersteps: int = 1_000_000) -> MisResult:
    """Select facilities without materializing the conflict graph.

    ``fac_step[f]`` is the ladder step at which f opened and
    ``client_step[c]`` the step at which c froze (-1 when c has no step).
    """
    opened = np.unique(np.asarray(opened, dtype=np.int64))
    if len(opened) == 0:
        return MisResult(np.zeros(0, dtype=np.int64), 0, RunMetrics())
    pi = draw_priorities(g.n, len(opened), seed)
    prog = _ImplicitGreedy(g, opened, fac_step, client_step, schedule, pi, seed, round_cap(g.n))
    aggs = prog.switch.aggregators() + [Aggregator("claims", "union")]
    res = run(g, prog, master=prog.master, aggregators=aggs,
              max_supersteps=max_supersteps, workers=workers)
    if not res.converged:
        raise NonConvergenceError("implicit MIS hit the superstep cap")
    sel = np.flatnonzero(prog.selected).astype(np.int64)
    out = MisResult(sel, prog.rounds, res.metrics)
    out.priorities = prog.pi  # type: ignore[attr-defined]
    return out


# ---------------------------------------------------------------- assignment

@dataclass
class Assignment:
    facility: np.ndarray
    distance: np.ndarray
    reassigned: int


def finalize_assignment(g: Graph, is_client: np.ndarray, selected, serving=None) -> Assignment:
    """Send every client to its nearest selected facility (ties: smaller id).

    ``serving`` optionally maps clients to a previous facility (-1 for
    none); clients whose previous facility differs from the final one are
    counted as reassigned.
    """
    sel = np.unique(np.asarray(selected, dtype=np.int64))
    if len(sel) == 0:
        raise ValidationError("no facility selected")
    dist, owner = kernels.multi_source(g.indptr, g.indices, g.weights, g.weighted,
                                       sel, np.zeros(len(sel)))
    is_client = np.asarray(is_client, dtype=bool)
    fac = np.where(is_client, owner, -1)
    d = np.where(is_client, dist, np.nan)
    reassigned = 0
    if serving is not None:
        serving = np.asarray(serving)
        reassigned = int(np.sum(is_client & (serving != fac)))
    return Assignment(fac.astype(np.int64), d, reassigned)
