"""Bounded-distance flooding over the engine's columnar channels."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

from ..graph import Graph
from .aggregators import Aggregator
from .engine import RunMetrics, ShardContext, VertexProgram, run

__all__ = ["BoundedBroadcast", "LabelFlood", "expand_arcs", "broadcast_within", "BroadcastOutcome"]


def expand_arcs(g: Graph, verts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Out-arcs of ``verts`` as (position in verts, neighbor, weight) arrays."""
    verts = np.asarray(verts, dtype=np.int64)
    starts = g.indptr[verts]
    counts = g.indptr[verts + 1] - starts
    total = int(counts.sum())
    if total == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    owner = np.repeat(np.arange(len(verts)), counts)
    base = np.repeat(starts - np.cumsum(counts) + counts, counts)
    idx = base + np.arange(total)
    return owner, g.indices[idx].astype(np.int64), g.weights[idx]


class BoundedBroadcast:
    """Hop-by-hop delivery of a payload to every vertex within a radius.

    A copy carries the origin, the radius and the distance travelled so
    far; it is forwarded over arc (v, u) only if travelled + w(v, u) stays
    within the radius, so the ball is closed. Each vertex remembers the
    shortest travelled distance seen per origin and forwards a copy only
    when it improves on it, which suppresses duplicates. Payload columns
    are assumed identical for all copies from one origin.

    One instance serves one logical broadcast phase; call :meth:`reset`
    before reusing it.
    """

    def __init__(self, graph: Graph, channel: str = "bcast"):
        self.graph = graph
        self.channel = channel
        self._seen: dict[int, dict[int, float]] = {}

    def reset(self) -> None:
        self._seen = {}

    def _table(self, shard: ShardContext) -> dict[int, float]:
        return self._seen.setdefault(shard.index, {})

    def _forward(self, shard: ShardContext, verts, origin, radius, travelled, payload) -> int:
        pos, nbr, w = expand_arcs(self.graph, verts)
        if len(nbr) == 0:
            return 0
        dist = travelled[pos] + w
        ok = dist <= radius[pos]
        if not ok.any():
            return 0
        pos, nbr, dist = pos[ok], nbr[ok], dist[ok]
        cols = {k: v[pos] for k, v in payload.items()}
        shard.send_batch(self.channel, np.asarray(verts)[pos], nbr,
                         origin=origin[pos], radius=radius[pos], travelled=dist, **cols)
        return len(nbr)

    def start(self, shard: ShardContext, origins, radii, **payload) -> dict:
        """Launch from ``origins`` (all inside this shard).

        Returns the origins' own receipts (distance 0).
        """
        origins = np.asarray(origins, dtype=np.int64)
        radii = np.asarray(radii, dtype=np.float64)
        payload = {k: np.asarray(v) for k, v in payload.items()}
        if len(origins) and (origins.min() < shard.lo or origins.max() >= shard.hi):
            raise ValueError("broadcast origins must belong to the calling shard")
        seen = self._table(shard)
        n = self.graph.n
        for o in origins.tolist():
            seen[o * n + o] = 0.0
        zero = np.zeros(len(origins))
        self._forward(shard, origins, origins, radii, zero, payload)
        return {"vertex": origins, "origin": origins, "distance": zero, **payload}

    def relay(self, shard: ShardContext) -> tuple[dict, int]:
        """Consume this superstep's copies; forward improvements.

        Returns (first-time receipts, number of forwarded copies).
        """
        box = shard.channel(self.channel)
        if not box or len(box["dst"]) == 0:
            return {}, 0
        dst, origin, trav = box["dst"], box["origin"], box["travelled"]
        # best copy per (dst, origin): shortest travelled, canonical order otherwise
        order = np.lexsort((trav, origin, dst))
        dst_s, org_s, trav_s = dst[order], origin[order], trav[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = (dst_s[1:] != dst_s[:-1]) | (org_s[1:] != org_s[:-1])
        sel = order[first]
        seen = self._table(shard)
        n = self.graph.n
        keys = (dst[sel] * n + origin[sel]).tolist()
        tv = trav[sel].tolist()
        improved = np.zeros(len(sel), dtype=bool)
        fresh = np.zeros(len(sel), dtype=bool)
        for i, (key, t) in enumerate(zip(keys, tv)):
            prev = seen.get(key)
            if prev is None:
                fresh[i] = True
                improved[i] = True
                seen[key] = t
            elif t < prev:
                improved[i] = True
                seen[key] = t
        payload_keys = [k for k in box if k not in ("src", "dst", "origin", "radius", "travelled")]
        up = sel[improved]
        sent = self._forward(shard, dst[up], origin[up], box["radius"][up], trav[up],
                             {k: box[k][up] for k in payload_keys})
        nw = sel[fresh]
        receipts = {"vertex": dst[nw], "origin": origin[nw], "distance": trav[nw]}
        for k in payload_keys:
            receipts[k] = box[k][nw]
        return receipts, sent


class LabelFlood:
    """Many-origin bounded flood that tells each vertex the smallest label in range.

    Every origin carries an integer label and a group; origins of one group
    share a radius. A vertex learns, per group, the smallest label among
    origins whose distance to it is within the radius. Instead of one
    flood per origin, a vertex keeps per group the Pareto front of
    (travelled, label) pairs it has seen and forwards only copies that
    are not dominated: a copy with both a shorter travel and a smaller
    label reaches everything the dominated one would.
    """

    def __init__(self, graph: Graph, channel: str = "flood"):
        self.graph = graph
        self.channel = channel
        self._front: dict[int, dict[tuple[int, int], list]] = {}

    def reset(self) -> None:
        self._front = {}

    def _admit(self, table: dict, v: int, group: int, t: float, lab: int) -> tuple[bool, bool]:
        """(forward?, new best label?) for one copy."""
        front = table.get((v, group))
        if front is None:
            table[(v, group)] = [(t, lab)]
            return True, True
        best = front[-1][1]
        for t2, l2 in front:
            if t2 > t:
                break
            if l2 <= lab:
                return False, False
        front[:] = [(t2, l2) for t2, l2 in front if not (t2 >= t and l2 >= lab)]
        bisect.insort(front, (t, lab))
        return True, lab < best

    def _forward(self, shard: ShardContext, verts, radius, travelled, label, group) -> int:
        pos, nbr, w = expand_arcs(self.graph, verts)
        if len(nbr) == 0:
            return 0
        dist = travelled[pos] + w
        ok = dist <= radius[pos]
        pos, nbr, dist = pos[ok], nbr[ok], dist[ok]
        if len(nbr) == 0:
            return 0
        shard.send_batch(self.channel, verts[pos], nbr, radius=radius[pos], travelled=dist,
                         label=label[pos], group=group[pos])
        return len(nbr)

    def _process(self, shard, verts, radius, trav, label, group) -> tuple[dict, int]:
        table = self._front.setdefault(shard.index, {})
        # cheap pre-filter: within one (vertex, group) keep copies improving the running minimum
        order = np.lexsort((label, trav, group, verts))
        verts, radius, trav, label, group = (a[order] for a in (verts, radius, trav, label, group))
        seg = np.ones(len(verts), dtype=bool)
        seg[1:] = (verts[1:] != verts[:-1]) | (group[1:] != group[:-1])
        keep = np.ones(len(verts), dtype=bool)
        run_min = None
        for i, (v, gr, t, lab) in enumerate(zip(verts.tolist(), group.tolist(), trav.tolist(),
                                                label.tolist())):
            if seg[i]:
                run_min = lab
            elif lab >= run_min:
                keep[i] = False
                continue
            else:
                run_min = lab
        fwd = np.zeros(len(verts), dtype=bool)
        best = np.zeros(len(verts), dtype=bool)
        for i in np.flatnonzero(keep).tolist():
            fwd[i], best[i] = self._admit(table, int(verts[i]), int(group[i]), float(trav[i]),
                                          int(label[i]))
        sent = self._forward(shard, verts[fwd], radius[fwd], trav[fwd], label[fwd], group[fwd])
        receipts = {"vertex": verts[best], "group": group[best], "label": label[best],
                    "distance": trav[best]}
        return receipts, sent

    def start(self, shard: ShardContext, origins, radii, labels, groups) -> dict:
        origins = np.asarray(origins, dtype=np.int64)
        if len(origins) == 0:
            return {}
        if origins.min() < shard.lo or origins.max() >= shard.hi:
            raise ValueError("flood origins must belong to the calling shard")
        radii = np.broadcast_to(np.asarray(radii, dtype=np.float64), origins.shape).copy()
        labels = np.broadcast_to(np.asarray(labels, dtype=np.int64), origins.shape).copy()
        groups = np.broadcast_to(np.asarray(groups, dtype=np.int64), origins.shape).copy()
        rec, _ = self._process(shard, origins, radii, np.zeros(len(origins)), labels, groups)
        return rec

    def relay(self, shard: ShardContext) -> tuple[dict, int]:
        box = shard.channel(self.channel)
        if not box or len(box["dst"]) == 0:
            return {}, 0
        return self._process(shard, box["dst"], box["radius"], box["travelled"], box["label"],
                             box["group"])


@dataclass
class BroadcastOutcome:
    reached: dict
    metrics: RunMetrics


class _OneShot(VertexProgram):
    def __init__(self, g: Graph, origin: int, radius: float):
        self.b = BoundedBroadcast(g)
        self.origin = origin
        self.radius = radius
        self.reached: dict[int, list] = {}

    def compute_shard(self, shard: ShardContext) -> None:
        if shard.superstep == 0:
            if shard.lo <= self.origin < shard.hi:
                rec = self.b.start(shard, [self.origin], [self.radius])
                self.reached.setdefault(shard.index, []).append(rec)
        else:
            rec, _ = self.b.relay(shard)
            if rec:
                self.reached.setdefault(shard.index, []).append(rec)
        shard.halt_all()


def broadcast_within(g: Graph, origin: int, radius: float, workers: int = 1) -> BroadcastOutcome:
    """Run a single bounded broadcast to quiescence.

    ``reached`` maps each receiving vertex to its distance from ``origin``.
    """
    if radius < 0 or math.isnan(radius):
        raise ValueError("radius must be non-negative")
    prog = _OneShot(g, int(origin), float(radius))
    res = run(g, prog, aggregators=[Aggregator("unused", "or")], workers=workers)
    reached: dict[int, float] = {}
    for recs in prog.reached.values():
        for rec in recs:
            for v, d in zip(rec["vertex"].tolist(), rec["distance"].tolist()):
                reached[v] = min(d, reached.get(v, math.inf))
    # first receipts may be superseded by shorter copies; recompute from the table
    n = g.n
    for table in prog.b._seen.values():
        for key, t in table.items():
            v, o = divmod(key, n)
            if o == origin:
                reached[v] = t
    return BroadcastOutcome(reached=reached, metrics=res.metrics)
