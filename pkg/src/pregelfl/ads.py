"""All-distances sketches with bottom-k ranks and HIP estimates.

The sketch of ``v`` holds pairs (u, d(v, u)). Entries are ordered by
(distance, vertex id), and that order is also the one used for the
bottom-k condition: u is kept iff fewer than k entries that precede it
have a smaller rank. With this order the inclusion threshold of u
(the k-th smallest rank among its predecessors) is known exactly from the
sketch, so the HIP estimate is unbiased even when many vertices share a
distance, as they do on unweighted graphs.

Direction: sketches are built by traversing reversed arcs, so the sketch
of ``v`` describes the vertices that ``v`` can reach. A facility's sketch
therefore counts the clients its broadcasts reach.
"""

from __future__ import annotations

import heapq
import io
import json
import math
import os
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from . import kernels
from .bsp import Aggregator, ShardContext, VertexProgram, run
from .bsp.broadcast import expand_arcs
from .errors import ContractError, NonConvergenceError, ValidationError
from .graph import Graph, within

__all__ = [
    "hash_rank",
    "hash_ranks",
    "BottomK",
    "FrozenSet",
    "AdsSketch",
    "AdsSketches",
    "build_ads_sequential",
    "build_ads_bsp",
    "cleanup_ads",
    "hip_estimate",
    "bucket_count",
    "save_sketches",
    "load_sketches",
]

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
_TWO53 = float(1 << 53)


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * _C1) & _M64
    z = ((z ^ (z >> 27)) * _C2) & _M64
    return z ^ (z >> 31)


def hash_rank(u: int, seed: int) -> float:
    """Rank of ``u`` in (0, 1) from a seeded 64-bit mix (53-bit resolution)."""
    key = (_mix((seed + _GOLDEN) & _M64) + (u * _GOLDEN)) & _M64
    z = _mix(key)
    return ((z >> 11) + 0.5) / _TWO53


def hash_ranks(n: int, seed: int) -> np.ndarray:
    """Vectorized :func:`hash_rank` for vertices 0..n-1."""
    base = np.uint64(_mix((seed + _GOLDEN) & _M64))
    with np.errstate(over="ignore"):
        z = base + np.arange(n, dtype=np.uint64) * np.uint64(_GOLDEN)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_C1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_C2)
        z = z ^ (z >> np.uint64(31))
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) / _TWO53


class BottomK:
    """The k smallest ranks seen, with their vertex ids."""

    def __init__(self, k: int):
        if k < 1:
            raise ValidationError("k must be at least 1")
        self.k = k
        self._heap: list[tuple[float, int]] = []  # (-rank, -id)

    def max_rank(self) -> float:
        """k-th smallest rank when full, +inf otherwise."""
        if len(self._heap) < self.k:
            return math.inf
        return -self._heap[0][0]

    def add(self, rank: float, vertex: int) -> bool:
        """Insert; returns True if the item is now among the k smallest."""
        item = (-rank, -vertex)
        if len(self._heap) < self.k:
            heapq.heappush(self._heap, item)
            return True
        if rank < -self._heap[0][0]:
            heapq.heapreplace(self._heap, item)
            return True
        return False

    def items(self) -> list[tuple[float, int]]:
        return sorted((-r, -v) for r, v in self._heap)

    def __len__(self) -> int:
        return len(self._heap)


class FrozenSet:
    """Grow-only set of frozen client ids."""

    def __init__(self, n: int, members: Iterable[int] = ()):
        self.mask = np.zeros(n, dtype=bool)
        self.add_many(members)

    def add(self, v: int) -> None:
        self.mask[v] = True

    def add_many(self, vs: Iterable[int]) -> None:
        arr = np.fromiter(vs, dtype=np.int64) if not isinstance(vs, np.ndarray) else vs
        self.mask[arr] = True

    def __contains__(self, v: int) -> bool:
        return bool(self.mask[v])

    def __len__(self) -> int:
        return int(self.mask.sum())

    def members(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


def _exclude_mask(exclude, n_hint: int, ids: np.ndarray) -> np.ndarray:
    """Boolean array over ``ids``: True where the id is excluded."""
    if exclude is None:
        return np.zeros(len(ids), dtype=bool)
    if isinstance(exclude, FrozenSet):
        return exclude.mask[ids]
    if isinstance(exclude, np.ndarray) and exclude.dtype == bool:
        return exclude[ids]
    ex = set(int(x) for x in exclude)
    if not ex:
        return np.zeros(len(ids), dtype=bool)
    return np.fromiter((int(i) in ex for i in ids), dtype=bool, count=len(ids))


@dataclass
class AdsSketch:
    """Sketch of one vertex: parallel arrays sorted by (distance, id)."""

    owner: int
    vertices: np.ndarray
    distances: np.ndarray
    ranks: np.ndarray
    k: int
    clean: bool = True

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.int64)
        self.distances = np.asarray(self.distances, dtype=np.float64)
        self.ranks = np.asarray(self.ranks, dtype=np.float64)
        self._weights: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.vertices)

    def sorted(self) -> "AdsSketch":
        order = np.lexsort((self.vertices, self.distances))
        return AdsSketch(self.owner, self.vertices[order], self.distances[order],
                         self.ranks[order], self.k, self.clean)

    def entries(self) -> list[tuple[int, float, float]]:
        """(vertex, rank, distance) triples in stored order."""
        return list(zip(self.vertices.tolist(), self.ranks.tolist(), self.distances.tolist()))

    def hip_weights(self) -> np.ndarray:
        if not self.clean:
            raise ContractError("HIP weights requested on an unclean sketch")
        if self._weights is None:
            offs = np.array([0, len(self.vertices)], dtype=np.int64)
            self._weights = kernels.hip_weights(offs, np.ascontiguousarray(self.ranks), self.k)
        return self._weights

    def is_clean(self) -> bool:
        """Check the bottom-k condition directly."""
        s = self.sorted()
        bk: list[float] = []
        for r in s.ranks.tolist():
            if len(bk) == s.k and r >= -bk[0]:
                return False
            if len(bk) < s.k:
                heapq.heappush(bk, -r)
            elif r < -bk[0]:
                heapq.heapreplace(bk, -r)
        return True


def cleanup_ads(sketch: AdsSketch, k: int | None = None) -> AdsSketch:
    """Drop entries whose rank is not below the k-th smallest rank of the
    entries preceding them in (distance, id) order. Idempotent."""
    k = sketch.k if k is None else k
    s = sketch.sorted()
    # keep only the shortest distance per vertex
    _, first = np.unique(s.vertices, return_index=True)
    if len(first) != len(s.vertices):
        keep = np.zeros(len(s.vertices), dtype=bool)
        keep[first] = True
        s = AdsSketch(s.owner, s.vertices[keep], s.distances[keep], s.ranks[keep], k, False)
    bk: list[float] = []
    keep = np.zeros(len(s.vertices), dtype=bool)
    for i, r in enumerate(s.ranks.tolist()):
        if len(bk) < k:
            keep[i] = True
            heapq.heappush(bk, -r)
        elif r < -bk[0]:
            keep[i] = True
            heapq.heapreplace(bk, -r)
    return AdsSketch(s.owner, s.vertices[keep], s.distances[keep], s.ranks[keep], k, True)


def hip_estimate(sketch: AdsSketch, d: float, exclude=None) -> float:
    """Estimated number of vertices within distance ``d`` that are not excluded.

    Each retained entry counts 1/p, with p its inclusion threshold; entries
    are filtered after sampling, so excluded vertices simply drop out.
    """
    if not sketch.clean:
        raise ContractError("hip_estimate on an unclean sketch; run cleanup_ads first")
    w = sketch.hip_weights()
    hi = int(np.searchsorted(sketch.distances, within(d), side="right"))
    if hi == 0:
        return 0.0
    ex = _exclude_mask(exclude, 0, sketch.vertices[:hi])
    return math.fsum(w[:hi][~ex].tolist())


def bucket_count(sketch: AdsSketch, d: float, eps: float, exclude=None,
                 lower: float | None = None) -> float:
    """Estimated count in the annulus (lower, d], clamped at 0.

    ``lower`` defaults to d/(1+eps); pass ``-inf`` for the innermost bucket
    so it also absorbs everything closer.
    """
    lo = d / (1.0 + eps) if lower is None else lower
    if lo == -math.inf:
        return max(0.0, hip_estimate(sketch, d, exclude))
    return max(0.0, hip_estimate(sketch, d, exclude) - hip_estimate(sketch, lo, exclude))


class AdsSketches:
    """All sketches of a graph in CSR layout.

    ``offsets[v]:offsets[v+1]`` slices the entries of v, sorted by
    (distance, id). ``weights`` holds the HIP inverse probabilities.
    """

    def __init__(self, n: int, k: int, seed: int, offsets: np.ndarray, vertices: np.ndarray,
                 distances: np.ndarray, ranks: np.ndarray | None = None):
        self.n = n
        self.k = k
        self.seed = seed
        self.offsets = np.ascontiguousarray(offsets, dtype=np.int64)
        self.vertices = np.ascontiguousarray(vertices, dtype=np.int32)
        self.distances = np.ascontiguousarray(distances, dtype=np.float64)
        if ranks is None:
            ranks = hash_ranks(n, seed)[self.vertices]
        self.ranks = np.ascontiguousarray(ranks, dtype=np.float64)
        self._weights: np.ndarray | None = None

    @property
    def weights(self) -> np.ndarray:
        if self._weights is None:
            self._weights = kernels.hip_weights(self.offsets, self.ranks, self.k)
        return self._weights

    def __len__(self) -> int:
        return self.n

    def size(self, v: int) -> int:
        return int(self.offsets[v + 1] - self.offsets[v])

    def mean_size(self) -> float:
        return float(len(self.vertices)) / max(self.n, 1)

    def sketch(self, v: int) -> AdsSketch:
        a, b = self.offsets[v], self.offsets[v + 1]
        s = AdsSketch(v, self.vertices[a:b], self.distances[a:b], self.ranks[a:b], self.k, True)
        s._weights = self.weights[a:b]
        return s

    def __iter__(self) -> Iterator[AdsSketch]:
        for v in range(self.n):
            yield self.sketch(v)

    def hip_estimate(self, v: int, d: float, exclude=None) -> float:
        a, b = int(self.offsets[v]), int(self.offsets[v + 1])
        hi = a + int(np.searchsorted(self.distances[a:b], within(d), side="right"))
        if hi == a:
            return 0.0
        ex = _exclude_mask(exclude, self.n, self.vertices[a:hi])
        return math.fsum(self.weights[a:hi][~ex].tolist())

    def equals(self, other: "AdsSketches") -> bool:
        return (self.n == other.n and self.k == other.k
                and np.array_equal(self.offsets, other.offsets)
                and np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.distances, other.distances)
                and np.array_equal(self.ranks, other.ranks))

    @classmethod
    def from_sketches(cls, n: int, k: int, seed: int, sketches: list[AdsSketch]) -> "AdsSketches":
        by_owner = {s.owner: s.sorted() for s in sketches}
        counts = np.array([len(by_owner[v]) if v in by_owner else 0 for v in range(n)],
                          dtype=np.int64)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        parts = [by_owner[v] for v in range(n) if v in by_owner]
        cat = (lambda a: np.concatenate(a) if a else np.zeros(0))
        return cls(n, k, seed, offsets,
                   cat([p.vertices for p in parts]).astype(np.int32),
                   cat([p.distances for p in parts]),
                   cat([p.ranks for p in parts]))


def _check_k(k: int) -> None:
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValidationError("k must be a positive integer")


def build_ads_sequential(g: Graph, k: int, seed: int, method: str = "pruned",
                         cutoff: float = math.inf) -> AdsSketches:
    """Sequential sketch construction.

    ``pruned`` runs one pruned search per source in increasing rank order
    (compiled kernel). ``literal`` runs a full traversal from every vertex
    and scans vertices by increasing (distance, id), inserting u whenever
    its rank beats the current bottom-k maximum; it is quadratic and meant
    as a reference. Entries farther than ``cutoff`` are left out.
    """
    _check_k(k)
    ranks = hash_ranks(g.n, seed)
    trav = g.reverse()
    if method == "pruned":
        offsets, verts, dists = kernels.ads_build(trav.indptr, trav.indices, trav.weights,
                                                  g.weighted, ranks, int(k), float(cutoff))
        return AdsSketches(g.n, int(k), seed, offsets, verts, dists, ranks[verts])
    if method != "literal":
        raise ValidationError(f"unknown method {method!r}")
    sketches = []
    for v in range(g.n):
        d = kernels.sssp(g.indptr, g.indices, g.weights, v, float(cutoff), g.weighted)
        reach = np.flatnonzero(np.isfinite(d))
        order = reach[np.lexsort((reach, d[reach]))]
        bk = BottomK(k)
        keep = []
        for u in order.tolist():
            if ranks[u] < bk.max_rank():
                keep.append(u)
                bk.add(float(ranks[u]), u)
        keep_a = np.asarray(keep, dtype=np.int64)
        sketches.append(AdsSketch(v, keep_a, d[keep_a], ranks[keep_a], int(k)))
    return AdsSketches.from_sketches(g.n, int(k), seed, sketches)


class _AdsProgram(VertexProgram):
    """Entry propagation: each vertex keeps raw (u, d) entries and forwards
    every admitted or shortened entry to its in-neighbors."""

    def __init__(self, g: Graph, k: int, ranks: np.ndarray, threshold: int):
        self.g = g
        self.trav = g.reverse()
        self.k = k
        self.ranks = ranks
        self.threshold = threshold
        self.entries: list[dict[int, float]] = [dict() for _ in range(g.n)]
        self.cleanups = 0

    def _admissible(self, v: int, u: int, d: float) -> bool:
        # count entries with a smaller key and a smaller rank
        ru = self.ranks[u]
        k = self.k
        cnt = 0
        for w, dw in self.entries[v].items():
            if (dw < d or (dw == d and w < u)) and self.ranks[w] < ru:
                cnt += 1
                if cnt >= k:
                    return False
        return True

    def _cleanup(self, v: int) -> None:
        ent = self.entries[v]
        s = cleanup_ads(AdsSketch(v, np.fromiter(ent.keys(), dtype=np.int64, count=len(ent)),
                                  np.fromiter(ent.values(), dtype=np.float64, count=len(ent)),
                                  self.ranks[np.fromiter(ent.keys(), dtype=np.int64,
                                                         count=len(ent))], self.k, False))
        self.entries[v] = dict(zip(s.vertices.tolist(), s.distances.tolist()))
        self.cleanups += 1

    def compute_shard(self, shard: ShardContext) -> None:
        src_l: list[int] = []
        ent_l: list[int] = []
        dist_l: list[float] = []
        if shard.superstep == 0:
            for v in range(shard.lo, shard.hi):
                self.entries[v][v] = 0.0
                src_l.append(v)
                ent_l.append(v)
                dist_l.append(0.0)
        else:
            box = shard.channel("ads")
            if box:
                dst, u, d = box["dst"], box["u"], box["d"]
                order = np.lexsort((u, d, dst))
                prev = None
                for i in order.tolist():
                    v, uu, dd = int(dst[i]), int(u[i]), float(d[i])
                    if prev == (v, uu):
                        continue  # same vertex, longer or equal copy
                    prev = (v, uu)
                    ent = self.entries[v]
                    old = ent.get(uu)
                    if old is not None and old <= dd:
                        continue
                    if old is None and not self._admissible(v, uu, dd):
                        continue
                    ent[uu] = dd
                    src_l.append(v)
                    ent_l.append(uu)
                    dist_l.append(dd)
                    if len(ent) > self.threshold:
                        self._cleanup(v)
        shard.halt_all()
        if not src_l:
            return
        src = np.asarray(src_l, dtype=np.int64)
        pos, nbr, w = expand_arcs(self.trav, src)
        if len(nbr):
            shard.send_batch("ads", src[pos], nbr, u=np.asarray(ent_l, dtype=np.int64)[pos],
                             d=np.asarray(dist_l)[pos] + w)


def build_ads_bsp(g: Graph, k: int, seed: int, cleanup_threshold: int | None = None,
                  workers: int = 1, max_supersteps: int | None = None) -> AdsSketches:
    """Sketch construction as a superstep program.

    Every vertex starts with its own entry at distance 0 and forwards each
    admitted entry (u, d) as (u, d + w) over reversed arcs. Incoming
    entries of one superstep are processed in (distance, id) order. An
    entry is admitted if fewer than k current entries with a smaller key
    have a smaller rank; a shorter copy of an already present vertex
    replaces it. Raw lists are cleaned when they exceed
    ``cleanup_threshold`` (default 4*k*ceil(log2 n)) and once at the end.

    On unweighted graphs arrivals come in breadth-first order and the
    result equals :func:`build_ads_sequential` before the final cleanup.
    Pure Python; intended for graphs up to a few thousand vertices.
    """
    _check_k(k)
    ranks = hash_ranks(g.n, seed)
    if cleanup_threshold is None:
        cleanup_threshold = 4 * k * max(1, math.ceil(math.log2(max(g.n, 2))))
    prog = _AdsProgram(g, int(k), ranks, int(cleanup_threshold))
    cap = max_supersteps if max_supersteps is not None else 4 * g.n + 8
    res = run(g, prog, aggregators=[Aggregator("unused", "or")], workers=workers,
              max_supersteps=cap)
    if not res.converged:
        raise NonConvergenceError(f"sketch propagation did not settle in {cap} supersteps")
    sketches = []
    for v in range(g.n):
        ent = prog.entries[v]
        ids = np.fromiter(ent.keys(), dtype=np.int64, count=len(ent))
        raw = AdsSketch(v, ids, np.fromiter(ent.values(), dtype=np.float64, count=len(ent)),
                        ranks[ids], int(k), False)
        sketches.append(cleanup_ads(raw))
    out = AdsSketches.from_sketches(g.n, int(k), seed, sketches)
    out.metrics = res.metrics  # type: ignore[attr-defined]
    out.cleanups = prog.cleanups  # type: ignore[attr-defined]
    return out


_MAGIC = b"ADSK\x01"


def save_sketches(sk: AdsSketches, path: str | os.PathLike, fmt: str = "binary") -> None:
    """Write a header then one record per vertex.

    ``binary``: magic, header (n, k, seed), then per vertex the id, the
    entry count and count x (int32 id, float64 rank, float64 distance).
    ``jsonl``: a header object then ``{"v": id, "entries": [[u, r, d], ...]}``.
    """
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<qqQ", sk.n, sk.k, sk.seed & _M64))
            rec = np.dtype([("u", "<i4"), ("r", "<f8"), ("d", "<f8")])
            for v in range(sk.n):
                a, b = sk.offsets[v], sk.offsets[v + 1]
                fh.write(struct.pack("<qq", v, b - a))
                arr = np.empty(b - a, dtype=rec)
                arr["u"] = sk.vertices[a:b]
                arr["r"] = sk.ranks[a:b]
                arr["d"] = sk.distances[a:b]
                fh.write(arr.tobytes())
    elif fmt == "jsonl":
        with open(path, "w") as fh:
            fh.write(json.dumps({"n": sk.n, "k": sk.k, "seed": sk.seed}) + "\n")
            for v in range(sk.n):
                a, b = sk.offsets[v], sk.offsets[v + 1]
                entries = [[u, r, d] for u, r, d in zip(sk.vertices[a:b].tolist(),
                                                        sk.ranks[a:b].tolist(),
                                                        sk.distances[a:b].tolist())]
                fh.write(json.dumps({"v": v, "entries": entries}) + "\n")
    else:
        raise ValidationError(f"unknown sketch format {fmt!r}")


def load_sketches(path: str | os.PathLike) -> AdsSketches:
    with open(path, "rb") as fh:
        head = fh.read(len(_MAGIC))
        if head == _MAGIC:
            n, k, seed = struct.unpack("<qqQ", fh.read(24))
            rec = np.dtype([("u", "<i4"), ("r", "<f8"), ("d", "<f8")])
            parts = []
            counts = np.zeros(n, dtype=np.int64)
            for _ in range(n):
                v, c = struct.unpack("<qq", fh.read(16))
                counts[v] = c
                parts.append((v, np.frombuffer(fh.read(c * rec.itemsize), dtype=rec)))
            parts.sort(key=lambda p: p[0])
            data = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, dtype=rec)
            offsets = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(counts, out=offsets[1:])
            return AdsSketches(n, k, seed, offsets, data["u"].astype(np.int32),
                               data["d"].astype(np.float64), data["r"].astype(np.float64))
    with open(path) as fh:
        header = json.loads(fh.readline())
        n, k, seed = header["n"], header["k"], header["seed"]
        sketches = []
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            ent = obj["entries"]
            sketches.append(AdsSketch(obj["v"], [e[0] for e in ent], [e[2] for e in ent],
                                      [e[1] for e in ent], k))
    return AdsSketches.from_sketches(n, k, seed, sketches)
