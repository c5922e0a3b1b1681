"""Immutable CSR graphs, edge-list I/O and shortest-path helpers."""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import kernels
from .errors import ParseError, ValidationError

__all__ = [
    "Graph",
    "CostAssignment",
    "load_edge_list",
    "write_edge_list",
    "single_source_distances",
    "distances_from",
]


class Graph:
    """Compressed adjacency of a (di)graph with positive edge weights.

    Out-adjacency of ``v`` is ``indices[indptr[v]:indptr[v+1]]`` with the
    matching ``weights``. Undirected graphs store both directions; ``m``
    counts each undirected edge once and ``num_arcs`` counts stored entries.
    """

    __slots__ = ("n", "m", "directed", "weighted", "indptr", "indices", "weights",
                 "external_ids", "_reverse", "_digest")

    def __init__(self, n: int, indptr: np.ndarray, indices: np.ndarray, weights: np.ndarray,
                 directed: bool, weighted: bool, external_ids: np.ndarray | None = None):
        self.n = int(n)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int32)
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        for arr in (self.indptr, self.indices, self.weights):
            arr.setflags(write=False)
        self.directed = bool(directed)
        self.weighted = bool(weighted)
        arcs = len(self.indices)
        self.m = arcs if self.directed else arcs // 2
        self.external_ids = external_ids
        self._reverse: Graph | None = None
        self._digest: str | None = None

    @classmethod
    def from_edges(cls, n: int, src: Iterable[int], dst: Iterable[int],
                   weight: Iterable[float] | None = None, *, directed: bool = False,
                   weighted: bool | None = None,
                   external_ids: np.ndarray | None = None) -> "Graph":
        """Build from parallel edge arrays.

        Self-loops are dropped, undirected input is symmetrized and
        duplicate (u, v) pairs keep the minimum weight.
        """
        src = np.asarray(list(src) if not isinstance(src, np.ndarray) else src, dtype=np.int64)
        dst = np.asarray(list(dst) if not isinstance(dst, np.ndarray) else dst, dtype=np.int64)
        if weighted is None:
            weighted = weight is not None
        if weight is None:
            w = np.ones(len(src))
        else:
            w = np.asarray(list(weight) if not isinstance(weight, np.ndarray) else weight,
                           dtype=np.float64)
        if not (len(src) == len(dst) == len(w)):
            raise ValidationError("edge arrays differ in length")
        if n < 0:
            raise ValidationError("vertex count must be non-negative")
        if len(src) and (src.min() < 0 or dst.min() < 0 or max(src.max(), dst.max()) >= n):
            raise ValidationError("edge endpoint outside [0, n)")
        if len(w) and not np.all(w > 0):
            raise ValidationError("edge weights must be strictly positive")
        if not weighted:
            w = np.ones(len(src))
        keep = src != dst
        src, dst, w = src[keep], dst[keep], w[keep]
        if not directed:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
            w = np.concatenate([w, w])
        order = np.lexsort((w, dst, src))
        src, dst, w = src[order], dst[order], w[order]
        if len(src):
            first = np.ones(len(src), dtype=bool)
            first[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
            src, dst, w = src[first], dst[first], w[first]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
        return cls(n, indptr, dst, w, directed, weighted, external_ids)

    @property
    def num_arcs(self) -> int:
        return len(self.indices)

    def degree(self, v: int) -> int:
        return int(self.indptr[v + 1] - self.indptr[v])

    def neighbors(self, v: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[v], self.indptr[v + 1]
        return self.indices[lo:hi], self.weights[lo:hi]

    def arcs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All stored (src, dst, weight) triples."""
        src = np.repeat(np.arange(self.n, dtype=np.int64), np.diff(self.indptr))
        return src, self.indices.astype(np.int64), self.weights.copy()

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edge list with each undirected edge once (u < v)."""
        src, dst, w = self.arcs()
        if not self.directed:
            keep = src < dst
            src, dst, w = src[keep], dst[keep], w[keep]
        return src, dst, w

    def reverse(self) -> "Graph":
        """Graph with every arc flipped (the graph itself when undirected)."""
        if not self.directed:
            return self
        if self._reverse is None:
            src, dst, w = self.arcs()
            rev = Graph.from_edges(self.n, dst, src, w, directed=True, weighted=self.weighted,
                                   external_ids=self.external_ids)
            rev._reverse = self
            self._reverse = rev
        return self._reverse

    def with_weights(self, src: np.ndarray, dst: np.ndarray, w: np.ndarray) -> "Graph":
        return Graph.from_edges(self.n, src, dst, w, directed=self.directed, weighted=True,
                                external_ids=self.external_ids)

    def min_weight(self) -> float:
        return float(self.weights.min()) if self.num_arcs else 1.0

    def mean_weight(self) -> float:
        return float(self.weights.mean()) if self.num_arcs else 1.0

    def digest(self) -> str:
        """Content hash, stable across runs; used as a cache key."""
        if self._digest is None:
            h = hashlib.sha1()
            h.update(f"{self.n}:{int(self.directed)}:{int(self.weighted)}".encode())
            for arr in (self.indptr, self.indices, self.weights):
                h.update(np.ascontiguousarray(arr).tobytes())
            self._digest = h.hexdigest()
        return self._digest

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return (self.n == other.n and self.directed == other.directed
                and self.weighted == other.weighted
                and np.array_equal(self.indptr, other.indptr)
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.weights, other.weights))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        kind = "directed" if self.directed else "undirected"
        wt = "weighted" if self.weighted else "unweighted"
        return f"Graph(n={self.n}, m={self.m}, {kind}, {wt})"


@dataclass
class CostAssignment:
    """Facility opening costs plus facility/client role flags."""

    cost: np.ndarray
    is_facility: np.ndarray
    is_client: np.ndarray
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=np.float64)
        self.is_facility = np.asarray(self.is_facility, dtype=bool)
        self.is_client = np.asarray(self.is_client, dtype=bool)
        n = len(self.cost)
        if len(self.is_facility) != n or len(self.is_client) != n:
            raise ValidationError("cost and role arrays differ in length")
        if np.any(self.cost[self.is_facility] < 0) or np.any(np.isnan(self.cost)):
            raise ValidationError("facility costs must be non-negative")
        if not self.is_facility.any():
            raise ValidationError("at least one facility is required")
        if not self.is_client.any():
            raise ValidationError("at least one client is required")

    @classmethod
    def uniform(cls, n: int, cost: float, facilities=None, clients=None) -> "CostAssignment":
        fac = np.ones(n, dtype=bool) if facilities is None else _mask(n, facilities)
        cli = np.ones(n, dtype=bool) if clients is None else _mask(n, clients)
        return cls(np.full(n, float(cost)), fac, cli)

    @classmethod
    def default_for(cls, g: Graph) -> "CostAssignment":
        """Uniform cost: mean edge weight times ceil(log2 n)."""
        return cls.uniform(g.n, default_cost(g))

    @classmethod
    def from_file(cls, path: str | os.PathLike, n: int) -> "CostAssignment":
        """Read ``vertex cost`` lines; listed vertices become facilities.

        Every vertex is a client. Lines starting with ``#`` are skipped.
        """
        cost = np.zeros(n)
        fac = np.zeros(n, dtype=bool)
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise ParseError("expected 'vertex cost'", lineno)
                try:
                    v, c = int(parts[0]), float(parts[1])
                except ValueError as exc:
                    raise ParseError(str(exc), lineno) from None
                if not 0 <= v < n:
                    raise ParseError(f"vertex {v} outside [0, {n})", lineno)
                if c < 0 or math.isnan(c):
                    raise ValidationError(f"line {lineno}: negative facility cost")
                cost[v] = c
                fac[v] = True
        return cls(cost, fac, np.ones(n, dtype=bool))

    @property
    def facilities(self) -> np.ndarray:
        return np.flatnonzero(self.is_facility)

    @property
    def clients(self) -> np.ndarray:
        return np.flatnonzero(self.is_client)

    @property
    def pair_count(self) -> int:
        return int(self.is_facility.sum()) * int(self.is_client.sum())


def _mask(n: int, members) -> np.ndarray:
    out = np.zeros(n, dtype=bool)
    out[np.asarray(list(members), dtype=np.int64)] = True
    return out


def default_cost(g: Graph) -> float:
    return g.mean_weight() * max(1, math.ceil(math.log2(max(g.n, 2))))


def load_edge_list(path: str | os.PathLike, directed: bool = False,
                   weighted: bool = False) -> Graph:
    """Parse ``u v [w]`` lines; external ids are remapped densely.

    The dense-to-external mapping is kept in ``Graph.external_ids`` and can
    be written with :func:`write_id_map`.
    """
    ids: dict[int, int] = {}
    src: list[int] = []
    dst: list[int] = []
    wts: list[float] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ParseError(f"expected 'u v [w]', got {len(parts)} fields", lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
                w = float(parts[2]) if len(parts) == 3 else 1.0
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if weighted and not w > 0:
                raise ValidationError(f"line {lineno}: edge weight must be positive, got {w}")
            src.append(ids.setdefault(u, len(ids)))
            dst.append(ids.setdefault(v, len(ids)))
            wts.append(w if weighted else 1.0)
    external = np.fromiter(ids.keys(), dtype=np.int64, count=len(ids))
    return Graph.from_edges(len(ids), np.asarray(src, dtype=np.int64),
                            np.asarray(dst, dtype=np.int64), np.asarray(wts),
                            directed=directed, weighted=weighted, external_ids=external)


def write_edge_list(g: Graph, path: str | os.PathLike, with_weights: bool | None = None) -> None:
    """Write one line per edge (once per undirected edge)."""
    if with_weights is None:
        with_weights = g.weighted
    src, dst, w = g.edges()
    with open(path, "w") as fh:
        kind = "directed" if g.directed else "undirected"
        fh.write(f"# n={g.n} m={g.m} {kind}\n")
        if with_weights:
            for a, b, c in zip(src.tolist(), dst.tolist(), w.tolist()):
                fh.write(f"{a} {b} {c!r}\n")
        else:
            for a, b in zip(src.tolist(), dst.tolist()):
                fh.write(f"{a} {b}\n")


def write_id_map(g: Graph, path: str | os.PathLike) -> None:
    """Two-column ``dense external`` sidecar."""
    ext = g.external_ids if g.external_ids is not None else np.arange(g.n)
    with open(path, "w") as fh:
        for i, e in enumerate(ext.tolist()):
            fh.write(f"{i} {e}\n")


DIST_RTOL = 1e-12


def within(d: float) -> float:
    """Upper bound used for "distance at most d" queries.

    One shortest path summed from either end can differ in the last bits,
    so ball queries accept a relative slack of ``DIST_RTOL``.
    """
    return d + DIST_RTOL * abs(d)


def distances_from(g: Graph, src: int, cutoff: float | None = None) -> np.ndarray:
    """Distance array from ``src`` (inf when unreachable or beyond cutoff)."""
    if not 0 <= src < g.n:
        raise ValidationError(f"source {src} outside [0, {g.n})")
    cut = math.inf if cutoff is None else float(cutoff)
    return kernels.sssp(g.indptr, g.indices, g.weights, int(src), cut, g.weighted)


def single_source_distances(g: Graph, src: int, cutoff: float | None = None) -> dict[int, float]:
    """Map of reachable vertices to their shortest-path distance from ``src``."""
    d = distances_from(g, src, cutoff)
    hit = np.flatnonzero(np.isfinite(d))
    return {int(v): float(d[v]) for v in hit}
