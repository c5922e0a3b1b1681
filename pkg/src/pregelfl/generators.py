"""Synthetic graph generators.

All generators are deterministic for a fixed seed. Forest Fire draws only
``random.Random.random()`` so its output does not depend on library
sampling helpers.
"""

from __future__ import annotations

import math
import random

import numpy as np

from .errors import ValidationError
from .graph import Graph

__all__ = [
    "forest_fire",
    "rmat",
    "path_graph",
    "star_graph",
    "cycle_graph",
    "gnm_random",
    "assign_uniform_weights",
]

_SEED_MASK = (1 << 64) - 1


def _geometric(rng: random.Random, log_p: float) -> int:
    # number of failures before the first success, success prob 1 - p
    if log_p == -math.inf:
        return 0
    return int(math.log(1.0 - rng.random()) / log_p)


def _pick(rng: random.Random, cands: list[int], k: int) -> list[int]:
    if k >= len(cands):
        return cands
    # partial Fisher-Yates
    for i in range(k):
        j = i + int(rng.random() * (len(cands) - i))
        cands[i], cands[j] = cands[j], cands[i]
    return cands[:k]


def forest_fire(n: int, p_fw: float = 0.3, p_bw: float = 0.4, seed: int = 0,
                directed: bool = False) -> Graph:
    """Forest Fire growth with geometric forward/backward fan-out.

    Each new vertex picks a uniform ambassador among older vertices, then
    burns outward: every burning vertex x ignites Geom(p_fw) unburned
    out-neighbors and Geom(p_bw) unburned in-neighbors of x (means
    p/(1-p)). The new vertex links to every burned vertex. Graphs are
    symmetrized unless ``directed``.
    """
    if n < 1:
        raise ValidationError("n must be at least 1")
    for name, p in (("p_fw", p_fw), ("p_bw", p_bw)):
        if not 0.0 <= p < 1.0:
            raise ValidationError(f"{name} must lie in [0, 1), got {p}")
    rng = random.Random(seed & _SEED_MASK)
    lf = math.log(p_fw) if p_fw > 0 else -math.inf
    lb = math.log(p_bw) if p_bw > 0 else -math.inf
    out: list[list[int]] = [[] for _ in range(n)]
    inn: list[list[int]] = [[] for _ in range(n)]
    src: list[int] = []
    dst: list[int] = []
    for v in range(1, n):
        amb = int(rng.random() * v)
        burned = {amb}
        queue = [amb]
        head = 0
        while head < len(queue):
            x = queue[head]
            head += 1
            k_fw = _geometric(rng, lf)
            k_bw = _geometric(rng, lb)
            if k_fw:
                cands = [y for y in out[x] if y not in burned]
                for y in _pick(rng, cands, k_fw):
                    burned.add(y)
                    queue.append(y)
            if k_bw:
                cands = [y for y in inn[x] if y not in burned]
                for y in _pick(rng, cands, k_bw):
                    burned.add(y)
                    queue.append(y)
        for y in queue:
            out[v].append(y)
            inn[y].append(v)
            src.append(v)
            dst.append(y)
    return Graph.from_edges(n, np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64),
                            directed=directed, weighted=False)


def rmat(scale: int, edges: int, a: float = 0.45, b: float = 0.15, c: float = 0.15,
         d: float = 0.25, seed: int = 0, directed: bool = False) -> Graph:
    """Recursive-matrix graph on 2**scale vertices from ``edges`` draws.

    Self-loops and duplicates are removed afterwards, so the final edge
    count is below the budget.
    """
    if scale < 0:
        raise ValidationError("scale must be non-negative")
    if edges < 0:
        raise ValidationError("edge budget must be non-negative")
    probs = np.array([a, b, c, d], dtype=np.float64)
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValidationError(f"quadrant probabilities must sum to 1, got {probs.sum()!r}")
    n = 1 << scale
    rng = np.random.default_rng(seed & _SEED_MASK)
    src = np.zeros(edges, dtype=np.int64)
    dst = np.zeros(edges, dtype=np.int64)
    cum = np.cumsum(probs)
    chunk = 1 << 20
    for lo in range(0, edges, chunk):
        hi = min(edges, lo + chunk)
        s = np.zeros(hi - lo, dtype=np.int64)
        t = np.zeros(hi - lo, dtype=np.int64)
        for _ in range(scale):
            q = np.searchsorted(cum, rng.random(hi - lo), side="right")
            q = np.minimum(q, 3)
            s = (s << 1) | (q >> 1)
            t = (t << 1) | (q & 1)
        src[lo:hi] = s
        dst[lo:hi] = t
    return Graph.from_edges(n, src, dst, directed=directed, weighted=False)


def path_graph(n: int, weights=None, directed: bool = False) -> Graph:
    src = np.arange(n - 1)
    w = None if weights is None else np.asarray(weights, dtype=np.float64)
    return Graph.from_edges(n, src, src + 1, w, directed=directed)


def cycle_graph(n: int, directed: bool = False) -> Graph:
    src = np.arange(n)
    return Graph.from_edges(n, src, (src + 1) % n, directed=directed)


def star_graph(leaves: int, weights=None) -> Graph:
    """Vertex 0 joined to vertices 1..leaves."""
    w = None if weights is None else np.asarray(weights, dtype=np.float64)
    return Graph.from_edges(leaves + 1, np.zeros(leaves, dtype=np.int64),
                            np.arange(1, leaves + 1), w)


def gnm_random(n: int, m: int, seed: int = 0, directed: bool = False,
               connected: bool = False) -> Graph:
    """Uniform random edges (duplicates collapse, so the count may fall short).

    With ``connected`` a random spanning tree is added first.
    """
    rng = np.random.default_rng(seed & _SEED_MASK)
    src = rng.integers(0, n, size=m) if n else np.zeros(0, dtype=np.int64)
    dst = rng.integers(0, n, size=m) if n else np.zeros(0, dtype=np.int64)
    if connected and n > 1:
        perm = rng.permutation(n)
        parent = perm[(rng.random(n - 1) * np.arange(1, n)).astype(np.int64)]
        src = np.concatenate([src, perm[1:]])
        dst = np.concatenate([dst, parent])
        if directed:
            src, dst = np.concatenate([src, dst[-(n - 1):]]), np.concatenate([dst, perm[1:]])
    return Graph.from_edges(n, src, dst, directed=directed, weighted=False)


def assign_uniform_weights(g: Graph, lo: float = 1.0, hi: float = 100.0, seed: int = 0) -> Graph:
    """Independent uniform weights in [lo, hi]; both directions of an
    undirected edge share one draw."""
    if not lo > 0:
        raise ValidationError("lower weight bound must be positive")
    if lo > hi:
        raise ValidationError("lower weight bound exceeds upper bound")
    rng = np.random.default_rng(seed & _SEED_MASK)
    src, dst, _ = g.edges()
    w = rng.uniform(lo, hi, size=len(src)) if hi > lo else np.full(len(src), float(lo))
    return g.with_weights(src, dst, w)
