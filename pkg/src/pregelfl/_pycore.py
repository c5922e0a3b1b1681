"""Pure-Python kernels.

Reference implementations of the hot loops. The compiled module ``_core``
exposes the same functions with the same signatures and must return
identical results; tests compare the two directly.
"""

from __future__ import annotations

import heapq
from collections import deque

import numpy as np

INF = float("inf")


def sssp(indptr, indices, weights, src, cutoff, weighted):
    n = len(indptr) - 1
    dist = np.full(n, INF)
    if weighted:
        d = [INF] * n
        d[src] = 0.0
        heap = [(0.0, src)]
        while heap:
            dv, v = heapq.heappop(heap)
            if dv > d[v]:
                continue
            for e in range(indptr[v], indptr[v + 1]):
                u = int(indices[e])
                nd = dv + weights[e]
                if nd < d[u] and nd <= cutoff:
                    d[u] = nd
                    heapq.heappush(heap, (nd, u))
        dist[:] = d
        return dist
    d = [-1] * n
    d[src] = 0
    q = deque([src])
    while q:
        v = q.popleft()
        nd = d[v] + 1
        if nd > cutoff:
            continue
        for e in range(indptr[v], indptr[v + 1]):
            u = int(indices[e])
            if d[u] < 0:
                d[u] = nd
                q.append(u)
    arr = np.asarray(d, dtype=np.float64)
    dist[arr >= 0] = arr[arr >= 0]
    return dist


def multi_source(indptr, indices, weights, weighted, sources, init):
    """Dijkstra from several seeded sources; ties go to the smaller source id."""
    n = len(indptr) - 1
    d = [INF] * n
    owner = [-1] * n
    heap = []
    for s, val in zip(sources.tolist(), init.tolist()):
        if val < d[s] or (val == d[s] and s < owner[s]):
            d[s] = val
            owner[s] = s
            heap.append((val, s, s))
    heapq.heapify(heap)
    while heap:
        dv, o, v = heapq.heappop(heap)
        if dv != d[v] or o != owner[v]:
            continue
        for e in range(indptr[v], indptr[v + 1]):
            u = int(indices[e])
            nd = dv + (weights[e] if weighted else 1.0)
            if nd < d[u] or (nd == d[u] and o < owner[u]):
                d[u] = nd
                owner[u] = o
                heapq.heappush(heap, (nd, o, u))
    return np.asarray(d, dtype=np.float64), np.asarray(owner, dtype=np.int64)


def distance_rows(indptr, indices, weights, weighted, sources, out):
    """Fill ``out[i]`` with distances from ``sources[i]`` (float32 or float64)."""
    for i, s in enumerate(sources.tolist()):
        out[i] = sssp(indptr, indices, weights, s, INF, weighted)


def ads_build(indptr, indices, weights, weighted, ranks, k, cutoff=INF):
    """Pruned traversals in increasing rank order.

    ``indptr``/``indices`` describe the traversal direction: an entry
    (u, d) lands in the sketch of every v reached from u at distance d.
    Keys are compared as (distance, id). Returns CSR arrays
    (offsets, entry vertex, entry distance) sorted by (owner, d, id).
    Nothing beyond ``cutoff`` is recorded.
    """
    n = len(indptr) - 1
    order = np.argsort(ranks, kind="stable").tolist()
    heaps = [[] for _ in range(n)]  # max-heaps of (-d, -id)
    own, ent, dst = [], [], []

    def admit(v, dv, u):
        h = heaps[v]
        if len(h) < k:
            heapq.heappush(h, (-dv, -u))
        elif (dv, u) < (-h[0][0], -h[0][1]):
            heapq.heapreplace(h, (-dv, -u))
        else:
            return False
        own.append(v)
        ent.append(u)
        dst.append(dv)
        return True

    for u in order:
        if weighted:
            seen = {u: 0.0}
            heap = [(0.0, u)]
            done = set()
            while heap:
                dv, v = heapq.heappop(heap)
                if v in done or dv > seen[v]:
                    continue
                done.add(v)
                if not admit(v, dv, u):
                    continue
                for e in range(indptr[v], indptr[v + 1]):
                    x = int(indices[e])
                    nd = dv + weights[e]
                    if nd <= cutoff and x not in done and nd < seen.get(x, INF):
                        seen[x] = nd
                        heapq.heappush(heap, (nd, x))
        else:
            seen = {u}
            frontier = [u]
            level = 0.0
            while frontier and level <= cutoff:
                nxt = []
                for v in frontier:
                    if not admit(v, level, u):
                        continue
                    for e in range(indptr[v], indptr[v + 1]):
                        x = int(indices[e])
                        if x not in seen:
                            seen.add(x)
                            nxt.append(x)
                frontier = nxt
                level += 1.0
    own_a = np.asarray(own, dtype=np.int64)
    ent_a = np.asarray(ent, dtype=np.int64)
    dst_a = np.asarray(dst, dtype=np.float64)
    perm = np.lexsort((ent_a, dst_a, own_a))
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(own_a, minlength=n), out=offsets[1:])
    return offsets, ent_a[perm].astype(np.int32), dst_a[perm]


def hip_weights(offsets, ent_rank, k):
    """Inverse inclusion probabilities along each sketch in stored order."""
    out = np.empty(len(ent_rank))
    for v in range(len(offsets) - 1):
        h = []  # max-heap of the k smallest ranks seen so far
        for e in range(offsets[v], offsets[v + 1]):
            p = -h[0] if len(h) == k else 1.0
            out[e] = 1.0 / p
            r = ent_rank[e]
            if len(h) < k:
                heapq.heappush(h, -r)
            elif r < -h[0]:
                heapq.heapreplace(h, -r)
    return out


def ladder_step(fac, offsets, ent_v, ent_d, ent_w, live, ptr, inner, q, alpha, reach, first):
    """Add one ladder step's contribution to ``q`` for each facility in ``fac``.

    ``reach`` is the next ladder value. ``live[c]`` is 1 for unfrozen
    clients. ``ptr[f]`` indexes the first entry of f beyond the current
    interior radius and ``inner[f]`` is the live weight before it. Interior
    entries each gain reach - alpha; entries in the outer shell
    (alpha, reach] gain reach - d.
    """
    for f in fac.tolist():
        end = offsets[f + 1]
        p = ptr[f]
        if first:
            t = 0.0
            e = offsets[f]
            while e < end and ent_d[e] <= reach:
                if live[ent_v[e]]:
                    t += ent_w[e] * (reach - ent_d[e])
                e += 1
            w_in = 0.0
            while p < end and ent_d[p] <= alpha:
                if live[ent_v[p]]:
                    w_in += ent_w[p]
                p += 1
            inner[f] = w_in
            ptr[f] = p
            q[f] += t
            continue
        w_in = inner[f]
        while p < end and ent_d[p] <= alpha:
            if live[ent_v[p]]:
                w_in += ent_w[p]
            p += 1
        if w_in < 0.0:
            w_in = 0.0
        inner[f] = w_in
        ptr[f] = p
        t = (reach - alpha) * w_in
        e = p
        while e < end and ent_d[e] <= reach:
            if live[ent_v[e]]:
                t += ent_w[e] * (reach - ent_d[e])
            e += 1
        q[f] += t


def frozen_delta(clients, rev_offsets, rev_fac, rev_pos, ptr, inner, ent_w, skip):
    """Remove newly frozen clients from interior weights of unopened facilities."""
    for c in clients.tolist():
        for j in range(rev_offsets[c], rev_offsets[c + 1]):
            f = rev_fac[j]
            if skip[f]:
                continue
            pos = rev_pos[j]
            if pos < ptr[f]:
                inner[f] -= ent_w[pos]


def ls_nearest(dcf, open_idx):
    """Nearest and second-nearest open facility per client (ties: smaller id).

    ``dcf`` is client-major (|C| x |F|); ``open_idx`` is sorted ascending.
    """
    sub = np.asarray(dcf[:, open_idx], dtype=np.float64)
    nc = sub.shape[0]
    pos = np.argmin(sub, axis=1)
    best = sub[np.arange(nc), pos]
    if len(open_idx) > 1:
        sub[np.arange(nc), pos] = INF
        second = sub.min(axis=1)
    else:
        second = np.full(nc, INF)
    return np.asarray(open_idx, dtype=np.int64)[pos], best, second


def ls_best_move(dcf, costs, open_mask, assigned, best, second):
    """Best add, drop or swap move under the current open set.

    Returns (kind, f_in, f_out, delta) with kind 0=none, 1=add, 2=drop,
    3=swap. Ties go to the earlier kind, then the smaller ids.
    """
    nc, nf = dcf.shape
    open_mask = np.asarray(open_mask).astype(bool)
    closed = np.flatnonzero(~open_mask)
    opened = np.flatnonzero(open_mask)
    step = max(1, 4_000_000 // max(nf, 1))
    add = np.zeros(nf)
    colsum = np.zeros(nf)
    for lo in range(0, nc, step):
        blk = np.asarray(dcf[lo:lo + step], dtype=np.float64)
        add += np.minimum(blk - best[lo:lo + step, None], 0.0).sum(axis=0)
        colsum += blk.sum(axis=0)
    add += costs
    add[open_mask] = INF
    kind, fi, fo, delta = 0, -1, -1, 0.0
    if len(closed):
        f = int(np.argmin(add))
        if add[f] < delta:
            kind, fi, fo, delta = 1, f, -1, float(add[f])
    if len(opened) == 1:
        g = int(opened[0])
        if len(closed):
            vals = costs - costs[g] + colsum - best.sum()
            vals[open_mask] = INF
            f = int(np.argmin(vals))
            if vals[f] < delta:
                kind, fi, fo, delta = 3, f, g, float(vals[f])
        return kind, fi, fo, delta
    slack = second - best
    drop = np.bincount(assigned, weights=slack, minlength=nf) - costs
    for g in opened.tolist():
        if drop[g] < delta:
            kind, fi, fo, delta = 2, -1, g, float(drop[g])
    if not len(closed):
        return kind, fi, fo, delta
    swap_best = (INF, -1, -1)
    for g in opened.tolist():
        mine = np.flatnonzero(assigned == g)
        vals = add + drop[g]
        if len(mine):
            blk = np.asarray(dcf[mine], dtype=np.float64)
            sec = second[mine][:, None]
            extra = np.where(blk < sec, sec - np.maximum(blk, best[mine][:, None]), 0.0)
            vals = vals - extra.sum(axis=0)
        f = int(np.argmin(vals))
        if vals[f] < swap_best[0]:
            swap_best = (float(vals[f]), f, g)
    if swap_best[0] < delta:
        kind, fi, fo, delta = 3, swap_best[1], swap_best[2], swap_best[0]
    return kind, fi, fo, delta
