# distutils: language = c++
"""Compiled kernels. Same contracts as ``_pycore``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY
from libcpp.vector cimport vector
from libcpp.queue cimport priority_queue
from libcpp.pair cimport pair

cnp.import_array()

ctypedef fused real_t:
    float
    double

ctypedef pair[double, int] dkey
ctypedef long long i64
ctypedef pair[i64, int] oinner
ctypedef pair[double, oinner] okey


def sssp(const long long[::1] indptr, const int[::1] indices, const double[::1] weights,
         long long src, double cutoff, bint weighted):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out = np.full(n, np.inf)
    cdef double[::1] d = out
    cdef priority_queue[dkey] pq
    cdef vector[int] queue
    cdef Py_ssize_t head = 0
    cdef long long e
    cdef int v, u
    cdef double dv, nd
    d[src] = 0.0
    if weighted:
        pq.push(dkey(-0.0, <int>src))
        while not pq.empty():
            dv = -pq.top().first
            v = pq.top().second
            pq.pop()
            if dv > d[v]:
                continue
            for e in range(indptr[v], indptr[v + 1]):
                u = indices[e]
                nd = dv + weights[e]
                if nd < d[u] and nd <= cutoff:
                    d[u] = nd
                    pq.push(dkey(-nd, u))
        return out
    queue.push_back(<int>src)
    while head < <Py_ssize_t>queue.size():
        v = queue[head]
        head += 1
        nd = d[v] + 1.0
        if nd > cutoff:
            continue
        for e in range(indptr[v], indptr[v + 1]):
            u = indices[e]
            if d[u] == INFINITY:
                d[u] = nd
                queue.push_back(u)
    return out


def multi_source(const long long[::1] indptr, const int[::1] indices, const double[::1] weights,
                 bint weighted, const long long[::1] sources, const double[::1] init):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    dist = np.full(n, np.inf)
    own = np.full(n, -1, dtype=np.int64)
    cdef double[::1] d = dist
    cdef long long[::1] owner = own
    cdef priority_queue[okey] pq
    cdef Py_ssize_t i
    cdef long long s, o, e
    cdef int v, u
    cdef double val, dv, nd
    for i in range(sources.shape[0]):
        s = sources[i]
        val = init[i]
        if val < d[s] or (val == d[s] and s < owner[s]):
            d[s] = val
            owner[s] = s
            pq.push(okey(-val, oinner(-s, <int>s)))
    while not pq.empty():
        dv = -pq.top().first
        o = -pq.top().second.first
        v = pq.top().second.second
        pq.pop()
        if dv != d[v] or o != owner[v]:
            continue
        for e in range(indptr[v], indptr[v + 1]):
            u = indices[e]
            nd = dv + (weights[e] if weighted else 1.0)
            if nd < d[u] or (nd == d[u] and o < owner[u]):
                d[u] = nd
                owner[u] = o
                pq.push(okey(-nd, oinner(-o, u)))
    return dist, own


def distance_rows(const long long[::1] indptr, const int[::1] indices, const double[::1] weights,
                  bint weighted, const long long[::1] sources, real_t[:, ::1] out):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, j, head
    cdef double[::1] d = np.empty(n)
    cdef vector[int] queue
    cdef priority_queue[dkey] pq
    cdef long long e
    cdef int v, u
    cdef double dv, nd
    for i in range(sources.shape[0]):
        for j in range(n):
            d[j] = INFINITY
        d[sources[i]] = 0.0
        if weighted:
            pq.push(dkey(-0.0, <int>sources[i]))
            while not pq.empty():
                dv = -pq.top().first
                v = pq.top().second
                pq.pop()
                if dv > d[v]:
                    continue
                for e in range(indptr[v], indptr[v + 1]):
                    u = indices[e]
                    nd = dv + weights[e]
                    if nd < d[u]:
                        d[u] = nd
                        pq.push(dkey(-nd, u))
        else:
            queue.clear()
            queue.push_back(<int>sources[i])
            head = 0
            while head < <Py_ssize_t>queue.size():
                v = queue[head]
                head += 1
                nd = d[v] + 1.0
                for e in range(indptr[v], indptr[v + 1]):
                    u = indices[e]
                    if d[u] == INFINITY:
                        d[u] = nd
                        queue.push_back(u)
        for j in range(n):
            out[i, j] = <real_t>d[j]


cdef inline bint key_less(double da, long long ia, double db, long long ib) noexcept nogil:
    return da < db or (da == db and ia < ib)


cdef inline void heap_sift_down(double* hd, int* hi, int size, int pos) noexcept nogil:
    # max-heap on (d, id)
    cdef int child, big
    cdef double td
    cdef int ti
    while True:
        child = 2 * pos + 1
        if child >= size:
            return
        big = child
        if child + 1 < size and key_less(hd[child], hi[child], hd[child + 1], hi[child + 1]):
            big = child + 1
        if key_less(hd[pos], hi[pos], hd[big], hi[big]):
            td = hd[pos]; hd[pos] = hd[big]; hd[big] = td
            ti = hi[pos]; hi[pos] = hi[big]; hi[big] = ti
            pos = big
        else:
            return


cdef inline void heap_sift_up(double* hd, int* hi, int pos) noexcept nogil:
    cdef int parent
    cdef double td
    cdef int ti
    while pos > 0:
        parent = (pos - 1) // 2
        if key_less(hd[parent], hi[parent], hd[pos], hi[pos]):
            td = hd[pos]; hd[pos] = hd[parent]; hd[parent] = td
            ti = hi[pos]; hi[pos] = hi[parent]; hi[parent] = ti
            pos = parent
        else:
            return


def ads_build(const long long[::1] indptr, const int[::1] indices, const double[::1] weights,
              bint weighted, const double[::1] ranks, int k, double cutoff=np.inf):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    order_arr = np.argsort(np.asarray(ranks), kind="stable").astype(np.int32)
    cdef int[::1] order = order_arr
    heap_d_arr = np.empty(n * k, dtype=np.float64)
    heap_i_arr = np.empty(n * k, dtype=np.int32)
    cdef double[::1] heap_d = heap_d_arr
    cdef int[::1] heap_i = heap_i_arr
    cdef int[::1] hsize = np.zeros(n, dtype=np.int32)
    cdef int[::1] stamp = np.full(n, -1, dtype=np.int32)
    cdef int[::1] done = np.full(n, -1, dtype=np.int32)
    cdef double[::1] dist = np.empty(n)
    cdef vector[int] own, ent
    cdef vector[double] dst
    cdef vector[int] frontier, nxt
    cdef priority_queue[dkey] pq
    cdef Py_ssize_t oi, fi
    cdef int u, v, x, sz
    cdef long long e
    cdef double dv, nd, level
    cdef double* hd
    cdef int* hi
    cdef bint admitted
    for oi in range(n):
        u = order[oi]
        if weighted:
            stamp[u] = <int>oi
            dist[u] = 0.0
            pq.push(dkey(-0.0, u))
            while not pq.empty():
                dv = -pq.top().first
                v = pq.top().second
                pq.pop()
                if done[v] == oi or dv > dist[v]:
                    continue
                done[v] = <int>oi
                hd = &heap_d[v * k]
                hi = &heap_i[v * k]
                sz = hsize[v]
                if sz < k:
                    hd[sz] = dv; hi[sz] = u
                    heap_sift_up(hd, hi, sz)
                    hsize[v] = sz + 1
                elif key_less(dv, u, hd[0], hi[0]):
                    hd[0] = dv; hi[0] = u
                    heap_sift_down(hd, hi, sz, 0)
                else:
                    continue
                own.push_back(v); ent.push_back(u); dst.push_back(dv)
                for e in range(indptr[v], indptr[v + 1]):
                    x = indices[e]
                    nd = dv + weights[e]
                    if nd > cutoff:
                        continue
                    if done[x] != oi and (stamp[x] != oi or nd < dist[x]):
                        stamp[x] = <int>oi
                        dist[x] = nd
                        pq.push(dkey(-nd, x))
        else:
            frontier.clear()
            frontier.push_back(u)
            stamp[u] = <int>oi
            level = 0.0
            while frontier.size() > 0 and level <= cutoff:
                nxt.clear()
                for fi in range(<Py_ssize_t>frontier.size()):
                    v = frontier[fi]
                    hd = &heap_d[v * k]
                    hi = &heap_i[v * k]
                    sz = hsize[v]
                    if sz < k:
                        hd[sz] = level; hi[sz] = u
                        heap_sift_up(hd, hi, sz)
                        hsize[v] = sz + 1
                    elif key_less(level, u, hd[0], hi[0]):
                        hd[0] = level; hi[0] = u
                        heap_sift_down(hd, hi, sz, 0)
                    else:
                        continue
                    own.push_back(v); ent.push_back(u); dst.push_back(level)
                    for e in range(indptr[v], indptr[v + 1]):
                        x = indices[e]
                        if stamp[x] != oi:
                            stamp[x] = <int>oi
                            nxt.push_back(x)
                frontier.swap(nxt)
                level += 1.0
    cdef Py_ssize_t m = own.size()
    own_a = np.empty(m, dtype=np.int64)
    ent_a = np.empty(m, dtype=np.int64)
    dst_a = np.empty(m, dtype=np.float64)
    cdef long long[::1] ov = own_a
    cdef long long[::1] ev = ent_a
    cdef double[::1] dvv = dst_a
    for oi in range(m):
        ov[oi] = own[oi]; ev[oi] = ent[oi]; dvv[oi] = dst[oi]
    perm = np.lexsort((ent_a, dst_a, own_a))
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(own_a, minlength=n), out=offsets[1:])
    return offsets, ent_a[perm].astype(np.int32), dst_a[perm]


cdef inline void rank_sift_down(double* h, int size, int pos) noexcept nogil:
    cdef int child, big
    cdef double t
    while True:
        child = 2 * pos + 1
        if child >= size:
            return
        big = child
        if child + 1 < size and h[child + 1] > h[child]:
            big = child + 1
        if h[big] > h[pos]:
            t = h[pos]; h[pos] = h[big]; h[big] = t
            pos = big
        else:
            return


cdef inline void rank_sift_up(double* h, int pos) noexcept nogil:
    cdef int parent
    cdef double t
    while pos > 0:
        parent = (pos - 1) // 2
        if h[pos] > h[parent]:
            t = h[pos]; h[pos] = h[parent]; h[parent] = t
            pos = parent
        else:
            return


def hip_weights(const long long[::1] offsets, const double[::1] ent_rank, int k):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    out_arr = np.empty(ent_rank.shape[0])
    cdef double[::1] out = out_arr
    cdef vector[double] heap
    heap.resize(k)
    cdef double* h = heap.data()
    cdef Py_ssize_t v
    cdef long long e
    cdef int sz
    cdef double r
    with nogil:
        for v in range(n):
            sz = 0
            for e in range(offsets[v], offsets[v + 1]):
                if sz == k:
                    out[e] = 1.0 / h[0]
                else:
                    out[e] = 1.0
                r = ent_rank[e]
                if sz < k:
                    h[sz] = r
                    rank_sift_up(h, sz)
                    sz += 1
                elif r < h[0]:
                    h[0] = r
                    rank_sift_down(h, sz, 0)
    return out_arr


def ladder_step(const long long[::1] fac, const long long[::1] offsets, const int[::1] ent_v,
                const double[::1] ent_d, const double[::1] ent_w, const unsigned char[::1] live,
                long long[::1] ptr, double[::1] inner, double[::1] q,
                double alpha, double reach, bint first):
    cdef Py_ssize_t i
    cdef long long f, e, p, end
    cdef double t, w_in
    with nogil:
        for i in range(fac.shape[0]):
            f = fac[i]
            end = offsets[f + 1]
            p = ptr[f]
            if first:
                t = 0.0
                e = offsets[f]
                while e < end and ent_d[e] <= reach:
                    if live[ent_v[e]]:
                        t = t + ent_w[e] * (reach - ent_d[e])
                    e += 1
                w_in = 0.0
                while p < end and ent_d[p] <= alpha:
                    if live[ent_v[p]]:
                        w_in = w_in + ent_w[p]
                    p += 1
                inner[f] = w_in
                ptr[f] = p
                q[f] = q[f] + t
                continue
            w_in = inner[f]
            while p < end and ent_d[p] <= alpha:
                if live[ent_v[p]]:
                    w_in = w_in + ent_w[p]
                p += 1
            if w_in < 0.0:
                w_in = 0.0
            inner[f] = w_in
            ptr[f] = p
            t = (reach - alpha) * w_in
            e = p
            while e < end and ent_d[e] <= reach:
                if live[ent_v[e]]:
                    t = t + ent_w[e] * (reach - ent_d[e])
                e += 1
            q[f] = q[f] + t


def frozen_delta(const long long[::1] clients, const long long[::1] rev_offsets,
                 const long long[::1] rev_fac, const long long[::1] rev_pos,
                 const long long[::1] ptr, double[::1] inner, const double[::1] ent_w,
                 const unsigned char[::1] skip):
    cdef Py_ssize_t i
    cdef long long c, j, f, pos
    with nogil:
        for i in range(clients.shape[0]):
            c = clients[i]
            for j in range(rev_offsets[c], rev_offsets[c + 1]):
                f = rev_fac[j]
                if skip[f]:
                    continue
                pos = rev_pos[j]
                if pos < ptr[f]:
                    inner[f] = inner[f] - ent_w[pos]


def ls_nearest(real_t[:, ::1] dcf, const long long[::1] open_idx):
    cdef Py_ssize_t nc = dcf.shape[0]
    cdef Py_ssize_t no = open_idx.shape[0]
    asg = np.empty(nc, dtype=np.int64)
    b = np.empty(nc)
    s = np.empty(nc)
    cdef long long[::1] assigned = asg
    cdef double[::1] best = b
    cdef double[::1] second = s
    cdef Py_ssize_t c, j
    cdef double d, b1, b2
    cdef long long a
    with nogil:
        for c in range(nc):
            b1 = INFINITY
            b2 = INFINITY
            a = open_idx[0]
            for j in range(no):
                d = dcf[c, open_idx[j]]
                if d < b1:
                    b2 = b1
                    b1 = d
                    a = open_idx[j]
                elif d < b2:
                    b2 = d
            assigned[c] = a
            best[c] = b1
            second[c] = b2
    return asg, b, s


def ls_best_move(real_t[:, ::1] dcf, const double[::1] costs, const unsigned char[::1] open_mask,
                 const long long[::1] assigned, const double[::1] best, const double[::1] second):
    cdef Py_ssize_t nc = dcf.shape[0]
    cdef Py_ssize_t nf = dcf.shape[1]
    cdef double[::1] add = np.zeros(nf)
    cdef double[::1] colsum = np.zeros(nf)
    cdef double[::1] drop = np.zeros(nf)
    cdef double[::1] extra = np.zeros(nf)
    cdef Py_ssize_t c, f, g, j, i
    cdef double d, bc, sc, val, total_best = 0.0
    cdef int kind = 0
    cdef long long fi = -1, fo = -1
    cdef double delta = 0.0
    cdef Py_ssize_t n_open = 0, n_closed = 0
    cdef double sw_val = INFINITY
    cdef long long sw_f = -1, sw_g = -1
    cdef vector[long long] opened
    cdef vector[vector[long long]] members
    cdef vector[long long] touched
    for f in range(nf):
        if open_mask[f]:
            opened.push_back(f)
    n_open = opened.size()
    n_closed = nf - n_open
    with nogil:
        for c in range(nc):
            bc = best[c]
            total_best = total_best + bc
            for f in range(nf):
                d = dcf[c, f]
                if d < bc:
                    add[f] = add[f] + (d - bc)
                colsum[f] = colsum[f] + d
        for f in range(nf):
            if open_mask[f]:
                add[f] = INFINITY
            else:
                add[f] = add[f] + costs[f]
        if n_closed > 0:
            for f in range(nf):
                if add[f] < delta:
                    kind = 1; fi = f; fo = -1; delta = add[f]
    if n_open == 1:
        g = opened[0]
        if n_closed > 0:
            for f in range(nf):
                if open_mask[f]:
                    continue
                val = costs[f] - costs[g] + colsum[f] - total_best
                if val < sw_val:
                    sw_val = val; sw_f = f
            if sw_val < delta:
                kind = 3; fi = sw_f; fo = g; delta = sw_val
        return kind, fi, fo, delta
    members.resize(nf)
    for c in range(nc):
        drop[assigned[c]] += second[c] - best[c]
        members[assigned[c]].push_back(c)
    for j in range(n_open):
        g = opened[j]
        drop[g] = drop[g] - costs[g]
        if drop[g] < delta:
            kind = 2; fi = -1; fo = g; delta = drop[g]
    if n_closed == 0:
        return kind, fi, fo, delta
    for j in range(n_open):
        g = opened[j]
        for i in range(<Py_ssize_t>members[g].size()):
            c = members[g][i]
            bc = best[c]
            sc = second[c]
            for f in range(nf):
                d = dcf[c, f]
                if d < sc:
                    extra[f] = extra[f] + (sc - (d if d > bc else bc))
        for f in range(nf):
            val = add[f] + drop[g] - extra[f]
            extra[f] = 0.0
            if val < sw_val:
                sw_val = val; sw_f = f; sw_g = g
    if sw_val < delta:
        kind = 3; fi = sw_f; fo = sw_g; delta = sw_val
    return kind, fi, fo, delta
