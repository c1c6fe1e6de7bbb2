# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: correspondence-field search and K-nearest geodesic seeds.

The pure-Python module ``_core_py`` implements the same algorithms with the
same PRNG and the same floating-point accumulation order, so both backends
produce bit-identical output (asserted by the parity tests).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs
from libc.stdlib cimport free, malloc

cnp.import_array()

ctypedef unsigned long long u64

cdef u64 MULT = 0x2545F4914F6CDD1DULL


cdef inline u64 _seed_state(u64 seed) nogil:
    # splitmix64 scramble so nearby seeds give unrelated streams
    cdef u64 z = seed + 0x9E3779B97F4A7C15ULL
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    z = z ^ (z >> 31)
    if z == 0:
        z = 0x9E3779B97F4A7C15ULL
    return z


cdef inline u64 _next(u64 *state) nogil:
    # xorshift64*
    cdef u64 x = state[0]
    x ^= x >> 12
    x ^= x << 25
    x ^= x >> 27
    state[0] = x
    return x * MULT


cdef inline long _rand_below(u64 *state, long n) nogil:
    return <long> ((_next(state) >> 11) % <u64> n)


cdef inline double _patch_cost(const double[:, :, ::1] a, const double[:, :, ::1] b,
                               long py, long px, long qy, long qx, long radius) nogil:
    cdef long h1 = a.shape[0], w1 = a.shape[1], c = a.shape[2]
    cdef long h2 = b.shape[0], w2 = b.shape[1]
    cdef long dy, dx, ch, ay, ax, by, bx
    cdef double s = 0.0
    for dy in range(-radius, radius + 1):
        ay = py + dy
        if ay < 0:
            ay = 0
        elif ay > h1 - 1:
            ay = h1 - 1
        by = qy + dy
        if by < 0:
            by = 0
        elif by > h2 - 1:
            by = h2 - 1
        for dx in range(-radius, radius + 1):
            ax = px + dx
            if ax < 0:
                ax = 0
            elif ax > w1 - 1:
                ax = w1 - 1
            bx = qx + dx
            if bx < 0:
                bx = 0
            elif bx > w2 - 1:
                bx = w2 - 1
            for ch in range(c):
                s += fabs(a[ay, ax, ch] - b[by, bx, ch])
    cdef long side = 2 * radius + 1
    return s / (c * side * side)


def patch_cost_at(double[:, :, ::1] a, double[:, :, ::1] b,
                  long py, long px, long qy, long qx, long radius):
    """Mean absolute difference between border-clamped patches at p and q."""
    return _patch_cost(a, b, py, px, qy, qx, radius)


def nnf_search(double[:, :, ::1] a, double[:, :, ::1] b,
               long radius, long iterations, double decay, u64 seed,
               const unsigned char[:, ::1] mask,
               const unsigned char[:, ::1] seed_valid,
               const int[:, ::1] seed_u, const int[:, ::1] seed_v):
    """Randomized correspondence search from image a into image b.

    Random init (or seeded init), then alternating scan-order propagation and
    exponentially decaying random search.  Masked pixels keep their seed
    offsets verbatim but still act as propagation sources.  Returns integer
    offsets (u, v), the per-pixel patch cost, and the total cost after each
    iteration.
    """
    cdef long h1 = a.shape[0], w1 = a.shape[1]
    cdef long h2 = b.shape[0], w2 = b.shape[1]

    off_u_arr = np.empty((h1, w1), dtype=np.int32)
    off_v_arr = np.empty((h1, w1), dtype=np.int32)
    cost_arr = np.empty((h1, w1), dtype=np.float64)
    totals_arr = np.zeros(max(iterations, 1), dtype=np.float64)

    cdef int[:, ::1] off_u = off_u_arr
    cdef int[:, ::1] off_v = off_v_arr
    cdef double[:, ::1] cost = cost_arr
    cdef double[::1] totals = totals_arr

    cdef u64 state = _seed_state(seed)
    cdef long x, y, u, v, qx, qy, it, k, nx, ny, cu, cv, ri, du, dv
    cdef long best_u, best_v
    cdef double best_c, c, r, rmax, total
    cdef long x0, x1, xstep, y0, y1, ystep, dnx, dny

    with nogil:
        for y in range(h1):
            for x in range(w1):
                if mask[y, x]:
                    u = seed_u[y, x]
                    v = seed_v[y, x]
                elif seed_valid[y, x]:
                    u = seed_u[y, x]
                    v = seed_v[y, x]
                    qx = x + u
                    qy = y + v
                    if qx < 0:
                        qx = 0
                    elif qx > w2 - 1:
                        qx = w2 - 1
                    if qy < 0:
                        qy = 0
                    elif qy > h2 - 1:
                        qy = h2 - 1
                    u = qx - x
                    v = qy - y
                else:
                    qx = _rand_below(&state, w2)
                    qy = _rand_below(&state, h2)
                    u = qx - x
                    v = qy - y
                off_u[y, x] = <int> u
                off_v[y, x] = <int> v
                cost[y, x] = _patch_cost(a, b, y, x, y + v, x + u, radius)

        rmax = <double> (w2 if w2 > h2 else h2)

        for it in range(iterations):
            if it % 2 == 0:
                y0 = 0; y1 = h1; ystep = 1
                x0 = 0; x1 = w1; xstep = 1
                dnx = -1; dny = -1
            else:
                y0 = h1 - 1; y1 = -1; ystep = -1
                x0 = w1 - 1; x1 = -1; xstep = -1
                dnx = 1; dny = 1

            y = y0
            while y != y1:
                x = x0
                while x != x1:
                    if mask[y, x]:
                        x += xstep
                        continue
                    best_u = off_u[y, x]
                    best_v = off_v[y, x]
                    best_c = cost[y, x]

                    for k in range(2):
                        if k == 0:
                            nx = x + dnx; ny = y
                        else:
                            nx = x; ny = y + dny
                        if nx < 0 or nx >= w1 or ny < 0 or ny >= h1:
                            continue
                        cu = off_u[ny, nx]
                        cv = off_v[ny, nx]
                        qx = x + cu
                        qy = y + cv
                        if qx < 0 or qx >= w2 or qy < 0 or qy >= h2:
                            continue
                        if cu == best_u and cv == best_v:
                            continue
                        c = _patch_cost(a, b, y, x, qy, qx, radius)
                        if c < best_c:
                            best_c = c
                            best_u = cu
                            best_v = cv

                    r = rmax
                    while r >= 1.0:
                        ri = <long> r
                        du = _rand_below(&state, 2 * ri + 1) - ri
                        dv = _rand_below(&state, 2 * ri + 1) - ri
                        cu = best_u + du
                        cv = best_v + dv
                        qx = x + cu
                        qy = y + cv
                        if (0 <= qx < w2 and 0 <= qy < h2
                                and not (cu == best_u and cv == best_v)):
                            c = _patch_cost(a, b, y, x, qy, qx, radius)
                            if c < best_c:
                                best_c = c
                                best_u = cu
                                best_v = cv
                        r *= decay

                    off_u[y, x] = <int> best_u
                    off_v[y, x] = <int> best_v
                    cost[y, x] = best_c
                    x += xstep
                y += ystep

            total = 0.0
            for y in range(h1):
                for x in range(w1):
                    total += cost[y, x]
            totals[it] = total

    return off_u_arr, off_v_arr, cost_arr, totals_arr


# ---------------------------------------------------------------------------
# K-nearest seeds by geodesic distance (multi-label Dijkstra on the 4-grid)
# ---------------------------------------------------------------------------

cdef struct HeapEntry:
    double d
    long p
    long s


cdef inline bint _entry_lt(HeapEntry a, HeapEntry b) nogil:
    if a.d != b.d:
        return a.d < b.d
    if a.p != b.p:
        return a.p < b.p
    return a.s < b.s


cdef struct Heap:
    HeapEntry *data
    long size
    long cap


cdef inline int _heap_push(Heap *h, double d, long p, long s) nogil:
    cdef long i, parent
    cdef HeapEntry e
    cdef HeapEntry *nd
    if h.size == h.cap:
        h.cap *= 2
        nd = <HeapEntry *> malloc(h.cap * sizeof(HeapEntry))
        if nd == NULL:
            return -1
        for i in range(h.size):
            nd[i] = h.data[i]
        free(h.data)
        h.data = nd
    e.d = d; e.p = p; e.s = s
    i = h.size
    h.size += 1
    while i > 0:
        parent = (i - 1) // 2
        if _entry_lt(e, h.data[parent]):
            h.data[i] = h.data[parent]
            i = parent
        else:
            break
    h.data[i] = e
    return 0


cdef inline HeapEntry _heap_pop(Heap *h) nogil:
    cdef HeapEntry top = h.data[0]
    cdef HeapEntry last = h.data[h.size - 1]
    h.size -= 1
    cdef long i = 0, child
    while True:
        child = 2 * i + 1
        if child >= h.size:
            break
        if child + 1 < h.size and _entry_lt(h.data[child + 1], h.data[child]):
            child += 1
        if _entry_lt(h.data[child], last):
            h.data[i] = h.data[child]
            i = child
        else:
            break
    h.data[i] = last
    return top


def knn_geodesic(double[:, ::1] node_weight, long[::1] seed_pixels, long k):
    """K nearest seeds per pixel under geodesic distance on the 4-grid.

    Edge weight between adjacent pixels is the mean of their node weights.
    Returns (dist, seed_index) arrays of shape (H*W, k), padded with +inf / -1.
    """
    cdef long h = node_weight.shape[0], w = node_weight.shape[1]
    cdef long n = h * w
    cdef long ns = seed_pixels.shape[0]

    dist_arr = np.full((n, k), np.inf, dtype=np.float64)
    sidx_arr = np.full((n, k), -1, dtype=np.int64)
    counts_arr = np.zeros(n, dtype=np.int64)

    cdef double[:, ::1] dist = dist_arr
    cdef long[:, ::1] sidx = sidx_arr
    cdef long[::1] counts = counts_arr

    cdef Heap heap
    heap.cap = 4 * n if n > 0 else 16
    heap.size = 0
    heap.data = <HeapEntry *> malloc(heap.cap * sizeof(HeapEntry))
    if heap.data == NULL:
        raise MemoryError()

    cdef HeapEntry e
    cdef long i, p, s, cnt, px, py, j, q, qx, qy
    cdef double d, ew
    cdef long[4] dqx
    cdef long[4] dqy
    dqx[0] = 1; dqy[0] = 0
    dqx[1] = -1; dqy[1] = 0
    dqx[2] = 0; dqy[2] = 1
    dqx[3] = 0; dqy[3] = -1
    cdef bint dup
    cdef int rc = 0

    with nogil:
        for i in range(ns):
            rc = _heap_push(&heap, 0.0, seed_pixels[i], i)
            if rc != 0:
                break
        while rc == 0 and heap.size > 0:
            e = _heap_pop(&heap)
            p = e.p
            s = e.s
            d = e.d
            cnt = counts[p]
            if cnt >= k:
                continue
            dup = False
            for j in range(cnt):
                if sidx[p, j] == s:
                    dup = True
                    break
            if dup:
                continue
            dist[p, cnt] = d
            sidx[p, cnt] = s
            counts[p] = cnt + 1
            py = p // w
            px = p % w
            for j in range(4):
                qx = px + dqx[j]
                qy = py + dqy[j]
                if qx < 0 or qx >= w or qy < 0 or qy >= h:
                    continue
                q = qy * w + qx
                if counts[q] >= k:
                    continue
                ew = 0.5 * (node_weight[py, px] + node_weight[qy, qx])
                rc = _heap_push(&heap, d + ew, q, s)
                if rc != 0:
                    break

    free(heap.data)
    if rc != 0:
        raise MemoryError()
    return dist_arr, sidx_arr
