"""Pure-Python twin of the compiled kernels in ``_core``.

Same PRNG (splitmix64-seeded xorshift64*), same scan order, and the same
floating-point accumulation order, so results are bit-identical to the
compiled backend.  Orders of magnitude slower; intended as a portability
fallback and as a cross-check in the parity tests.
"""

import heapq

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_MULT = 0x2545F4914F6CDD1D


def _seed_state(seed):
    z = (seed + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    z = z ^ (z >> 31)
    if z == 0:
        z = 0x9E3779B97F4A7C15
    return z


class _Rng:
    __slots__ = ("state",)

    def __init__(self, seed):
        self.state = _seed_state(seed & _MASK)

    def next_raw(self):
        x = self.state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK
        x ^= x >> 27
        self.state = x
        return (x * _MULT) & _MASK

    def below(self, n):
        return (self.next_raw() >> 11) % n


def _clamp(v, lo, hi):
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def patch_cost_at(a, b, py, px, qy, qx, radius):
    """Mean absolute difference between border-clamped patches at p and q."""
    h1, w1, c = a.shape
    h2, w2, _ = b.shape
    s = 0.0
    for dy in range(-radius, radius + 1):
        ay = _clamp(py + dy, 0, h1 - 1)
        by = _clamp(qy + dy, 0, h2 - 1)
        for dx in range(-radius, radius + 1):
            ax = _clamp(px + dx, 0, w1 - 1)
            bx = _clamp(qx + dx, 0, w2 - 1)
            for ch in range(c):
                s += abs(a[ay, ax, ch] - b[by, bx, ch])
    side = 2 * radius + 1
    return s / (c * side * side)


def nnf_search(a, b, radius, iterations, decay, seed, mask, seed_valid, seed_u, seed_v):
    """See ``_core.nnf_search``; identical algorithm, pure Python."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    h1, w1 = a.shape[:2]
    h2, w2 = b.shape[:2]

    off_u = np.empty((h1, w1), dtype=np.int32)
    off_v = np.empty((h1, w1), dtype=np.int32)
    cost = np.empty((h1, w1), dtype=np.float64)
    totals = np.zeros(max(iterations, 1), dtype=np.float64)

    al = a.tolist()
    bl = b.tolist()

    def pcost(py, px, qy, qx):
        s = 0.0
        for dy in range(-radius, radius + 1):
            ay = _clamp(py + dy, 0, h1 - 1)
            by = _clamp(qy + dy, 0, h2 - 1)
            arow = al[ay]
            brow = bl[by]
            for dx in range(-radius, radius + 1):
                ax = _clamp(px + dx, 0, w1 - 1)
                bx = _clamp(qx + dx, 0, w2 - 1)
                pa = arow[ax]
                pb = brow[bx]
                for pav, pbv in zip(pa, pb):
                    s += abs(pav - pbv)
        side = 2 * radius + 1
        return s / (a.shape[2] * side * side)

    rng = _Rng(seed)

    for y in range(h1):
        for x in range(w1):
            if mask[y, x]:
                u = int(seed_u[y, x])
                v = int(seed_v[y, x])
            elif seed_valid[y, x]:
                u = int(seed_u[y, x])
                v = int(seed_v[y, x])
                qx = _clamp(x + u, 0, w2 - 1)
                qy = _clamp(y + v, 0, h2 - 1)
                u = qx - x
                v = qy - y
            else:
                qx = rng.below(w2)
                qy = rng.below(h2)
                u = qx - x
                v = qy - y
            off_u[y, x] = u
            off_v[y, x] = v
            cost[y, x] = pcost(y, x, y + v, x + u)

    rmax = float(max(w2, h2))

    for it in range(iterations):
        if it % 2 == 0:
            ys = range(h1)
            xs = range(w1)
            dnx = dny = -1
        else:
            ys = range(h1 - 1, -1, -1)
            xs = range(w1 - 1, -1, -1)
            dnx = dny = 1

        for y in ys:
            for x in xs:
                if mask[y, x]:
                    continue
                best_u = int(off_u[y, x])
                best_v = int(off_v[y, x])
                best_c = float(cost[y, x])

                for k in range(2):
                    if k == 0:
                        nx, ny = x + dnx, y
                    else:
                        nx, ny = x, y + dny
                    if nx < 0 or nx >= w1 or ny < 0 or ny >= h1:
                        continue
                    cu = int(off_u[ny, nx])
                    cv = int(off_v[ny, nx])
                    qx = x + cu
                    qy = y + cv
                    if qx < 0 or qx >= w2 or qy < 0 or qy >= h2:
                        continue
                    if cu == best_u and cv == best_v:
                        continue
                    c = pcost(y, x, qy, qx)
                    if c < best_c:
                        best_c, best_u, best_v = c, cu, cv

                r = rmax
                while r >= 1.0:
                    ri = int(r)
                    du = rng.below(2 * ri + 1) - ri
                    dv = rng.below(2 * ri + 1) - ri
                    cu = best_u + du
                    cv = best_v + dv
                    qx = x + cu
                    qy = y + cv
                    if (0 <= qx < w2 and 0 <= qy < h2
                            and not (cu == best_u and cv == best_v)):
                        c = pcost(y, x, qy, qx)
                        if c < best_c:
                            best_c, best_u, best_v = c, cu, cv
                    r *= decay

                off_u[y, x] = best_u
                off_v[y, x] = best_v
                cost[y, x] = best_c

        total = 0.0
        for y in range(h1):
            for x in range(w1):
                total += float(cost[y, x])
        totals[it] = total

    return off_u, off_v, cost, totals


def knn_geodesic(node_weight, seed_pixels, k):
    """See ``_core.knn_geodesic``; identical algorithm, pure Python."""
    h, w = node_weight.shape
    n = h * w
    dist = np.full((n, k), np.inf, dtype=np.float64)
    sidx = np.full((n, k), -1, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)

    nw = node_weight.tolist()
    heap = []
    for i, p in enumerate(seed_pixels):
        heapq.heappush(heap, (0.0, int(p), i))

    while heap:
        d, p, s = heapq.heappop(heap)
        cnt = counts[p]
        if cnt >= k:
            continue
        if s in sidx[p, :cnt]:
            continue
        dist[p, cnt] = d
        sidx[p, cnt] = s
        counts[p] = cnt + 1
        py, px = divmod(p, w)
        for qx, qy in ((px + 1, py), (px - 1, py), (px, py + 1), (px, py - 1)):
            if qx < 0 or qx >= w or qy < 0 or qy >= h:
                continue
            q = qy * w + qx
            if counts[q] >= k:
                continue
            ew = 0.5 * (nw[py][px] + nw[qy][qx])
            heapq.heappush(heap, (d + ew, q, s))

    return dist, sidx
