"""Sparse-to-dense completion of the plane-match flow.

Unfilled non-occluded pixels are first claimed by neighboring plane models
through best-first region growing on color-consistency cost; whatever
remains is completed by a locally-weighted affine interpolation over
geodesic-nearest seeds (an edge-aware stand-in for the full
variational interpolator), and the two fields merge by warped consistency.
"""

import heapq

import numpy as np

from . import core
from .homography import apply_safe
from .imgcore import FlowField
from .occlusion import warped_consistency_error
from .plane_match import color_consistency_loss

DEFAULT_K_SEEDS = 25
DEFAULT_EDGE_LAMBDA = 100.0
DEFAULT_SIGMA_GEO = 20.0


def propagate_models(merged, image_a, image_b, epsilon):
    """Grow plane models into unfilled pixels by minimum consistency cost.

    A priority queue over (loss, pixel, model) candidates across 4-connected
    boundaries pops the global minimum; a pixel is claimed when still
    unfilled and its loss under the candidate model is strictly below
    epsilon, then its unfilled neighbors are enqueued under the same model.
    Already-filled pixels are never modified.
    """
    out = merged.copy()
    h, w = out.model_id.shape
    filled = out.model_id >= 0
    models = out.models

    heap = []

    def push_neighbors(x, y, mid):
        hmodel = models[mid].h_fwd
        cand = [(nx, ny) for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1))
                if 0 <= nx < w and 0 <= ny < h and not filled[ny, nx]]
        if not cand:
            return
        cxs = np.array([c[0] for c in cand])
        cys = np.array([c[1] for c in cand])
        losses = color_consistency_loss(image_a, image_b, hmodel, cxs, cys, epsilon)
        for (nx, ny), loss in zip(cand, losses):
            if loss < epsilon:
                heapq.heappush(heap, (float(loss), ny * w + nx, mid))

    ys, xs = np.nonzero(filled)
    boundary = np.zeros((h, w), dtype=bool)
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        sx = np.clip(xs + dx, 0, w - 1)
        sy = np.clip(ys + dy, 0, h - 1)
        boundary[ys, xs] |= ~filled[sy, sx]
    bys, bxs = np.nonzero(boundary & filled)
    for x, y in zip(bxs, bys):
        push_neighbors(int(x), int(y), int(out.model_id[y, x]))

    while heap:
        loss, flat, mid = heapq.heappop(heap)
        y, x = divmod(flat, w)
        if filled[y, x]:
            continue
        filled[y, x] = True
        out.model_id[y, x] = mid
        out.loss[y, x] = loss
        out.level[y, x] = models[mid].level
        pt = apply_safe(models[mid].h_fwd.m, np.array([[float(x), float(y)]]))
        out.flow.u[y, x] = pt[0, 0] - x
        out.flow.v[y, x] = pt[0, 1] - y
        out.flow.valid[y, x] = True
        push_neighbors(x, y, mid)

    return out


def guide_edge_weights(guide, lam=DEFAULT_EDGE_LAMBDA):
    """Per-pixel traversal weight 1 + lam * gradient magnitude of the guide."""
    gray = guide.data.mean(axis=-1)
    gy, gx = np.gradient(gray)
    return 1.0 + lam * np.hypot(gx, gy)


def edge_aware_interpolate(flow, guide, k=DEFAULT_K_SEEDS, lam=DEFAULT_EDGE_LAMBDA,
                           sigma=DEFAULT_SIGMA_GEO, exclude_seeds=None):
    """Fill invalid pixels by weighted affine fits over geodesic-near seeds.

    For each invalid pixel the k nearest valid seeds by geodesic distance
    (edge costs from the guide image gradient) are fitted with an affine
    flow model under weights exp(-distance / sigma); rank-deficient
    neighborhoods fall back to the weighted mean of the seed flows.  Valid
    pixels pass through unchanged.
    """
    h, w = flow.u.shape
    seed_mask = flow.valid.copy()
    if exclude_seeds is not None:
        seed_mask &= ~exclude_seeds
    seed_idx = np.nonzero(seed_mask.ravel())[0].astype(np.int64)
    if seed_idx.size < 4:
        raise ValueError("interpolation needs at least 4 seed pixels")

    holes = ~flow.valid
    if not holes.any():
        return flow.copy()

    nodew = guide_edge_weights(guide, lam)
    dist, sidx = core.knn_geodesic(np.ascontiguousarray(nodew), seed_idx, int(k))

    hole_flat = np.nonzero(holes.ravel())[0]
    d = dist[hole_flat]
    s = sidx[hole_flat]
    have = s >= 0
    s_safe = np.where(have, s, 0)
    seed_flat = seed_idx[s_safe]
    sx = (seed_flat % w).astype(np.float64)
    sy = (seed_flat // w).astype(np.float64)
    su = flow.u.ravel()[seed_flat]
    sv = flow.v.ravel()[seed_flat]

    weight = np.where(have, np.exp(-np.where(have, d, 0.0) / sigma), 0.0)
    px = (hole_flat % w).astype(np.float64)
    py = (hole_flat // w).astype(np.float64)

    # center coordinates on the query pixel: the affine prediction there is
    # just the constant term
    ax = sx - px[:, None]
    ay = sy - py[:, None]
    ones = np.ones_like(ax)
    A = np.stack([ax, ay, ones], axis=-1)  # (N, k, 3)
    Aw = A * weight[:, :, None]
    M = np.einsum("nki,nkj->nij", Aw, A)
    rhs_u = np.einsum("nki,nk->ni", Aw, su)
    rhs_v = np.einsum("nki,nk->ni", Aw, sv)

    det = np.linalg.det(M)
    scale = np.maximum(np.trace(M, axis1=1, axis2=2) / 3.0, 1e-12) ** 3
    good = np.abs(det) > 1e-10 * scale

    u_fill = np.empty(hole_flat.size)
    v_fill = np.empty(hole_flat.size)
    if good.any():
        rhs = np.stack([rhs_u[good], rhs_v[good]], axis=-1)  # (N, 3, 2)
        sol = np.linalg.solve(M[good], rhs)
        u_fill[good] = sol[:, 2, 0]
        v_fill[good] = sol[:, 2, 1]
    if (~good).any():
        wsum = np.maximum(weight[~good].sum(axis=1), 1e-300)
        u_fill[~good] = (weight[~good] * su[~good]).sum(axis=1) / wsum
        v_fill[~good] = (weight[~good] * sv[~good]).sum(axis=1) / wsum

    out = flow.copy()
    out.u.ravel()[hole_flat] = u_fill
    out.v.ravel()[hole_flat] = v_fill
    out.valid.ravel()[hole_flat] = True
    return out


def merge_by_consistency(flow_a, flow_b, image_a, image_b):
    """Pointwise pick of the flow with lower warped consistency error.

    Ties (and pixels where only one field is valid) keep flow_a when it is
    valid; a pixel valid in neither field is a coverage gap.
    """
    if flow_a.u.shape != flow_b.u.shape:
        raise ValueError("flow dimensions differ")
    gap = ~flow_a.valid & ~flow_b.valid
    if gap.any():
        raise ValueError("coverage gap: pixels valid in neither input")

    err_a = warped_consistency_error(flow_a, image_a, image_b)
    err_b = warped_consistency_error(flow_b, image_a, image_b)
    err_a[~flow_a.valid] = np.inf
    err_b[~flow_b.valid] = np.inf
    pick_b = err_b < err_a  # strict: ties keep a
    pick_b |= ~flow_a.valid

    u = np.where(pick_b, flow_b.u, flow_a.u)
    v = np.where(pick_b, flow_b.v, flow_a.v)
    return FlowField(u, v, np.ones_like(u, dtype=bool))
