"""Occlusion cues and the final occlusion map.

Accidentally matched occluded regions are rejected by three cues: forward /
backward plane projection symmetry, many-to-one target coverage with higher
color-consistency error, and agreement between the geometric (RANSAC) and
photometric inlier sets.  Pixels conforming to no surviving plane model are
the occlusion signal; the final mask additionally thresholds the warped
color-consistency error of the dense flow.
"""

from dataclasses import dataclass, field

import numpy as np

from .imgcore import OcclusionMask, bilinear_sample

DEFAULT_TAU_AGREE = 0.3
DEFAULT_DELTA_MULTI = 0.01
DEFAULT_THETA_OCC = 0.08


@dataclass
class OcclusionCues:
    """Audit record: per-model cue ratios plus target match multiplicity."""

    symmetry_overlap: dict = field(default_factory=dict)
    agreement: dict = field(default_factory=dict)
    match_multiplicity: np.ndarray | None = None


def rasterize_points(pts, width, height):
    """Round projected points to pixels, drop out-of-bounds, dedupe.

    Returns flat indices (y * width + x).
    """
    xi = np.round(pts[:, 0]).astype(np.int64)
    yi = np.round(pts[:, 1]).astype(np.int64)
    keep = (xi >= 0) & (xi < width) & (yi >= 0) & (yi < height)
    return np.unique(yi[keep] * width + xi[keep])


def symmetry_check(model, fwd_xs, fwd_ys, shape1, shape2):
    """Forward/backward plane projection overlap ratio in [0, 1].

    Projects the forward inliers into image 2, back-projects that region with
    the backward model, and measures the fraction of forward inliers
    recovered.  No backward model means ratio 0.
    """
    if model.h_bwd is None or fwd_xs.size == 0:
        return 0.0
    h1, w1 = shape1
    h2, w2 = shape2
    pts = np.stack([fwd_xs.astype(np.float64), fwd_ys.astype(np.float64)], axis=1)
    try:
        target = model.h_fwd.apply_points(pts)
    except Exception:
        return 0.0
    t_idx = rasterize_points(target, w2, h2)
    if t_idx.size == 0:
        return 0.0
    t_pts = np.stack([(t_idx % w2).astype(np.float64),
                      (t_idx // w2).astype(np.float64)], axis=1)
    try:
        back = model.h_bwd.apply_points(t_pts)
    except Exception:
        return 0.0
    b_idx = rasterize_points(back, w1, h1)
    fwd_idx = fwd_ys.astype(np.int64) * w1 + fwd_xs.astype(np.int64)
    inter = np.intersect1d(b_idx, fwd_idx, assume_unique=False)
    return float(inter.size / fwd_idx.size)


def agreement_check(model):
    """Jaccard overlap of geometric (RANSAC) and photometric inlier pixels."""
    geo = model.geo_inlier_idx
    photo = model.photo_inlier_idx
    if geo is None or photo is None:
        return 0.0
    union = np.union1d(geo, photo).size
    if union == 0:
        return 0.0
    inter = np.intersect1d(geo, photo).size
    return float(inter / union)


def multiplicity_filter(models, assignment, delta_m=DEFAULT_DELTA_MULTI,
                        shape2=None):
    """Demote contested many-to-one matches with clearly worse consistency.

    Rasterizes every model's assigned pixels into image 2; wherever two
    models cover the same target pixels, the one whose mean loss over the
    contested area exceeds the best competitor's by more than ``delta_m``
    has those source pixels unassigned.  Returns (demoted_count,
    multiplicity_raster).
    """
    h1, w1 = assignment.model_id.shape
    if shape2 is None:
        shape2 = (h1, w1)
    h2, w2 = shape2

    by_model = {}
    for m in models:
        src = np.nonzero(assignment.model_id == m.id)
        if src[0].size == 0:
            continue
        ys, xs = src
        pts = np.stack([xs.astype(np.float64), ys.astype(np.float64)], axis=1)
        try:
            tgt = m.h_fwd.apply_points(pts)
        except Exception:
            continue
        tx = np.round(tgt[:, 0]).astype(np.int64)
        ty = np.round(tgt[:, 1]).astype(np.int64)
        keep = (tx >= 0) & (tx < w2) & (ty >= 0) & (ty < h2)
        by_model[m.id] = (ys[keep], xs[keep], ty[keep] * w2 + tx[keep])

    coverage = np.zeros(h2 * w2, dtype=np.int32)
    for ys, xs, tidx in by_model.values():
        coverage[np.unique(tidx)] += 1
    contested = coverage >= 2

    # mean loss per model over its contested targets, per competing pair
    pair_src = {}
    target_owners = {}
    for mid, (ys, xs, tidx) in by_model.items():
        sel = contested[tidx]
        if not sel.any():
            continue
        for y, x, t in zip(ys[sel], xs[sel], tidx[sel]):
            target_owners.setdefault(t, []).append((mid, y, x))
    for t, owners in target_owners.items():
        mids = sorted({mid for mid, _, _ in owners})
        if len(mids) < 2:
            continue
        for i, mi in enumerate(mids):
            for mj in mids[i + 1 :]:
                key = (mi, mj)
                rec = pair_src.setdefault(key, ([], []))
                for mid, y, x in owners:
                    if mid == mi:
                        rec[0].append((y, x))
                    elif mid == mj:
                        rec[1].append((y, x))

    demote = np.zeros((h1, w1), dtype=bool)
    loss = assignment.loss
    for (mi, mj), (src_i, src_j) in pair_src.items():
        li = float(np.mean([loss[y, x] for y, x in src_i]))
        lj = float(np.mean([loss[y, x] for y, x in src_j]))
        if li > lj + delta_m:
            for y, x in src_i:
                demote[y, x] = True
        elif lj > li + delta_m:
            for y, x in src_j:
                demote[y, x] = True

    demoted = int(demote.sum())
    if demoted:
        assignment.model_id[demote] = -1
        assignment.loss[demote] = np.inf
        assignment.level[demote] = 0
    return demoted, coverage.reshape(h2, w2)


def warped_consistency_error(flow, image_a, image_b):
    """Mean absolute channel difference after warping by the flow.

    Out-of-bounds targets get +inf.
    """
    h2, w2 = image_b.height, image_b.width
    ys, xs = np.mgrid[0 : flow.height, 0 : flow.width]
    tx = xs + flow.u
    ty = ys + flow.v
    inb = (tx >= 0) & (tx <= w2 - 1) & (ty >= 0) & (ty <= h2 - 1)
    sample = bilinear_sample(image_b.data, np.clip(tx, 0, w2 - 1),
                             np.clip(ty, 0, h2 - 1))
    err = np.abs(image_a.data - sample).mean(axis=-1)
    err[~inb] = np.inf
    return err


def final_occlusion_map(flow, image_a, image_b, theta_occ=DEFAULT_THETA_OCC,
                        forced_occluded=None):
    """Occlusion from the dense flow: warped color-consistency error above
    ``theta_occ`` or an out-of-bounds target; pixels in ``forced_occluded``
    (no surviving plane model before interpolation) are occluded outright."""
    if not flow.valid.all():
        raise ValueError("final occlusion map needs a dense flow")
    err = warped_consistency_error(flow, image_a, image_b)
    occ = err > theta_occ
    if forced_occluded is not None:
        occ |= forced_occluded
    return OcclusionMask(occ)


def collect_cues(models, multiplicity=None):
    cues = OcclusionCues(match_multiplicity=multiplicity)
    for m in models:
        cues.symmetry_overlap[m.id] = m.symmetry_overlap
        cues.agreement[m.id] = m.agreement
    return cues
