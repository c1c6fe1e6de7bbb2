"""Single-level robust plane match.

Overlapping windows slide over the image in scan order.  Stage 1 detects the
dominant homography of each window from the forward correspondence field,
validates it by warped color consistency, gates it on forward/backward plane
projection symmetry and on geometric/photometric inlier agreement, and
assigns the surviving inliers by a min-loss merge.  Stage 2 repeats the
detection on each window's residual (still unassigned) pixels so secondary
planes inside a window are found as well.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import occlusion as occ_mod
from .core import derive_seed
from .homography import RansacConfig, apply_safe, ransac_homography, symmetric_errors
from .imgcore import bilinear_sample


@dataclass(frozen=True)
class Window:
    cx: int
    cy: int
    radius: int

    def region(self, height, width):
        """Pixel coordinate grids of the window clipped to the image."""
        x0 = max(self.cx - self.radius, 0)
        x1 = min(self.cx + self.radius, width - 1)
        y0 = max(self.cy - self.radius, 0)
        y1 = min(self.cy + self.radius, height - 1)
        ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        return xs.ravel(), ys.ravel()


@dataclass(frozen=True)
class LevelConfig:
    window_radius: int
    stride: int | None = None  # default: window_radius (half overlap)
    epsilon: float = 0.04
    eta: float = 0.5
    tau_agree: float = occ_mod.DEFAULT_TAU_AGREE
    ransac: RansacConfig = field(default_factory=RansacConfig)
    residual_min: int = 64
    stage2_passes: int = 3
    max_pairs: int = 2000

    def __post_init__(self):
        if self.window_radius < 1:
            raise ValueError("window_radius must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        s = self.effective_stride
        if s < 1 or s > 2 * self.window_radius + 1:
            raise ValueError("stride must be in [1, window side]")

    @property
    def effective_stride(self):
        return self.stride if self.stride is not None else self.window_radius


@dataclass
class PlaneModel:
    """A detected homography plane with its validation record."""

    id: int
    h_fwd: object
    h_bwd: object | None
    window: Window
    level: int
    stage: str  # "first" | "residual"
    geo_inlier_idx: np.ndarray | None = None
    photo_inlier_idx: np.ndarray | None = None
    symmetry_overlap: float = 0.0
    agreement: float = 0.0
    accepted: bool = False
    reject_reason: str | None = None


class PlaneAssignment:
    """Per-pixel (model id, loss, level); model id -1 means unassigned."""

    def __init__(self, height, width):
        self.model_id = np.full((height, width), -1, dtype=np.int32)
        self.loss = np.full((height, width), np.inf, dtype=np.float64)
        self.level = np.zeros((height, width), dtype=np.int32)

    @property
    def shape(self):
        return self.model_id.shape

    def assigned_mask(self):
        return self.model_id >= 0

    def copy(self):
        out = PlaneAssignment(*self.model_id.shape)
        out.model_id = self.model_id.copy()
        out.loss = self.loss.copy()
        out.level = self.level.copy()
        return out


def window_grid(height, width, radius, stride):
    """Row-major overlapping windows covering every pixel.

    Centers lie on a stride lattice from (radius, radius); the final center
    per axis is clamped to the last fully interior position so the image
    edge stays covered.  An image smaller than the window yields one clamped
    window.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")

    def centers(size):
        last = size - 1 - radius
        if last < radius:
            return [(size - 1) // 2]
        cs = list(range(radius, last + 1, stride))
        if cs[-1] != last:
            cs.append(last)
        return cs

    return [Window(cx, cy, radius) for cy in centers(height) for cx in centers(width)]


def color_consistency_loss(image_a, image_b, h, xs, ys, epsilon):
    """Truncated warped color-consistency loss at the given pixels.

    loss = min(|I1(p) - I2(H p)|, epsilon), with the second image sampled
    bilinearly; out-of-bounds warps cost epsilon.
    """
    h2, w2 = image_b.height, image_b.width
    pts = np.stack([xs.astype(np.float64), ys.astype(np.float64)], axis=1)
    q = apply_safe(h.m, pts)
    finite = np.isfinite(q).all(axis=1)
    qx = np.where(finite, q[:, 0], 0.0)
    qy = np.where(finite, q[:, 1], 0.0)
    inb = finite & (qx >= 0) & (qx <= w2 - 1) & (qy >= 0) & (qy <= h2 - 1)
    sample = bilinear_sample(image_b.data, np.clip(qx, 0, w2 - 1),
                             np.clip(qy, 0, h2 - 1))
    delta = np.abs(image_a.data[ys, xs] - sample).mean(axis=-1)
    loss = np.minimum(delta, epsilon)
    loss[~inb] = epsilon
    return loss


def _subsample(rng, n, limit):
    if n <= limit:
        return np.arange(n)
    return np.sort(rng.choice(n, size=limit, replace=False))


def detect_plane(window, nnf_fwd, nnf_bwd, image_a, image_b, cfg, level,
                 stage, model_id, seed, pair_mask=None):
    """Detect the dominant plane of a window from the correspondence field.

    Forward pairs come from the window pixels (restricted by ``pair_mask``
    for residual passes); on success the backward model is fitted from the
    backward-field pairs inside the projection of the full window region.
    Returns a PlaneModel or None.
    """
    h1, w1 = image_a.height, image_a.width
    h2, w2 = image_b.height, image_b.width
    wxs, wys = window.region(h1, w1)

    xs, ys = (wxs, wys) if pair_mask is None else \
        (wxs[pair_mask[wys, wxs]], wys[pair_mask[wys, wxs]])
    if xs.size < cfg.ransac.min_inliers:
        return None

    src = np.stack([xs.astype(np.float64), ys.astype(np.float64)], axis=1)
    dst = src + np.stack([nnf_fwd.off_u[ys, xs], nnf_fwd.off_v[ys, xs]], axis=1)

    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "sub")))
    sub = _subsample(rng, src.shape[0], cfg.max_pairs)
    result = ransac_homography(
        src[sub], dst[sub], replace(cfg.ransac, rng_seed=derive_seed(seed, "fwd")))
    if result is None:
        return None
    h_fwd = result.model

    # geometric inliers measured over the full input universe, not the sample
    geo_mask = symmetric_errors(h_fwd, src, dst) <= cfg.ransac.inlier_px
    geo_idx = ys[geo_mask].astype(np.int64) * w1 + xs[geo_mask].astype(np.int64)

    # backward model from the backward field inside the projected window
    h_bwd = None
    wpts = np.stack([wxs.astype(np.float64), wys.astype(np.float64)], axis=1)
    proj = apply_safe(h_fwd.m, wpts)
    finite = np.isfinite(proj).all(axis=1)
    t_idx = occ_mod.rasterize_points(proj[finite], w2, h2) if finite.any() else \
        np.zeros(0, dtype=np.int64)
    if t_idx.size >= cfg.ransac.min_inliers:
        qx = (t_idx % w2).astype(np.int64)
        qy = (t_idx // w2).astype(np.int64)
        bsrc = np.stack([qx.astype(np.float64), qy.astype(np.float64)], axis=1)
        bdst = bsrc + np.stack([nnf_bwd.off_u[qy, qx], nnf_bwd.off_v[qy, qx]], axis=1)
        bsub = _subsample(rng, bsrc.shape[0], cfg.max_pairs)
        bres = ransac_homography(
            bsrc[bsub], bdst[bsub],
            replace(cfg.ransac, rng_seed=derive_seed(seed, "bwd")))
        if bres is not None:
            h_bwd = bres.model

    return PlaneModel(model_id, h_fwd, h_bwd, window, level, stage,
                      geo_inlier_idx=geo_idx)


def validate_and_assign(model, xs, ys, image_a, image_b, assignment, cfg, level):
    """Photometric validation, symmetry and agreement gates, min-loss writes.

    Candidate inliers are the region pixels with loss strictly below epsilon.
    A model whose forward/backward projection overlap is <= eta, or whose
    geometric/photometric agreement is below tau_agree, is rejected wholesale.
    Surviving inliers are written where the pixel is unassigned or strictly
    improves; exact loss ties keep the lower model id.
    Returns the number of pixels written.
    """
    w1 = image_a.width
    losses = color_consistency_loss(image_a, image_b, model.h_fwd, xs, ys, cfg.epsilon)
    cand = losses < cfg.epsilon
    pxs, pys = xs[cand], ys[cand]
    model.photo_inlier_idx = pys.astype(np.int64) * w1 + pxs.astype(np.int64)
    if pxs.size == 0:
        model.reject_reason = "no photometric inliers"
        return 0

    model.symmetry_overlap = occ_mod.symmetry_check(
        model, pxs, pys, (image_a.height, image_a.width),
        (image_b.height, image_b.width))
    if model.symmetry_overlap <= cfg.eta:
        model.reject_reason = "plane symmetry"
        return 0

    model.agreement = occ_mod.agreement_check(model)
    if model.agreement < cfg.tau_agree:
        model.reject_reason = "ransac/photometric agreement"
        return 0

    new = losses[cand]
    cur_loss = assignment.loss[pys, pxs]
    cur_id = assignment.model_id[pys, pxs]
    write = (cur_id < 0) | (new < cur_loss) | ((new == cur_loss) & (model.id < cur_id))
    if write.any():
        assignment.model_id[pys[write], pxs[write]] = model.id
        assignment.loss[pys[write], pxs[write]] = new[write]
        assignment.level[pys[write], pxs[write]] = level
    model.accepted = True
    return int(write.sum())


def run_level(image_a, image_b, nnf_fwd, nnf_bwd, cfg, prior=None, level=1,
              base_seed=0, next_model_id=0, jobs=1):
    """Two-stage plane match at one window size.

    Stage 1 detects per-window dominant planes (windows are independent, so
    detection may run on ``jobs`` threads; assignment writes happen in scan
    order through the order-independent min-loss merge).  Stage 2 reruns
    detection on each window's residual pixels, up to ``stage2_passes``
    rounds per window, assigning only inside the residual region.
    Returns (assignment, models, next_model_id).
    """
    h1, w1 = image_a.height, image_a.width
    if prior is None:
        assignment = PlaneAssignment(h1, w1)
    else:
        if prior.shape != (h1, w1):
            raise ValueError("prior assignment dimensions do not match")
        assignment = prior.copy()

    windows = window_grid(h1, w1, cfg.window_radius, cfg.effective_stride)
    models = []

    def _detect_first(args):
        wi, win = args
        seed = derive_seed(base_seed, "level", level, "s1", wi)
        return detect_plane(win, nnf_fwd, nnf_bwd, image_a, image_b, cfg,
                            level, "first", next_model_id + wi, seed)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            detected = list(pool.map(_detect_first, enumerate(windows)))
    else:
        detected = [_detect_first(x) for x in enumerate(windows)]

    for win, model in zip(windows, detected):
        if model is None:
            continue
        xs, ys = win.region(h1, w1)
        validate_and_assign(model, xs, ys, image_a, image_b, assignment, cfg, level)
        models.append(model)
    next_model_id += len(windows)

    # stage 2: residual-region detection, sequential (residuals depend on writes)
    for wi, win in enumerate(windows):
        xs, ys = win.region(h1, w1)
        for pass_i in range(cfg.stage2_passes):
            residual = assignment.model_id < 0
            res_count = int(residual[ys, xs].sum())
            if res_count < max(cfg.residual_min, cfg.ransac.min_inliers):
                break
            seed = derive_seed(base_seed, "level", level, "s2", wi, pass_i)
            model = detect_plane(win, nnf_fwd, nnf_bwd, image_a, image_b, cfg,
                                 level, "residual", next_model_id, seed,
                                 pair_mask=residual)
            if model is None:
                break
            next_model_id += 1
            rxs = xs[residual[ys, xs]]
            rys = ys[residual[ys, xs]]
            wrote = validate_and_assign(model, rxs, rys, image_a, image_b,
                                        assignment, cfg, level)
            models.append(model)
            if wrote == 0:
                break

    return assignment, models, next_model_id
