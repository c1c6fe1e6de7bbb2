"""Multi-scale orchestration of the plane match.

Window radii follow w_l = w_max - (l-1) * dw from the largest scale down.
After each level, reliable assignments are propagated into both
correspondence fields, a restricted search refreshes the unassigned regions,
and at the end the per-level assignments are merged by minimum loss with a
priority bonus for lower levels (larger windows).
"""

from dataclasses import dataclass, field

import numpy as np

from . import occlusion as occ_mod
from .core import derive_seed
from .homography import RansacConfig
from .imgcore import FlowField
from .patchmatch import Nnf, compute_nnf, recompute_costs
from .plane_match import LevelConfig, PlaneAssignment, run_level


@dataclass(frozen=True)
class PyramidConfig:
    levels: int = 2
    w_max: int = 40
    dw: int = 20
    beta: float = 0.005  # per-level merge priority bonus
    epsilon: float = 0.04
    eta: float = 0.5
    tau_agree: float = occ_mod.DEFAULT_TAU_AGREE
    delta_m: float = occ_mod.DEFAULT_DELTA_MULTI
    residual_min: int = 64
    stage2_passes: int = 3
    max_pairs: int = 2000
    reliability_fraction: float = 0.5  # reliable when loss < fraction * epsilon
    ransac: RansacConfig = field(default_factory=RansacConfig)
    rng_seed: int = 0
    level_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.w_max - (self.levels - 1) * self.dw < 4:
            raise ValueError("window schedule reaches radius below 4")


def level_radii(cfg):
    """[w_max - (l-1)*dw for l = 1..levels]; radii below 4 are rejected."""
    radii = [cfg.w_max - (l - 1) * cfg.dw for l in range(1, cfg.levels + 1)]
    if any(r < 4 for r in radii):
        raise ValueError(f"window schedule reaches radius below 4: {radii}")
    return radii


def level_config(cfg, level):
    radius = level_radii(cfg)[level - 1]
    kwargs = dict(
        window_radius=radius,
        epsilon=cfg.epsilon,
        eta=cfg.eta,
        tau_agree=cfg.tau_agree,
        ransac=cfg.ransac,
        residual_min=cfg.residual_min,
        stage2_passes=cfg.stage2_passes,
        max_pairs=cfg.max_pairs,
    )
    kwargs.update(cfg.level_overrides.get(level, {}))
    return LevelConfig(**kwargs)


@dataclass
class MergedFlow:
    """Dense-or-partial flow with per-pixel (level, loss, model) provenance."""

    flow: FlowField
    level: np.ndarray
    loss: np.ndarray
    model_id: np.ndarray
    models: dict

    def copy(self):
        return MergedFlow(self.flow.copy(), self.level.copy(), self.loss.copy(),
                          self.model_id.copy(), dict(self.models))


@dataclass
class LevelArtifacts:
    level: int
    radius: int
    assignment: PlaneAssignment
    models: list
    demoted: int
    multiplicity: np.ndarray
    nnf_fwd: Nnf
    nnf_bwd: Nnf


def model_flow_at(models_by_id, id_raster, where=None):
    """Analytic induced flow of each pixel's provenance model."""
    h, w = id_raster.shape
    u = np.zeros((h, w))
    v = np.zeros((h, w))
    sel = id_raster >= 0 if where is None else (id_raster >= 0) & where
    for mid in np.unique(id_raster[sel]):
        m = models_by_id[int(mid)]
        ys, xs = np.nonzero(sel & (id_raster == mid))
        pts = np.stack([xs.astype(np.float64), ys.astype(np.float64)], axis=1)
        mapped = m.h_fwd.apply_points(pts)
        u[ys, xs] = mapped[:, 0] - xs
        v[ys, xs] = mapped[:, 1] - ys
    return u, v


def propagate_reliable(assignment, models, nnf, reliability_loss, image_a,
                       image_b, patch_radius):
    """Overwrite the field at reliably assigned pixels with the model flow.

    Offsets are rounded to integers (clamped to keep the target in bounds)
    and their costs recomputed; every other entry is untouched.
    """
    reliable = assignment.assigned_mask() & (assignment.loss < reliability_loss)
    if not reliable.any():
        return nnf.copy()
    models_by_id = {m.id: m for m in models}
    u, v = model_flow_at(models_by_id, assignment.model_id, where=reliable)

    out = nnf.copy()
    ys, xs = np.nonzero(reliable)
    h2, w2 = image_b.height, image_b.width
    qx = np.clip(np.round(xs + u[ys, xs]).astype(np.int64), 0, w2 - 1)
    qy = np.clip(np.round(ys + v[ys, xs]).astype(np.int64), 0, h2 - 1)
    out.off_u[ys, xs] = (qx - xs).astype(np.int32)
    out.off_v[ys, xs] = (qy - ys).astype(np.int32)
    fresh = recompute_costs(image_a, image_b, out.off_u, out.off_v, patch_radius)
    out.cost[ys, xs] = fresh[ys, xs]
    return out


def reflect_reliable(assignment, models, nnf_bwd, reliability_loss, image_a,
                     image_b, patch_radius):
    """Mirror reliable forward matches into the backward field.

    Each reliable pixel p with rounded target q gets off_bwd(q) = p - q;
    collisions keep the lower-loss source.  Returns (nnf, written_mask) so
    the caller can freeze the written pixels during the backward refresh.
    """
    h2, w2 = image_b.height, image_b.width
    written = np.zeros((h2, w2), dtype=bool)
    reliable = assignment.assigned_mask() & (assignment.loss < reliability_loss)
    if not reliable.any():
        return nnf_bwd.copy(), written
    models_by_id = {m.id: m for m in models}
    u, v = model_flow_at(models_by_id, assignment.model_id, where=reliable)

    ys, xs = np.nonzero(reliable)
    qx = np.round(xs + u[ys, xs]).astype(np.int64)
    qy = np.round(ys + v[ys, xs]).astype(np.int64)
    inb = (qx >= 0) & (qx < w2) & (qy >= 0) & (qy < h2)
    xs, ys, qx, qy = xs[inb], ys[inb], qx[inb], qy[inb]
    if xs.size == 0:
        return nnf_bwd.copy(), written

    qflat = qy * w2 + qx
    loss = assignment.loss[ys, xs]
    order = np.lexsort((ys * image_a.width + xs, loss, qflat))
    qflat, xs, ys, qx, qy = (arr[order] for arr in (qflat, xs, ys, qx, qy))
    _, first = np.unique(qflat, return_index=True)
    xs, ys, qx, qy = xs[first], ys[first], qx[first], qy[first]

    out = nnf_bwd.copy()
    out.off_u[qy, qx] = (xs - qx).astype(np.int32)
    out.off_v[qy, qx] = (ys - qy).astype(np.int32)
    fresh = recompute_costs(image_b, image_a, out.off_u, out.off_v, patch_radius)
    out.cost[qy, qx] = fresh[qy, qx]
    written[qy, qx] = True
    return out, written


def refresh_unassigned(nnf, image_a, image_b, assigned_mask, pm_cfg):
    """Restricted search seeded by the current field: assigned pixels are
    frozen and serve as propagation sources for the unassigned regions."""
    return compute_nnf(image_a, image_b, pm_cfg, mask=assigned_mask,
                       seed_flow=nnf.to_flow())


def merge_levels(level_results, cfg):
    """Cross-level min-loss merge with lower-level priority.

    effective_loss(l) = loss - beta * (levels - l), so a lower level (larger
    window) wins unless a higher level beats it by more than the bonus; exact
    effective ties keep the lower level.
    """
    k = len(level_results)
    h, w = level_results[0][0].shape
    eff = np.full((k, h, w), np.inf)
    for i, (assignment, _) in enumerate(level_results):
        level = i + 1
        assigned = assignment.assigned_mask()
        eff[i][assigned] = assignment.loss[assigned] - cfg.beta * (cfg.levels - level)
    winner = np.argmin(eff, axis=0)  # first minimum -> lower level on ties
    any_assigned = np.isfinite(np.min(eff, axis=0))

    model_id = np.full((h, w), -1, dtype=np.int32)
    loss = np.full((h, w), np.inf)
    level_map = np.zeros((h, w), dtype=np.int32)
    models = {}
    for i, (assignment, level_models) in enumerate(level_results):
        models.update({m.id: m for m in level_models})
        sel = any_assigned & (winner == i)
        model_id[sel] = assignment.model_id[sel]
        loss[sel] = assignment.loss[sel]
        level_map[sel] = i + 1

    u, v = model_flow_at(models, model_id)
    flow = FlowField(u, v, model_id >= 0)
    return MergedFlow(flow, level_map, loss, model_id, models)


def initial_nnf_seeds(cfg):
    """Seeds for the forward and backward initial correspondence fields."""
    return (derive_seed(cfg.rng_seed, "nnf", "fwd"),
            derive_seed(cfg.rng_seed, "nnf", "bwd"))


def run_multiscale_match(image_a, image_b, cfg, pm_cfg, jobs=1, nnf_fwd=None, nnf_bwd=None):
    """Full multi-scale plane match: correspondence fields, per-level plane
    detection with occlusion screening, inter-level propagation and refresh,
    and the final cross-level merge.

    Precomputed initial fields may be passed in (cache path); they must come
    from the seeds of ``initial_nnf_seeds`` for reproducibility.
    Returns (MergedFlow, [LevelArtifacts]).
    """
    if (image_a.height, image_a.width) != (image_b.height, image_b.width):
        raise ValueError("image pair dimensions differ")

    from dataclasses import replace

    seed_f, seed_b = initial_nnf_seeds(cfg)
    if nnf_fwd is None:
        nnf_fwd = compute_nnf(image_a, image_b, replace(pm_cfg, rng_seed=seed_f))
    if nnf_bwd is None:
        nnf_bwd = compute_nnf(image_b, image_a, replace(pm_cfg, rng_seed=seed_b))

    artifacts = []
    level_results = []
    next_model_id = 0
    for level in range(1, cfg.levels + 1):
        lvl_cfg = level_config(cfg, level)
        assignment, models, next_model_id = run_level(
            image_a, image_b, nnf_fwd, nnf_bwd, lvl_cfg, prior=None, level=level,
            base_seed=derive_seed(cfg.rng_seed, "plane", level),
            next_model_id=next_model_id, jobs=jobs)

        demoted, multiplicity = occ_mod.multiplicity_filter(
            models, assignment, cfg.delta_m,
            shape2=(image_b.height, image_b.width))

        rel_loss = cfg.reliability_fraction * lvl_cfg.epsilon
        nnf_fwd = propagate_reliable(assignment, models, nnf_fwd, rel_loss,
                                     image_a, image_b, pm_cfg.patch_radius)
        nnf_bwd, bwd_written = reflect_reliable(assignment, models, nnf_bwd,
                                                rel_loss, image_a, image_b,
                                                pm_cfg.patch_radius)
        nnf_fwd = refresh_unassigned(
            nnf_fwd, image_a, image_b, assignment.assigned_mask(),
            replace(pm_cfg, rng_seed=derive_seed(cfg.rng_seed, "refresh", level, "fwd")))
        nnf_bwd = refresh_unassigned(
            nnf_bwd, image_b, image_a, bwd_written,
            replace(pm_cfg, rng_seed=derive_seed(cfg.rng_seed, "refresh", level, "bwd")))

        level_results.append((assignment, models))
        artifacts.append(LevelArtifacts(level, lvl_cfg.window_radius, assignment,
                                        models, demoted, multiplicity,
                                        nnf_fwd, nnf_bwd))

    merged = merge_levels(level_results, cfg)
    return merged, artifacts
