"""Homography estimation: normalized DLT, RANSAC consensus, induced flow.

Points are (x, y) in pixel coordinates.  Homographies are stored normalized
to unit Frobenius norm with a positive last nonzero entry, so equal
transforms compare equal.
"""

import math
from dataclasses import dataclass, field

import numpy as np

MAX_CONDITION = 1e12


class DegenerateGeometryError(ValueError):
    """Point configuration too degenerate to determine a homography."""


class PointAtInfinityError(ValueError):
    """Projective application hit the plane at infinity."""


def _normalize_matrix(m):
    m = np.asarray(m, dtype=np.float64)
    norm = np.linalg.norm(m)
    if not np.isfinite(norm) or norm == 0:
        raise DegenerateGeometryError("homography matrix is zero or non-finite")
    m = m / norm
    flat = m.ravel()
    nz = np.nonzero(flat)[0]
    if flat[nz[-1]] < 0:
        m = -m
    return m


def _condition_ok(m):
    # squared singular values via the 3x3 Gram matrix (much cheaper than SVD)
    ev = np.linalg.eigvalsh(m.T @ m)
    if not np.isfinite(ev).all() or ev[-1] <= 0:
        return False
    return ev[0] > 0 and ev[-1] / ev[0] <= MAX_CONDITION**2


@dataclass(frozen=True)
class Homography:
    """3x3 projective transform; invertible with bounded condition number."""

    m: np.ndarray

    def __post_init__(self):
        m = _normalize_matrix(self.m)
        if not _condition_ok(m):
            raise DegenerateGeometryError("ill-conditioned homography")
        object.__setattr__(self, "m", m)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    @classmethod
    def translation(cls, tx, ty):
        m = np.eye(3)
        m[0, 2] = tx
        m[1, 2] = ty
        return cls(m)

    def inverse(self):
        return Homography(np.linalg.inv(self.m))

    def apply_points(self, pts):
        """Apply to an (N, 2) array of points; raises at the horizon."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        ones = np.ones((pts.shape[0], 1))
        ph = np.hstack([pts, ones]) @ self.m.T
        w = ph[:, 2]
        if np.any(np.abs(w) < 1e-12):
            raise PointAtInfinityError("point mapped to infinity")
        return ph[:, :2] / w[:, None]

    def apply(self, p):
        out = self.apply_points(np.asarray(p, dtype=np.float64)[None, :])
        return float(out[0, 0]), float(out[0, 1])


def apply_safe(m, pts):
    """Batch application that returns inf-coordinates instead of raising."""
    pts = np.asarray(pts, dtype=np.float64)
    ones = np.ones((pts.shape[0], 1))
    ph = np.hstack([pts, ones]) @ m.T
    w = ph[:, 2].copy()
    bad = np.abs(w) < 1e-12
    w[bad] = 1.0
    out = ph[:, :2] / w[:, None]
    out[bad] = np.inf
    return out


_TRIPLES = [(i, j, k) for i in range(4) for j in range(i + 1, 4)
            for k in range(j + 1, 4)]
_TI = np.array([t[0] for t in _TRIPLES])
_TJ = np.array([t[1] for t in _TRIPLES])
_TK = np.array([t[2] for t in _TRIPLES])


def _min_triple_area(pts):
    v1 = pts[_TJ] - pts[_TI]
    v2 = pts[_TK] - pts[_TI]
    return 0.5 * np.abs(v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]).min()


def _collinearity_scale(pts):
    span = pts.max(axis=0) - pts.min(axis=0)
    return max(float(span[0] * span[1]), 1.0)


def sample_is_degenerate(src, dst, rel_area=1e-6):
    """True when any triple of a minimal 4-sample is (near-)collinear."""
    for pts in (src, dst):
        if _min_triple_area(pts) < rel_area * _collinearity_scale(pts):
            return True
    return False


def _hartley_normalization(pts):
    centroid = pts.mean(axis=0)
    d = np.linalg.norm(pts - centroid, axis=1).mean()
    if d < 1e-12:
        raise DegenerateGeometryError("coincident points")
    s = math.sqrt(2.0) / d
    t = np.array([[s, 0, -s * centroid[0]], [0, s, -s * centroid[1]], [0, 0, 1.0]])
    return t, (pts - centroid) * s


def fit_dlt(src, dst):
    """Least-squares homography from >= 4 correspondences (normalized DLT).

    Exactly interpolates four non-degenerate pairs; raises
    DegenerateGeometryError on rank-deficient configurations.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("correspondences must be matching (N, 2) arrays")
    n = src.shape[0]
    if n < 4:
        raise DegenerateGeometryError(f"need at least 4 pairs, got {n}")
    if n == 4 and sample_is_degenerate(src, dst):
        raise DegenerateGeometryError("collinear points in minimal sample")

    ts, sn = _hartley_normalization(src)
    td, dn = _hartley_normalization(dst)

    a = np.zeros((2 * n, 9))
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    a[0::2, 3] = -x
    a[0::2, 4] = -y
    a[0::2, 5] = -1.0
    a[0::2, 6] = v * x
    a[0::2, 7] = v * y
    a[0::2, 8] = v
    a[1::2, 0] = x
    a[1::2, 1] = y
    a[1::2, 2] = 1.0
    a[1::2, 6] = -u * x
    a[1::2, 7] = -u * y
    a[1::2, 8] = -u

    hn = None
    if n == 4:
        # fast path: pin h33 = 1 (valid after Hartley normalization unless the
        # configuration is pathological, which the SVD fallback then handles)
        try:
            h8 = np.linalg.solve(a[:, :8], -a[:, 8])
            if np.isfinite(h8).all() and np.abs(h8).max() < 1e8:
                hn = np.append(h8, 1.0).reshape(3, 3)
        except np.linalg.LinAlgError:
            hn = None
    if hn is None:
        # least-squares null vector from the 9x9 normal matrix (the 2n x 9
        # SVD is equivalent but far slower on tall systems)
        g = a.T @ a
        ev, evec = np.linalg.eigh(g)
        if ev[-1] <= 0 or ev[1] / ev[-1] < 1e-16:
            raise DegenerateGeometryError("rank-deficient DLT system")
        hn = evec[:, 0].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    return Homography(h)


@dataclass(frozen=True)
class RansacConfig:
    max_iterations: int = 500
    inlier_px: float = 1.5
    min_inliers: int = 12
    confidence: float = 0.995
    rng_seed: int = 0
    degeneracy_rel_area: float = 1e-6  # collinearity rejection scale

    def __post_init__(self):
        if self.inlier_px <= 0:
            raise ValueError("inlier_px must be positive")
        if self.min_inliers < 4:
            raise ValueError("min_inliers must be at least 4")


@dataclass
class RansacResult:
    model: Homography
    inlier_indices: np.ndarray
    iterations_used: int
    mean_inlier_error: float = field(default=float("nan"))


def _errors_hom(m, src_h, dst_h):
    """Symmetric errors from precomputed homogeneous coordinates."""
    minv = np.linalg.inv(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        fwd = src_h @ m.T
        fwd = fwd[:, :2] / fwd[:, 2:3]
        bwd = dst_h @ minv.T
        bwd = bwd[:, :2] / bwd[:, 2:3]
        d1 = np.hypot(fwd[:, 0] - dst_h[:, 0], fwd[:, 1] - dst_h[:, 1])
        d2 = np.hypot(bwd[:, 0] - src_h[:, 0], bwd[:, 1] - src_h[:, 1])
    err = np.maximum(d1, d2)
    err[~np.isfinite(err)] = np.inf
    return err


def _homogeneous(pts):
    out = np.ones((pts.shape[0], 3))
    out[:, :2] = pts
    return out


def symmetric_errors(h, src, dst):
    """Per-pair symmetric reprojection distance max(|Hp - q|, |H^-1 q - p|)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    return _errors_hom(h.m, _homogeneous(src), _homogeneous(dst))


def _adaptive_iterations(inlier_ratio, confidence):
    if inlier_ratio >= 1.0:
        return 1
    p_good = inlier_ratio**4
    if p_good <= 0.0:
        return None  # no bound yet
    denom = math.log(1.0 - p_good) if p_good < 1.0 else -math.inf
    if denom == 0.0:
        return None
    return max(1, int(math.ceil(math.log(1.0 - confidence) / denom)))


def ransac_homography(src, dst, cfg):
    """Largest-consensus homography from noisy correspondences.

    Returns None when the best support stays below ``cfg.min_inliers`` (no
    dominant plane).  Ties on support break toward lower mean inlier error.
    Terminates early once the adaptive iteration bound for the observed
    inlier ratio is met; the consensus model is refit on all inliers once.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = src.shape[0]
    if n < 4:
        raise ValueError("RANSAC needs at least 4 correspondences")

    rng = np.random.Generator(np.random.PCG64(cfg.rng_seed))
    src_h = _homogeneous(src)
    dst_h = _homogeneous(dst)
    best_count = 0
    best_mean = np.inf
    best_model = None
    best_mask = None
    bound = cfg.max_iterations
    it = 0
    while it < min(bound, cfg.max_iterations):
        it += 1
        idx = rng.integers(0, n, size=4)
        while (idx[0] == idx[1] or idx[0] == idx[2] or idx[0] == idx[3]
               or idx[1] == idx[2] or idx[1] == idx[3] or idx[2] == idx[3]):
            idx = rng.integers(0, n, size=4)
        s4, d4 = src[idx], dst[idx]
        if sample_is_degenerate(s4, d4, cfg.degeneracy_rel_area):
            continue
        try:
            model = fit_dlt(s4, d4)
        except DegenerateGeometryError:
            continue
        err = _errors_hom(model.m, src_h, dst_h)
        mask = err <= cfg.inlier_px
        count = int(mask.sum())
        mean = float(err[mask].mean()) if count else np.inf
        if count > best_count or (count == best_count and mean < best_mean):
            best_count, best_mean = count, mean
            best_model, best_mask = model, mask
            adaptive = _adaptive_iterations(count / n, cfg.confidence)
            if adaptive is not None:
                bound = adaptive

    if best_model is None or best_count < cfg.min_inliers:
        return None

    # one refit round on the consensus set
    try:
        refit = fit_dlt(src[best_mask], dst[best_mask])
        err = symmetric_errors(refit, src, dst)
        mask = err <= cfg.inlier_px
        if int(mask.sum()) >= cfg.min_inliers:
            best_model, best_mask = refit, mask
            best_mean = float(err[mask].mean())
    except DegenerateGeometryError:
        pass

    idx = np.nonzero(best_mask)[0]
    return RansacResult(best_model, idx, it, best_mean)


def induced_flow(h, xs, ys):
    """Flow induced by a homography at pixel coordinates: H(p) - p.

    Raises PointAtInfinityError when the horizon crosses the queried region.
    """
    pts = np.stack([np.asarray(xs, dtype=np.float64).ravel(),
                    np.asarray(ys, dtype=np.float64).ravel()], axis=1)
    mapped = h.apply_points(pts)
    u = (mapped[:, 0] - pts[:, 0]).reshape(np.shape(xs))
    v = (mapped[:, 1] - pts[:, 1]).reshape(np.shape(xs))
    return u, v
