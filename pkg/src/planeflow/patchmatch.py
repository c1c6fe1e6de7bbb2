"""Nearest-neighbor correspondence fields by randomized patch search.

The forward field maps image 1 into image 2; the backward field is the same
operation with the arguments swapped.  A restricted variant keeps a masked
set of pixels frozen (they still act as propagation sources), which confines
the search to unassigned regions.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import core
from .imgcore import CorruptFileError, FlowField, MissingFileError

COST_MAGIC = b"NNFC"


@dataclass(frozen=True)
class PatchMatchConfig:
    patch_radius: int = 3  # 7x7 patches
    iterations: int = 5
    search_decay: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if self.patch_radius < 1:
            raise ValueError("patch_radius must be >= 1")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 < self.search_decay < 1.0:
            raise ValueError("search_decay must be in (0, 1)")


@dataclass
class Nnf:
    """Integer offset field with per-pixel patch dissimilarity."""

    off_u: np.ndarray
    off_v: np.ndarray
    cost: np.ndarray
    iteration_costs: np.ndarray

    @property
    def height(self):
        return self.off_u.shape[0]

    @property
    def width(self):
        return self.off_u.shape[1]

    def to_flow(self):
        return FlowField(
            self.off_u.astype(np.float64),
            self.off_v.astype(np.float64),
            np.ones(self.off_u.shape, dtype=bool),
        )

    def copy(self):
        return Nnf(self.off_u.copy(), self.off_v.copy(), self.cost.copy(),
                   self.iteration_costs.copy())


def patch_cost(a, b, p, q, radius):
    """Mean absolute channel difference between the border-clamped patches
    centered at p in a and q in b; p and q are (x, y)."""
    h1, w1 = a.data.shape[:2]
    h2, w2 = b.data.shape[:2]
    px, py = int(p[0]), int(p[1])
    qx, qy = int(q[0]), int(q[1])
    if not (0 <= px < w1 and 0 <= py < h1):
        raise ValueError(f"p={p} outside first image")
    if not (0 <= qx < w2 and 0 <= qy < h2):
        raise ValueError(f"q={q} outside second image")
    return float(core.patch_cost_at(a.data, b.data, py, px, qy, qx, radius))


def recompute_costs(a, b, off_u, off_v, radius):
    """Vectorized patch-cost evaluation of a whole offset field."""
    ad, bd = a.data, b.data
    h1, w1, c = ad.shape
    h2, w2 = bd.shape[:2]
    ys, xs = np.mgrid[0:h1, 0:w1]
    qx = xs + off_u
    qy = ys + off_v
    acc = np.zeros((h1, w1))
    for dy in range(-radius, radius + 1):
        ay = np.clip(ys + dy, 0, h1 - 1)
        by = np.clip(qy + dy, 0, h2 - 1)
        for dx in range(-radius, radius + 1):
            ax = np.clip(xs + dx, 0, w1 - 1)
            bx = np.clip(qx + dx, 0, w2 - 1)
            acc += np.abs(ad[ay, ax] - bd[by, bx]).sum(axis=-1)
    side = 2 * radius + 1
    return acc / (c * side * side)


def compute_nnf(a, b, cfg, mask=None, seed_flow=None):
    """Compute the offset field from a into b.

    mask: boolean per-pixel; True pixels keep their seed offsets verbatim and
    serve as propagation sources only.  seed_flow: initial offsets used where
    valid (required wherever mask is True).
    """
    if a.channels != b.channels:
        raise ValueError("images must share channel count")
    h1, w1 = a.height, a.width
    h2, w2 = b.height, b.width

    if mask is None:
        mask_arr = np.zeros((h1, w1), dtype=np.uint8)
    else:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (h1, w1):
            raise ValueError("mask dimensions do not match the first image")
        mask_arr = mask.astype(np.uint8)

    if seed_flow is None:
        seed_valid = np.zeros((h1, w1), dtype=np.uint8)
        seed_u = np.zeros((h1, w1), dtype=np.int32)
        seed_v = np.zeros((h1, w1), dtype=np.int32)
    else:
        if (seed_flow.height, seed_flow.width) != (h1, w1):
            raise ValueError("seed flow dimensions do not match the first image")
        seed_valid = seed_flow.valid.astype(np.uint8)
        seed_u = np.round(seed_flow.u).astype(np.int32)
        seed_v = np.round(seed_flow.v).astype(np.int32)

    if np.any(mask_arr & (1 - seed_valid)):
        raise ValueError("masked pixels require valid seed offsets")
    if np.any(mask_arr.astype(bool)):
        ys, xs = np.nonzero(mask_arr)
        qx = xs + seed_u[ys, xs]
        qy = ys + seed_v[ys, xs]
        if np.any((qx < 0) | (qx >= w2) | (qy < 0) | (qy >= h2)):
            raise ValueError("masked seed offsets must map inside the second image")

    off_u, off_v, cost, totals = core.nnf_search(
        a.data, b.data, cfg.patch_radius, cfg.iterations, cfg.search_decay,
        cfg.rng_seed & 0xFFFFFFFFFFFFFFFF, mask_arr, seed_valid, seed_u, seed_v)
    return Nnf(off_u, off_v, cost, totals)


def verify_nnf(nnf, a, b, cfg, tol=1e-6):
    """True iff offsets stay in bounds and stored costs match recomputation."""
    h2, w2 = b.height, b.width
    ys, xs = np.mgrid[0 : nnf.height, 0 : nnf.width]
    qx = xs + nnf.off_u
    qy = ys + nnf.off_v
    if np.any((qx < 0) | (qx >= w2) | (qy < 0) | (qy >= h2)):
        return False
    fresh = recompute_costs(a, b, nnf.off_u, nnf.off_v, cfg.patch_radius)
    return bool(np.all(np.abs(fresh - nnf.cost) <= tol))


# ---------------------------------------------------------------------------
# cacheable NNF interchange: .flo offsets plus a float32 cost sidecar
# ---------------------------------------------------------------------------

def write_cost_raster(cost, path):
    h, w = cost.shape
    with open(path, "wb") as fh:
        fh.write(COST_MAGIC)
        fh.write(struct.pack("<ii", w, h))
        fh.write(cost.astype("<f4").tobytes())


def read_cost_raster(path):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError:
        raise MissingFileError(f"no such cost file: {path}") from None
    if raw[:4] != COST_MAGIC:
        raise CorruptFileError(f"bad magic in cost file {path}")
    w, h = struct.unpack("<ii", raw[4:12])
    need = w * h * 4
    if len(raw) - 12 < need:
        raise CorruptFileError(f"truncated cost payload in {path}")
    return np.frombuffer(raw[12 : 12 + need], dtype="<f4").reshape(h, w).astype(np.float64)


def save_nnf(nnf, flo_path, cost_path):
    from .imgcore import write_flo

    write_flo(nnf.to_flow(), flo_path)
    write_cost_raster(nnf.cost, cost_path)


def load_nnf(flo_path, cost_path):
    from .imgcore import read_flo

    flow = read_flo(flo_path)
    cost = read_cost_raster(cost_path)
    if cost.shape != flow.u.shape:
        raise CorruptFileError(f"cost raster {cost_path} does not match flow dims")
    return Nnf(
        np.round(flow.u).astype(np.int32),
        np.round(flow.v).astype(np.int32),
        cost,
        np.zeros(0, dtype=np.float64),
    )
