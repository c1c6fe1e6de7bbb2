"""Synthetic scenes with exact ground-truth flow and occlusion.

Each scene is a depth-ordered stack of polygonal regions, one homography per
region, textured with band-limited noise of per-region distinct spectra.
The second frame renders every region warped by its homography with
depth-order compositing, so ground truth comes out in closed form: the flow
is the induced flow of the owning region, and a pixel is occluded exactly
when its target leaves the frame or is overwritten by a nearer region.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import derive_seed
from .homography import Homography, apply_safe
from .imgcore import FlowField, Image, OcclusionMask, bilinear_sample


@dataclass(frozen=True)
class SceneLayer:
    """One planar region: polygon in first-frame coordinates plus motion.

    depth orders compositing (smaller = nearer).  ``background=True`` lets
    the layer extend beyond its polygon when rendering the second frame, so
    disoccluded areas have content.  ``amplitude=0`` gives a flat region.
    """

    polygon: tuple
    homography: Homography
    depth: int
    amplitude: float = 0.3
    blur_sigma: float = 1.5
    chroma: float = 0.25
    background: bool = False


def _snap_near_integers(arr, tol=1e-9):
    """Remove float-ulp wiggle from normalized-matrix arithmetic so integer
    motions produce exact ground truth and polygon edge tests stay stable."""
    rounded = np.round(arr)
    return np.where(np.abs(arr - rounded) < tol, rounded, arr)


def points_in_polygon(xs, ys, polygon):
    """Even-odd rule point-in-polygon test, vectorized."""
    poly = np.asarray(polygon, dtype=np.float64)
    inside = np.zeros(xs.shape, dtype=bool)
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if y1 == y2:
            continue
        cond = (y1 > ys) != (y2 > ys)
        xcross = (x2 - x1) * (ys - y1) / (y2 - y1) + x1
        inside ^= cond & (xs < xcross)
    return inside


def _layer_texture(layer, idx, seed, ext_h, ext_w):
    rng = np.random.default_rng(derive_seed(seed, "texture", idx))
    base = rng.standard_normal((ext_h, ext_w))
    chans = []
    for _ in range(3):
        jitter = rng.standard_normal((ext_h, ext_w))
        chans.append(base + layer.chroma * jitter)
    tex = np.stack(chans, axis=-1)
    tex = gaussian_filter(tex, sigma=(layer.blur_sigma, layer.blur_sigma, 0))
    std = tex.std()
    if std > 0 and layer.amplitude > 0:
        tex = 0.5 + layer.amplitude * (tex - tex.mean()) / (3.0 * std)
    else:
        tex = np.full_like(tex, 0.5)
    return np.clip(tex, 0.02, 0.98)


def make_plane_scene(layers, dims, texture_seed=0, noise_sigma=0.0,
                     brightness_offset=0.0, margin=64):
    """Render a scene: (first frame, second frame, gt flow, gt occlusion).

    The polygons (plus infinite background layers) must cover the frame;
    nearer layers take precedence where polygons overlap.
    """
    height, width = dims
    ext_h, ext_w = height + 2 * margin, width + 2 * margin
    order = sorted(range(len(layers)), key=lambda i: layers[i].depth)

    textures = {i: _layer_texture(layers[i], i, texture_seed, ext_h, ext_w)
                for i in range(len(layers))}

    ys, xs = np.mgrid[0:height, 0:width]
    fx = xs.astype(np.float64)
    fy = ys.astype(np.float64)

    # ownership in frame 1: nearest containing layer
    owner = np.full((height, width), -1, dtype=np.int32)
    for i in order:
        lay = layers[i]
        inside = points_in_polygon(fx, fy, lay.polygon)
        if lay.background:
            inside |= True
        owner[(owner < 0) & inside] = i
    if (owner < 0).any():
        raise ValueError("scene layers do not cover the frame")

    # frame 1
    frame1 = np.zeros((height, width, 3))
    for i in range(len(layers)):
        sel = owner == i
        frame1[sel] = textures[i][ys[sel] + margin, xs[sel] + margin]

    # frame 2: first (nearest) layer whose pre-image lies inside its polygon
    frame2 = np.zeros((height, width, 3))
    covered = np.zeros((height, width), dtype=bool)
    pts = np.stack([fx.ravel(), fy.ravel()], axis=1)
    for i in order:
        lay = layers[i]
        hinv = np.linalg.inv(lay.homography.m)
        src = _snap_near_integers(apply_safe(hinv, pts))
        sx = src[:, 0].reshape(height, width)
        sy = src[:, 1].reshape(height, width)
        finite = np.isfinite(sx) & np.isfinite(sy)
        inside = finite & points_in_polygon(sx, sy, lay.polygon)
        if lay.background:
            inside = finite
        sample_ok = (inside & (sx >= -margin) & (sx <= width + margin - 2)
                     & (sy >= -margin) & (sy <= height + margin - 2))
        sel = sample_ok & ~covered
        if sel.any():
            vals = bilinear_sample(textures[i], sx[sel] + margin, sy[sel] + margin)
            frame2[sel] = vals
            covered |= sel
    if not covered.all():
        raise ValueError("second frame has uncovered pixels; declare a background layer")

    # ground truth flow and occlusion
    u = np.zeros((height, width))
    v = np.zeros((height, width))
    occluded = np.zeros((height, width), dtype=bool)
    for i in range(len(layers)):
        sel = owner == i
        if not sel.any():
            continue
        lay = layers[i]
        mapped = _snap_near_integers(lay.homography.apply_points(
            np.stack([fx[sel], fy[sel]], axis=1)))
        tu = mapped[:, 0] - fx[sel]
        tv = mapped[:, 1] - fy[sel]
        u[sel] = tu
        v[sel] = tv
        tx, ty = mapped[:, 0], mapped[:, 1]
        occ = (tx < 0) | (tx > width - 1) | (ty < 0) | (ty > height - 1)
        for j in range(len(layers)):
            if layers[j].depth >= lay.depth or j == i:
                continue
            hinv = np.linalg.inv(layers[j].homography.m)
            src = _snap_near_integers(apply_safe(hinv, np.stack([tx, ty], axis=1)))
            covers = (np.isfinite(src).all(axis=1)
                      & points_in_polygon(src[:, 0], src[:, 1], layers[j].polygon))
            occ |= covers
        occluded[sel] = occ

    if brightness_offset:
        frame2 = np.clip(frame2 + brightness_offset, 0.0, 1.0)
    if noise_sigma > 0:
        rng = np.random.default_rng(derive_seed(texture_seed, "noise"))
        frame1 = np.clip(frame1 + rng.normal(0, noise_sigma, frame1.shape), 0, 1)
        frame2 = np.clip(frame2 + rng.normal(0, noise_sigma, frame2.shape), 0, 1)

    gt_flow = FlowField(u, v, np.ones((height, width), dtype=bool))
    return (Image(np.clip(frame1, 0, 1)), Image(np.clip(frame2, 0, 1)),
            gt_flow, OcclusionMask(occluded))


def _frame_polygon(width, height):
    return ((-1.0, -1.0), (width + 0.0, -1.0), (width + 0.0, height + 0.0),
            (-1.0, height + 0.0))


def _projective(linear, translation, center, h31=0.0, h32=0.0):
    """Homography acting as p -> A (p - c) + c + t with projective row (h31, h32, 1)."""
    a = np.asarray(linear, dtype=np.float64)
    c = np.asarray(center, dtype=np.float64)
    t = np.asarray(translation, dtype=np.float64)
    m = np.eye(3)
    m[:2, :2] = a
    m[:2, 2] = c + t - a @ c
    m[2, 0] = h31
    m[2, 1] = h32
    return Homography(m)


def two_plane_scene(seed, size=256):
    """Foreground quad with a mildly projective motion over a translating
    background; relative displacement sits in the 8-15 px band."""
    ang = 0.005
    s = 1.004
    rot = s * np.array([[np.cos(ang), -np.sin(ang)], [np.sin(ang), np.cos(ang)]])
    fg_poly = ((62.0, 80.0), (168.0, 74.0), (174.0, 184.0), (56.0, 178.0))
    layers = [
        SceneLayer(fg_poly,
                   _projective(rot, (9.0, -5.0), (115.0, 129.0),
                               h31=1.2e-4, h32=-8e-5),
                   depth=0, amplitude=0.30, blur_sigma=1.4, chroma=0.25),
        SceneLayer(_frame_polygon(size, size), Homography.translation(-2.0, 1.0),
                   depth=1, amplitude=0.30, blur_sigma=1.8, chroma=0.25,
                   background=True),
    ]
    return make_plane_scene(layers, (size, size), texture_seed=seed)


def small_plane_scene(seed, size=256, plane_side=36, center=(120, 120),
                      displacement=(13, 13)):
    """Compact plane over a static background; the plane is smaller than the
    coarsest window and displaced diagonally."""
    cx, cy = center
    h = plane_side / 2.0
    poly = ((cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h))
    layers = [
        SceneLayer(poly, Homography.translation(*map(float, displacement)),
                   depth=0, amplitude=0.32, blur_sigma=1.2, chroma=0.25),
        SceneLayer(_frame_polygon(size, size), Homography.identity(),
                   depth=1, amplitude=0.30, blur_sigma=1.7, chroma=0.25,
                   background=True),
    ]
    return make_plane_scene(layers, (size, size), texture_seed=seed)


def thin_bar_scene(seed, size=256, bar_width=3, bar_length=120,
                   displacement=(0, 12)):
    """High-contrast thin bar sliding along its own axis over a static,
    low-contrast background."""
    x0 = size // 2 - 2
    y0 = (size - bar_length) // 2 - 10
    poly = ((float(x0), float(y0)), (float(x0 + bar_width), float(y0)),
            (float(x0 + bar_width), float(y0 + bar_length)),
            (float(x0), float(y0 + bar_length)))
    layers = [
        SceneLayer(poly, Homography.translation(*map(float, displacement)),
                   depth=0, amplitude=0.45, blur_sigma=1.0, chroma=0.15),
        SceneLayer(_frame_polygon(size, size), Homography.identity(),
                   depth=1, amplitude=0.12, blur_sigma=1.8, chroma=0.2,
                   background=True),
    ]
    scene = make_plane_scene(layers, (size, size), texture_seed=seed)
    bar_mask = np.zeros((size, size), dtype=bool)
    ys, xs = np.mgrid[0:size, 0:size]
    bar_mask = points_in_polygon(xs.astype(float), ys.astype(float), poly)
    return scene + (bar_mask,)


def brightness_scene(seed, size=256, offset=0.15):
    """Two translating planes rendered twice, the second frame brightened;
    textures are low-chroma so V-channel equalization can cancel the shift."""
    fg_poly = ((70.0, 70.0), (180.0, 70.0), (180.0, 180.0), (70.0, 180.0))
    layers = [
        SceneLayer(fg_poly, Homography.translation(8.0, 6.0),
                   depth=0, amplitude=0.28, blur_sigma=1.4, chroma=0.05),
        SceneLayer(_frame_polygon(size, size), Homography.translation(-2.0, 1.0),
                   depth=1, amplitude=0.28, blur_sigma=1.8, chroma=0.05,
                   background=True),
    ]
    return make_plane_scene(layers, (size, size), texture_seed=seed,
                            brightness_offset=offset)


SCENE_PRESETS = {
    "two-plane": two_plane_scene,
    "small-plane": small_plane_scene,
    "thin-bar": thin_bar_scene,
    "brightness": brightness_scene,
}
