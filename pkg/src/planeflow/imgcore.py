"""Image and flow containers, file I/O, visualization, and flow metrics.

Intensities are reals in [0, 1]; every photometric threshold in the pipeline
is expressed on that scale.  Flow interchange uses the Middlebury ``.flo``
layout (magic "PIEH", little-endian), with invalid pixels sentinel-encoded as
values above 1e9 so third-party viewers render them correctly.
"""

import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

FLO_MAGIC = b"PIEH"
FLO_SENTINEL = 1e10
_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class ImageIOError(ValueError):
    """Base class for image/flow file problems."""


class MissingFileError(ImageIOError):
    pass


class UnsupportedFormatError(ImageIOError):
    pass


class CorruptFileError(ImageIOError):
    pass


@dataclass(frozen=True)
class Image:
    """H x W x C raster of intensities in [0, 1], C = 1 or 3."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise ValueError(f"image data must be HxWx1 or HxWx3, got {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("image intensities must be finite")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("image intensities must lie in [0, 1]")
        object.__setattr__(self, "data", np.ascontiguousarray(d, dtype=np.float64))

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


@dataclass
class FlowField:
    """Per-pixel (u, v) displacement with a validity mask.

    Invalid pixels are normalized to a zero vector internally; consumers must
    go through ``valid`` (or ``displacement``, which raises) rather than read
    them.
    """

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if not (self.u.shape == self.v.shape == self.valid.shape):
            raise ValueError("flow component shapes differ")
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        self.v = np.ascontiguousarray(self.v, dtype=np.float64)
        self.valid = np.ascontiguousarray(self.valid, dtype=bool)
        self.u[~self.valid] = 0.0
        self.v[~self.valid] = 0.0

    @property
    def height(self):
        return self.u.shape[0]

    @property
    def width(self):
        return self.u.shape[1]

    def displacement(self, x, y):
        if not self.valid[y, x]:
            raise ValueError(f"flow read at invalid pixel ({x}, {y})")
        return float(self.u[y, x]), float(self.v[y, x])

    def copy(self):
        return FlowField(self.u.copy(), self.v.copy(), self.valid.copy())

    @classmethod
    def zeros(cls, height, width, valid=True):
        return cls(
            np.zeros((height, width)),
            np.zeros((height, width)),
            np.full((height, width), valid, dtype=bool),
        )


@dataclass
class OcclusionMask:
    """Boolean map of pixels with no correspondence in the second image."""

    occluded: np.ndarray

    def __post_init__(self):
        if self.occluded.ndim != 2:
            raise ValueError("occlusion mask must be 2-D")
        self.occluded = np.ascontiguousarray(self.occluded, dtype=bool)

    @property
    def height(self):
        return self.occluded.shape[0]

    @property
    def width(self):
        return self.occluded.shape[1]


@dataclass(frozen=True)
class EpeReport:
    """Mean endpoint error over all / non-occluded / occluded pixels."""

    epe_all: float
    epe_nocc: float
    epe_occ: float
    count_all: int
    count_nocc: int
    count_occ: int

    def as_dict(self):
        def _num(x):
            return None if np.isnan(x) else float(x)

        return {
            "epe_all": _num(self.epe_all),
            "epe_nocc": _num(self.epe_nocc),
            "epe_occ": _num(self.epe_occ),
            "count_all": self.count_all,
            "count_nocc": self.count_nocc,
            "count_occ": self.count_occ,
        }


# ---------------------------------------------------------------------------
# image file I/O
# ---------------------------------------------------------------------------

def _read_ppm(raw, path):
    # binary PPM (P6) / PGM (P5), 8-bit
    pos = 0
    fields = []
    magic = raw[:2]
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptFileError(f"truncated PPM header in {path}")
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError:
        raise CorruptFileError(f"malformed PPM header in {path}") from None
    if width <= 0 or height <= 0:
        raise CorruptFileError(f"bad PPM dimensions in {path}")
    if maxval != 255:
        raise UnsupportedFormatError(f"only 8-bit PPM supported: {path}")
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = raw[pos : pos + need]
    if len(payload) < need:
        raise CorruptFileError(f"truncated PPM payload in {path}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return arr


def load_image(path):
    """Load an 8-bit PNG or binary PPM as intensities in [0, 1]."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError:
        raise MissingFileError(f"no such image file: {path}") from None
    except IsADirectoryError:
        raise MissingFileError(f"not a file: {path}") from None

    if raw[:2] in (b"P6", b"P5"):
        arr = _read_ppm(raw, path)
    elif raw[: len(_PNG_SIGNATURE)] == _PNG_SIGNATURE:
        import io

        try:
            with PILImage.open(io.BytesIO(raw)) as im:
                im.load()
                mode = im.mode
                if mode in ("I", "I;16", "I;16B", "F"):
                    raise UnsupportedFormatError(f"not an 8-bit image: {path}")
                if mode in ("L",):
                    arr = np.asarray(im)[:, :, None]
                else:
                    arr = np.asarray(im.convert("RGB"))
        except UnidentifiedImageError:
            raise CorruptFileError(f"corrupt PNG data in {path}") from None
        except (OSError, SyntaxError):
            raise CorruptFileError(f"corrupt PNG data in {path}") from None
    else:
        raise UnsupportedFormatError(f"not a PNG or binary PPM file: {path}")

    return Image(arr.astype(np.float64) / 255.0)


def write_image_png(image, path):
    """Write an Image (or HxW / HxWxC float array in [0,1]) as 8-bit PNG."""
    data = image.data if isinstance(image, Image) else np.asarray(image)
    if data.ndim == 2:
        data = data[:, :, None]
    q = np.clip(np.round(data * 255.0), 0, 255).astype(np.uint8)
    if q.shape[2] == 1:
        PILImage.fromarray(q[:, :, 0], mode="L").save(path)
    else:
        PILImage.fromarray(q, mode="RGB").save(path)


def write_mask_png(mask, path):
    """Write an occlusion mask as PNG, occluded = 255."""
    arr = mask.occluded if isinstance(mask, OcclusionMask) else np.asarray(mask, bool)
    PILImage.fromarray(np.where(arr, 255, 0).astype(np.uint8), mode="L").save(path)


def read_mask_png(path):
    try:
        with PILImage.open(path) as im:
            arr = np.asarray(im.convert("L"))
    except FileNotFoundError:
        raise MissingFileError(f"no such mask file: {path}") from None
    except UnidentifiedImageError:
        raise CorruptFileError(f"corrupt mask file: {path}") from None
    return OcclusionMask(arr >= 128)


# ---------------------------------------------------------------------------
# .flo interchange
# ---------------------------------------------------------------------------

def write_flo(flow, path):
    """Write a flow field in Middlebury .flo layout (bit-exact round trip)."""
    h, w = flow.height, flow.width
    data = np.empty((h, w, 2), dtype=np.float32)
    data[:, :, 0] = flow.u.astype(np.float32)
    data[:, :, 1] = flow.v.astype(np.float32)
    data[~flow.valid] = FLO_SENTINEL
    with open(path, "wb") as fh:
        fh.write(FLO_MAGIC)
        fh.write(struct.pack("<ii", w, h))
        fh.write(data.astype("<f4").tobytes())


def read_flo(path):
    """Read a Middlebury .flo file; magnitudes above 1e9 mark invalid pixels."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except FileNotFoundError:
        raise MissingFileError(f"no such flow file: {path}") from None
    if raw[:4] != FLO_MAGIC:
        raise CorruptFileError(f"bad magic in flow file {path}")
    if len(raw) < 12:
        raise CorruptFileError(f"truncated flow header in {path}")
    w, h = struct.unpack("<ii", raw[4:12])
    if w <= 0 or h <= 0:
        raise CorruptFileError(f"bad dimensions {w}x{h} in {path}")
    need = w * h * 2 * 4
    if len(raw) - 12 < need:
        raise CorruptFileError(f"truncated flow payload in {path}")
    data = np.frombuffer(raw[12 : 12 + need], dtype="<f4").reshape(h, w, 2)
    u = data[:, :, 0].astype(np.float64)
    v = data[:, :, 1].astype(np.float64)
    valid = (np.abs(u) <= 1e9) & (np.abs(v) <= 1e9) & np.isfinite(u) & np.isfinite(v)
    return FlowField(u, v, valid)


# ---------------------------------------------------------------------------
# flow visualization (Middlebury color wheel)
# ---------------------------------------------------------------------------

def make_color_wheel():
    """The standard 55-bin color wheel (RY/YG/GC/CB/BM/MR segments)."""
    ry, yg, gc, cb, bm, mr = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((ry + yg + gc + cb + bm + mr, 3))
    col = 0
    wheel[col : col + ry, 0] = 1.0
    wheel[col : col + ry, 1] = np.arange(ry) / ry
    col += ry
    wheel[col : col + yg, 0] = 1.0 - np.arange(yg) / yg
    wheel[col : col + yg, 1] = 1.0
    col += yg
    wheel[col : col + gc, 1] = 1.0
    wheel[col : col + gc, 2] = np.arange(gc) / gc
    col += gc
    wheel[col : col + cb, 1] = 1.0 - np.arange(cb) / cb
    wheel[col : col + cb, 2] = 1.0
    col += cb
    wheel[col : col + bm, 2] = 1.0
    wheel[col : col + bm, 0] = np.arange(bm) / bm
    col += bm
    wheel[col : col + mr, 2] = 1.0 - np.arange(mr) / mr
    wheel[col : col + mr, 0] = 1.0
    return wheel


def flow_to_color(flow, max_magnitude=None):
    """Color-code a flow field: hue from direction, saturation from magnitude.

    Invalid pixels render black.  ``max_magnitude=None`` scales by the largest
    valid magnitude.
    """
    wheel = make_color_wheel()
    ncols = wheel.shape[0]
    u, v, valid = flow.u, flow.v, flow.valid
    mag = np.hypot(u, v)
    if max_magnitude is None:
        max_magnitude = mag[valid].max() if valid.any() else 1.0
        if max_magnitude <= 0:
            max_magnitude = 1.0
    rad = np.clip(mag / max_magnitude, 0.0, 1.0)
    ang = np.arctan2(-v, -u) / np.pi  # [-1, 1]
    fk = (ang + 1.0) / 2.0 * (ncols - 1)
    k0 = np.floor(fk).astype(int) % ncols
    k1 = (k0 + 1) % ncols
    f = (fk - np.floor(fk))[:, :, None]
    col = (1.0 - f) * wheel[k0] + f * wheel[k1]
    col = 1.0 - rad[:, :, None] * (1.0 - col)
    col[~valid] = 0.0
    return Image(np.clip(col, 0.0, 1.0))


# ---------------------------------------------------------------------------
# HSV histogram equalization
# ---------------------------------------------------------------------------

def rgb_to_hsv(rgb):
    """Vectorized RGB -> HSV on [0,1] arrays of shape (..., 3)."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = np.max(rgb, axis=-1)
    minc = np.min(rgb, axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(r == maxc, bc - gc, np.where(g == maxc, 2.0 + rc - bc, 4.0 + gc - rc))
    h = (h / 6.0) % 1.0
    h = np.where(delta > 0, h, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv):
    """Vectorized HSV -> RGB, inverse of rgb_to_hsv."""
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    choices = [
        np.stack([v, t, p], -1),
        np.stack([q, v, p], -1),
        np.stack([p, v, t], -1),
        np.stack([p, q, v], -1),
        np.stack([t, p, v], -1),
        np.stack([v, p, q], -1),
    ]
    out = np.choose(i[..., None], choices)
    return out


def _equalize_unit(values):
    """Classic 256-bin histogram equalization of a [0,1] channel."""
    levels = np.clip(np.round(values * 255.0).astype(int), 0, 255)
    hist = np.bincount(levels.ravel(), minlength=256)
    cdf = np.cumsum(hist) / levels.size
    occupied = np.nonzero(hist)[0]
    cdf_min = cdf[occupied[0]]
    if cdf_min >= 1.0:  # degenerate histogram: single occupied level
        return values
    lut = np.round(255.0 * (cdf - cdf_min) / (1.0 - cdf_min)) / 255.0
    return lut[levels]


def hsv_histogram_equalize(a, b):
    """Equalize the V channel of each image independently; H and S untouched."""
    out = []
    for img in (a, b):
        if img.channels != 3:
            raise ValueError("HSV equalization requires 3-channel images")
        hsv = rgb_to_hsv(img.data)
        hsv[..., 2] = _equalize_unit(hsv[..., 2])
        rgb = np.clip(hsv_to_rgb(hsv), 0.0, 1.0)
        out.append(Image(rgb))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def compute_epe(flow, gt, occ):
    """Mean endpoint error over all / non-occluded / occluded pixels."""
    if not (flow.u.shape == gt.u.shape == occ.occluded.shape):
        raise ValueError("flow, ground truth, and mask dimensions differ")
    if not gt.valid.all():
        raise ValueError("ground-truth flow must be valid everywhere")
    if not flow.valid.all():
        raise ValueError("endpoint error needs a dense flow field")
    err = np.hypot(flow.u - gt.u, flow.v - gt.v)
    occm = occ.occluded

    def _mean(mask):
        n = int(mask.sum())
        return (float(err[mask].mean()) if n else float("nan")), n

    epe_all, n_all = _mean(np.ones_like(occm))
    epe_nocc, n_nocc = _mean(~occm)
    epe_occ, n_occ = _mean(occm)
    return EpeReport(epe_all, epe_nocc, epe_occ, n_all, n_nocc, n_occ)


DIFF_BAND_COLOR = (0.65, 0.85, 1.0)  # |difference| within one pixel
DIFF_A_BETTER_COLOR = (1.0, 0.9, 0.25)
DIFF_B_BETTER_COLOR = (0.9, 0.35, 0.2)


def epe_difference_map(flow_a, flow_b, gt):
    """Render per-pixel EPE(a) - EPE(b): one color family within the +-1 px
    band, the other beyond it (split by which flow is better)."""
    if not (flow_a.u.shape == flow_b.u.shape == gt.u.shape):
        raise ValueError("flow dimensions differ")
    err_a = np.hypot(flow_a.u - gt.u, flow_a.v - gt.v)
    err_b = np.hypot(flow_b.u - gt.u, flow_b.v - gt.v)
    diff = err_a - err_b
    out = np.empty(diff.shape + (3,))
    out[:] = DIFF_BAND_COLOR
    out[diff < -1.0] = DIFF_A_BETTER_COLOR
    out[diff > 1.0] = DIFF_B_BETTER_COLOR
    return Image(out)


def occlusion_scores(pred, gt):
    """Precision / recall / F1 of a predicted occlusion mask."""
    p = pred.occluded
    g = gt.occluded
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1,
            "tp": tp, "fp": fp, "fn": fn}


def bilinear_sample(data, xs, ys):
    """Sample HxWxC data at float coordinates; caller keeps points in bounds."""
    h, w = data.shape[:2]
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(xs - x0, 0.0, 1.0)[..., None]
    fy = np.clip(ys - y0, 0.0, 1.0)[..., None]
    top = data[y0, x0] * (1 - fx) + data[y0, x1] * fx
    bot = data[y1, x0] * (1 - fx) + data[y1, x1] * fx
    return top * (1 - fy) + bot * fy
