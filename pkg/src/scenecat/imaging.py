"""Grayscale conversion, patch grids, and the two low-level texture descriptors.

An image is a plain 2-D float array of intensities on the 0..255 scale.
Two descriptors are computed per square patch:

* an oriented-gradient histogram over 2x2 cells and 8 unsigned orientation
  bins (32 values, L2-normalized), capturing structured texture, and
* a center-symmetric binary-pattern histogram over 2x2 cells and 16 code
  bins (64 values, L1-normalized), capturing stochastic texture.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError

HOG_BINS = 8
HOG_DIM = 32
CSLBP_BINS = 16
CSLBP_DIM = 64
CSLBP_RADIUS = 2
CSLBP_THRESHOLD = 1.0
MIN_PATCH_SIDE = 8

_LUMA_R, _LUMA_G, _LUMA_B = 0.299, 0.587, 0.114


def load_gray(path):
    """Decode a PNG/JPEG file and return its grayscale intensity grid."""
    from PIL import Image

    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError, SyntaxError) as exc:
        raise InputError(f"cannot decode image file: {path}") from exc
    return to_grayscale(rgb)


def to_grayscale(rgb):
    """Weighted-luma conversion of an (H, W, 3) raster, clamped to [0, 255]."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise InputError(f"expected an (H, W, 3) raster, got shape {rgb.shape}")
    gray = _LUMA_R * rgb[..., 0] + _LUMA_G * rgb[..., 1] + _LUMA_B * rgb[..., 2]
    return np.clip(gray, 0.0, 255.0)


@dataclass(frozen=True)
class Patch:
    """A square window: top-left corner, side length, owning pyramid block."""

    x: int
    y: int
    side: int
    block: int = 0


def extract_patches(region, sides, stride_fraction, block=0):
    """Regular patch grid inside ``region`` = (x0, y0, width, height).

    For each side ``s`` the stride is round(s * stride_fraction) and the grid
    is clipped so every patch fits inside the region.  Ordering is fixed:
    smallest side first, then row-major.  A region smaller than a side simply
    yields no patches for that side.
    """
    if not sides:
        raise ConfigError("patch sides must be a non-empty list")
    if not 0.0 < stride_fraction <= 1.0:
        raise ConfigError(f"stride_fraction must be in (0, 1], got {stride_fraction}")
    x0, y0, w, h = region
    patches = []
    for side in sorted(sides):
        if side > w or side > h:
            continue
        stride = max(1, round(side * stride_fraction))
        for y in range(y0, y0 + h - side + 1, stride):
            for x in range(x0, x0 + w - side + 1, stride):
                patches.append(Patch(x, y, side, block))
    return patches


def _window(img, patch):
    img = np.asarray(img, dtype=np.float64)
    win = img[patch.y:patch.y + patch.side, patch.x:patch.x + patch.side]
    if win.shape != (patch.side, patch.side):
        raise InputError(f"patch {patch} does not fit inside image of shape {img.shape}")
    return win


_CELL_CACHE = {}


def _cell_index(side):
    # 2x2 cells, split at side//2, row-major cell ids 0..3
    cached = _CELL_CACHE.get(side)
    if cached is None:
        half = side // 2
        row = (np.arange(side) >= half).astype(np.int64)
        cached = row[:, None] * 2 + row[None, :]
        _CELL_CACHE[side] = cached
    return cached


def hog(img, patch):
    """Oriented-gradient descriptor of one patch (see :func:`hog_window`)."""
    return hog_window(_window(img, patch))


def hog_window(win):
    """32-bin gradient-orientation descriptor of a square window.

    Central differences with replicated borders; unsigned orientation is
    quantized into 8 bins over [0, pi) with magnitude-weighted votes; the
    per-cell histograms are concatenated row-major and L2-normalized.  A
    perfectly flat window returns the all-zero vector.
    """
    win = np.asarray(win, dtype=np.float64)
    side = win.shape[0]
    if win.ndim != 2 or win.shape[1] != side:
        raise ValueError(f"window must be square, got shape {win.shape}")
    if side < MIN_PATCH_SIDE:
        raise ValueError(f"window side must be >= {MIN_PATCH_SIDE}, got {side}")

    padded = np.pad(win, 1, mode="edge")
    gx = padded[1:-1, 2:] - padded[1:-1, :-2]
    gy = padded[2:, 1:-1] - padded[:-2, 1:-1]
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx) % np.pi  # unsigned orientation in [0, pi)
    bins = np.minimum((ang * (HOG_BINS / np.pi)).astype(np.int64), HOG_BINS - 1)
    flat = _cell_index(side) * HOG_BINS + bins
    hist = np.bincount(flat.ravel(), weights=mag.ravel(), minlength=HOG_DIM)
    norm = np.linalg.norm(hist)
    if norm == 0.0:
        return hist
    return hist / norm


def _pair_difference(win, radius, dx, dy):
    # Difference n(x + d) - n(x - d) of the two opposite circle samples for
    # every interior pixel x.  The opposite sample mirrors the bilinear
    # weights onto point-reflected pixels, so each weight multiplies a raw
    # intensity difference; differencing before weighting keeps the operator
    # exactly invariant to a global additive shift.
    n = win.shape[0] - 2 * radius

    def sl(ddy, ddx):
        return win[radius + ddy:radius + ddy + n, radius + ddx:radius + ddx + n]

    x0 = int(np.floor(dx))
    y0 = int(np.floor(dy))
    fx = dx - x0
    fy = dy - y0
    if fx < 1e-12 and fy < 1e-12:
        return sl(y0, x0) - sl(-y0, -x0)
    return ((1 - fy) * (1 - fx) * (sl(y0, x0) - sl(-y0, -x0))
            + (1 - fy) * fx * (sl(y0, x0 + 1) - sl(-y0, -x0 - 1))
            + fy * (1 - fx) * (sl(y0 + 1, x0) - sl(-y0 - 1, -x0))
            + fy * fx * (sl(y0 + 1, x0 + 1) - sl(-y0 - 1, -x0 - 1)))


def cslbp_codes(win, radius=CSLBP_RADIUS, threshold=CSLBP_THRESHOLD):
    """Per-pixel center-symmetric codes of a square window.

    For every pixel at least ``radius`` away from the window border, 8
    neighbors equally spaced on a circle of ``radius`` are sampled with
    bilinear interpolation, and the four opposite-pair differences are
    thresholded into one 4-bit code:  code = sum_i b(n_i - n_{i+4}) * 2^i
    with b(x) = 1 iff x > threshold.  Returns an integer grid of codes in
    [0, 16) of shape (side - 2r, side - 2r).
    """
    win = np.asarray(win, dtype=np.float64)
    side = win.shape[0]
    if win.ndim != 2 or win.shape[1] != side:
        raise ValueError(f"window must be square, got shape {win.shape}")
    if side < max(MIN_PATCH_SIDE, 2 * radius + 1):
        raise ValueError(f"window side {side} too small for radius {radius}")

    codes = None
    for i in range(4):
        a = 2.0 * np.pi * i / 8.0
        diff = _pair_difference(win, radius, radius * np.cos(a), radius * np.sin(a))
        bit = (diff > threshold).astype(np.int64) << i
        codes = bit if codes is None else codes | bit
    return codes


def cslbp(img, patch, radius=CSLBP_RADIUS, threshold=CSLBP_THRESHOLD):
    """Center-symmetric code histogram of one patch (see :func:`cslbp_window`)."""
    return cslbp_window(_window(img, patch), radius, threshold)


def cslbp_window(win, radius=CSLBP_RADIUS, threshold=CSLBP_THRESHOLD):
    """64-bin code histogram of a square window, L1-normalized.

    Codes (see :func:`cslbp_codes`) are pooled into a 16-bin histogram per
    2x2 cell of the patch and the four histograms are concatenated.
    """
    win = np.asarray(win, dtype=np.float64)
    codes = cslbp_codes(win, radius, threshold)
    side = win.shape[0]
    cell = _cell_index(side)[radius:side - radius, radius:side - radius]
    flat = cell * CSLBP_BINS + codes
    hist = np.bincount(flat.ravel(), minlength=CSLBP_DIM).astype(np.float64)
    return hist / hist.sum()
