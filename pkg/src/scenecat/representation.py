"""9-block pyramid encoding of images over the visual-word dictionary.

Each image becomes a vector of 9*m saturated word-match counts: one full-image
block, four quadrants at full resolution, and four quadrants computed on the
half-resolution image.  Component (b, i) lives at flat index b*m + i.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .codebook import assign_words
from .errors import ConfigError, FormatError, InputError
from .imaging import extract_patches, cslbp_window, hog_window

N_BLOCKS = 9
DEFAULT_SATURATION = 8.0
MIN_IMAGE_SIDE = 32

# largest float32 strictly below 1; keeps every stored response inside [0, 1)
_BELOW_ONE = np.nextafter(np.float32(1.0), np.float32(0.0))


@dataclass(frozen=True)
class Block:
    """One pyramid block: resolution level and its rectangle on that level."""

    level: int  # 0, 1: full-resolution image; 2: half-resolution image
    x: int
    y: int
    w: int
    h: int


def pyramid_layout(width, height):
    """The fixed 1 + 4 + 4 block layout for an image of the given full size."""
    blocks = [Block(0, 0, 0, width, height)]
    for level, (w, h) in ((1, (width, height)), (2, (width // 2, height // 2))):
        xs = (0, w // 2)
        ys = (0, h // 2)
        widths = (w // 2, w - w // 2)
        heights = (h // 2, h - h // 2)
        for r in range(2):
            for c in range(2):
                blocks.append(Block(level, xs[c], ys[r], widths[c], heights[r]))
    return blocks


def downsample2(img):
    """Box-filter downsampling by 2 (odd trailing row/column trimmed)."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    v = img[:h - h % 2, :w - w % 2]
    return 0.25 * (v[0::2, 0::2] + v[1::2, 0::2] + v[0::2, 1::2] + v[1::2, 1::2])


def saturating_response(count, s=DEFAULT_SATURATION):
    """Saturated match count: tanh(count / s), monotone with value 0 at 0."""
    if s <= 0:
        raise ConfigError(f"saturation scale must be > 0, got {s}")
    return np.tanh(np.asarray(count, dtype=np.float64) / s)


def encode(img, dic, sides=(16, 24, 32), stride_fraction=0.5,
           saturation=DEFAULT_SATURATION, image_id="image",
           radius=2, threshold=1.0):
    """Encode one grayscale image as its (9*m,) float32 response vector.

    Every patch of a block increments the match count of exactly one word of
    each type; counts are squashed through the saturating response and the
    nine per-block vectors are concatenated block-major.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if h < MIN_IMAGE_SIDE or w < MIN_IMAGE_SIDE:
        raise InputError(f"image {image_id}: size {w}x{h} below minimum "
                         f"{MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}")
    half = downsample2(img)
    m = dic.m
    counts = np.zeros((N_BLOCKS, m), dtype=np.float64)
    for bi, block in enumerate(pyramid_layout(w, h)):
        src = img if block.level < 2 else half
        patches = extract_patches((block.x, block.y, block.w, block.h),
                                  sides, stride_fraction, block=bi)
        if not patches:
            continue
        hogs = np.empty((len(patches), 32))
        lbps = np.empty((len(patches), 64))
        for pi, p in enumerate(patches):
            win = src[p.y:p.y + p.side, p.x:p.x + p.side]
            hogs[pi] = hog_window(win)
            lbps[pi] = cslbp_window(win, radius, threshold)
        itw_ids, htw_ids = assign_words(dic, hogs, lbps)
        counts[bi] = np.bincount(np.concatenate([itw_ids, htw_ids]), minlength=m)
    resp = saturating_response(counts, saturation).astype(np.float32)
    np.minimum(resp, _BELOW_ONE, out=resp)
    return resp.reshape(-1)


def save_representations(path, mat, ids):
    """Matrix file: <u32 n_images, <u32 dim, row-major float32 data.

    Image ids go to a text sidecar at ``path + ".ids"``, one id per line.
    """
    mat = np.ascontiguousarray(mat, dtype="<f4")
    if mat.ndim != 2:
        raise ConfigError(f"representation matrix must be 2-D, got shape {mat.shape}")
    if len(ids) != mat.shape[0]:
        raise ConfigError(f"{len(ids)} ids for {mat.shape[0]} rows")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", mat.shape[0], mat.shape[1]))
        fh.write(mat.tobytes())
    with open(str(path) + ".ids", "w", encoding="utf-8") as fh:
        for image_id in ids:
            fh.write(f"{image_id}\n")


def load_representations(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 8:
        raise FormatError(f"{path}: truncated header at byte offset {len(buf)}")
    n, dim = struct.unpack_from("<II", buf, 0)
    expected = 8 + n * dim * 4
    if len(buf) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(buf)} "
                          f"(mismatch at byte offset {min(expected, len(buf))})")
    mat = np.frombuffer(buf, dtype="<f4", count=n * dim, offset=8).reshape(n, dim).copy()
    with open(str(path) + ".ids", "r", encoding="utf-8") as fh:
        ids = [line.rstrip("\n") for line in fh]
    if len(ids) != n:
        raise FormatError(f"{path}.ids: {len(ids)} ids for {n} rows")
    return mat, ids
