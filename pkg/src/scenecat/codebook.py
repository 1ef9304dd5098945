"""Two-type visual-word dictionary: patch pools, k-means, assignment, file io.

Structured-texture words are clustered on the gradient descriptor, stochastic
ones on the binary-pattern descriptor.  Word ids are dense 0..m-1 with all
structured (ITW) words before all stochastic (HTW) words.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError
from .imaging import cslbp_window, hog_window

DEFAULT_SIDES = (16, 24, 32)
DEFAULT_POOL_CAP = 200_000

_MAGIC = b"scenecat-dict-1\x00"  # 16 bytes, embeds the format version


def sample_image_patches(img, rng, per_image, sides=DEFAULT_SIDES,
                         radius=2, threshold=1.0):
    """Descriptors of ``per_image`` patches at uniformly random position and scale.

    Returns (hog_list, lbp_list); flat patches (all-zero gradient descriptor)
    are dropped from the hog list only.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    usable = [s for s in sorted(sides) if s <= min(h, w)]
    hogs, lbps = [], []
    if not usable:
        return hogs, lbps
    for _ in range(per_image):
        side = usable[rng.integers(len(usable))]
        x = int(rng.integers(0, w - side + 1))
        y = int(rng.integers(0, h - side + 1))
        win = img[y:y + side, x:x + side]
        hd = hog_window(win)
        lbps.append(cslbp_window(win, radius, threshold))
        if hd.any():
            hogs.append(hd)
    return hogs, lbps


def sample_training_patches(images, per_image, seed, sides=DEFAULT_SIDES,
                            pool_cap=DEFAULT_POOL_CAP, radius=2, threshold=1.0):
    """Build the two descriptor pools over a list of grayscale images.

    Sampling is reproducible under ``seed`` and independent per image (each
    image gets its own child seed), so the pools do not depend on how callers
    parallelize the per-image work.
    """
    if per_image < 1:
        raise ConfigError(f"per_image must be >= 1, got {per_image}")
    children = np.random.SeedSequence(seed).spawn(len(images))
    hog_pool, lbp_pool = [], []
    for img, child in zip(images, children):
        rng = np.random.default_rng(child)
        hogs, lbps = sample_image_patches(img, rng, per_image, sides, radius, threshold)
        hog_pool.extend(hogs)
        lbp_pool.extend(lbps)
    itw_pool = np.asarray(hog_pool[:pool_cap], dtype=np.float64)
    htw_pool = np.asarray(lbp_pool[:pool_cap], dtype=np.float64)
    return itw_pool, htw_pool


def _sq_dists(x, c):
    # squared Euclidean distances, (n, k); clipped against tiny negatives
    d2 = (np.square(x).sum(axis=1)[:, None]
          - 2.0 * x @ c.T
          + np.square(c).sum(axis=1)[None, :])
    return np.maximum(d2, 0.0)


def _plusplus_init(pool, k, rng):
    n = len(pool)
    centroids = np.empty((k, pool.shape[1]))
    centroids[0] = pool[rng.integers(n)]
    closest = _sq_dists(pool, centroids[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centroids[j] = pool[idx]
        closest = np.minimum(closest, _sq_dists(pool, centroids[j:j + 1])[:, 0])
    return centroids


def kmeans(pool, k, seed=0, max_iters=100, tol=1e-4):
    """Lloyd's algorithm with k-means++ seeding.

    Iterates until the largest centroid shift drops below ``tol`` or
    ``max_iters`` is reached.  Empty clusters are reseeded to the point
    farthest from its assigned centroid.  Returns (centroids, inertia_history)
    where the history records the objective after each assignment step.
    """
    pool = np.asarray(pool, dtype=np.float64)
    n = len(pool)
    if n < k:
        raise ConfigError(f"k-means needs at least k={k} samples, got {n}")
    rng = np.random.default_rng(seed)
    centroids = _plusplus_init(pool, k, rng)
    inertia = []
    dims = pool.shape[1]
    for _ in range(max_iters):
        d2 = _sq_dists(pool, centroids)
        assign = d2.argmin(axis=1)
        mind = d2[np.arange(n), assign]
        inertia.append(float(mind.sum()))

        counts = np.bincount(assign, minlength=k)
        new = np.zeros_like(centroids)
        for j in range(dims):
            new[:, j] = np.bincount(assign, weights=pool[:, j], minlength=k)
        nonzero = counts > 0
        new[nonzero] /= counts[nonzero, None]

        empties = np.flatnonzero(~nonzero)
        if empties.size:
            farthest = np.argsort(-mind)[:empties.size]
            new[empties] = pool[farthest]

        shift = float(np.sqrt(np.square(new - centroids).sum(axis=1)).max())
        centroids = new
        if shift < tol:
            break
    return centroids, inertia


@dataclass
class Dictionary:
    """Immutable two-type codebook: centroids, counts and build provenance."""

    itw: np.ndarray  # (n_itw, 32) float32
    htw: np.ndarray  # (n_htw, 64) float32
    seed: int = 0
    params: dict = field(default_factory=dict)

    @property
    def n_itw(self):
        return self.itw.shape[0]

    @property
    def n_htw(self):
        return self.htw.shape[0]

    @property
    def m(self):
        return self.n_itw + self.n_htw

    def __post_init__(self):
        self.itw = np.ascontiguousarray(self.itw, dtype=np.float32)
        self.htw = np.ascontiguousarray(self.htw, dtype=np.float32)
        if self.itw.ndim != 2 or self.itw.shape[1] != 32:
            raise ConfigError(f"ITW centroids must be (n, 32), got {self.itw.shape}")
        if self.htw.ndim != 2 or self.htw.shape[1] != 64:
            raise ConfigError(f"HTW centroids must be (n, 64), got {self.htw.shape}")
        self._itw64 = self.itw.astype(np.float64)
        self._htw64 = self.htw.astype(np.float64)

    def __eq__(self, other):
        if not isinstance(other, Dictionary):
            return NotImplemented
        return (np.array_equal(self.itw, other.itw)
                and np.array_equal(self.htw, other.htw)
                and self.seed == other.seed
                and self.params == other.params)


def build_dictionary(itw_pool, htw_pool, n_itw=500, n_htw=500, seed=0,
                     max_iters=100, tol=1e-4):
    """Cluster both pools and assemble the dictionary.

    Returns (dictionary, info) where info carries pool sizes and the final
    k-means inertia of each side.
    """
    itw_c, itw_inertia = kmeans(itw_pool, n_itw, seed=seed, max_iters=max_iters, tol=tol)
    htw_c, htw_inertia = kmeans(htw_pool, n_htw, seed=seed + 1, max_iters=max_iters, tol=tol)
    params = {"n_itw": int(n_itw), "n_htw": int(n_htw),
              "kmeans_max_iters": int(max_iters), "kmeans_tol": float(tol),
              "itw_pool_size": int(len(itw_pool)), "htw_pool_size": int(len(htw_pool))}
    dic = Dictionary(itw_c.astype(np.float32), htw_c.astype(np.float32),
                     seed=seed, params=params)
    info = {"itw_inertia": itw_inertia, "htw_inertia": htw_inertia,
            "itw_pool_size": len(itw_pool), "htw_pool_size": len(htw_pool)}
    return dic, info


def _nearest(x, centroids64):
    d2 = _sq_dists(np.atleast_2d(np.asarray(x, dtype=np.float64)), centroids64)
    return d2.argmin(axis=1)  # argmin takes the first minimum: lowest id wins ties


def assign_word(dic, hog_desc, lbp_desc):
    """Nearest word of each type; returns (itw_id, htw_id) as global word ids."""
    itw_id = int(_nearest(hog_desc, dic._itw64)[0])
    htw_id = dic.n_itw + int(_nearest(lbp_desc, dic._htw64)[0])
    return itw_id, htw_id


def assign_words(dic, hogs, lbps):
    """Batch variant of :func:`assign_word` over (P, 32) and (P, 64) arrays."""
    itw_ids = _nearest(hogs, dic._itw64)
    htw_ids = _nearest(lbps, dic._htw64) + dic.n_itw
    return itw_ids, htw_ids


def save_dictionary(dic, path):
    """Binary layout: 16-byte magic, counts, float32 centroids, seed + params footer."""
    blob = json.dumps(dic.params, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", dic.n_itw, dic.n_htw))
        fh.write(dic.itw.astype("<f4").tobytes())
        fh.write(dic.htw.astype("<f4").tobytes())
        fh.write(struct.pack("<qI", dic.seed, len(blob)))
        fh.write(blob)


def load_dictionary(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 24:
        raise FormatError(f"{path}: truncated header at byte offset {len(buf)}")
    if buf[:16] != _MAGIC:
        raise FormatError(f"{path}: bad magic at byte offset 0")
    n_itw, n_htw = struct.unpack_from("<II", buf, 16)
    off = 24
    itw_bytes = n_itw * 32 * 4
    htw_bytes = n_htw * 64 * 4
    if len(buf) < off + itw_bytes + htw_bytes + 12:
        raise FormatError(f"{path}: truncated centroid block at byte offset {len(buf)}")
    itw = np.frombuffer(buf, dtype="<f4", count=n_itw * 32, offset=off).reshape(n_itw, 32).copy()
    off += itw_bytes
    htw = np.frombuffer(buf, dtype="<f4", count=n_htw * 64, offset=off).reshape(n_htw, 64).copy()
    off += htw_bytes
    seed, blob_len = struct.unpack_from("<qI", buf, off)
    off += 12
    if len(buf) != off + blob_len:
        raise FormatError(f"{path}: footer length mismatch at byte offset {off}")
    try:
        params = json.loads(buf[off:off + blob_len].decode("utf-8")) if blob_len else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad params blob at byte offset {off}") from exc
    return Dictionary(itw, htw, seed=int(seed), params=params)
