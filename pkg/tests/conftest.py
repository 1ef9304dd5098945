import pathlib
import sys

import numpy as np
import pytest

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))


def stripe_image(h, w, period=8, horizontal=False, lo=40.0, hi=210.0):
    """Square-wave stripes; strong edges along one orientation."""
    axis = np.arange(h if horizontal else w)
    wave = ((axis // (period // 2)) % 2).astype(np.float64)
    line = lo + (hi - lo) * wave
    return np.tile(line[:, None], (1, w)) if horizontal else np.tile(line, (h, 1))


def noise_image(h, w, seed=0, lo=0.0, hi=255.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=(h, w))


def checker_image(h, w, cell=4, lo=30.0, hi=220.0):
    yy, xx = np.indices((h, w))
    return np.where(((yy // cell) + (xx // cell)) % 2 == 0, lo, hi).astype(np.float64)


@pytest.fixture
def texture_corpus():
    """Small mixed corpus of grayscale textures for end-to-end smoke tests."""
    images = []
    for i in range(5):
        images.append(stripe_image(64, 64, period=6 + 2 * i))
        images.append(stripe_image(64, 64, period=6 + 2 * i, horizontal=True))
        images.append(checker_image(64, 64, cell=3 + i))
        images.append(noise_image(64, 64, seed=100 + i))
    return images


@pytest.fixture
def tiny_dictionary(texture_corpus):
    """Small but real dictionary built from the texture corpus."""
    from scenecat.codebook import build_dictionary, sample_training_patches

    itw_pool, htw_pool = sample_training_patches(
        texture_corpus, per_image=40, seed=7, sides=(16, 24))
    dic, _info = build_dictionary(itw_pool, htw_pool, n_itw=12, n_htw=12,
                                  seed=3, max_iters=15)
    return dic
