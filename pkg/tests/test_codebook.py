import math

import numpy as np
import pytest

from scenecat.codebook import (Dictionary, assign_word, assign_words,
                               build_dictionary, kmeans, load_dictionary,
                               sample_training_patches, save_dictionary)
from scenecat.errors import ConfigError, FormatError

from conftest import noise_image, stripe_image


def small_images(n=6):
    return [noise_image(48, 48, seed=50 + i) for i in range(n)]


# -- training pools ------------------------------------------------------------

def test_pool_sizes_bounded_by_request():
    itw, htw = sample_training_patches(small_images(), per_image=20, seed=1)
    assert len(htw) == 6 * 20
    assert len(itw) <= 6 * 20
    assert itw.shape[1] == 32 and htw.shape[1] == 64


def test_pools_reproducible_under_seed():
    imgs = small_images()
    a = sample_training_patches(imgs, per_image=15, seed=42)
    b = sample_training_patches(imgs, per_image=15, seed=42)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_pools_differ_across_seeds():
    imgs = small_images()
    a = sample_training_patches(imgs, per_image=15, seed=1)
    b = sample_training_patches(imgs, per_image=15, seed=2)
    assert a[1].shape != b[1].shape or not np.array_equal(a[1], b[1])


def test_flat_patches_dropped_from_itw_pool_only():
    flat = [np.full((40, 40), 128.0)]
    itw, htw = sample_training_patches(flat, per_image=10, seed=0, sides=(16,))
    assert len(itw) == 0
    assert len(htw) == 10


def test_pool_cap_applies():
    itw, htw = sample_training_patches(small_images(), per_image=20, seed=3,
                                       pool_cap=25)
    assert len(itw) <= 25 and len(htw) == 25


# -- k-means ----------------------------------------------------------------------

def test_kmeans_exact_points_zero_inertia():
    pts = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    cent, inertia = kmeans(pts, 3, seed=0)
    assert inertia[-1] == pytest.approx(0.0, abs=1e-20)
    got = sorted(map(tuple, cent.tolist()))
    assert got == sorted(map(tuple, pts.tolist()))


def test_kmeans_two_blobs_recovers_means():
    rng = np.random.default_rng(0)
    sigma, n = 0.5, 400
    a = rng.normal((0.0, 0.0), sigma, size=(n, 2))
    b = rng.normal((8.0, 8.0), sigma, size=(n, 2))
    cent, _ = kmeans(np.vstack([a, b]), 2, seed=1)
    cent = cent[np.argsort(cent[:, 0])]
    tol = 3 * sigma / math.sqrt(n)
    np.testing.assert_allclose(cent[0], a.mean(axis=0), atol=tol)
    np.testing.assert_allclose(cent[1], b.mean(axis=0), atol=tol)


def test_kmeans_inertia_non_increasing():
    pool = np.random.default_rng(4).uniform(0, 1, size=(300, 8))
    _, inertia = kmeans(pool, 10, seed=2, tol=0.0, max_iters=25)
    assert all(b <= a + 1e-9 for a, b in zip(inertia, inertia[1:]))


def test_kmeans_deterministic_under_seed():
    pool = np.random.default_rng(6).uniform(0, 1, size=(120, 5))
    a, _ = kmeans(pool, 7, seed=9)
    b, _ = kmeans(pool, 7, seed=9)
    np.testing.assert_array_equal(a, b)


def test_kmeans_pool_smaller_than_k_errors():
    with pytest.raises(ConfigError):
        kmeans(np.zeros((3, 4)), 5)


# -- assignment ----------------------------------------------------------------------

def _toy_dictionary():
    itw = np.zeros((8, 32), dtype=np.float32)
    for i in range(8):
        itw[i, i] = float(i + 1)
    htw = np.zeros((8, 64), dtype=np.float32)
    for i in range(8):
        htw[i, 8 + i] = float(i + 1)
    return Dictionary(itw, htw, seed=0)


def test_assign_exact_centroid_hits_its_word():
    dic = _toy_dictionary()
    itw_id, htw_id = assign_word(dic, dic.itw[5], dic.htw[2])
    assert itw_id == 5
    assert htw_id == dic.n_itw + 2


def test_assign_tie_breaks_to_lowest_id():
    # words 3 and 7 are exactly equidistant from the origin query
    itw = np.ones((8, 32), dtype=np.float32) * 50.0
    itw[3] = 0.0
    itw[3, 0] = 2.0
    itw[7] = 0.0
    itw[7, 0] = -2.0
    dic = Dictionary(itw, np.zeros((2, 64), dtype=np.float32))
    query = np.zeros(32)
    assert np.sum((dic.itw[3] - query) ** 2) == np.sum((dic.itw[7] - query) ** 2)
    got, _ = assign_word(dic, query, np.zeros(64))
    assert got == 3


def test_assign_matches_linear_scan_oracle():
    rng = np.random.default_rng(17)
    dic = Dictionary(rng.uniform(0, 1, (20, 32)).astype(np.float32),
                     rng.uniform(0, 1, (20, 64)).astype(np.float32))
    for _ in range(200):
        h = rng.uniform(0, 1, 32)
        l = rng.uniform(0, 1, 64)
        itw_id, htw_id = assign_word(dic, h, l)
        # brute-force linear scan
        best_i = min(range(20), key=lambda j: (float(np.sum((dic.itw[j] - h) ** 2)), j))
        best_h = min(range(20), key=lambda j: (float(np.sum((dic.htw[j] - l) ** 2)), j))
        assert itw_id == best_i
        assert htw_id == 20 + best_h


def test_batch_assignment_agrees_with_scalar():
    rng = np.random.default_rng(23)
    dic = Dictionary(rng.uniform(0, 1, (10, 32)).astype(np.float32),
                     rng.uniform(0, 1, (10, 64)).astype(np.float32))
    hogs = rng.uniform(0, 1, (30, 32))
    lbps = rng.uniform(0, 1, (30, 64))
    iw, hw = assign_words(dic, hogs, lbps)
    for p in range(30):
        si, sh = assign_word(dic, hogs[p], lbps[p])
        assert iw[p] == si and hw[p] == sh


# -- file round trip ---------------------------------------------------------------

def test_dictionary_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(31)
    dic = Dictionary(rng.normal(size=(6, 32)).astype(np.float32),
                     rng.normal(size=(9, 64)).astype(np.float32),
                     seed=1234, params={"n_itw": 6, "n_htw": 9})
    path = tmp_path / "words.dict"
    save_dictionary(dic, path)
    loaded = load_dictionary(path)
    assert loaded == dic
    assert loaded.itw.dtype == np.float32


def test_dictionary_bad_magic_reports_offset(tmp_path):
    path = tmp_path / "bad.dict"
    path.write_bytes(b"not a dictionary file at all....")
    with pytest.raises(FormatError, match="offset 0"):
        load_dictionary(path)


def test_dictionary_truncation_reports_offset(tmp_path):
    rng = np.random.default_rng(33)
    dic = Dictionary(rng.normal(size=(4, 32)).astype(np.float32),
                     rng.normal(size=(4, 64)).astype(np.float32))
    path = tmp_path / "trunc.dict"
    save_dictionary(dic, path)
    data = path.read_bytes()
    path.write_bytes(data[:len(data) // 2])
    with pytest.raises(FormatError, match="offset"):
        load_dictionary(path)


def test_build_dictionary_separates_edge_orientations():
    # a corpus of horizontal vs vertical stripes: structured-word centroids
    # should split along the two dominant gradient orientations
    imgs = [stripe_image(48, 48, period=8) for _ in range(4)]
    imgs += [stripe_image(48, 48, period=8, horizontal=True) for _ in range(4)]
    itw_pool, htw_pool = sample_training_patches(imgs, per_image=60, seed=5,
                                                 sides=(16,))
    dic, _ = build_dictionary(itw_pool, htw_pool, n_itw=4, n_htw=4, seed=0,
                              max_iters=20)
    argmax_bins = {int(np.argmax(c)) % 8 for c in dic.itw}
    assert 0 in argmax_bins  # horizontal gradients (vertical stripes)
    assert 4 in argmax_bins  # vertical gradients (horizontal stripes)
