"""Per-category generative models learned by greedy informative-feature pursuit.

A category model is an ordered set of response components, each carrying an
exponential-tilt weight ``lambda`` and normalizer ``z`` solved in closed form
from the moment constraint that the tilted expectation match the category
mean.  The per-feature information gain ``lambda * e_f - log z`` equals the
KL divergence between the tilted and background Bernoulli models, so it is
non-negative and zero only for uninformative features.

Feature candidates live at pyramid-component granularity: flat index
``block * m + word`` over the concatenated representation.
"""

import math
from dataclasses import dataclass

import numpy as np

EXPECTATION_CLAMP = 0.01  # keeps lambda finite for singleton or saturated categories


@dataclass(frozen=True)
class CategoryModel:
    """Selected features in pursuit order with their weights and gains."""

    feature_idx: np.ndarray  # flat component indices, selection order
    lam: np.ndarray
    log_z: np.ndarray
    gains: np.ndarray

    @property
    def n_features(self):
        return len(self.feature_idx)

    def rows(self, m):
        """Iterate (rank, block, word, lam, z, gain); m is the word count per block."""
        for r in range(self.n_features):
            flat = int(self.feature_idx[r])
            block, word = (flat // m, flat % m) if m > 0 else (0, flat)
            yield r, block, word, float(self.lam[r]), math.exp(float(self.log_z[r])), \
                float(self.gains[r])


EMPTY_MODEL = CategoryModel(
    feature_idx=np.empty(0, dtype=np.int64),
    lam=np.empty(0),
    log_z=np.empty(0),
    gains=np.empty(0),
)


def clamp_expectations(values):
    return np.clip(values, EXPECTATION_CLAMP, 1.0 - EXPECTATION_CLAMP)


def background_expectations(reps):
    """Per-component mean response over the whole collection, clamped to (0, 1)."""
    reps = np.asarray(reps, dtype=np.float64)
    if reps.ndim != 2 or reps.shape[0] < 1:
        raise ValueError(f"need a non-empty (n, d) response matrix, got {reps.shape}")
    return clamp_expectations(reps.mean(axis=0))


def category_expectations(member_reps):
    """Per-component mean response over a category's members, clamped to (0, 1)."""
    member_reps = np.asarray(member_reps, dtype=np.float64)
    if member_reps.ndim != 2 or member_reps.shape[0] < 1:
        raise ValueError("category must be non-empty")
    return clamp_expectations(member_reps.mean(axis=0))


def min_kl_solve(e_f, e_0):
    """Closed-form tilt weight and normalizer for one feature.

    lambda is the log odds ratio of the two expectations and z renormalizes
    the tilted Bernoulli model, so that exp(lambda) * e_0 / z == e_f.
    """
    lam = (math.log(e_f) + math.log1p(-e_0)) - (math.log1p(-e_f) + math.log(e_0))
    z = math.exp(lam) * e_0 + 1.0 - e_0
    return lam, z


def _tilt_all(e_f, e_0):
    # vectorized min_kl_solve plus the per-feature information gain
    lam = (np.log(e_f) + np.log1p(-e_0)) - (np.log1p(-e_f) + np.log(e_0))
    log_z = np.log(np.exp(lam) * e_0 + 1.0 - e_0)
    gains = lam * e_f - log_z
    return lam, log_z, gains


def max_kl_select(e_f, e_0, already_selected=()):
    """Most informative unselected feature, or None.

    Candidates are the features with positive evidence (e_f > e_0); among
    them the one with the largest information gain wins, ties going to the
    lowest flat index.  Returns None when no feature adds information.
    """
    e_f = np.asarray(e_f, dtype=np.float64)
    e_0 = np.asarray(e_0, dtype=np.float64)
    if e_f.shape != e_0.shape:
        raise ValueError(f"expectation shape mismatch: {e_f.shape} vs {e_0.shape}")
    score = e_f - e_0
    mask = score > 0.0
    if already_selected:
        mask[np.fromiter(already_selected, dtype=np.int64)] = False
    if not mask.any():
        return None
    cand = np.flatnonzero(mask)
    _, _, gains = _tilt_all(e_f[cand], e_0[cand])
    return int(cand[gains.argmax()])  # argmax keeps the first (lowest) index on ties


def pursue_from_expectations(e_f, e_0, max_features=40):
    """Greedy pursuit given precomputed expectations.

    Because the candidate scores are fixed (features are treated as
    independent), the greedy loop reduces to ranking the positive-evidence
    features by gain and keeping the top ``max_features``.
    """
    if max_features < 1:
        raise ValueError(f"max_features must be >= 1, got {max_features}")
    e_f = np.asarray(e_f, dtype=np.float64)
    e_0 = np.asarray(e_0, dtype=np.float64)
    cand = np.flatnonzero(e_f - e_0 > 0.0)
    if cand.size == 0:
        return EMPTY_MODEL
    lam, log_z, gains = _tilt_all(e_f[cand], e_0[cand])
    order = np.argsort(-gains, kind="stable")[:max_features]
    sel = cand[order]
    return CategoryModel(sel, lam[order], log_z[order], gains[order])


def pursue_model(member_reps, background, max_features=40):
    """Learn one category's model from its member representations."""
    return pursue_from_expectations(category_expectations(member_reps),
                                    np.asarray(background, dtype=np.float64),
                                    max_features)


def log_phi(model, rep):
    """Log-likelihood contribution of one image under a category model.

    The constant base-density term cancels in every posterior ratio and is
    dropped, so the empty model scores 0.
    """
    if model.n_features == 0:
        return 0.0
    rep = np.asarray(rep, dtype=np.float64)
    return float(rep[model.feature_idx] @ model.lam - model.log_z.sum())
