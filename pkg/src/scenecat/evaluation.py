"""Clustering metrics against ground truth, plus synthetic desk-scale fixtures."""

import csv

import numpy as np

from .errors import ConfigError, FormatError, InputError


def _contingency(x, y):
    x = np.asarray(x)
    y = np.asarray(y)
    if x.shape != y.shape or x.ndim != 1:
        raise ConfigError(f"label vectors must be 1-D and equal length: "
                          f"{x.shape} vs {y.shape}")
    if len(x) < 1:
        raise ConfigError("need at least one labeled item")
    _, xi = np.unique(x, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    nx = xi.max() + 1
    ny = yi.max() + 1
    counts = np.bincount(yi * nx + xi, minlength=nx * ny).reshape(ny, nx)
    return counts


def purity(x, y):
    """Fraction of items in the majority true class of their predicted cluster."""
    counts = _contingency(x, y)
    return float(counts.max(axis=1).sum() / counts.sum())


def conditional_entropy(x, y):
    """H(X | Y) in nats; 0 iff every predicted cluster is pure."""
    counts = _contingency(x, y).astype(np.float64)
    n = counts.sum()
    cluster_tot = counts.sum(axis=1)
    h = 0.0
    for j in range(counts.shape[0]):
        nz = counts[j][counts[j] > 0]
        h += np.sum(nz * (np.log(cluster_tot[j]) - np.log(nz)))
    return float(h / n)


def synth_representations(n_clusters, per_cluster, dim, separation, noise, seed):
    """Synthetic response vectors with disjoint-support cluster prototypes.

    Each cluster owns ``separation`` consecutive components with values drawn
    in [0.5, 0.9); members are the prototype plus truncated Gaussian noise,
    re-clamped to [0, 1).  Returns (reps, ground_truth).
    """
    if separation <= 0:
        raise ConfigError(f"separation must be > 0, got {separation}")
    if dim < n_clusters * separation:
        raise ConfigError(f"dim={dim} too small for {n_clusters} disjoint "
                          f"supports of width {separation}")
    rng = np.random.default_rng(seed)
    protos = np.zeros((n_clusters, dim))
    for c in range(n_clusters):
        protos[c, c * separation:(c + 1) * separation] = rng.uniform(0.5, 0.9, separation)
    reps = np.repeat(protos, per_cluster, axis=0)
    if noise > 0:
        jitter = rng.normal(0.0, noise, size=reps.shape)
        np.clip(jitter, -3.0 * noise, 3.0 * noise, out=jitter)
        reps = reps + jitter
    np.clip(reps, 0.0, np.nextafter(1.0, 0.0), out=reps)
    truth = np.repeat(np.arange(n_clusters), per_cluster)
    return reps, truth


def write_labels_csv(path, ids, labels):
    """Solution/ground-truth file: header then one ``image_id,label`` row per image."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "label"])
        for image_id, label in zip(ids, labels):
            writer.writerow([image_id, int(label)])


def read_labels_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["image_id", "label"]:
            raise FormatError(f"{path}: expected header 'image_id,label'")
        out = {}
        for row in reader:
            if not row:
                continue
            if len(row) < 2:
                raise FormatError(f"{path}: short row {row!r}")
            try:
                out[row[0]] = int(row[1])
            except ValueError as exc:
                raise FormatError(f"{path}: non-integer label in row {row!r}") from exc
    return out


def align_outcome(truth, predicted):
    """Join two id -> label maps into aligned arrays, erroring on id mismatch."""
    missing = sorted(set(truth) - set(predicted))
    if missing:
        raise InputError(f"prediction is missing {len(missing)} ids, "
                         f"first: {missing[:3]}")
    ids = sorted(truth)
    x = np.array([truth[i] for i in ids])
    y = np.array([predicted[i] for i in ids])
    return ids, x, y


def write_metrics_csv(path, rows):
    """Metrics report: header then one ``metric,value`` row per entry."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name, value in rows:
            writer.writerow([name, f"{value:.10g}"])
