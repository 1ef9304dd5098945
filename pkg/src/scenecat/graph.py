"""Sparse image-similarity graph with per-edge turn-on probabilities.

Edge strength between two images is exp(-tau * D) where D is the symmetric
Kullback-Leibler distance between their smoothed, normalized response vectors.
Each vertex keeps only its strongest ``max_neighbors`` candidates; an edge
survives when either endpoint ranks it.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

DEFAULT_TAU = 0.2
DEFAULT_MAX_NEIGHBORS = 6
DEFAULT_SMOOTHING = 1e-6


def _to_prob(vec, eps):
    p = np.asarray(vec, dtype=np.float64) + eps
    return p / p.sum()


def symmetric_kl(ra, rb, eps=DEFAULT_SMOOTHING):
    """Symmetric KL distance of two response vectors after additive smoothing."""
    ra = np.asarray(ra, dtype=np.float64)
    rb = np.asarray(rb, dtype=np.float64)
    if ra.shape != rb.shape:
        raise ConfigError(f"representation length mismatch: {ra.shape} vs {rb.shape}")
    pa = _to_prob(ra, eps)
    pb = _to_prob(rb, eps)
    return float(np.sum((pa - pb) * (np.log(pa) - np.log(pb))))


def edge_probability(ra, rb, tau=DEFAULT_TAU, eps=DEFAULT_SMOOTHING):
    """Turn-on probability exp(-tau * D); 1 for identical vectors."""
    if tau <= 0:
        raise ConfigError(f"tau must be > 0, got {tau}")
    return float(np.exp(-tau * symmetric_kl(ra, rb, eps)))


@dataclass
class SimilarityGraph:
    """Undirected sparse graph; edges stored once with src < dst."""

    n_vertices: int
    src: np.ndarray
    dst: np.ndarray
    q: np.ndarray
    _adj: list = field(default=None, repr=False, compare=False)

    @property
    def n_edges(self):
        return len(self.src)

    def adjacency(self):
        """Per-vertex list of (neighbor, edge_index) pairs."""
        if self._adj is None:
            adj = [[] for _ in range(self.n_vertices)]
            for e, (s, t) in enumerate(zip(self.src.tolist(), self.dst.tolist())):
                adj[s].append((t, e))
                adj[t].append((s, e))
            self._adj = adj
        return self._adj

    def degrees(self):
        deg = np.zeros(self.n_vertices, dtype=np.int64)
        np.add.at(deg, self.src, 1)
        np.add.at(deg, self.dst, 1)
        return deg

    def dump(self, path):
        """Debug edge list: one ``s t q`` line per edge, q at 6 decimals."""
        with open(path, "w", encoding="utf-8") as fh:
            for s, t, q in zip(self.src.tolist(), self.dst.tolist(), self.q.tolist()):
                fh.write(f"{s} {t} {q:.6f}\n")


def build_graph(reps, tau=DEFAULT_TAU, max_neighbors=DEFAULT_MAX_NEIGHBORS,
                eps=DEFAULT_SMOOTHING, block_rows=256):
    """All-pairs construction followed by mutual top-k sparsification.

    The pairwise distance matrix is computed in row blocks from the identity
    D(a, b) = s_a + s_b - p_a . log p_b - p_b . log p_a with s_x = p_x . log p_x,
    which turns the quadratic sweep into dense matrix products.  Ties at the
    top-k cutoff go to the lower vertex index.  Retained edges get their
    probability recomputed pairwise so the result is independent of block and
    input order.
    """
    reps = np.asarray(reps, dtype=np.float64)
    n = reps.shape[0]
    if n < 2:
        raise ConfigError(f"graph needs at least 2 images, got {n}")
    if max_neighbors < 1:
        raise ConfigError(f"max_neighbors must be >= 1, got {max_neighbors}")
    if tau <= 0:
        raise ConfigError(f"tau must be > 0, got {tau}")

    p = reps + eps
    p /= p.sum(axis=1, keepdims=True)
    logp = np.log(p)
    s = np.einsum("ij,ij->i", p, logp)

    index = np.arange(n)
    keep = min(max_neighbors, n - 1)
    pairs = set()
    for start in range(0, n, block_rows):
        stop = min(start + block_rows, n)
        cross1 = p[start:stop] @ logp.T
        cross2 = logp[start:stop] @ p.T
        d = s[start:stop, None] + s[None, :] - cross1 - cross2
        np.maximum(d, 0.0, out=d)
        qb = np.exp(-tau * d)
        for local, row in enumerate(range(start, stop)):
            qrow = qb[local].copy()
            qrow[row] = -1.0  # ranks self last, outside the kept slice
            order = np.lexsort((index, -qrow))
            for t in order[:keep].tolist():
                pairs.add((row, t) if row < t else (t, row))

    edges = sorted(pairs)
    src = np.array([e[0] for e in edges], dtype=np.int64)
    dst = np.array([e[1] for e in edges], dtype=np.int64)
    q = np.array([edge_probability(reps[a], reps[b], tau, eps) for a, b in edges],
                 dtype=np.float64)
    return SimilarityGraph(n, src, dst, q)
