"""Cluster-move MCMC over the similarity graph.

Two modes share one chain:

* ``swc``   relabels a single same-label connected component per iteration,
* ``cswc``  lifts the components into a coarser graph, joins them into
  combinatorial clusters, and relabels up to a handful of clusters at once
  as atomic units, which widens the move set and speeds up convergence.

A state is a partition of the image set; its energy is beta * K minus the
total category log-likelihood under the per-category models, which are
re-pursued only for the categories a move touches.  The proposal ratio is
the product over moved clusters of the cut products prod(1 - q_e) in the
new state over the old, and a move is accepted with the usual
Metropolis-Hastings rate.

Label proposals are uniform over the labels present outside the moved
cluster plus one fresh label.  That option set has the same size in the
current and the proposed state, so the uniform factor cancels exactly and
single-component moves satisfy detailed balance with respect to the target.
"""

import math
import random
from dataclasses import dataclass, field

import numpy as np

from . import category_model as cm
from .errors import ConfigError

# guards against log(0) when a retained edge has probability exactly 1
_Q_CEIL = 1.0 - 1e-15
_QCP_CEIL = 1.0 - 1e-12


@dataclass
class SamplerConfig:
    beta: float = 300.0
    max_features: int = 40
    mode: str = "cswc"
    max_iters: int = 5000
    n_select: tuple = (1, 3)  # clusters relabeled per cswc iteration, uniform draw
    init: str = "singletons"  # or "components"
    plateau: int | None = None  # stop after this many iterations without a new best
    trace_stride: int = 1
    log_every: int = 0

    def validate(self):
        if self.mode not in ("swc", "cswc"):
            raise ConfigError(f"mode must be 'swc' or 'cswc', got {self.mode!r}")
        if self.max_iters < 0:
            raise ConfigError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.max_features < 1:
            raise ConfigError(f"max_features must be >= 1, got {self.max_features}")
        lo, hi = self.n_select
        if not (1 <= lo <= hi):
            raise ConfigError(f"n_select must satisfy 1 <= lo <= hi, got {self.n_select}")
        if self.init not in ("singletons", "components"):
            raise ConfigError(f"init must be 'singletons' or 'components', got {self.init!r}")
        if self.plateau is not None and self.plateau < 1:
            raise ConfigError(f"plateau must be >= 1 or None, got {self.plateau}")


@dataclass
class Partition:
    """Dense per-vertex labels 0..K-1 covering all vertices."""

    labels: np.ndarray

    @property
    def k(self):
        return len(np.unique(self.labels))

    def members(self):
        out = {}
        for v, l in enumerate(self.labels.tolist()):
            out.setdefault(l, []).append(v)
        return {l: np.asarray(vs, dtype=np.int64) for l, vs in out.items()}

    def validate(self):
        labs = set(self.labels.tolist())
        if labs != set(range(len(labs))):
            raise ValueError(f"labels not dense: {sorted(labs)}")


@dataclass
class Solution:
    partition: Partition
    models: dict  # label -> CategoryModel
    energy: float


@dataclass
class EnergyTrace:
    iteration: np.ndarray
    energy: np.ndarray
    k: np.ndarray
    accepted: np.ndarray
    best_energy: np.ndarray

    def __len__(self):
        return len(self.iteration)

    @classmethod
    def from_records(cls, records):
        if records:
            it, en, k, acc, best = (np.asarray(col) for col in zip(*records))
        else:
            it = en = k = acc = best = np.empty(0)
        return cls(it.astype(np.int64), en.astype(np.float64), k.astype(np.int64),
                   acc.astype(bool), best.astype(np.float64))

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iteration,energy,K,accepted,best_energy\n")
            for i in range(len(self.iteration)):
                fh.write(f"{self.iteration[i]},{self.energy[i]:.10g},{self.k[i]},"
                         f"{int(self.accepted[i])},{self.best_energy[i]:.10g}\n")

    @classmethod
    def from_csv(cls, path):
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(rows[:, 0].astype(np.int64), rows[:, 1], rows[:, 2].astype(np.int64),
                   rows[:, 3].astype(bool), rows[:, 4])


@dataclass
class CpGraph:
    """Coarse graph over connected components; edges keyed (i, j) with i < j."""

    n_cps: int
    edges: dict


def _components(n, edge_pairs):
    # union-find with path halving over an iterable of (u, v) pairs
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for u, v in edge_pairs:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[rv] = ru
    comp_of = [0] * n
    comps = []
    index = {}
    for v in range(n):
        r = find(v)
        c = index.get(r)
        if c is None:
            c = len(comps)
            index[r] = c
            comps.append([])
        comp_of[v] = c
        comps[c].append(v)
    return comp_of, comps


def sample_cps(graph, labels, rng):
    """One round of edge sampling: same-label edges turn on with probability q.

    Cross-label edges stay off, so no component ever spans two labels.
    Returns (comp_of, comps): per-vertex component id and the vertex lists.
    """
    src = graph.src.tolist()
    dst = graph.dst.tolist()
    q = graph.q.tolist()
    on = []
    for e in range(len(src)):
        s, t = src[e], dst[e]
        if labels[s] == labels[t] and rng.random() < q[e]:
            on.append((s, t))
    return _components(graph.n_vertices, on)


def build_cp_graph(graph, cp_of, n_cps=None):
    """Aggregate every original edge crossing two components.

    The coarse turn-on probability is 1 - prod(1 - q_e) over the crossing
    edges, regardless of the labels of the endpoints, clamped just below 1.
    """
    if n_cps is None:
        n_cps = max(cp_of) + 1 if len(cp_of) else 0
    prod = {}
    src = graph.src.tolist()
    dst = graph.dst.tolist()
    q = graph.q.tolist()
    for e in range(len(src)):
        ci, cj = cp_of[src[e]], cp_of[dst[e]]
        if ci == cj:
            continue
        key = (ci, cj) if ci < cj else (cj, ci)
        prod[key] = prod.get(key, 1.0) * (1.0 - q[e])
    edges = {key: min(1.0 - p, _QCP_CEIL) for key, p in prod.items()}
    return CpGraph(n_cps, edges)


def _draw_subset(rng, n, k):
    # uniform k-subset of range(n) using only rng.random()
    pool = list(range(n))
    out = []
    for _ in range(k):
        j = int(rng.random() * len(pool))
        if j == len(pool):
            j -= 1
        out.append(pool.pop(j))
    return out


def sample_combinatorial_clusters(cp_graph, rng, n_select):
    """Turn coarse edges on with their probability and pick clusters to move.

    Connected groups of components form the combinatorial clusters; up to
    ``n_select`` of them are selected uniformly at random (all of them when
    fewer exist).  Returns the selected clusters as lists of component ids.
    """
    if n_select < 1:
        raise ConfigError(f"n_select must be >= 1, got {n_select}")
    on = [key for key in sorted(cp_graph.edges) if rng.random() < cp_graph.edges[key]]
    _, clusters = _components(cp_graph.n_cps, on)
    chosen = _draw_subset(rng, len(clusters), min(n_select, len(clusters)))
    return [clusters[i] for i in sorted(chosen)]


@dataclass
class MoveEval:
    """Everything needed to accept or discard one proposed relabeling."""

    clusters: list
    new_labels: list
    labels_b: list
    moves: list  # (vertex, old_label, new_label) for vertices that change
    touched: dict  # label -> (count_b, sum_b, model_b, contrib_b)
    k_b: int
    energy_b: float
    log_ratio: float
    alpha: float

    @property
    def changed(self):
        return bool(self.moves)


class ClusterChain:
    """Mutable chain state plus the bookkeeping to evaluate moves incrementally."""

    def __init__(self, graph, reps, config=None, rng=None):
        config = config or SamplerConfig()
        config.validate()
        reps = np.asarray(reps, dtype=np.float64)
        if reps.ndim != 2 or reps.shape[0] != graph.n_vertices:
            raise ConfigError(f"need one representation per vertex: "
                              f"{reps.shape} vs {graph.n_vertices} vertices")
        self.graph = graph
        self.reps = reps
        self.config = config
        self.rng = rng if rng is not None else random.Random(0)
        self.n = graph.n_vertices
        self.beta = float(config.beta)
        self.max_features = config.max_features
        self.e0 = cm.background_expectations(reps)

        # flat edge arrays as plain lists keep the per-iteration loops cheap
        self._src = graph.src.tolist()
        self._dst = graph.dst.tolist()
        self._q = graph.q.tolist()
        self._log1mq = [math.log1p(-min(qe, _Q_CEIL)) for qe in self._q]
        self._adj = [[] for _ in range(self.n)]
        for e in range(len(self._src)):
            s, t, lg = self._src[e], self._dst[e], self._log1mq[e]
            self._adj[s].append((t, lg))
            self._adj[t].append((s, lg))

        if config.init == "singletons":
            self.labels = list(range(self.n))
        else:
            comp_of, _ = _components(self.n, zip(self._src, self._dst))
            self.labels = comp_of
        self._rebuild_categories()
        self.iteration = 0

    def set_labels(self, labels):
        """Reset the chain to an explicit dense labeling (warm starts, tests)."""
        labels = [int(l) for l in labels]
        if len(labels) != self.n:
            raise ConfigError(f"{len(labels)} labels for {self.n} vertices")
        if set(labels) != set(range(len(set(labels)))):
            raise ConfigError("labels must be dense 0..K-1")
        self.labels = labels
        self._rebuild_categories()

    # -- category bookkeeping ------------------------------------------------

    def _rebuild_categories(self):
        self.cat_vertices = {}
        for v, l in enumerate(self.labels):
            self.cat_vertices.setdefault(l, set()).add(v)
        self.cat_count = {}
        self.cat_sum = {}
        self.cat_model = {}
        self.cat_contrib = {}
        for l, vs in self.cat_vertices.items():
            idx = sorted(vs)
            self.cat_count[l] = len(idx)
            self.cat_sum[l] = self.reps[idx].sum(axis=0)
            model, contrib = self._pursue(self.cat_sum[l], len(idx))
            self.cat_model[l] = model
            self.cat_contrib[l] = contrib
        self.K = len(self.cat_count)
        self.total_contrib = sum(self.cat_contrib.values())
        self.energy = self.beta * self.K - self.total_contrib

    def _pursue(self, sumvec, count):
        # model and total member log-likelihood for a candidate category
        e_f = sumvec / count
        np.clip(e_f, cm.EXPECTATION_CLAMP, 1.0 - cm.EXPECTATION_CLAMP, out=e_f)
        if float((e_f - self.e0).max()) <= 0.0:
            return cm.EMPTY_MODEL, 0.0
        model = cm.pursue_from_expectations(e_f, self.e0, self.max_features)
        if model.n_features == 0:
            return model, 0.0
        contrib = float(model.lam @ sumvec[model.feature_idx]) \
            - count * float(model.log_z.sum())
        return model, contrib

    # -- move mechanics --------------------------------------------------------

    def label_options(self, cluster):
        """Labels present outside the cluster, plus one fresh label.

        The option count is identical before and after the move, which is what
        lets the uniform label proposal cancel in the acceptance rate.
        """
        inside = {}
        labels = self.labels
        for v in cluster:
            l = labels[v]
            inside[l] = inside.get(l, 0) + 1
        options = [l for l in range(self.K)
                   if self.cat_count.get(l, 0) > inside.get(l, 0)]
        options.append(self.K)  # fresh label
        return options

    def evaluate_move(self, clusters, new_labels):
        """Acceptance rate and candidate bookkeeping for one composite move."""
        labels = self.labels
        labels_b = labels.copy()
        moves = []
        for cluster, nl in zip(clusters, new_labels):
            for v in cluster:
                if labels[v] != nl:
                    moves.append((v, labels[v], nl))
                labels_b[v] = nl

        # proposal ratio: per-cluster cut products over edges that join the
        # cluster to same-labeled outside vertices in the respective state
        log_ratio = 0.0
        for cluster, nl in zip(clusters, new_labels):
            inside = set(cluster)
            log_ca = 0.0
            log_cb = 0.0
            for u in cluster:
                lu = labels[u]
                for v, lg in self._adj[u]:
                    if v in inside:
                        continue
                    if labels[v] == lu:
                        log_ca += lg
                    if labels_b[v] == nl:
                        log_cb += lg
            log_ratio += log_cb - log_ca

        removed = {}
        added = {}
        for v, old, new in moves:
            removed.setdefault(old, []).append(v)
            added.setdefault(new, []).append(v)
        touched = {}
        k_b = self.K
        for l in set(removed) | set(added):
            count_b = (self.cat_count.get(l, 0)
                       - len(removed.get(l, ())) + len(added.get(l, ())))
            sum_b = self.cat_sum.get(l)
            sum_b = np.zeros(self.reps.shape[1]) if sum_b is None else sum_b.copy()
            if l in removed:
                sum_b -= self.reps[removed[l]].sum(axis=0)
            if l in added:
                sum_b += self.reps[added[l]].sum(axis=0)
            if count_b > 0:
                model_b, contrib_b = self._pursue(sum_b, count_b)
            else:
                model_b, contrib_b = None, 0.0
            touched[l] = (count_b, sum_b, model_b, contrib_b)
            k_b += (count_b > 0) - (self.cat_count.get(l, 0) > 0)

        total_b = self.total_contrib
        for l, (_, _, _, contrib_b) in touched.items():
            total_b += contrib_b - self.cat_contrib.get(l, 0.0)
        energy_b = self.beta * k_b - total_b

        exponent = log_ratio + (self.energy - energy_b)
        alpha = 1.0 if exponent >= 0.0 else math.exp(exponent)
        return MoveEval(clusters, new_labels, labels_b, moves, touched,
                        k_b, energy_b, log_ratio, alpha)

    def _commit(self, ev):
        self.labels = ev.labels_b
        for v, old, new in ev.moves:
            self.cat_vertices[old].discard(v)
            self.cat_vertices.setdefault(new, set()).add(v)
        for l, (count_b, sum_b, model_b, contrib_b) in ev.touched.items():
            if count_b == 0:
                del self.cat_count[l], self.cat_sum[l]
                del self.cat_model[l], self.cat_contrib[l]
                self.cat_vertices.pop(l, None)
            else:
                self.cat_count[l] = count_b
                self.cat_sum[l] = sum_b
                self.cat_model[l] = model_b
                self.cat_contrib[l] = contrib_b
        self.K = len(self.cat_count)
        self._compact_labels()
        self.total_contrib = sum(self.cat_contrib.values())
        self.energy = self.beta * self.K - self.total_contrib

    def _compact_labels(self):
        k = self.K
        high = sorted(l for l in self.cat_count if l >= k)
        if not high:
            return
        free = [l for l in range(k) if l not in self.cat_count]
        for hi, lo in zip(high, free):
            for v in self.cat_vertices[hi]:
                self.labels[v] = lo
            for table in (self.cat_count, self.cat_sum, self.cat_model,
                          self.cat_contrib, self.cat_vertices):
                table[lo] = table.pop(hi)

    # -- one iteration ---------------------------------------------------------

    def step(self):
        """One proposal; returns True when the move was accepted."""
        rng = self.rng
        labels = self.labels
        src, dst, q = self._src, self._dst, self._q
        on = []
        rnd = rng.random
        for e in range(len(src)):
            s, t = src[e], dst[e]
            if labels[s] == labels[t] and rnd() < q[e]:
                on.append((s, t))
        comp_of, comps = _components(self.n, on)

        if self.config.mode == "swc":
            ci = int(rnd() * len(comps))
            if ci == len(comps):
                ci -= 1
            clusters = [comps[ci]]
        else:
            cp_graph = build_cp_graph(self.graph, comp_of, len(comps))
            lo, hi = self.config.n_select
            n_sel = lo + int(rnd() * (hi - lo + 1))
            if n_sel > hi:
                n_sel = hi
            selected = sample_combinatorial_clusters(cp_graph, rng, n_sel)
            clusters = []
            for group in selected:
                vertices = []
                for cp in group:
                    vertices.extend(comps[cp])
                clusters.append(vertices)

        new_labels = []
        for cluster in clusters:
            options = self.label_options(cluster)
            j = int(rnd() * len(options))
            if j == len(options):
                j -= 1
            new_labels.append(options[j])

        ev = self.evaluate_move(clusters, new_labels)
        accepted = ev.alpha >= 1.0 or rnd() < ev.alpha
        if accepted and ev.changed:
            self._commit(ev)
        self.iteration += 1
        return accepted

    # -- state access ------------------------------------------------------------

    def solution(self):
        return Solution(Partition(np.asarray(self.labels, dtype=np.int64)),
                        dict(self.cat_model), self.energy)

    def recompute_energy(self):
        """From-scratch pursuit and summation; checks the incremental bookkeeping."""
        members = {}
        for v, l in enumerate(self.labels):
            members.setdefault(l, []).append(v)
        total = self.beta * len(members)
        for vs in members.values():
            sumvec = self.reps[vs].sum(axis=0)
            _, contrib = self._pursue(sumvec, len(vs))
            total -= contrib
        return total


def solution_energy(labels, models, reps, beta):
    """Energy of an explicit solution: beta * K minus total log-likelihood."""
    labels = np.asarray(labels)
    reps = np.asarray(reps, dtype=np.float64)
    present = np.unique(labels)
    total = beta * len(present)
    for l in present.tolist():
        model = models.get(l, cm.EMPTY_MODEL)
        for v in np.flatnonzero(labels == l):
            total -= cm.log_phi(model, reps[v])
    return float(total)


def run(graph, reps, config=None, seed=0, progress=None):
    """Run the chain and return (best solution visited, per-iteration trace)."""
    config = config or SamplerConfig()
    chain = ClusterChain(graph, reps, config, rng=random.Random(seed))
    best = chain.solution()
    records = [(0, chain.energy, chain.K, False, best.energy)]
    last_improvement = 0
    for it in range(1, config.max_iters + 1):
        accepted = chain.step()
        if chain.energy < best.energy:
            best = chain.solution()
            last_improvement = it
        if config.trace_stride <= 1 or it % config.trace_stride == 0:
            records.append((it, chain.energy, chain.K, accepted, best.energy))
        if config.log_every and progress and it % config.log_every == 0:
            progress(it, chain.energy, chain.K, best.energy)
        if config.plateau is not None and it - last_improvement >= config.plateau:
            break
    return best, EnergyTrace.from_records(records)
