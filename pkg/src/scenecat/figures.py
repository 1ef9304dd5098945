"""Matplotlib renderings written next to the CSV reports."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

# fixed metadata keeps PNG output byte-stable across runs
_PNG_META = {"Software": "scenecat"}


def _save(fig, path):
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata=_PNG_META)
    plt.close(fig)


def save_trace_figure(trace, path):
    """Energy and category count against iteration for one run."""
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(trace.iteration, trace.energy, color="tab:blue", lw=0.8, label="energy")
    ax.plot(trace.iteration, trace.best_energy, color="tab:red", lw=1.2, label="best energy")
    ax.set_xlabel("iteration")
    ax.set_ylabel("energy")
    ax2 = ax.twinx()
    ax2.plot(trace.iteration, trace.k, color="tab:green", lw=0.8, alpha=0.6, label="K")
    ax2.set_ylabel("categories")
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, path)


def save_convergence_figure(traces, path):
    """Overlaid energy curves, one per (mode, seed) pair."""
    fig, ax = plt.subplots(figsize=(7, 4))
    styles = {"swc": dict(color="tab:green", ls="--"), "cswc": dict(color="tab:blue", ls="-")}
    seen = set()
    for (mode, seed), trace in sorted(traces.items()):
        label = mode if mode not in seen else None
        seen.add(mode)
        ax.plot(trace.iteration, trace.best_energy, lw=0.9, alpha=0.8,
                label=label, **styles.get(mode, {}))
    ax.set_xlabel("iteration")
    ax.set_ylabel("best energy")
    ax.legend(fontsize=8)
    _save(fig, path)


def save_metrics_figure(per_run, path):
    """Per-run purity and conditional entropy bars."""
    runs = sorted(per_run)
    xs = range(len(runs))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
    ax1.bar(xs, [per_run[r]["purity"] for r in runs], color="tab:blue")
    ax1.set_ylim(0, 1.05)
    ax1.set_title("purity")
    ax2.bar(xs, [per_run[r]["conditional_entropy"] for r in runs], color="tab:orange")
    ax2.set_title("conditional entropy (nats)")
    for ax in (ax1, ax2):
        ax.set_xticks(list(xs))
        ax.set_xticklabels([str(r) for r in runs], rotation=45, fontsize=7)
    _save(fig, path)


def save_selected_words_figure(rows, path, max_categories=16):
    """Per-category gain profiles of the selected words, colored by word type."""
    by_cat = {}
    for row in rows:
        by_cat.setdefault(int(row["category"]), []).append(row)
    cats = sorted(by_cat)[:max_categories]
    if not cats:
        fig, ax = plt.subplots(figsize=(4, 2))
        ax.text(0.5, 0.5, "no selected words", ha="center", va="center")
        ax.set_axis_off()
        _save(fig, path)
        return
    ncols = min(4, len(cats))
    nrows = (len(cats) + ncols - 1) // ncols
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.0 * ncols, 2.2 * nrows),
                             squeeze=False)
    for slot, cat in enumerate(cats):
        ax = axes[slot // ncols][slot % ncols]
        entries = sorted(by_cat[cat], key=lambda r: int(r["rank"]))
        colors = ["tab:red" if r["word_kind"] == "ITW" else "tab:blue" for r in entries]
        ax.bar([int(r["rank"]) for r in entries],
               [float(r["gain"]) for r in entries], color=colors)
        ax.set_title(f"category {cat}", fontsize=8)
        ax.tick_params(labelsize=6)
    for slot in range(len(cats), nrows * ncols):
        axes[slot // ncols][slot % ncols].set_axis_off()
    fig.tight_layout()
    _save(fig, path)
