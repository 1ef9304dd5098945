"""Command-line pipeline: dict-build, represent, categorize, evaluate, bench-convergence.

Every command takes --config (JSON), optional stage flags that override the
file, and writes a resolved configuration snapshot next to its outputs.
Reports are written as CSV with a rendered PNG figure alongside.
"""

import argparse
import csv
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import evaluation, figures
from .codebook import (build_dictionary, load_dictionary, sample_image_patches,
                       save_dictionary)
from .config import load_config
from .errors import ConfigError, InputError, ScenecatError
from .graph import build_graph
from .imaging import load_gray
from .representation import encode, load_representations, save_representations
from .sampler import SamplerConfig, run

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg"}

_WORKER = {}


def _list_images(image_dir):
    root = Path(image_dir)
    if not root.is_dir():
        raise InputError(f"image directory not found: {image_dir}")
    return sorted(p for p in root.iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES)


def _resolve(flag_value, cfg_value, name):
    value = flag_value if flag_value is not None else cfg_value
    if value is None:
        raise ConfigError(f"missing required value: pass {name} or set it in the config file")
    return value


def _workers(args, n_tasks):
    if args.workers is not None:
        w = args.workers
    else:
        w = int(os.environ.get("SCENECAT_WORKERS", os.cpu_count() or 1))
    return max(1, min(w, n_tasks))


def _pool_map(fn, tasks, workers, initializer=None, initargs=()):
    if workers <= 1 or len(tasks) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers, initializer=initializer,
                             initargs=initargs) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (workers * 4))))


# -- dict-build ----------------------------------------------------------------

def _sample_one(task):
    path, child, per_image, sides, radius, threshold = task
    try:
        img = load_gray(path)
    except InputError as exc:
        return path, None, str(exc)
    rng = np.random.default_rng(child)
    return path, sample_image_patches(img, rng, per_image, sides, radius, threshold), None


def cmd_dict_build(args):
    cfg = load_config(args.config)
    image_dir = _resolve(args.images, cfg.paths.images, "--images")
    out = Path(_resolve(args.out, cfg.paths.dictionary, "--out"))
    seed = args.seed if args.seed is not None else cfg.dictionary.seed
    files = _list_images(image_dir)
    if not files:
        raise InputError(f"no readable images in {image_dir}")

    children = np.random.SeedSequence(seed).spawn(len(files))
    tasks = [(str(p), child, cfg.dictionary.per_image, tuple(cfg.patches.sides),
              cfg.patches.cslbp_radius, cfg.patches.cslbp_threshold)
             for p, child in zip(files, children)]
    results = _pool_map(_sample_one, tasks, _workers(args, len(tasks)))

    hog_pool, lbp_pool = [], []
    skipped = 0
    for path, pools, err in results:
        if pools is None:
            skipped += 1
            print(f"warning: skipping {path}: {err}", file=sys.stderr)
            continue
        hog_pool.extend(pools[0])
        lbp_pool.extend(pools[1])
    if skipped == len(files):
        raise InputError("no readable images; all inputs were skipped")

    cap = cfg.dictionary.pool_cap
    itw_pool = np.asarray(hog_pool[:cap])
    htw_pool = np.asarray(lbp_pool[:cap])
    dic, info = build_dictionary(itw_pool, htw_pool,
                                 n_itw=cfg.dictionary.n_itw, n_htw=cfg.dictionary.n_htw,
                                 seed=seed, max_iters=cfg.dictionary.kmeans_iters,
                                 tol=cfg.dictionary.kmeans_tol)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dictionary(dic, out)

    cfg.dictionary.seed = seed
    cfg.paths.images = str(image_dir)
    cfg.paths.dictionary = str(out)
    cfg.snapshot(out.parent / (out.name + ".config.json"))
    print(f"sampled {len(itw_pool)} structured / {len(htw_pool)} stochastic descriptors"
          f" ({skipped} images skipped)")
    print(f"final inertia: itw {info['itw_inertia'][-1]:.6g}, "
          f"htw {info['htw_inertia'][-1]:.6g}")
    print(f"wrote {dic.m}-word dictionary to {out}")
    return 0


# -- represent -------------------------------------------------------------------

def _init_represent(dict_path, sides, stride_fraction, saturation, radius, threshold):
    _WORKER["dic"] = load_dictionary(dict_path)
    _WORKER["args"] = (sides, stride_fraction, saturation, radius, threshold)


def _represent_one(task):
    path, image_id = task
    sides, stride_fraction, saturation, radius, threshold = _WORKER["args"]
    img = load_gray(path)
    return encode(img, _WORKER["dic"], sides, stride_fraction, saturation,
                  image_id=image_id, radius=radius, threshold=threshold)


def cmd_represent(args):
    cfg = load_config(args.config)
    image_dir = _resolve(args.images, cfg.paths.images, "--images")
    dict_path = _resolve(args.dict, cfg.paths.dictionary, "--dict")
    out = Path(_resolve(args.out, cfg.paths.representations, "--out"))
    files = _list_images(image_dir)
    if not files:
        raise InputError(f"no readable images in {image_dir}")

    ids = [p.name for p in files]
    tasks = list(zip((str(p) for p in files), ids))
    initargs = (str(dict_path), tuple(cfg.patches.sides), cfg.patches.stride_fraction,
                cfg.representation.saturation, cfg.patches.cslbp_radius,
                cfg.patches.cslbp_threshold)
    rows = _pool_map(_represent_one, tasks, _workers(args, len(tasks)),
                     initializer=_init_represent, initargs=initargs)

    mat = np.vstack(rows)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_representations(out, mat, ids)
    cfg.paths.images = str(image_dir)
    cfg.paths.dictionary = str(dict_path)
    cfg.paths.representations = str(out)
    cfg.snapshot(out.parent / (out.name + ".config.json"))
    print(f"encoded {mat.shape[0]} images x {mat.shape[1]} components -> {out}")
    return 0


# -- categorize -------------------------------------------------------------------

def _write_selected_words(path, models, dim, n_itw):
    m = dim // 9 if dim % 9 == 0 else 0
    rows = []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "rank", "block", "word_id", "word_kind",
                         "lambda", "gain"])
        for label in sorted(models):
            for rank, block, word, lam, _z, gain in models[label].rows(m):
                kind = "ITW" if word < n_itw else "HTW"
                writer.writerow([label, rank, block, word, kind,
                                 f"{lam:.10g}", f"{gain:.10g}"])
                rows.append({"category": label, "rank": rank, "block": block,
                             "word_id": word, "word_kind": kind,
                             "lambda": lam, "gain": gain})
    return rows


def cmd_categorize(args):
    cfg = load_config(args.config)
    reps_path = _resolve(args.reps, cfg.paths.representations, "--reps")
    out_dir = Path(_resolve(args.out, cfg.paths.out_dir, "--out"))
    seed = args.seed if args.seed is not None else cfg.sampler.seed

    mat, ids = load_representations(reps_path)
    graph = build_graph(mat, tau=cfg.graph.tau, max_neighbors=cfg.graph.max_neighbors,
                        eps=cfg.graph.smoothing)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.dump_graph:
        graph.dump(out_dir / "graph_edges.txt")

    scfg = SamplerConfig(beta=cfg.sampler.beta, max_features=cfg.sampler.max_features,
                         mode=cfg.sampler.mode, max_iters=cfg.sampler.max_iters,
                         n_select=tuple(cfg.sampler.n_select), init=cfg.sampler.init,
                         plateau=cfg.sampler.plateau, trace_stride=cfg.sampler.trace_stride,
                         log_every=cfg.sampler.log_every)

    def progress(it, energy, k, best):
        print(f"iteration {it}: energy {energy:.4f}, K {k}, best {best:.4f}",
              file=sys.stderr)

    best, trace = run(graph, mat, scfg, seed=seed, progress=progress)

    evaluation.write_labels_csv(out_dir / "solution.csv", ids, best.partition.labels)
    trace.to_csv(out_dir / "trace.csv")
    word_rows = _write_selected_words(out_dir / "selected_words.csv", best.models,
                                      mat.shape[1], cfg.dictionary.n_itw)
    figures.save_trace_figure(trace, out_dir / "trace.png")
    figures.save_selected_words_figure(word_rows, out_dir / "selected_words.png")

    cfg.paths.representations = str(reps_path)
    cfg.paths.out_dir = str(out_dir)
    cfg.sampler.seed = seed
    cfg.snapshot(out_dir / "resolved_config.json")
    print(f"best solution: K={best.partition.k}, energy={best.energy:.6f} -> {out_dir}")
    return 0


# -- evaluate --------------------------------------------------------------------

def cmd_evaluate(args):
    cfg = load_config(args.config)
    truth_path = _resolve(args.truth, cfg.paths.ground_truth, "--truth")
    out_dir = Path(_resolve(args.out, cfg.paths.out_dir, "--out"))
    if not args.solution:
        raise ConfigError("missing required value: pass --solution at least once")

    truth = evaluation.read_labels_csv(truth_path)
    per_run = {}
    for sol_path in args.solution:
        predicted = evaluation.read_labels_csv(sol_path)
        _, x, y = evaluation.align_outcome(truth, predicted)
        base = Path(sol_path)
        label = base.parent.name or base.stem
        key, suffix = label, 1
        while key in per_run:
            key = f"{label}#{suffix}"
            suffix += 1
        per_run[key] = {
            "purity": evaluation.purity(x, y),
            "conditional_entropy": evaluation.conditional_entropy(x, y),
            "inferred_k": len(np.unique(y)),
        }

    def agg(key):
        vals = [r[key] for r in per_run.values()]
        return (statistics.fmean(vals),
                statistics.pstdev(vals) if len(vals) > 1 else 0.0)

    rows = []
    for key, name in (("purity", "purity"), ("conditional_entropy", "conditional_entropy"),
                      ("inferred_k", "inferred_k")):
        mean, std = agg(key)
        rows.append((f"{name}_mean", mean))
        rows.append((f"{name}_std", std))
    rows.append(("n_runs", len(per_run)))

    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.write_metrics_csv(out_dir / "metrics.csv", rows)
    figures.save_metrics_figure(per_run, out_dir / "metrics.png")
    cfg.paths.ground_truth = str(truth_path)
    cfg.paths.out_dir = str(out_dir)
    cfg.snapshot(out_dir / "resolved_config.json")
    for name, value in rows:
        print(f"{name}: {value:.6g}" if isinstance(value, float) else f"{name}: {value}")
    return 0


# -- bench-convergence --------------------------------------------------------------

def _first_hit(trace, threshold):
    hits = np.flatnonzero(trace.best_energy <= threshold)
    return int(trace.iteration[hits[0]]) if hits.size else int(trace.iteration[-1])


def cmd_bench_convergence(args):
    cfg = load_config(args.config)
    reps_path = _resolve(args.reps, cfg.paths.representations, "--reps")
    out_dir = Path(_resolve(args.out, cfg.paths.out_dir, "--out"))
    base_seed = args.seed if args.seed is not None else cfg.sampler.seed

    mat, _ids = load_representations(reps_path)
    graph = build_graph(mat, tau=cfg.graph.tau, max_neighbors=cfg.graph.max_neighbors,
                        eps=cfg.graph.smoothing)
    out_dir.mkdir(parents=True, exist_ok=True)

    traces = {}
    for i in range(args.runs):
        seed = base_seed + i
        for mode in ("swc", "cswc"):
            scfg = SamplerConfig(beta=cfg.sampler.beta,
                                 max_features=cfg.sampler.max_features, mode=mode,
                                 max_iters=cfg.sampler.max_iters,
                                 n_select=tuple(cfg.sampler.n_select),
                                 init=cfg.sampler.init)
            _best, trace = run(graph, mat, scfg, seed=seed)
            traces[(mode, seed)] = trace
            trace.to_csv(out_dir / f"trace_{mode}_seed{seed}.csv")

    summary = []
    for i in range(args.runs):
        seed = base_seed + i
        pair = {mode: traces[(mode, seed)] for mode in ("swc", "cswc")}
        best = min(t.best_energy[-1] for t in pair.values())
        threshold = best + 0.01 * abs(best)
        for mode, trace in pair.items():
            summary.append((mode, seed, float(trace.best_energy[-1]),
                            _first_hit(trace, threshold)))

    with open(out_dir / "convergence.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "seed", "best_energy", "first_hit_iteration"])
        for mode, seed, best_e, hit in summary:
            writer.writerow([mode, seed, f"{best_e:.10g}", hit])
    figures.save_convergence_figure(traces, out_dir / "convergence.png")

    cfg.paths.representations = str(reps_path)
    cfg.paths.out_dir = str(out_dir)
    cfg.snapshot(out_dir / "resolved_config.json")
    for mode in ("swc", "cswc"):
        hits = [h for m, _s, _b, h in summary if m == mode]
        print(f"{mode}: median iterations to within 1% of best = "
              f"{statistics.median(hits):.0f}")
    return 0


# -- entry point ----------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="scenecat",
        description="Discover scene categories in an unlabeled image collection.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="override the stage seed")
        p.add_argument("--out", help="output file or directory")

    p = sub.add_parser("dict-build", help="sample patches and build the word dictionary")
    common(p)
    p.add_argument("--images", help="directory of PNG/JPEG images")
    p.add_argument("--workers", type=int, help="worker processes (env SCENECAT_WORKERS)")
    p.set_defaults(func=cmd_dict_build)

    p = sub.add_parser("represent", help="encode images as pyramid response vectors")
    common(p)
    p.add_argument("--images", help="directory of PNG/JPEG images")
    p.add_argument("--dict", help="dictionary file from dict-build")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_represent)

    p = sub.add_parser("categorize", help="build the graph and run the cluster sampler")
    common(p)
    p.add_argument("--reps", help="representation matrix file from represent")
    p.add_argument("--dump-graph", action="store_true",
                   help="also write the similarity edge list")
    p.set_defaults(func=cmd_categorize)

    p = sub.add_parser("evaluate", help="score solution files against ground truth")
    common(p)
    p.add_argument("--solution", action="append", default=[],
                   help="solution CSV (repeatable for multi-seed aggregation)")
    p.add_argument("--truth", help="ground-truth CSV (image_id,label)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench-convergence",
                       help="paired single-component vs compositional runs")
    common(p)
    p.add_argument("--reps", help="representation matrix file")
    p.add_argument("--runs", type=int, default=5, help="number of paired seeds")
    p.set_defaults(func=cmd_bench_convergence)

    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenecatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
