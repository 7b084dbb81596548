"""Metrics, synthetic datasets, and desk-scale experiment drivers.

The experiment protocols mirror the transductive comparisons the model was
designed around: sample partial labels or tags, train each method, score on
the unlabeled items, and aggregate over seeded runs.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import core, ssl
from .graph import build_knn_graph, laplacian


def worker_count() -> int:
    """Worker cap from LASSKIT_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("LASSKIT_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# metrics

def argmax_error(predicted: np.ndarray, truth: np.ndarray) -> float:
    """Fraction of rows whose argmax (ties to the lowest index) misses the truth."""
    predicted = np.atleast_2d(np.asarray(predicted, dtype=float))
    truth = np.asarray(truth, dtype=int)
    if truth.shape[0] != predicted.shape[0]:
        raise ValueError("one truth id per row required")
    if truth.size and (truth.min() < 0 or truth.max() >= predicted.shape[1]):
        raise ValueError("truth ids must index a prediction column")
    picks = predicted.argmax(axis=1)
    return float((picks != truth).mean())


def _top_t(row: np.ndarray, t: int) -> set:
    order = np.lexsort((np.arange(row.size), -row))
    return set(order[:t].tolist())


def topT_set_error(predicted: np.ndarray, truth_sets) -> float:
    """Per item, compare the top-|truth| predicted categories with the truth set."""
    predicted = np.atleast_2d(np.asarray(predicted, dtype=float))
    if len(truth_sets) != predicted.shape[0]:
        raise ValueError("one truth set per row required")
    errors = 0
    for row, truth in zip(predicted, truth_sets):
        truth = set(truth)
        if not truth:
            raise ValueError("empty truth sets are not allowed")
        if len(truth) > predicted.shape[1]:
            raise ValueError("truth set larger than the number of categories")
        if _top_t(row, len(truth)) != truth:
            errors += 1
    return errors / len(truth_sets)


def precision_recall_f1(predicted: np.ndarray, truth_sets,
                        annotation_length: int = 5) -> tuple[float, float, float]:
    """Macro-averaged precision/recall/F1 of the top-`annotation_length` tags."""
    predicted = np.atleast_2d(np.asarray(predicted, dtype=float))
    if annotation_length < 1:
        raise ValueError("annotation_length must be >= 1")
    if len(truth_sets) != predicted.shape[0]:
        raise ValueError("one truth set per row required")
    ps, rs, fs = [], [], []
    for row, truth in zip(predicted, truth_sets):
        truth = set(truth)
        pred = _top_t(row, annotation_length)
        hit = len(pred & truth)
        p = hit / annotation_length
        r = hit / len(truth) if truth else 0.0
        f = 2 * p * r / (p + r) if (p + r) > 0 else 0.0
        ps.append(p)
        rs.append(r)
        fs.append(f)
    return float(np.mean(ps)), float(np.mean(rs)), float(np.mean(fs))


# ---------------------------------------------------------------------------
# synthetic datasets

def two_moons(n: int, noise: float = 0.05, seed: int = 0):
    """Interleaved half-circles with Gaussian noise; returns (points, moon ids)."""
    if n % 2:
        raise ValueError("n must be even")
    rng = np.random.default_rng(seed)
    m = n // 2
    t1 = rng.uniform(0.0, np.pi, m)
    t2 = rng.uniform(0.0, np.pi, n - m)
    pts = np.vstack([
        np.c_[np.cos(t1), np.sin(t1)],
        np.c_[1.0 - np.cos(t2), 0.5 - np.sin(t2)],
    ])
    if noise > 0:
        pts = pts + rng.normal(scale=noise, size=pts.shape)
    ids = np.r_[np.zeros(m, dtype=int), np.ones(n - m, dtype=int)]
    return pts, ids


def gaussian_blobs(n: int, n_classes: int = 3, separation: float = 3.0,
                   spread: float = 1.0, seed: int = 0):
    """Equal-size Gaussian clusters with centers on a circle."""
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(n_classes) / n_classes
    centers = separation * np.c_[np.cos(angles), np.sin(angles)]
    ids = np.arange(n) % n_classes
    pts = centers[ids] + rng.normal(scale=spread, size=(n, 2))
    return pts, ids


def multitag_corpus(n: int, n_categories: int = 20, dim: int = 30,
                    tags_min: int = 2, tags_max: int = 5, noise: float = 0.45,
                    seed: int = 0):
    """Items carrying several tags, built from noisy sums of tag prototypes.

    Category popularity is skewed so that 'most frequent category' structure
    exists, as the negative-affinity protocol expects. Returns
    (points, tag_sets).
    """
    rng = np.random.default_rng(seed)
    prototypes = rng.normal(size=(n_categories, dim))
    popularity = 1.0 / (np.arange(n_categories) + 3.0)
    popularity /= popularity.sum()
    tag_sets = []
    pts = np.zeros((n, dim))
    for i in range(n):
        t = int(rng.integers(tags_min, tags_max + 1))
        tags = rng.choice(n_categories, size=t, replace=False, p=popularity)
        tag_sets.append(set(int(x) for x in tags))
        pts[i] = prototypes[list(tag_sets[i])].mean(axis=0)
    pts += rng.normal(scale=noise, size=pts.shape)
    return pts, tag_sets


# ---------------------------------------------------------------------------
# experiment driver

KNOWN_METHODS = ("lass", "ssl", "ssl1", "ssl2")


@dataclass
class ExperimentConfig:
    dataset: str                       # {"two_moons", "blobs", "multitag"}
    methods: list = field(default_factory=lambda: ["lass", "ssl"])
    dataset_params: dict = field(default_factory=dict)
    runs: int = 10
    seed: int = 0
    n_labels: int | list | None = None      # labels per class (classification)
    n_pos_tags: int | None = None            # +1 tags per item (tagging)
    lambda_grid: list = field(default_factory=lambda: [1.0])
    epsilon_grid: list = field(default_factory=lambda: [0.005])
    rho: object = "auto"
    k_neighbors: int = 10
    kernel: str = "gaussian"
    sigma: object = "median"  # bandwidth, or "median" for the median kNN distance
    annotation_length: int = 5
    test_fraction: float = 0.25
    n_neg_tags: int = 5
    neg_pool: int = 20
    validation_fraction: float = 0.2
    tol: float = 1e-5
    max_iterations: int = 20000
    priors: list | None = None               # SSL1 override; default labeled frequencies

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not self.lambda_grid or not self.epsilon_grid:
            raise ValueError("hyperparameter grids must be non-empty")
        for m in self.methods:
            if m not in KNOWN_METHODS:
                raise ValueError(f"unknown method {m!r}; expected one of {KNOWN_METHODS}")
        if self.dataset not in ("two_moons", "blobs", "multitag"):
            raise ValueError(f"unknown dataset {self.dataset!r}")


@dataclass
class ExperimentReport:
    config: dict
    rows: list
    summary: dict
    exclusions: list

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        fields = sorted({k for row in self.rows for k in row})
        with open(out / "results.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(self.rows)
        with open(out / "summary.json", "w") as fh:
            json.dump({"config": self.config, "summary": self.summary,
                       "exclusions": self.exclusions}, fh, indent=2, sort_keys=True)
        self._write_curves(out)

    def _write_curves(self, out: Path) -> None:
        # gnuplot-friendly error-vs-n_labels table when the config swept n_labels
        points = {}
        for row in self.rows:
            if "n_labels" not in row or "error" not in row:
                return
            points.setdefault((row["n_labels"], row["method"]), []).append(row["error"])
        if len({p[0] for p in points}) < 2:
            return
        methods = sorted({p[1] for p in points})
        with open(out / "curves.dat", "w") as fh:
            fh.write("# n_labels " + " ".join(f"{m}_mean {m}_std" for m in methods) + "\n")
            for nl in sorted({p[0] for p in points}):
                cells = [str(nl)]
                for m in methods:
                    vals = points.get((nl, m), [float("nan")])
                    cells.append(f"{np.mean(vals):.6f}")
                    cells.append(f"{np.std(vals):.6f}")
                fh.write(" ".join(cells) + "\n")


def median_knn_distance(points, k: int) -> float:
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(points).query(points, k=k + 1)
    return float(np.median(dist[:, 1:]))


def _build_graph_cached(points, cfg: ExperimentConfig):
    sigma = cfg.sigma
    if sigma == "median":
        sigma = max(median_knn_distance(points, cfg.k_neighbors), 1e-12)
    w = build_knn_graph(points, cfg.k_neighbors, kernel=cfg.kernel, sigma=sigma)
    return w, laplacian(w, normalized=False)


def _experiment_rhos(lap, cfg: ExperimentConfig) -> dict:
    """Resolve rho once per lambda for the whole experiment.

    With rho='auto' the extreme eigenvalues are estimated per component of
    the fixed experiment graph (smallest nonzero over components, largest
    overall) instead of once per fit.
    """
    from .graph import _split_structure, extreme_eigenvalues

    if cfg.rho != "auto":
        return {lam: float(cfg.rho) for lam in cfg.lambda_grid}
    split = _split_structure(lap.matrix)
    smin, smax = np.inf, 0.0
    ok = True
    for cid in range(1, split.component_count + 1):
        idx = split.indices(cid)
        if idx.size == 1:
            continue
        from .graph import GraphLaplacian

        sub = GraphLaplacian(matrix=lap.matrix[np.ix_(idx, idx)].tocsr(),
                             degrees=lap.degrees[idx], normalized=lap.normalized)
        est = extreme_eigenvalues(sub, tol=1e-8, max_iter=50_000)
        ok = ok and est.converged and est.sigma_min_nonzero > 0
        smin = min(smin, est.sigma_min_nonzero)
        smax = max(smax, est.sigma_max)
    if not ok or not np.isfinite(smin) or smax <= 0:
        return {lam: 1.0 for lam in cfg.lambda_grid}
    return {lam: 2.0 * lam * float(np.sqrt(smin * smax)) for lam in cfg.lambda_grid}


def _solver_config(cfg: ExperimentConfig, rho) -> core.SolverConfig:
    return core.SolverConfig(rho=rho, tol=cfg.tol, max_iterations=cfg.max_iterations)


def _fit_predict(method, w, lap, g, labeled_idx, z_l, lam, cfg, rho=1.0):
    """Train one method; returns the full N x K score matrix."""
    n = lap.n
    if method == "lass":
        prob = core.Problem(laplacian=lap, g=g, lam=lam, check_affinity_range=False)
        return core.solve(prob, _solver_config(cfg, rho)).z
    split = ssl.LabeledSplit.from_labels(n, labeled_idx, z_l)
    if method == "ssl2":
        z_u = ssl.ssl2_solve(w, split)
    else:
        z_u = ssl.harmonic_solve(lap, split)
    scores = np.zeros((n, z_l.shape[1]))
    scores[split.labeled_indices] = z_l
    scores[split.unlabeled_indices] = z_u
    if method == "ssl1":
        if cfg.priors is not None:
            priors = np.asarray(cfg.priors, dtype=float)
        else:
            counts = z_l.sum(axis=0) + 1.0  # Laplace-smoothed labeled frequencies
            priors = counts / counts.sum()
        scores = ssl.class_mass_normalize(scores, priors)
    return scores


def _select_hyper(grid, fit_error, prefer_small=True):
    """Grid search; ties go to the smaller value."""
    best, best_err = None, np.inf
    for value in sorted(grid):
        err = fit_error(value)
        if err < best_err - 1e-12:
            best, best_err = value, err
    return best if best is not None else sorted(grid)[0], best_err


def _classification_run(points, truth, w, lap, cfg: ExperimentConfig,
                        n_labels: int, rng, rhos: dict) -> dict:
    n = points.shape[0]
    k = int(truth.max()) + 1
    labeled = []
    for c in range(k):
        members = np.flatnonzero(truth == c)
        labeled.extend(rng.choice(members, size=n_labels, replace=False).tolist())
    labeled = np.array(sorted(labeled))
    unlabeled = np.setdiff1d(np.arange(n), labeled)

    def g_for(items):
        g = np.zeros((n, k))
        g[items, truth[items]] = 1.0
        return g

    results = {}
    for method in cfg.methods:
        grid = cfg.lambda_grid if method == "lass" else cfg.epsilon_grid
        if len(grid) > 1 and labeled.size >= 2:
            n_val = max(1, int(round(cfg.validation_fraction * labeled.size)))
            val = rng.choice(labeled, size=n_val, replace=False)
            fit_labeled = np.setdiff1d(labeled, val)

            def val_error(value, method=method, val=val, fit_labeled=fit_labeled):
                scores = _scores_for(method, w, lap, g_for(fit_labeled), fit_labeled,
                                     truth, value, cfg, rhos)
                return argmax_error(scores[val], truth[val])

            chosen, _ = _select_hyper(grid, val_error)
        else:
            chosen = grid[0]
        scores = _scores_for(method, w, lap, g_for(labeled), labeled, truth, chosen,
                             cfg, rhos)
        err = argmax_error(scores[unlabeled], truth[unlabeled])
        results[method] = {"error": err, "hyper": chosen}
    return results


def _scores_for(method, w, lap, g, labeled, truth, hyper, cfg, rhos):
    if method == "lass":
        return _fit_predict(method, w, lap, g, labeled, None, hyper, cfg,
                            rho=rhos.get(hyper, 1.0))
    converted, z_l = ssl.labels_from_affinities(g[labeled], epsilon=hyper)
    return _fit_predict(method, w, lap, g, labeled[converted], z_l, None, cfg)


def _tagging_run(points, tag_sets, w, lap, cfg: ExperimentConfig, rng,
                 n_categories: int, rhos: dict) -> dict:
    n = points.shape[0]
    k = n_categories
    order = rng.permutation(n)
    n_test = int(round(cfg.test_fraction * n))
    test = np.sort(order[:n_test])
    train = np.sort(order[n_test:])

    freq = np.zeros(k)
    for i in train:
        for t in tag_sets[i]:
            freq[t] += 1
    most_frequent = np.argsort(-freq, kind="stable")[:cfg.neg_pool]

    g = np.zeros((n, k))
    for i in train:
        tags = sorted(tag_sets[i])
        pos = rng.choice(tags, size=min(cfg.n_pos_tags, len(tags)), replace=False)
        g[i, pos] = 1.0
        negatives = [c for c in most_frequent if c not in tag_sets[i]]
        if negatives:
            neg = rng.choice(negatives, size=min(cfg.n_neg_tags, len(negatives)),
                             replace=False)
            g[i, neg] = -1.0

    truth_test = [tag_sets[i] for i in test]
    results = {}
    for method in cfg.methods:
        grid = cfg.lambda_grid if method == "lass" else cfg.epsilon_grid
        if len(grid) > 1 and train.size >= 2:
            n_val = max(1, int(round(cfg.validation_fraction * train.size)))
            val = np.sort(rng.choice(train, size=n_val, replace=False))

            def val_error(value, method=method, val=val):
                g_fit = g.copy()
                g_fit[val] = 0.0
                labeled_fit = np.setdiff1d(train, val)
                scores = _tag_scores(method, w, lap, g_fit, labeled_fit, value, cfg, rhos)
                _, _, f1 = precision_recall_f1(scores[val], [tag_sets[i] for i in val],
                                               cfg.annotation_length)
                return 1.0 - f1

            chosen, _ = _select_hyper(grid, val_error)
        else:
            chosen = grid[0]
        scores = _tag_scores(method, w, lap, g, train, chosen, cfg, rhos)
        p, r, f1 = precision_recall_f1(scores[test], truth_test, cfg.annotation_length)
        set_err = topT_set_error(scores[test], truth_test)
        results[method] = {"precision": p, "recall": r, "f1": f1,
                           "topT_error": set_err, "hyper": chosen}
    return results


def _tag_scores(method, w, lap, g, train_items, hyper, cfg, rhos):
    if method == "lass":
        return _fit_predict(method, w, lap, g, train_items, None, hyper, cfg,
                            rho=rhos.get(hyper, 1.0))
    labeled, z_l = ssl.labels_from_affinities(g, epsilon=hyper)
    return _fit_predict(method, w, lap, g, labeled, z_l, None, cfg)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentReport:
    """Run the configured protocol; deterministic given (config, seed)."""
    if cfg.dataset == "two_moons":
        params = {"n": 1000, "noise": 0.05, **cfg.dataset_params}
        points, truth = two_moons(seed=cfg.seed, **params)
        protocol = "classification"
    elif cfg.dataset == "blobs":
        params = {"n": 1500, **cfg.dataset_params}
        points, truth = gaussian_blobs(seed=cfg.seed, **params)
        protocol = "classification"
    else:
        params = {"n": 1200, **cfg.dataset_params}
        points, tag_sets = multitag_corpus(seed=cfg.seed, **params)
        protocol = "tagging"

    if protocol == "classification" and cfg.n_labels is None:
        raise ValueError("classification protocols require n_labels")
    if protocol == "tagging" and cfg.n_pos_tags is None:
        raise ValueError("tagging protocols require n_pos_tags")

    w, lap = _build_graph_cached(points, cfg)
    rhos = _experiment_rhos(lap, cfg)
    n_label_values = cfg.n_labels if isinstance(cfg.n_labels, (list, tuple)) else [cfg.n_labels]

    jobs = []
    for nl in n_label_values:
        for run in range(cfg.runs):
            jobs.append((nl, run))

    def execute(job):
        nl, run = job
        rng = np.random.default_rng([cfg.seed, run if nl is None else nl * 10007 + run])
        try:
            if protocol == "classification":
                per_method = _classification_run(points, truth, w, lap, cfg, nl, rng,
                                                 rhos)
            else:
                per_method = _tagging_run(points, tag_sets, w, lap, cfg, rng,
                                          params.get("n_categories", 20), rhos)
        except Exception as exc:  # recorded, run excluded
            return ("error", nl, run, f"{type(exc).__name__}: {exc}")
        return ("ok", nl, run, per_method)

    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(execute, jobs))
    else:
        outcomes = [execute(j) for j in jobs]

    rows, exclusions = [], []
    for status, nl, run, payload in outcomes:
        if status == "error":
            exclusions.append({"n_labels": nl, "run": run, "reason": payload})
            continue
        for method, metrics in payload.items():
            row = {"method": method, "run": run, **metrics}
            if nl is not None:
                row["n_labels"] = nl
            rows.append(row)
    rows.sort(key=lambda r: (str(r.get("n_labels")), r["method"], r["run"]))

    summary = {}
    metric_keys = [k for k in (rows[0] if rows else {})
                   if k not in ("method", "run", "hyper", "n_labels")]
    for method in cfg.methods:
        vals = [r for r in rows if r["method"] == method]
        summary[method] = {
            key: {"mean": float(np.mean([v[key] for v in vals])),
                  "std": float(np.std([v[key] for v in vals]))}
            for key in metric_keys if vals
        }
    report = ExperimentReport(config=asdict(cfg), rows=rows, summary=summary,
                              exclusions=exclusions)
    if out_dir is not None:
        report.write(out_dir)
    return report
