"""Command-line surface: graph building, training, prediction, evaluation.

Exit codes: 0 success, 2 usage or input error, 3 non-convergence (artifacts
still written), 4 partial per-row failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import core, harness, io, oos, ssl
from .graph import build_knn_graph, connected_components, laplacian

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3
EXIT_PARTIAL = 4


class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _cmd_build_graph(args) -> int:
    if args.kernel == "gaussian" and args.sigma is None:
        raise CliError(EXIT_USAGE, "--kernel gaussian requires --sigma\n"
                                   "usage: lasskit build-graph --points CSV --k INT "
                                   "--kernel gaussian --sigma REAL --out MTX")
    try:
        points = io.read_points_csv(args.points)
    except io.ParseError as exc:
        raise CliError(EXIT_USAGE, str(exc))
    n = points.shape[0]
    if args.k >= n:
        raise CliError(EXIT_USAGE,
                       f"k must be smaller than the number of points (k={args.k}, N={n})")
    try:
        w = build_knn_graph(points, args.k, kernel=args.kernel,
                            sigma=args.sigma or 1.0)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc))
    io.write_matrix_market(args.out, w.matrix, symmetric=True)
    split = connected_components(w)
    deg = w.degrees()
    print(f"wrote {args.out}: N={n}, edges={w.matrix.nnz // 2}, "
          f"components={split.component_count}")
    print(f"degree min/mean/max: {deg.min():.4g} / {deg.mean():.4g} / {deg.max():.4g}")
    return EXIT_OK


def _cmd_train(args) -> int:
    try:
        w = io.read_similarity(args.graph)
        g = io.read_affinities(args.affinities)
    except (io.ParseError, ValueError) as exc:
        raise CliError(EXIT_USAGE, str(exc))
    if g.shape[0] != w.n:
        raise CliError(EXIT_USAGE,
                       f"dimension mismatch: graph has {w.n} items, "
                       f"affinities have {g.shape[0]} rows")
    lap = laplacian(w, normalized=False)
    if args.rho == "auto":
        rho = "auto"
    else:
        try:
            rho = float(args.rho)
        except ValueError:
            raise CliError(EXIT_USAGE, f"--rho must be a positive number or 'auto', "
                                       f"got {args.rho!r}")
    try:
        prob = core.Problem(laplacian=lap, g=g, lam=args.lam,
                            ridge_epsilon=args.ridge_epsilon)
        cfg = core.SolverConfig(rho=rho, tol=args.tol,
                                max_iterations=args.max_iters, seed=args.seed)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc))
    sol = core.solve(prob, cfg)
    split = connected_components(w)
    bundle = io.ModelBundle(
        z=sol.z, lam=args.lam,
        meta={
            "rho": rho if rho == "auto" else float(rho),
            "rho_used": sol.diagnostics.get("rho",
                        [c.get("rho") for c in sol.diagnostics.get("components", [])]),
            "graph_fingerprint": io.graph_fingerprint(w),
            "component_count": split.component_count,
            "component_labels": split.labels.tolist(),
            "converged": bool(sol.converged),
            "iterations": int(sol.iterations),
        },
        diagnostics={
            "objective": sol.objective,
            "objective_raw": sol.objective_raw,
            "kkt": sol.kkt.as_dict(),
            "uniqueness": sol.uniqueness,
            "tie_rows": sol.tie_rows.tolist() if sol.tie_rows is not None else None,
            "converged": bool(sol.converged),
            "iterations": int(sol.iterations),
            "pi": sol.pi.tolist(),
            "m": sol.m.tolist(),
        },
    )
    bundle.save(args.out)
    print(f"wrote model to {args.out}: objective={sol.objective:.6g}, "
          f"iterations={sol.iterations}, converged={sol.converged}")
    return EXIT_OK if sol.converged else EXIT_NOT_CONVERGED


def _cmd_predict(args) -> int:
    try:
        bundle = io.ModelBundle.load(args.model)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_USAGE, f"cannot load model: {exc}")
    try:
        wq = io.read_matrix_market(args.queries_w)
    except (ValueError, OSError) as exc:
        raise CliError(EXIT_USAGE, f"cannot read queries: {exc}")
    if wq.shape[1] != bundle.n:
        raise CliError(EXIT_USAGE,
                       f"queries have {wq.shape[1]} columns, model has {bundle.n} items")
    gq = None
    if args.queries_g:
        gq = io.read_affinities(args.queries_g)
        if gq.shape[0] != wq.shape[0]:
            raise CliError(EXIT_USAGE, "query w and g row counts differ")
        if gq.shape[1] != bundle.k:
            raise CliError(EXIT_USAGE,
                           f"query affinities have {gq.shape[1]} columns, "
                           f"model has {bundle.k} categories")
    lam = bundle.lam if args.lam is None else args.lam
    if lam < 0:
        raise CliError(EXIT_USAGE, "--lambda must be nonnegative")
    model = oos.TrainedModel(z=bundle.z, lam=bundle.lam)
    cache = oos.ZbarCache()
    rows, sidecar, failures = [], [], 0
    for i in range(wq.shape[0]):
        w_i = np.asarray(wq.getrow(i).todense()).ravel()
        g_i = np.zeros(bundle.k) if gq is None else gq[i]
        if args.method == "ssl":
            try:
                z = ssl.ssl_oos(bundle.z, w_i)
                mode = "crowd_only"
            except ValueError as exc:
                failures += 1
                rows.append(["error"] + [""] * bundle.k)
                sidecar.append({"row": i, "error": str(exc)})
                continue
            rows.append([mode] + [f"{v:.17g}" for v in z])
            sidecar.append({"row": i, "mode": mode})
        else:
            try:
                pred = oos.oos_predict(model, oos.OosQuery(w=w_i, g=g_i, lam=lam),
                                       cache=cache)
            except ValueError as exc:
                failures += 1
                rows.append(["error"] + [""] * bundle.k)
                sidecar.append({"row": i, "error": str(exc)})
                continue
            rows.append([pred.mode] + [f"{v:.17g}" for v in pred.z])
            sidecar.append({"row": i, "mode": pred.mode, "gamma": pred.gamma,
                            "tie": pred.tie, "warning": pred.warning})
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode"] + [f"z{k}" for k in range(bundle.k)])
        writer.writerows(rows)
    sidecar_path = Path(args.out).with_suffix(".json")
    with open(sidecar_path, "w") as fh:
        json.dump({"model": str(args.model), "lambda": lam, "method": args.method,
                   "rows": sidecar}, fh, indent=2)
    suffix = f" ({failures} failed rows)" if failures else ""
    print(f"wrote {len(rows)} predictions to {args.out}{suffix}")
    return EXIT_PARTIAL if failures else EXIT_OK


CONFIG_SCHEMA = {
    "type": "object",
    "required": ["dataset", "methods"],
    "additionalProperties": False,
    "properties": {
        "dataset": {"enum": ["two_moons", "blobs", "multitag"]},
        "methods": {"type": "array", "minItems": 1,
                    "items": {"enum": list(harness.KNOWN_METHODS)}},
        "dataset_params": {"type": "object"},
        "runs": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "n_labels": {"oneOf": [{"type": "integer", "minimum": 1},
                               {"type": "array",
                                "items": {"type": "integer", "minimum": 1}},
                               {"type": "null"}]},
        "n_pos_tags": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "null"}]},
        "lambda_grid": {"type": "array", "minItems": 1,
                        "items": {"type": "number", "exclusiveMinimum": 0}},
        "epsilon_grid": {"type": "array", "minItems": 1,
                         "items": {"type": "number", "minimum": 0,
                                   "exclusiveMaximum": 1}},
        "rho": {"oneOf": [{"const": "auto"},
                          {"type": "number", "exclusiveMinimum": 0}]},
        "k_neighbors": {"type": "integer", "minimum": 1},
        "kernel": {"enum": ["gaussian", "binary"]},
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "annotation_length": {"type": "integer", "minimum": 1},
        "test_fraction": {"type": "number", "exclusiveMinimum": 0,
                          "exclusiveMaximum": 1},
        "n_neg_tags": {"type": "integer", "minimum": 0},
        "neg_pool": {"type": "integer", "minimum": 1},
        "validation_fraction": {"type": "number", "exclusiveMinimum": 0,
                                "exclusiveMaximum": 1},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "max_iterations": {"type": "integer", "minimum": 1},
        "priors": {"oneOf": [{"type": "array", "items": {"type": "number"}},
                             {"type": "null"}]},
    },
}


def _cmd_eval(args) -> int:
    import jsonschema

    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(EXIT_USAGE, f"cannot read config: {exc}")
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "$" + "".join(f".{p}" if isinstance(p, str) else f"[{p}]"
                             for p in exc.absolute_path)
        raise CliError(EXIT_USAGE, f"invalid config at {path}: {exc.message}")
    try:
        cfg = harness.ExperimentConfig(**raw)
        report = harness.run_experiment(cfg, out_dir=args.out)
    except ValueError as exc:
        raise CliError(EXIT_USAGE, str(exc))
    print(f"{'method':<8} " + " ".join(f"{k:>12}" for k in
                                       next(iter(report.summary.values()), {})))
    for method, metrics in sorted(report.summary.items()):
        cells = " ".join(f"{v['mean']:>12.4f}" for v in metrics.values())
        print(f"{method:<8} {cells}")
    if report.exclusions:
        print(f"excluded runs: {len(report.exclusions)}")
    print(f"reports written to {args.out}")
    return EXIT_OK


def _cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    app = create_app()
    if args.preload:
        from .server import load_bundle_into

        for path in args.preload:
            model_id = load_bundle_into(app, path)
            print(f"loaded {path} as model {model_id}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lasskit",
                                     description="Laplacian assignment toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="build a kNN similarity graph from points")
    p.add_argument("--points", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--kernel", choices=["gaussian", "binary"], default="gaussian")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_build_graph)

    p = sub.add_parser("train", help="solve the assignment problem")
    p.add_argument("--graph", required=True)
    p.add_argument("--affinities", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--rho", default="auto")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-iters", dest="max_iters", type=int, default=100000)
    p.add_argument("--ridge-epsilon", dest="ridge_epsilon", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="out-of-sample predictions from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--queries-w", dest="queries_w", required=True)
    p.add_argument("--queries-g", dest="queries_g", default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--method", choices=["lass", "ssl"], default="lass")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("eval", help="run an experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="eval-report")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="serve loaded models over HTTP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--preload", nargs="*", default=[])
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except io.ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
