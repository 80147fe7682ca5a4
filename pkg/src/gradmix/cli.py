"""Command-line entry point: ``gradmix {fit,simulate,benchmark,adbench,replay}``.

Exit codes: 0 success, 2 usage or validation error, 3 numeric failure.
Every output document embeds a manifest from which ``gradmix replay``
regenerates it byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__, autodiff, em, gradcheck, metrics, models, optim, simulate
from .reparam import ConfigurationError

log = logging.getLogger("gradmix")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
SIGMOID_NS = (1, 5, 10, 50, 100, 200)
LOGISTIC_POINTS = (0.0, 0.25, 0.5, 1.0)


class UsageError(Exception):
    pass


def logistic_closed_form(n, x):
    """Simplified derivatives of the logistic map from the expression-swell table."""
    if n == 1:
        return 1.0
    if n == 2:
        return 4.0 - 8.0 * x
    if n == 3:
        return 16.0 * (1 - 10 * x + 24 * x**2 - 16 * x**3)
    if n == 4:
        return 64.0 * (1 - 42 * x + 504 * x**2 - 2640 * x**3 + 7040 * x**4
                       - 9984 * x**5 + 7168 * x**6 - 2048 * x**7)
    raise ValueError("closed forms are tabulated for n <= 4 only")


# io ----------------------------------------------------------------------------


def read_csv_matrix(path, header=False, label_col=None):
    """Parse headerless numeric CSV; errors carry 1-based line and column."""
    rows, labels = [], []
    width = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise UsageError(f"{path}:{lineno}:{col}: not a number: {cell!r}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise UsageError(f"{path}:{lineno}:1: expected {width} fields, got {len(values)}")
            if label_col is not None:
                idx = label_col if label_col >= 0 else width + label_col
                if not 0 <= idx < width:
                    raise UsageError(f"--label-col {label_col} out of range for {width} columns")
                labels.append(int(values[idx]))
                del values[idx]
            rows.append(values)
    if not rows:
        raise UsageError(f"{path}: no data rows")
    X = np.array(rows, dtype=float)
    if not np.all(np.isfinite(X)):
        raise UsageError(f"{path}: non-finite values")
    return X, (np.array(labels) if label_col is not None else None)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_json(path, doc):
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=False)
    Path(path).write_text(text + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def manifest(command, args, inputs=None):
    return {
        "command": command,
        "args": args,
        "inputs": inputs or {},
        "versions": {
            "gradmix": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }


# commands ------------------------------------------------------------------------


def run_fit(args, out):
    data_path = args["data"]
    X, labels = read_csv_matrix(data_path, args["header"], args["label_col"])
    family = args["model"].upper()
    if args["k"] < 1:
        raise UsageError("--k must be >= 1")
    if args["k"] > X.shape[0]:
        raise UsageError(f"--k {args['k']} exceeds the number of rows {X.shape[0]}")
    try:
        spec = models.ModelSpec(family, args["k"], X.shape[1], args["constraint"], args["q"])
    except ConfigurationError as exc:
        raise UsageError(str(exc)) from None
    method = args["method"].upper().replace("-", "_")
    if method == "EM" and family != "GMM":
        raise UsageError("--method em is available for --model gmm only")
    data = models.Dataset(X, labels)
    theta0 = models.init_params(spec, data, args["init"], args["seed"])
    if method == "EM":
        res = em.em_fit_gmm(X, spec.K, theta0["mu"],
                            cfg=em.EmConfig(args["max_iter"], args["tol"]))
        opt_doc = {"method": "EM", "max_iter": args["max_iter"], "tol": args["tol"],
                   "ridge": em.EmConfig().ridge}
    else:
        try:
            cfg = optim.OptConfig(method=method, lr=args["lr"], max_iter=args["max_iter"],
                                  tol=args["tol"], seed=args["seed"])
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        res = optim.fit(models.make_objective(spec, data), theta0.theta, cfg)
        opt_doc = cfg.to_dict()
        opt_doc.update({k: v for k, v in res.info.items() if k != "method"})
    params = models.ParamSet(spec, res.theta)
    assignment = models.responsibilities(spec, params, data)
    n = X.shape[0]
    total = res.final_loglik * n
    report = metrics.evaluate(total, models.param_count(spec), n, assignment.labels, labels)
    constrained = params.constrained()
    doc = {
        "status": "diverged" if res.diverged else "ok",
        "model": spec.to_dict(),
        "optimizer": opt_doc,
        "params": constrained,
        "unconstrained": params.named(),
        "trajectory": res.trajectory,
        "iters": res.iters,
        "converged": res.converged,
        "metrics": {"mean_loglik": res.final_loglik, **report.to_dict()},
        "labels": assignment.labels,
        "responsibilities": assignment.responsibilities,
        "manifest": manifest("fit", args, {"data_sha256": sha256(data_path)}),
    }
    write_json(out, doc)
    return EXIT_NUMERIC if res.diverged else EXIT_OK


def run_simulate(args, out):
    try:
        spec = simulate.SimSpec(args["n"], args["p"], args["k"], args["scale"], args["seed"],
                                args["covariance"], args["imbalance"], args["noise_features"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    data, truth = simulate.sample_mixture(spec)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cols = data.X.shape[1]
    rows = [list(map(float, x)) + [int(y)] for x, y in zip(data.X, data.labels)]
    write_csv(out / "data.csv", None, rows)
    write_json(out / "truth.json", {
        "spec": spec.to_dict(),
        "data_columns": cols,
        "label_column": cols,
        "truth": truth.to_dict(),
        "manifest": manifest("simulate", args),
    })
    return EXIT_OK


def run_benchmark(args, out, jobs=1):
    cfg = simulate.BenchConfig(scale=args["scale"], gd_lr=args["gd_lr"], adam_lr=args["adam_lr"],
                               max_iter=args["max_iter"], tol=args["tol"])
    try:
        records = simulate.benchmark_sweep(args["n"], args["p"], args["k"], range(args["seeds"]),
                                           args["methods"], cfg, jobs=jobs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "records.csv", simulate.BenchRecord.FIELDS, [r.row() for r in records])
    summary = simulate.summarize(records)
    if summary:
        header = list(summary[0])
        write_csv(out / "summary.csv", header, [[row[h] for h in header] for row in summary])
    write_json(out / "manifest.json", {"config": cfg.to_dict(),
                                       "manifest": manifest("benchmark", args)})
    failures = [r for r in records if r.error]
    for r in failures:
        log.warning("cell n=%d p=%d K=%d seed=%d %s: %s", r.n, r.p, r.K, r.seed, r.method, r.error)
    return EXIT_OK


def run_adbench(args, out):
    demo = args["demo"]
    if demo == "logistic":
        rows = []
        for n in range(1, min(4, args["n_max"]) + 1):
            for x in LOGISTIC_POINTS:
                _, d = autodiff.logistic_map_grad(x, n)
                exact = logistic_closed_form(n, x)
                rows.append([n, x, d, exact, abs(d - exact)])
        header = ["n", "x", "ad_derivative", "closed_form", "abs_error"]
        status = EXIT_OK if max(r[-1] for r in rows) < 1e-12 else EXIT_NUMERIC
    elif demo == "sigmoid-chain":
        rows = []
        for n in SIGMOID_NS:
            if n > args["n_max"]:
                continue
            rows.append([n, time_sigmoid_chain(n, args["reps"])])
        header = ["n", "ad_seconds"]
        status = EXIT_OK
    else:
        errors = gradcheck.check_expressions(count=50, seed=args["seed"])
        rows = [[len(errors), max(errors)]]
        header = ["expressions", "max_rel_error"]
        status = EXIT_OK if max(errors) < 1e-5 else EXIT_NUMERIC
    print(",".join(header))
    for r in rows:
        print(",".join(str(_fmt(v)) for v in r))
    if out:
        write_csv(out, header, rows)
    return status


def time_sigmoid_chain(n, reps, x=0.5):
    """Mean seconds per tape build plus reverse sweep of the nested sigmoid."""
    start = time.perf_counter()
    for _ in range(reps):
        autodiff.nested_sigmoid_grad(x, n)
    return (time.perf_counter() - start) / reps


COMMANDS = {"fit": run_fit, "simulate": run_simulate, "benchmark": run_benchmark,
            "adbench": run_adbench}


# argument parsing --------------------------------------------------------------------


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _methods(text):
    return [t.strip().upper().replace("-", "_") for t in text.split(",") if t.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog="gradmix", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a mixture model to a CSV file")
    f.add_argument("data")
    f.add_argument("--model", default="gmm", type=str.lower,
                   choices=["gmm", "mclust", "pgmm", "mfa", "tmm"])
    f.add_argument("--constraint", default=None)
    f.add_argument("--k", type=int, required=True)
    f.add_argument("--q", type=int, default=None)
    f.add_argument("--method", default="adam", type=str.lower,
                   choices=["gd", "adam", "newton-cg", "newton_cg", "em"])
    f.add_argument("--lr", type=float, default=3e-4)
    f.add_argument("--max-iter", type=int, default=1000)
    f.add_argument("--tol", type=float, default=1e-6)
    f.add_argument("--init", default="kmeans", choices=["kmeans", "random"])
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--header", action="store_true", help="skip the first row")
    f.add_argument("--label-col", type=int, default=None,
                   help="column holding ground-truth labels (negative counts from the end)")
    f.add_argument("--out", required=True)

    s = sub.add_parser("simulate", help="sample a synthetic mixture dataset")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--scale", type=float, default=5.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--covariance", default="FULL", type=str.upper, choices=simulate.COVARIANCE_MODES)
    s.add_argument("--imbalance", action="store_true")
    s.add_argument("--noise-features", type=int, default=0)
    s.add_argument("--out", required=True)

    b = sub.add_parser("benchmark", help="optimiser comparison over an (n, p, K) grid")
    b.add_argument("--n", type=_int_list, default=[128, 512])
    b.add_argument("--p", type=_int_list, default=[2, 9])
    b.add_argument("--k", type=_int_list, default=[2, 5])
    b.add_argument("--seeds", type=int, default=10)
    b.add_argument("--methods", type=_methods, default=list(simulate.BENCH_METHODS))
    b.add_argument("--scale", type=float, default=5.0)
    b.add_argument("--gd-lr", type=float, default=3e-4)
    b.add_argument("--adam-lr", type=float, default=3e-4)
    b.add_argument("--max-iter", type=int, default=1000)
    b.add_argument("--tol", type=float, default=1e-6)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out", required=True)

    a = sub.add_parser("adbench", help="automatic differentiation demonstrations")
    a.add_argument("--demo", required=True, choices=["logistic", "sigmoid-chain", "gradcheck"])
    a.add_argument("--n-max", type=int, default=200)
    a.add_argument("--reps", type=int, default=1000)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default=None)

    r = sub.add_parser("replay", help="re-run the command recorded in an output's manifest")
    r.add_argument("document", help="fit result, truth.json or benchmark manifest.json")
    r.add_argument("--out", required=True)
    return parser


def _args_for_manifest(ns):
    args = {k: v for k, v in vars(ns).items() if k not in ("command", "out", "verbose", "jobs")}
    if "method" in args and isinstance(args["method"], str):
        args["method"] = args["method"].replace("_", "-")
    return args


def dispatch(command, args, out, jobs=1):
    if command == "benchmark":
        return run_benchmark(args, out, jobs=jobs)
    return COMMANDS[command](args, out)


def replay(document, out):
    doc = json.loads(Path(document).read_text())
    man = doc.get("manifest")
    if not man or man.get("command") not in COMMANDS:
        raise UsageError(f"{document}: no replayable manifest")
    if man["command"] == "fit":
        expected = man.get("inputs", {}).get("data_sha256")
        if expected and sha256(man["args"]["data"]) != expected:
            raise UsageError("input data changed since the manifest was written")
    return dispatch(man["command"], man["args"], out)


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if ns.command == "replay":
            return replay(ns.document, ns.out)
        args = _args_for_manifest(ns)
        return dispatch(ns.command, args, ns.out, jobs=getattr(ns, "jobs", 1))
    except UsageError as exc:
        print(f"gradmix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"gradmix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"gradmix: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
