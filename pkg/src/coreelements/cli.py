"""Command line entry point: ``run``, ``fit``, ``bounds`` and ``gen`` subcommands."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import bench
from .datagen import ExperimentConfig, generate_dataset, replication_rng
from .errors import CoreElementsError
from .theory import bound_report

RUN_KEYS = {"methods", "r_grid", "replications", "workers", "output", "format", "pmse", "diagnostics", "timing"}


def load_config(path):
    """Read a JSON or TOML run configuration (chosen by file extension)."""
    path = Path(path)
    if path.suffix.lower() == ".toml":
        import tomli

        with open(path, "rb") as fh:
            return tomli.load(fh)
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def split_config(doc):
    """Separate ExperimentConfig fields from run settings."""
    doc = dict(doc)
    if "experiment" in doc:
        exp = dict(doc.pop("experiment"))
    else:
        exp = {k: v for k, v in doc.items() if k not in RUN_KEYS}
        doc = {k: v for k, v in doc.items() if k in RUN_KEYS}
    unknown = set(doc) - RUN_KEYS
    if unknown:
        raise ValueError(f"unknown run settings: {sorted(unknown)}")
    return ExperimentConfig.from_dict(exp), doc


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _response_col(text):
    try:
        return int(text)
    except ValueError:
        return text


def cmd_run(args):
    config, settings = split_config(load_config(args.config))
    methods = settings.get("methods", ["FullOLS", "Core"])
    r_grid = settings.get("r_grid") or [m * config.p for m in (2, 4, 6, 8, 10)]
    report = bench.run_experiment(
        config,
        methods,
        r_grid,
        int(settings.get("replications", 1)),
        workers=args.workers or int(settings.get("workers", 1)),
        compute_pmse=bool(settings.get("pmse", True)),
        diagnostics=bool(settings.get("diagnostics", False)),
        timing=bool(settings.get("timing", False)),
    )
    fmt = args.format or settings.get("format", "csv")
    bench.emit_report(report, fmt, args.output or settings.get("output", "-"))


def cmd_fit(args):
    x, y = bench.ingest_csv(args.csv, _response_col(args.response_col), not args.no_header, args.center)
    spec = bench.MethodSpec.parse(args.method)
    if args.k is not None:
        spec = bench.MethodSpec(spec.name, spec.lam, args.k, spec.prereduce)
    r = args.r if args.r is not None else 10 * x.p
    if args.bootstrap:
        report = bench.run_dataset(x, y, [spec], [r], args.bootstrap, seed=args.seed, compute_pmse=False)
        bench.emit_report(report, args.format, args.output or "-")
        return
    rng = np.random.default_rng(args.seed)
    t0 = time.perf_counter()
    est = bench.fit_method(spec, x, y, r, rng)
    elapsed = time.perf_counter() - t0
    out = {"method": spec.label, "r": r, "n": x.n, "p": x.p, "beta": est.beta.tolist(), "wall_time_s": elapsed}
    _emit_json(out, args.output)


def cmd_bounds(args):
    x, y = bench.ingest_csv(args.csv, _response_col(args.response_col), not args.no_header, args.center)
    if args.eps_prime_grid:
        rows = bench.eps_curve(x, y, _float_list(args.eps_prime_grid))
        bench.emit_report(rows, args.format, args.output or "-")
        return
    r_grid = _int_list(args.r_grid) if args.r_grid else [m * x.p for m in (2, 4, 6, 8, 10)]
    fields = ("r", "kappa", "lambda0", "frob_L", "variance_bound_leading", "eps_prime_threshold",
              "eps_prime_achieved", "eps_empirical", "eps_theoretical", "expansion_valid")
    rows = []
    for r in r_grid:
        rep = bound_report(x, y, r, args.eps, sigma2=args.sigma2)
        row = {f: getattr(rep, f) for f in fields[1:]}
        row["r"] = r
        rows.append(row)
    text = bench.rows_to_csv(rows, fields) if args.format == "csv" else bench.rows_to_json(rows, fields)
    bench._write_text(args.output or "-", text)


def cmd_gen(args):
    config, _ = split_config(load_config(args.config))
    data = generate_dataset(config, replication_rng(config.seed, args.replication))
    bench.write_dataset_csv(data, args.output or "-")


def _emit_json(obj, path):
    bench._write_text(path or "-", json.dumps(obj, indent=1, allow_nan=False) + "\n")


def build_parser():
    ap = argparse.ArgumentParser(prog="coreelements", description="Element-wise subset selection for least squares.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="synthetic sweep from a JSON/TOML config")
    run.add_argument("config")
    run.add_argument("-o", "--output")
    run.add_argument("--format", choices=("csv", "json"))
    run.add_argument("--workers", type=int)
    run.set_defaults(func=cmd_run)

    def data_args(p):
        p.add_argument("csv")
        p.add_argument("--response-col", default="-1", help="0-based index or header name (default: last)")
        p.add_argument("--no-header", action="store_true")
        p.add_argument("--center", action="store_true")
        p.add_argument("-o", "--output")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    fit = sub.add_parser("fit", help="single estimate on a CSV dataset")
    data_args(fit)
    fit.add_argument("--method", default="Core")
    fit.add_argument("--r", type=int)
    fit.add_argument("--k", type=int)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--bootstrap", type=int, default=0, metavar="B", help="B bootstrap replications")
    fit.set_defaults(func=cmd_fit)

    bounds = sub.add_parser("bounds", help="bound diagnostics over an r grid")
    data_args(bounds)
    bounds.add_argument("--r-grid")
    bounds.add_argument("--eps", type=float, default=1.0)
    bounds.add_argument("--sigma2", type=float)
    bounds.add_argument("--eps-prime-grid", help="comma list; emits eps triples instead")
    bounds.set_defaults(func=cmd_bounds)

    gen = sub.add_parser("gen", help="write one synthetic dataset to CSV")
    gen.add_argument("config")
    gen.add_argument("-o", "--output")
    gen.add_argument("--replication", type=int, default=0)
    gen.set_defaults(func=cmd_gen)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CoreElementsError, ValueError, TypeError, OSError, KeyError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("line", "column"):
            if hasattr(exc, attr):
                err[attr] = getattr(exc, attr)
        sys.stderr.write(json.dumps(err) + "\n")
        return 2 if isinstance(exc, OSError) else 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
