"""Command-line front end: bound/exact computations, comparisons, benchmarks.

Reports are JSON by default (``--csv`` switches the tabular commands to CSV).
JSON numbers carry both a 6-significant-digit value and the full-precision
hex float, so reports double as human-readable tables and exact regression
anchors. Identical invocations produce byte-identical reports apart from
timing fields.

Exit codes: 0 success, 1 numerical non-convergence, 2 input error,
3 size-cap refusal.

``compare`` rows may be computed in parallel; set CONVNORM_WORKERS to cap the
worker count (default 1, serial). ``bench`` always runs serially so timings
stay honest.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from statistics import median

import numpy as np

from . import __version__
from .bounds import BRANCHES, compute_bound
from .convops import exact_norm_matfree
from .errors import (
    ConvnormError,
    DivergenceError,
    DomainError,
    FilterFormatError,
    FilterIntegrityError,
    GeometryError,
    NotConvergedError,
    ShapeMismatchError,
    SizeCapError,
)
from .filters import load_filter, random_filter
from .frequency import exact_norm_fft
from .gradients import finite_diff_check
from .jacobian import DEFAULT_SIZE_CAP, build_jacobian, oracle_sigma_max, save_matrix_csv
from .power import DEFAULT_MAX_ITER, DEFAULT_TOL
from .regdemo import RegDemoConfig, run_regdemo

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_INPUT = 2
EXIT_SIZE_CAP = 3

_INPUT_ERRORS = (
    FilterFormatError,
    FilterIntegrityError,
    DomainError,
    GeometryError,
    ShapeMismatchError,
    OSError,
    json.JSONDecodeError,
    ValueError,
)


def _num(x) -> dict:
    """JSON encoding of a float: rounded display value plus exact hex."""
    x = float(x)
    return {"value": float(f"{x:.6g}"), "hex": x.hex()}


def _fmt(x) -> str:
    return f"{float(x):.6g}"


def _emit(text: str, out_path) -> None:
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump_json(doc: dict, out_path) -> None:
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", out_path)


def _parse_dims(text: str) -> tuple[int, int, int, int]:
    parts = text.lower().split("x")
    if len(parts) != 4:
        raise ValueError(f"dims must look like 64x64x3x3, got {text!r}")
    dims = tuple(int(p) for p in parts)
    if min(dims) < 1:
        raise ValueError(f"dims must be positive, got {text!r}")
    return dims


def _parse_int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p]


# ---------------------------------------------------------------- bound

def cmd_bound(args) -> int:
    filt = load_filter(args.filter, args.fmt)
    report = compute_bound(filt, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
    converged = {name: report.estimates[name].converged for name in BRANCHES}
    scaled = report.scaled_norms
    if args.csv:
        header = "c_out,c_in,h,w," + ",".join(f"scaled_{b}" for b in BRANCHES) + ",bound,argmin\n"
        row = (
            ",".join(str(d) for d in filt.dims)
            + ","
            + ",".join(_fmt(scaled[b]) for b in BRANCHES)
            + f",{_fmt(report.bound)},{report.argmin}\n"
        )
        _emit(header + row, args.output)
    else:
        doc = {
            "schema": "convnorm/bound/v1",
            "filter": {"path": args.filter, "dims": list(filt.dims)},
            "scale": _num(report.scale),
            "norms": {b: _num(report.norms[b]) for b in BRANCHES},
            "scaled_norms": {b: _num(scaled[b]) for b in BRANCHES},
            "bound": _num(report.bound),
            "argmin": report.argmin,
            "power_iteration": {
                "tol": _num(args.tol),
                "max_iter": args.max_iter,
                "seed": args.seed,
                "iterations": {b: report.estimates[b].iterations for b in BRANCHES},
                "converged": converged,
            },
        }
        _dump_json(doc, args.output)
    if not converged[report.argmin]:
        print("warning: winning branch did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# ---------------------------------------------------------------- exact

def cmd_exact(args) -> int:
    filt = load_filter(args.filter, args.fmt)
    status = EXIT_OK
    doc = {
        "schema": "convnorm/exact/v1",
        "filter": {"path": args.filter, "dims": list(filt.dims)},
        "method": args.method,
        "n": args.n,
    }
    if args.method == "fft":
        value = exact_norm_fft(filt, args.n, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
        doc["value"] = _num(value)
    elif args.method == "matfree":
        est = exact_norm_matfree(filt, args.n, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
        doc["value"] = _num(est.sigma)
        doc["iterations"] = est.iterations
        doc["converged"] = est.converged
        if not est.converged:
            status = EXIT_NOT_CONVERGED
        value = est.sigma
    else:  # oracle
        jac = build_jacobian(filt, args.n, size_cap=args.size_cap)
        if args.dump_jacobian:
            save_matrix_csv(jac.matrix, args.dump_jacobian)
        est = oracle_sigma_max(jac, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
        doc["value"] = _num(est.sigma)
        doc["iterations"] = est.iterations
        doc["converged"] = est.converged
        doc["jacobian_shape"] = list(jac.matrix.shape)
        if not est.converged:
            status = EXIT_NOT_CONVERGED
        value = est.sigma
    if args.csv:
        _emit(f"method,n,value\n{args.method},{args.n},{_fmt(value)}\n", args.output)
    else:
        _dump_json(doc, args.output)
    if status == EXIT_NOT_CONVERGED:
        print("warning: power iteration did not converge", file=sys.stderr)
    return status


# ---------------------------------------------------------------- compare

_COMPARE_COLUMNS = (
    "label,c_out,c_in,h,w,seed,n,"
    + ",".join(f"scaled_{b}" for b in BRANCHES)
    + ",bound,argmin,exact_fft,exact_matfree,ratio,"
    + "time_bound_s,time_fft_s,time_matfree_s,error"
)


def _load_manifest(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise FilterFormatError(f"{path}: manifest must be a JSON list")
    for entry in doc:
        if not isinstance(entry, dict) or ("path" not in entry and "dims" not in entry):
            raise FilterFormatError(
                f"{path}: each manifest entry needs 'path' or 'dims', got {entry!r}"
            )
    return doc


def _compare_tasks(manifest: list[dict], default_n: int, seeds: list[int]) -> list[dict]:
    tasks = []
    for i, entry in enumerate(manifest):
        n = int(entry.get("n", default_n))
        if "path" in entry:
            tasks.append(
                {
                    "label": entry.get("label", os.path.basename(str(entry["path"]))),
                    "path": entry["path"],
                    "seed": None,
                    "n": n,
                }
            )
        else:
            dims = tuple(int(d) for d in entry["dims"])
            entry_seeds = [int(entry["seed"])] if "seed" in entry else seeds
            for seed in entry_seeds:
                label = entry.get("label", "x".join(str(d) for d in dims))
                tasks.append({"label": label, "dims": dims, "seed": seed, "n": n})
    return tasks


def _compare_row(task: dict, args) -> dict:
    row = {
        "label": task["label"],
        "seed": task["seed"],
        "n": task["n"],
        "error": "",
    }
    try:
        if "path" in task:
            filt = load_filter(task["path"], "auto")
        else:
            filt = random_filter(task["dims"], task["seed"])
        row["dims"] = list(filt.dims)

        t0 = time.perf_counter()
        report = compute_bound(filt, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
        row["time_bound_s"] = time.perf_counter() - t0
        row["scaled_norms"] = report.scaled_norms
        row["bound"] = report.bound
        row["argmin"] = report.argmin

        t0 = time.perf_counter()
        exact = exact_norm_fft(filt, task["n"], tol=args.tol, max_iter=args.max_iter, seed=args.seed)
        row["time_fft_s"] = time.perf_counter() - t0
        row["exact_fft"] = exact
        row["ratio"] = report.bound / exact if exact > 0 else float("inf")

        if args.matfree:
            t0 = time.perf_counter()
            est = exact_norm_matfree(
                filt, task["n"], tol=args.tol, max_iter=args.max_iter, seed=args.seed
            )
            row["time_matfree_s"] = time.perf_counter() - t0
            row["exact_matfree"] = est.sigma

        if report.bound < exact - 1e-6 * report.bound:
            row["error"] = "bound below exact beyond tolerance"
    except ConvnormError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    except OSError as exc:
        row["error"] = f"OSError: {exc}"
    return row


def cmd_compare(args) -> int:
    manifest = _load_manifest(args.manifest)
    seeds = _parse_int_list(args.seeds)
    tasks = _compare_tasks(manifest, args.n, seeds)

    workers = int(os.environ.get("CONVNORM_WORKERS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda t: _compare_row(t, args), tasks))
    else:
        rows = [_compare_row(t, args) for t in tasks]

    if args.csv:
        lines = [_COMPARE_COLUMNS]
        for row in rows:
            dims = row.get("dims", ["", "", "", ""])
            scaled = row.get("scaled_norms", {})
            cells = [
                str(row["label"]),
                *[str(d) for d in dims],
                "" if row["seed"] is None else str(row["seed"]),
                str(row["n"]),
                *[_fmt(scaled[b]) if b in scaled else "" for b in BRANCHES],
                _fmt(row["bound"]) if "bound" in row else "",
                row.get("argmin", ""),
                _fmt(row["exact_fft"]) if "exact_fft" in row else "",
                _fmt(row["exact_matfree"]) if "exact_matfree" in row else "",
                _fmt(row["ratio"]) if "ratio" in row else "",
                _fmt(row["time_bound_s"]) if "time_bound_s" in row else "",
                _fmt(row["time_fft_s"]) if "time_fft_s" in row else "",
                _fmt(row["time_matfree_s"]) if "time_matfree_s" in row else "",
                row["error"],
            ]
            lines.append(",".join(cells))
        _emit("\n".join(lines) + "\n", args.output)
    else:
        out_rows = []
        for row in rows:
            doc = {"label": row["label"], "seed": row["seed"], "n": row["n"], "error": row["error"]}
            if "dims" in row:
                doc["dims"] = row["dims"]
            if "scaled_norms" in row:
                doc["scaled_norms"] = {b: _num(v) for b, v in row["scaled_norms"].items()}
            for key in ("bound", "exact_fft", "exact_matfree", "ratio"):
                if key in row:
                    doc[key] = _num(row[key])
            if "argmin" in row:
                doc["argmin"] = row["argmin"]
            for key in ("time_bound_s", "time_fft_s", "time_matfree_s"):
                if key in row:
                    doc[key] = float(row[key])
            out_rows.append(doc)
        _dump_json({"schema": "convnorm/compare/v1", "rows": out_rows}, args.output)
    return EXIT_OK


# ---------------------------------------------------------------- bench

def cmd_bench(args) -> int:
    shapes = [_parse_dims(s) for s in args.shapes.split(",") if s]
    n_list = _parse_int_list(args.n_list)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    unknown = set(methods) - {"bound", "fft", "matfree", "oracle"}
    if unknown:
        raise ValueError(f"unknown bench methods: {sorted(unknown)}")

    rows = []
    for dims in shapes:
        filt = random_filter(dims, args.seed)
        if "bound" in methods:
            # the bound never reads n: measure once per shape
            times = []
            for _ in range(args.repeats):
                t0 = time.perf_counter()
                compute_bound(filt, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
                times.append(time.perf_counter() - t0)
            rows.append(
                {"method": "bound", "dims": dims, "n": None, "median_s": median(times),
                 "repeats": args.repeats, "status": "ok"}
            )
        for n in n_list:
            for method in methods:
                if method == "bound":
                    continue
                row = {"method": method, "dims": dims, "n": n, "repeats": args.repeats}
                try:
                    times = []
                    for _ in range(args.repeats):
                        t0 = time.perf_counter()
                        if method == "fft":
                            exact_norm_fft(filt, n, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
                        elif method == "matfree":
                            exact_norm_matfree(filt, n, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
                        else:
                            jac = build_jacobian(filt, n, size_cap=args.size_cap)
                            oracle_sigma_max(jac, tol=args.tol, max_iter=args.max_iter, seed=args.seed)
                        times.append(time.perf_counter() - t0)
                    row["median_s"] = median(times)
                    row["status"] = "ok"
                except SizeCapError:
                    row["median_s"] = None
                    row["status"] = "refused-size-cap"
                except GeometryError:
                    row["median_s"] = None
                    row["status"] = "refused-geometry"
                rows.append(row)

    if args.csv:
        lines = ["method,c_out,c_in,h,w,n,median_s,repeats,status"]
        for row in rows:
            lines.append(
                ",".join(
                    [
                        row["method"],
                        *[str(d) for d in row["dims"]],
                        "" if row["n"] is None else str(row["n"]),
                        "" if row["median_s"] is None else _fmt(row["median_s"]),
                        str(row["repeats"]),
                        row["status"],
                    ]
                )
            )
        _emit("\n".join(lines) + "\n", args.output)
    else:
        out_rows = []
        for row in rows:
            doc = {
                "method": row["method"],
                "dims": list(row["dims"]),
                "n": row["n"],
                "repeats": row["repeats"],
                "status": row["status"],
            }
            if row["median_s"] is not None:
                doc["median_s"] = float(row["median_s"])
            out_rows.append(doc)
        _dump_json(
            {"schema": "convnorm/bench/v1", "note": "direct-summation CPU timings; "
             "not comparable to GPU-kernel implementations", "rows": out_rows},
            args.output,
        )
    return EXIT_OK


# ---------------------------------------------------------------- gradcheck

def cmd_gradcheck(args) -> int:
    filt = load_filter(args.filter, args.fmt)
    report = finite_diff_check(
        filt, eps=args.eps, tol=args.check_tol,
        power_tol=args.tol, max_iter=args.max_iter, seed=args.seed,
    )
    doc = {
        "schema": "convnorm/gradcheck/v1",
        "filter": {"path": args.filter, "dims": list(filt.dims)},
        "eps": _num(args.eps),
        "tol": _num(args.check_tol),
        "max_abs_err": _num(report.max_abs_err),
        "worst_index": list(report.worst_index) if report.worst_index else None,
        "gap_ok": report.gap_ok,
        "checked": report.checked,
        "flagged": [list(idx) for idx in report.flagged],
        "passed": bool(report.max_abs_err <= args.check_tol),
    }
    _dump_json(doc, args.output)
    return EXIT_OK if doc["passed"] else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------- regdemo

def cmd_regdemo(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise FilterFormatError(f"{args.config}: regdemo config must be a JSON object")
    cfg = RegDemoConfig.from_mapping(doc)
    trace = run_regdemo(cfg)
    if args.output:
        trace.to_csv(args.output)
    else:
        lines = ["step,loss,bound,exact"]
        for s, lo, bo, ex in zip(trace.step, trace.loss, trace.bound, trace.exact):
            cell = "" if np.isnan(ex) else repr(float(ex))
            lines.append(f"{int(s)},{float(lo)!r},{float(bo)!r},{cell}")
        sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_power_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="power-iteration tolerance")
    p.add_argument("--max-iter", type=int, default=DEFAULT_MAX_ITER)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convnorm",
        description="Spectral-norm bounds and exact spectral norms of circular-convolution layers",
    )
    parser.add_argument("--version", action="version", version=f"convnorm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", help="sqrt(hw) * min over the four reshape norms")
    p.add_argument("filter", help="CFT1 or JSON filter file")
    p.add_argument("--fmt", choices=["auto", "binary", "json"], default="auto")
    _add_power_flags(p)
    p.add_argument("--csv", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("exact", help="exact spectral norm at a given input size")
    p.add_argument("filter")
    p.add_argument("--fmt", choices=["auto", "binary", "json"], default="auto")
    p.add_argument("--n", type=int, required=True, help="input height/width")
    p.add_argument("--method", choices=["fft", "matfree", "oracle"], default="fft")
    p.add_argument("--size-cap", type=int, default=DEFAULT_SIZE_CAP)
    p.add_argument("--dump-jacobian", help="CSV dump path (oracle method only)")
    _add_power_flags(p)
    p.add_argument("--csv", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("compare", help="bound vs exact over a manifest of filters")
    p.add_argument("manifest", help="JSON list of {path}|{dims[,seed]} entries")
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--seeds", default="0", help="comma-separated seeds for generator entries")
    p.add_argument("--matfree", action="store_true", help="also run the matrix-free method")
    _add_power_flags(p)
    p.add_argument("--csv", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="wall-clock medians per method/shape/n")
    p.add_argument("--shapes", default="16x16x3x3", help="comma-separated, e.g. 64x64x3x3")
    p.add_argument("--n-list", default="16,32,64")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--methods", default="bound,fft")
    p.add_argument("--size-cap", type=int, default=DEFAULT_SIZE_CAP)
    _add_power_flags(p)
    p.add_argument("--csv", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gradcheck", help="finite-difference check of the bound gradient")
    p.add_argument("filter")
    p.add_argument("--fmt", choices=["auto", "binary", "json"], default="auto")
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--check-tol", type=float, default=1e-5)
    _add_power_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("regdemo", help="train one layer under the regularized objective")
    p.add_argument("config", help="JSON RegDemoConfig")
    p.add_argument("-o", "--output", help="trace CSV path (default: stdout)")
    p.set_defaults(func=cmd_regdemo)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SizeCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIZE_CAP
    except NotConvergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
