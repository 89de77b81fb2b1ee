"""Command-line front end: ``oscvkde constants | select | curve | scan | simulate``.

Every output embeds a run manifest (subcommand, flags, seeds, package version,
quadrature configuration and its hash); equal manifests give byte-identical
outputs.  Exit codes: 0 success, 2 input error, 3 degenerate result,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import os
import re
import sys
import tempfile
from typing import List, Optional

import numpy as np

from . import __version__
from .errors import (
    DegenerateCriterion,
    InvalidBandwidth,
    InvalidParam,
    InvalidSample,
    InvalidSpec,
    NotRobustKernel,
    OSCVError,
    ParseError,
    QuadratureFailure,
    UnknownKernelLabel,
)
from .functionals import QuadratureConfig
from .kernels import LIParams, kernel_from_label, make_LI
from .rescaling import constants_record, scan_robust, standard_pairs
from .selection import GridPolicy, Mode, lscv_curve, oscv_curve, select
from .simulation import make_density, monte_carlo_study

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DEGENERATE = 3
EXIT_NUMERICAL = 4

_SPLIT = re.compile(r"[,\s]+")


def read_sample(path: str) -> np.ndarray:
    """One numeric column, optional header line, comma or whitespace delimited."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    values: List[float] = []
    seen_row = False
    for row, line in enumerate(lines, start=1):
        fields = [f for f in _SPLIT.split(line.strip()) if f]
        if not fields:
            continue
        first, seen_row = not seen_row, True
        if len(fields) != 1:
            raise ParseError(f"expected one column, found {len(fields)}", row=row, column=2)
        try:
            v = float(fields[0].strip('"'))
        except ValueError:
            if first:
                continue  # header
            raise ParseError(f"not a number: {fields[0]!r}", row=row, column=1) from None
        if not np.isfinite(v):
            raise ParseError(f"non-finite value {fields[0]!r}", row=row, column=1)
        values.append(v)
    if len(values) < 2:
        raise ParseError(f"need at least 2 observations in {path}, found {len(values)}")
    return np.array(values)


def _file_digest(path: str) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def manifest(args, cfg: QuadratureConfig, seeds=()) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}
    out = {
        "tool": "oscvkde",
        "version": __version__,
        "schema_version": SCHEMA_VERSION,
        "subcommand": args.command,
        "flags": flags,
        "seeds": list(seeds),
        "quadrature_config": dataclasses.asdict(cfg),
        "quadrature_config_hash": cfg.digest(),
    }
    if getattr(args, "data", None):
        out["input_sha256"] = _file_digest(args.data)
    return out


def write_output(text: str, path: Optional[str]) -> None:
    """Write to ``path`` atomically (temp file + rename), or to stdout."""
    if not path:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".oscvkde-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _grid_policy(args) -> GridPolicy:
    if (args.grid_lo is None) != (args.grid_hi is None):
        raise InvalidParam("--grid-lo and --grid-hi go together")
    return GridPolicy(num=args.grid_n, lo=args.grid_lo, hi=args.grid_hi)


def _parse_li(text: str) -> LIParams:
    try:
        alpha, sigma = (float(t) for t in text.split(":"))
    except ValueError:
        raise InvalidParam(f"--li expects alpha:sigma, got {text!r}") from None
    return LIParams(alpha, sigma)


def _parse_range(text: str):
    try:
        lo, hi = (float(t) for t in text.split(":"))
    except ValueError:
        raise InvalidParam(f"expected lo:hi, got {text!r}") from None
    return lo, hi


def cmd_constants(args, cfg):
    pairs = []
    K = kernel_from_label(args.kernel)
    for label in args.oscv_kernel or []:
        pairs.append((K, kernel_from_label(label)))
    for text in args.li or []:
        pairs.append((K, make_LI(_parse_li(text))))
    if not pairs:
        pairs = standard_pairs()
    rows = [constants_record(k, l, cfg).as_dict() for k, l in pairs]
    meta = manifest(args, cfg)
    if args.format == "json":
        return _dump({"manifest": meta, "constants": rows}), EXIT_OK
    buf = io.StringIO()
    buf.write(f"# manifest: {json.dumps(meta, sort_keys=True)}\n")
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue(), EXIT_OK


def cmd_select(args, cfg):
    x = read_sample(args.data)
    sel = select(
        x,
        args.mode,
        kernel_from_label(args.oscv_kernel) if args.oscv_kernel else None,
        kernel_from_label(args.kernel),
        _grid_policy(args),
        cfg,
    )
    body = sel.to_dict()
    body["n"] = int(x.size)
    status = EXIT_OK
    if sel.degenerate and not args.allow_degenerate:
        body["bandwidth"] = None
        status = EXIT_DEGENERATE
    return _dump({"manifest": manifest(args, cfg), "selection": body}), status


def cmd_curve(args, cfg):
    x = read_sample(args.data)
    grid = _grid_policy(args)
    if args.method == "lscv":
        curve = lscv_curve(x, kernel_from_label(args.kernel), grid, cfg)
    else:
        cv = kernel_from_label(args.oscv_kernel or "one_sided:gaussian")
        curve = oscv_curve(x, cv, grid, cfg)
    summary = curve.to_dict()
    buf = io.StringIO()
    buf.write(f"# manifest: {json.dumps(manifest(args, cfg), sort_keys=True)}\n")
    buf.write(f"# curve: {json.dumps(summary, sort_keys=True)}\n")
    buf.write("bandwidth,criterion\n")
    for b, v in zip(curve.grid, curve.values):
        buf.write(f"{float(b)!r},{float(v)!r}\n")
    return buf.getvalue(), EXIT_OK


def cmd_scan(args, cfg):
    result = scan_robust(
        _parse_range(args.alpha), _parse_range(args.sigma), args.alpha_step, args.sigma_step, args.threshold, cfg,
        kernel_from_label(args.kernel),
    )
    points = [
        {"alpha": p.params.alpha, "sigma": p.params.sigma, "e_c_percent": p.e_c_percent, "refined": p.refined}
        for p in result.points
    ]
    skipped = [{"alpha": a, "sigma": s, "reason": r} for a, s, r in result.skipped]
    return _dump({"manifest": manifest(args, cfg), "points": points, "skipped": skipped}), EXIT_OK


def cmd_simulate(args, cfg):
    d = make_density(args.density)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    report = monte_carlo_study(d, args.n, args.reps, methods, args.seed, cfg, args.workers)
    meta = manifest(args, cfg, seeds=[args.seed])
    return _dump({"manifest": meta, "report": report.to_dict()}), EXIT_OK


def _add_grid_flags(p):
    p.add_argument("--grid-lo", type=float, default=None, help="absolute lower bound (criterion bandwidth scale)")
    p.add_argument("--grid-hi", type=float, default=None, help="absolute upper grid bound")
    p.add_argument("--grid-n", type=int, default=201, help="number of grid points (default 201)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oscvkde", description="One-sided cross-validation bandwidth selection")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--quadrature-config", default=None, help="JSON file with quadrature settings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("constants", help="rescaling constants C, C* and E_C")
    p.add_argument("--kernel", default="gaussian", help="estimation kernel for --oscv-kernel/--li rows")
    p.add_argument("--oscv-kernel", action="append", help="cv kernel label (repeatable)")
    p.add_argument("--li", action="append", help="LI family member alpha:sigma (repeatable)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_constants)

    p = sub.add_parser("select", help="select a bandwidth for a one-column data file")
    p.add_argument("data")
    p.add_argument("--mode", choices=[m.value for m in Mode], default="smooth")
    p.add_argument("--oscv-kernel", default=None)
    p.add_argument("--kernel", default="gaussian")
    _add_grid_flags(p)
    p.add_argument("--allow-degenerate", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("curve", help="export a criterion curve as CSV")
    p.add_argument("data")
    p.add_argument("--method", choices=("oscv", "lscv"), default="oscv")
    p.add_argument("--oscv-kernel", default=None)
    p.add_argument("--kernel", default="gaussian")
    _add_grid_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("scan", help="search the LI family for robust kernels")
    p.add_argument("--alpha", default="16:18", help="alpha range lo:hi")
    p.add_argument("--sigma", default="1.0:1.02", help="sigma range lo:hi")
    p.add_argument("--alpha-step", type=float, default=0.25)
    p.add_argument("--sigma-step", type=float, default=0.01)
    p.add_argument("--threshold", type=float, default=0.1, help="|E_C| threshold in percent")
    p.add_argument("--kernel", default="gaussian")
    p.add_argument("--out")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("simulate", help="Monte Carlo study of bandwidth selectors")
    p.add_argument("--density", default="cusped7", help="normal | laplace | cusped7 | mixture JSON file")
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--methods", default="lscv,oscv_smooth,oscv_nonsmooth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = QuadratureConfig.from_file(args.quadrature_config) if args.quadrature_config else QuadratureConfig.from_env()
        text, status = args.func(args, cfg)
        write_output(text, args.out)
    except FileNotFoundError as exc:
        print(f"oscvkde {args.command}: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_INPUT
    except (ParseError, UnknownKernelLabel, InvalidParam, InvalidSpec, InvalidSample, InvalidBandwidth,
            NotRobustKernel) as exc:
        print(f"oscvkde {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DegenerateCriterion as exc:
        print(f"oscvkde {args.command}: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (QuadratureFailure, OSCVError, ArithmeticError) as exc:
        print(f"oscvkde {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if status == EXIT_DEGENERATE:
        print(f"oscvkde {args.command}: criterion is degenerate; rerun with --allow-degenerate to accept it",
              file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
