"""Command line experiment runner.

Subcommands map one-to-one onto the library layers:

* ``sample``      draw a path ensemble, write the binary format
* ``smallball``   estimate a small-ball table, write CSV
* ``fit``         fit an asymptotic law to a table, write JSON
* ``invert``      invert a table or law at given rates, write CSV
* ``error``       ball-moment errors, bounds and formulas, write CSV
* ``oracle``      run a structural-lemma oracle, write JSON
* ``verify``      ratio report of an error CSV against a law

Every output ``<name>`` gains a sidecar ``<name>.meta.json`` holding
the resolved configuration, seed, artifact version and a content hash
of the configuration (minus output paths), so identical metas imply
byte-identical data files.  Rates are nats by default; pass ``--unit
bits`` to convert inputs.  Exit codes: 0 success, 2 configuration
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from typing import List, Optional

import numpy as np

from . import __version__
from .errors import ConfigError, NumericError, QGaussError
from .gaussian import (
    KIND_ENSEMBLE,
    GridSpec,
    KERNEL_FAMILIES,
    build_kernel,
    sample_paths,
    write_array,
)
from .norms import Distortion, NormSpec, lp_norm, sup_norm
from .oracles import (
    DiscreteGaussian1D,
    LemmaFunctionParams,
    check_monotone_F,
    lemma_function,
    oracle_ball_rearrangement,
    oracle_extreme_point,
)
from .quanterror import (
    METHOD_ASYMPTOTIC,
    METHOD_BALL_MOMENT,
    asymptotic_error,
    ball_moment_error,
    effective_rate,
    ratio_report,
    upper_bound_mass,
)
from .smallball import (
    AsymptoticLaw,
    SmallBallTable,
    estimate_small_ball,
    fit_asymptotic,
    invert_asymptotic,
    invert_b,
)

_ERROR_HEADER = ["R", "alpha", "r", "radius", "method", "value", "stderr",
                 "bound", "formula", "ratio"]


def _fmt(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# argument helpers


def parse_values(text: str) -> List[float]:
    """Parse ``start:end:count`` (inclusive), ``log:`` prefix for
    geometric spacing, comma lists, or a single number."""
    text = text.strip()
    geometric = text.startswith("log:")
    body = text[4:] if geometric else text
    if ":" in body:
        parts = body.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range must be start:end:count, got {text!r}")
        try:
            start, end = float(parts[0]), float(parts[1])
            count = int(parts[2])
        except ValueError:
            raise ConfigError(f"bad range {text!r}") from None
        if count < 1:
            raise ConfigError("range count must be >= 1")
        if geometric:
            if start <= 0 or end <= 0:
                raise ConfigError("log range endpoints must be positive")
            return list(np.geomspace(start, end, count))
        return list(np.linspace(start, end, count))
    if geometric:
        raise ConfigError(f"log: prefix needs start:end:count, got {text!r}")
    try:
        return [float(v) for v in body.split(",") if v != ""]
    except ValueError:
        raise ConfigError(f"bad numeric list {text!r}") from None


def parse_window(text: str) -> tuple:
    """Parse a two-endpoint window ``lo:hi`` (or ``lo,hi``)."""
    parts = text.replace(",", ":").split(":")
    if len(parts) != 2:
        raise ConfigError(f"window must be lo:hi, got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"bad window {text!r}") from None
    return lo, hi


def parse_alpha(text: str) -> List[float]:
    out = []
    for token in text.split(","):
        token = token.strip()
        if token in ("inf", "infinity", "oo"):
            out.append(math.inf)
        else:
            try:
                out.append(float(token))
            except ValueError:
                raise ConfigError(f"bad alpha {token!r}") from None
    if not out:
        raise ConfigError("empty alpha list")
    return out


def _rates_in_nats(values: List[float], unit: str) -> List[float]:
    if unit == "bits":
        return [v * math.log(2.0) for v in values]
    return values


def _build_kernel(args):
    family = args.process
    if family not in KERNEL_FAMILIES:
        raise ConfigError(
            f"unknown process {family!r}; choose from {sorted(KERNEL_FAMILIES)}"
        )
    if family == "fbm":
        if args.hurst is None:
            raise ConfigError("fbm needs --hurst")
        h = args.hurst
        if len(h) == 1 and args.dim and args.dim > 1:
            h = h * args.dim
        return build_kernel("fbm", hurst=tuple(h))
    if family == "levy":
        if args.hurst is None or len(args.hurst) != 1:
            raise ConfigError("levy needs a scalar --hurst")
        return build_kernel("levy", hurst=args.hurst[0])
    if family == "ibm":
        if args.beta is None:
            raise ConfigError("ibm needs --beta")
        return build_kernel("ibm", beta=args.beta)
    if family == "isheet":
        if args.m is None:
            raise ConfigError("isheet needs --m")
        return build_kernel("isheet", m=args.m, dim=args.dim or 1)
    if family == "fou":
        if args.gamma is None:
            raise ConfigError("fou needs --gamma")
        h = args.hurst[0] if args.hurst else 1.0
        return build_kernel("fou", gamma=args.gamma, hurst=h)
    if family == "slepian":
        if args.slepian_a is None:
            raise ConfigError("slepian needs --slepian-a")
        return build_kernel("slepian", a=tuple(args.slepian_a))
    return build_kernel("stdnormal")


def _kernel_dim(kernel) -> int:
    return getattr(kernel, "dim", 1)


def _build_grid(args, kernel) -> GridSpec:
    dim = args.dim or _kernel_dim(kernel)
    return GridSpec(dim=dim, points_per_axis=args.grid)


def _build_norm(args) -> NormSpec:
    if args.norm == "sup":
        return sup_norm()
    if args.norm == "lp":
        if args.p is None:
            raise ConfigError("lp norm needs --p")
        return lp_norm(args.p)
    raise ConfigError(f"unknown norm {args.norm!r}")


def _cache_dir(args) -> Optional[str]:
    return os.environ.get("QGAUSS_CACHE") or args.cache


def _jsonable(value):
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    return value


def _write_meta(out_path: str, command: str, args) -> None:
    skip = {"func", "out", "cache"}
    config = {k: _jsonable(v) for k, v in sorted(vars(args).items())
              if k not in skip and v is not None}
    config.pop("command", None)
    blob = json.dumps(config, sort_keys=True).encode()
    meta = {
        "artifact_version": __version__,
        "command": command,
        "config": config,
        "content_hash": hashlib.blake2b(blob, digest_size=16).hexdigest(),
    }
    with open(out_path + ".meta.json", "w", newline="") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Optional[str], header: List[str], rows: List[List[str]]):
    if path:
        fh = open(path, "w", newline="")
    else:
        fh = sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def _write_text(path: Optional[str], text: str) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_sample(args) -> int:
    kernel = _build_kernel(args)
    grid = _build_grid(args, kernel)
    ens = sample_paths(kernel, grid, args.samples, args.seed, threads=args.threads)
    write_array(args.out, ens.paths, KIND_ENSEMBLE)
    _write_meta(args.out, "sample", args)
    return 0


def cmd_smallball(args) -> int:
    kernel = _build_kernel(args)
    grid = _build_grid(args, kernel)
    norm = _build_norm(args)
    radii = parse_values(args.radii)
    table = estimate_small_ball(kernel, grid, norm, radii, args.samples,
                                args.seed, cache_dir=_cache_dir(args),
                                threads=args.threads)
    _write_text(args.out, table.csv_text())
    if args.out:
        _write_meta(args.out, "smallball", args)
    return 0


def cmd_fit(args) -> int:
    table = SmallBallTable.from_csv(args.infile)
    window = parse_window(args.window)
    law = fit_asymptotic(table, window, force_b=args.force_b)
    _write_text(args.out, law.to_json())
    if args.out:
        _write_meta(args.out, "fit", args)
    return 0


def cmd_invert(args) -> int:
    rates = _rates_in_nats(parse_values(args.rates), args.unit)
    if args.law:
        with open(args.law) as fh:
            law = AsymptoticLaw.from_json(fh.read())
        pairs = [(rate, invert_asymptotic(law, rate)) for rate in rates]
    elif args.infile:
        table = SmallBallTable.from_csv(args.infile)
        pairs = [(rate, invert_b(table, rate)) for rate in rates]
    else:
        raise ConfigError("invert needs --in TABLE or --law LAW")
    rows = [[_fmt(rate), _fmt(s)] for rate, s in pairs]
    _write_csv(args.out, ["R", "s"], rows)
    if args.out:
        _write_meta(args.out, "invert", args)
    return 0


def cmd_error(args) -> int:
    rates = _rates_in_nats(parse_values(args.rates), args.unit)
    alphas = parse_alpha(args.alpha)
    rho = Distortion(args.r)
    law = None
    if args.law:
        if os.path.exists(args.law):
            with open(args.law) as fh:
                law = AsymptoticLaw.from_json(fh.read())
        else:
            kv = dict(part.split("=") for part in args.law.split(","))
            law = AsymptoticLaw(c=float(kv["c"]), a=float(kv["a"]),
                                b=float(kv.get("b", 0.0)))
    rows = []
    if args.formula_only:
        if law is None:
            raise ConfigError("--formula-only needs --law")
        for rate in rates:
            for alpha in alphas:
                reduced = effective_rate(alpha, rate)
                value = asymptotic_error(law, rho, alpha, rate)
                radius = invert_asymptotic(law, reduced)
                rows.append([_fmt(rate), _fmt(alpha), _fmt(rho.r), _fmt(radius),
                             METHOD_ASYMPTOTIC, _fmt(value), _fmt(0.0), "",
                             _fmt(value), ""])
        _write_csv(args.out, _ERROR_HEADER, rows)
        if args.out:
            _write_meta(args.out, "error", args)
        return 0

    kernel = _build_kernel(args)
    grid = _build_grid(args, kernel)
    norm = _build_norm(args)
    cache = _cache_dir(args)
    if args.table:
        table = SmallBallTable.from_csv(args.table)
    elif args.radii:
        table = estimate_small_ball(kernel, grid, norm, parse_values(args.radii),
                                    args.samples, args.seed, cache_dir=cache,
                                    threads=args.threads)
    else:
        raise ConfigError("error needs --table TABLE.csv or --radii to build one")
    for rate in rates:
        for alpha in alphas:
            reduced = effective_rate(alpha, rate)
            est = ball_moment_error(kernel, grid, norm, rho, reduced,
                                    args.samples, args.seed, table,
                                    cache_dir=cache)
            bound = upper_bound_mass(table, rho, reduced)
            if law is not None:
                formula = asymptotic_error(law, rho, alpha, rate)
                f_txt, ratio_txt = _fmt(formula), _fmt(est.value / formula)
            else:
                f_txt, ratio_txt = "", ""
            rows.append([_fmt(rate), _fmt(alpha), _fmt(rho.r),
                         _fmt(est.radius_used), est.method, _fmt(est.value),
                         _fmt(est.stderr), _fmt(bound), f_txt, ratio_txt])
    _write_csv(args.out, _ERROR_HEADER, rows)
    if args.out:
        _write_meta(args.out, "error", args)
    return 0


def cmd_oracle(args) -> int:
    if args.lemma == "rearrangement":
        mu = DiscreteGaussian1D(n_atoms=args.atoms, half_width=args.half_width)
        report = oracle_ball_rearrangement(mu, args.target_mass,
                                           Distortion(args.r), args.trials,
                                           args.seed)
    elif args.lemma == "extreme-point":
        if args.f == "square":
            f = lambda x: np.asarray(x, dtype=np.float64) ** 2
        else:
            params = LemmaFunctionParams(A=args.A, B=args.B, alpha=args.alpha,
                                         x0=args.x0)
            f = lemma_function(params)
        report = oracle_extreme_point(f, args.alpha, args.x0, args.n_max,
                                      args.trials, args.seed)
    elif args.lemma == "monotone-f":
        params = LemmaFunctionParams(A=args.A, B=args.B, alpha=args.alpha,
                                     x0=args.x0)
        x_star, detail = check_monotone_F(params)
        report = {
            "lemma": "monotone-f",
            "trials": detail["n_grid"],
            "min_deficit": None,
            "tolerance": None,
            "pass": bool(detail["f_increasing_on_small_region"]
                         and x_star >= args.x0),
            "detail": detail,
        }
    else:
        raise ConfigError(f"unknown lemma {args.lemma!r}")
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
    _write_text(args.out, text)
    if args.out:
        _write_meta(args.out, "oracle", args)
    return 0 if report["pass"] else 3


def cmd_verify(args) -> int:
    with open(args.law) as fh:
        law = AsymptoticLaw.from_json(fh.read())
    rates, values, stderrs, formulas = [], [], [], []
    with open(args.infile, newline="") as fh:
        for row in csv.DictReader(fh):
            if row.get("method") != METHOD_BALL_MOMENT:
                continue
            alpha = parse_alpha(row["alpha"])[0]
            rho = Distortion(float(row["r"]))
            rate = float(row["R"])
            rates.append(rate)
            values.append(float(row["value"]))
            stderrs.append(float(row["stderr"]))
            formulas.append(asymptotic_error(law, rho, alpha, rate))
    report = ratio_report(rates, values, stderrs, formulas)
    rows = report.to_csv_rows()
    _write_csv(args.out, rows[0], rows[1:])
    if args.out:
        _write_meta(args.out, "verify", args)
        meta_path = args.out + ".meta.json"
        with open(meta_path) as fh:
            meta = json.load(fh)
        meta["kendall_tau"] = report.kendall_tau
        with open(meta_path, "w", newline="") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        sys.stdout.write(f"# kendall_tau {report.kendall_tau:.6f}\n")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_process_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--process", default="fbm",
                   help="kernel family: " + ", ".join(sorted(KERNEL_FAMILIES)))
    p.add_argument("--hurst", type=lambda s: [float(v) for v in s.split(",")],
                   default=None, help="Hurst index (comma list for sheets)")
    p.add_argument("--beta", type=float, default=None, help="integration order")
    p.add_argument("--m", type=int, default=None, help="integer integration count")
    p.add_argument("--gamma", type=float, default=None, help="decay rate")
    p.add_argument("--slepian-a", type=lambda s: [float(v) for v in s.split(",")],
                   default=None, help="triangular widths (comma list)")
    p.add_argument("--dim", type=int, default=None, help="grid dimension")
    p.add_argument("--grid", type=int, default=256, help="points per axis")


def _add_norm_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--norm", default="sup", choices=["sup", "lp"])
    p.add_argument("--p", type=float, default=None, help="lp exponent")


def _add_common(p: argparse.ArgumentParser, with_samples=True) -> None:
    if with_samples:
        p.add_argument("--samples", type=int, default=100000)
        p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap; never changes results")
    p.add_argument("--cache", default=None, help="cache directory "
                   "(QGAUSS_CACHE env var takes precedence)")
    p.add_argument("--unit", default="nats", choices=["nats", "bits"],
                   help="unit of input rates")
    p.add_argument("--out", default=None, help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="qgauss",
        description="Entropy-constrained quantization errors of Gaussian "
                    "fields via small-ball asymptotics.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw a path ensemble (binary output)")
    _add_process_opts(p)
    _add_common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("smallball", help="estimate a small-ball table (CSV)")
    _add_process_opts(p)
    _add_norm_opts(p)
    p.add_argument("--radii", required=True, help="radius grid, start:end:count")
    _add_common(p)
    p.set_defaults(func=cmd_smallball)

    p = sub.add_parser("fit", help="fit an asymptotic law to a table (JSON)")
    p.add_argument("--in", dest="infile", required=True, help="table CSV")
    p.add_argument("--window", required=True, help="radius window lo:hi")
    p.add_argument("--force-b", dest="force_b", type=float, default=None,
                   help="pin the log-factor exponent")
    _add_common(p, with_samples=False)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("invert", help="invert a table or law at given rates")
    p.add_argument("--in", dest="infile", default=None, help="table CSV")
    p.add_argument("--law", default=None, help="law JSON file")
    p.add_argument("--R", dest="rates", required=True, help="rate grid")
    _add_common(p, with_samples=False)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("error", help="quantization errors, bounds, formulas")
    _add_process_opts(p)
    _add_norm_opts(p)
    p.add_argument("--R", dest="rates", required=True, help="rate grid (nats)")
    p.add_argument("--alpha", default="inf", help="entropy orders, e.g. 2,inf")
    p.add_argument("--r", type=float, default=2.0, help="distortion exponent")
    p.add_argument("--table", default=None, help="small-ball table CSV")
    p.add_argument("--radii", default=None, help="radius grid to build a table")
    p.add_argument("--law", default=None,
                   help="law JSON file or inline c=..,a=..,b=..")
    p.add_argument("--formula-only", action="store_true",
                   help="closed-form values only, no sampling")
    _add_common(p)
    p.set_defaults(func=cmd_error)

    p = sub.add_parser("oracle", help="structural lemma oracles (JSON)")
    p.add_argument("--lemma", required=True,
                   choices=["rearrangement", "extreme-point", "monotone-f"])
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-mass", dest="target_mass", type=float, default=0.3)
    p.add_argument("--r", type=float, default=2.0)
    p.add_argument("--atoms", type=int, default=4001)
    p.add_argument("--half-width", dest="half_width", type=float, default=8.0)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--x0", type=float, default=0.2)
    p.add_argument("--n-max", dest="n_max", type=int, default=6)
    p.add_argument("--f", default="lemma", choices=["lemma", "square"])
    p.add_argument("--A", type=float, default=1.0)
    p.add_argument("--B", type=float, default=0.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("verify", help="ratio report against a law (CSV)")
    p.add_argument("--in", dest="infile", required=True, help="error CSV")
    p.add_argument("--law", required=True, help="law JSON file")
    _add_common(p, with_samples=False)
    p.set_defaults(func=cmd_verify)

    return ap


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except QGaussError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
