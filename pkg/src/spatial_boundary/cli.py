"""Command-line front end.

Exit codes
----------
0  success
1  I/O or unexpected error
2  usage or configuration error
3  CSV parse error
4  input validation error
5  numerical failure (ill-conditioned fit, non-convergence, separation)

Reports are JSON documents with the keys ``schema``, ``command``,
``version``, ``config`` (every setting needed to rerun) and ``results``.
They carry no timestamps, so rerunning a command gives identical bytes.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .applied import (
    DEFAULT_BIN_EDGES,
    Z_95,
    binned_means,
    chi_squared_independence,
    logistic_fit,
    nearest_source_distance,
    ols_fit,
    pct_change_per_10_miles,
    spearman,
    spearman_pvalue,
    standardize,
)
from .bandwidth import DEFAULT_BANDWIDTHS, BandwidthGrid, CvResult, select_bandwidth
from .boundary import DEFAULT_DECAY_THRESHOLD, ReferenceMode, find_boundary
from .csvio import read_table, render_report, write_columns, write_table
from .errors import (
    EmptySources,
    InputError,
    InvalidConfig,
    InvalidSample,
    NumericalError,
    ParseError,
    SpatialBoundaryError,
)
from .estimator import DEFAULT_GRID_SIZE, CurveEstimate, SpatialSample, default_grid, estimate_curve
from .fixtures import approval_fixture, survival_fixture, volume_fixture
from .montecarlo import DgpKind, DgpSpec, default_jobs, generate_dgp, replicate, run_study

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_NUMERICAL = 5

SURVIVAL_COVARIATES = ("branches_in_tract", "pop_density", "n_banks")

_HINTS = {
    "ParseError": "check the header row and that every cell in numeric columns is a plain number",
    "InvalidSample": "distances must be non-negative and every value finite",
    "TooFewObservations": "supply at least three observations",
    "NoValidPredictions": "try larger bandwidths (--bandwidths) so every point has neighbours",
    "AllPointsIllConditioned": "the bandwidth is too small for the spacing of the data; use a larger one",
    "ReferencePointInvalid": "the curve is undefined or non-positive at the reference; try --reference maximum or a larger bandwidth",
    "InsufficientCurve": "use a larger bandwidth or a finer evaluation grid",
    "EmptySources": "the source file has no rows",
    "SingleClass": "the outcome column must contain both 0 and 1",
    "CompleteSeparation": "a covariate perfectly separates the outcome; drop it",
    "Collinear": "remove redundant covariates",
    "InvalidConfig": "see --help for accepted values",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- argument helpers ----------------------------------------------------------


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _threshold(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"decay threshold must lie in (0, 1), got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {v}")
    return v


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _grid(args) -> BandwidthGrid:
    try:
        return BandwidthGrid(args.bandwidths)
    except InputError as exc:
        raise InvalidConfig(str(exc)) from exc


def _config(args) -> dict:
    skip = {"func", "report", "output", "curve_out", "plot_dir"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _emit(args, command: str, results: dict) -> None:
    text = render_report(command, __version__, _config(args), results)
    if getattr(args, "report", None):
        Path(args.report).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _failure(exc: SpatialBoundaryError) -> dict:
    name = type(exc).__name__
    out = {"error": name, "message": str(exc)}
    if name in _HINTS:
        out["hint"] = _HINTS[name]
    return out


def _cv_table(cv: CvResult) -> list[dict]:
    return [
        {"bandwidth": s.bandwidth, "cv_score": s.score, "n_valid": s.n_valid, "eligible": s.eligible}
        for s in cv.scores
    ]


def _write_curve(path, curve: CurveEstimate) -> None:
    write_table(
        path,
        ("distance", "estimate", "valid"),
        zip(curve.grid, curve.values, curve.valid_mask),
    )


def _nonparametric(
    sample: SpatialSample, args, reference: str = "origin"
) -> tuple[dict, CurveEstimate | None]:
    """CV bandwidth, curve and boundary, with failures reported in the result."""
    out: dict = {}
    curve = None
    try:
        if getattr(args, "bandwidth", None):
            out["selected_bandwidth"] = args.bandwidth
            h = args.bandwidth
        else:
            cv = select_bandwidth(sample, _grid(args))
            out["cv_table"] = _cv_table(cv)
            out["selected_bandwidth"] = cv.selected.h
            h = cv.selected.h
        curve = estimate_curve(sample, default_grid(sample, args.grid_size), h)
        out["n_valid_grid_points"] = curve.n_valid
        out["boundary"] = find_boundary(curve, args.eps, reference).as_dict()
    except InvalidConfig:
        raise
    except SpatialBoundaryError as exc:
        out.update(_failure(exc))
    return out, curve


def _status(*sections: dict) -> int:
    """Exit code for a report whose sections may hold recorded failures."""
    code = EXIT_OK
    for s in sections:
        name = s.get("error")
        if name is None:
            continue
        # Numerical failures outrank validation ones.
        code = max(code, EXIT_NUMERICAL if _is_numerical(name) else EXIT_VALIDATION)
    return code


def _is_numerical(name: str) -> bool:
    from . import errors

    cls = getattr(errors, name, None)
    return isinstance(cls, type) and issubclass(cls, NumericalError)


# -- commands -----------------------------------------------------------------


def _spec(args, kind) -> DgpSpec:
    try:
        return DgpSpec(
            DgpKind(kind),
            noise_sd=args.noise_sd,
            hump_convention=getattr(args, "hump_convention", "excess"),
            hump_excess_decay=getattr(args, "hump_excess_decay", 0.8),
        )
    except InputError as exc:
        raise InvalidConfig(str(exc)) from exc


def cmd_simulate(args) -> int:
    if args.n < 2:
        raise InvalidConfig("--n must be at least 2")
    sample = generate_dgp(_spec(args, args.dgp), args.n, args.seed)
    # Rows come out in the sample's canonical (sorted) order.
    write_columns(args.output, {"distance": sample.distances, "outcome": sample.outcomes})
    return EXIT_OK


def _read_sample(path) -> SpatialSample:
    t = read_table(path, ["distance", "outcome"])
    return SpatialSample(t["distance"], t["outcome"])


def cmd_estimate(args) -> int:
    sample = _read_sample(args.input)
    result, curve = _nonparametric(sample, args, args.reference)
    result = {"n_obs": sample.n, **result}
    if curve is not None and args.curve_out:
        _write_curve(args.curve_out, curve)
    _emit(args, "estimate", result)
    return _status(result)


def cmd_boundary(args) -> int:
    t = read_table(args.input, ["distance", "estimate", "valid"], allow_empty=["estimate"])
    valid = t["valid"] != 0
    if np.any(valid & np.isnan(t["estimate"])):
        raise InvalidSample("rows marked valid must carry an estimate")
    curve = CurveEstimate(t["distance"], np.where(valid, t["estimate"], np.nan), 1.0, valid)
    result = {"boundary": find_boundary(curve, args.eps, args.reference).as_dict()}
    _emit(args, "boundary", result)
    return EXIT_OK


def _plot_rows(spec: DgpSpec, detail, eps: float):
    rows = [("sample", d, y) for d, y in zip(detail.sample.distances, detail.sample.outcomes)]
    lo, hi = spec.distance_range
    grid = np.linspace(lo, hi, 201)
    rows += [("true_curve", d, v) for d, v in zip(grid, spec.mean(grid))]
    if detail.fit is not None:
        rows += [("parametric_fit", d, v) for d, v in zip(grid, detail.fit.model(grid))]
    if detail.curve is not None:
        c = detail.curve
        rows += [("nonparametric_fit", d, v) for d, v, ok in zip(c.grid, c.values, c.valid_mask) if ok]
    if spec.true_boundary is not None:
        rows.append(("true_boundary", spec.true_boundary, spec.mean(spec.true_boundary)))
    for name, outcome in (("parametric_boundary", detail.parametric),
                          ("nonparametric_boundary", detail.nonparametric)):
        b = outcome.boundary
        if b is not None and b.is_finite:
            rows.append((name, b.d_star, b.threshold_level))
    return rows


def cmd_mc_study(args) -> int:
    kinds = list(DgpKind) if "all" in args.dgp else [DgpKind(k) for k in args.dgp]
    grid = _grid(args)
    studies = {}
    for kind in kinds:
        spec = _spec(args, kind)
        rep = run_study(
            spec, args.replications, args.n, args.seed, args.eps, grid,
            fixed_bandwidth=args.fixed_bandwidth,
            paper_faithful=not args.degeneracy_floor,
            jobs=args.jobs,
        )
        studies[kind.value] = {
            "true_boundary": spec.true_boundary,
            "noise_sd": spec.noise_sd,
            "distance_range": spec.distance_range,
            "n_obs": rep.n_obs,
            "n_replications": rep.n_replications,
            "parametric": rep.parametric.as_dict(),
            "nonparametric": rep.nonparametric.as_dict(),
        }
        if args.outcomes:
            studies[kind.value]["replications"] = [
                {
                    "seed": p.seed,
                    "parametric_d_star": p.d_star,
                    "parametric_failure": p.failure,
                    "nonparametric_d_star": q.d_star,
                    "nonparametric_failure": q.failure,
                    "bandwidth": None if q.selected_bandwidth is None else q.selected_bandwidth.h,
                }
                for p, q in rep.outcomes
            ]
        if args.plot_dir:
            out = Path(args.plot_dir)
            out.mkdir(parents=True, exist_ok=True)
            detail = replicate(
                spec, args.n, args.seed, args.eps, grid,
                fixed_bandwidth=args.fixed_bandwidth, paper_faithful=not args.degeneracy_floor,
            )
            write_table(out / f"plot_{kind.value}.csv", ("series", "distance", "value"),
                        _plot_rows(spec, detail, args.eps))
    _emit(args, "mc-study", {"studies": studies})
    return EXIT_OK


def cmd_analyze_decay(args) -> int:
    tracts = read_table(args.tracts, ["lat", "lon", "outcome"], ["id"])
    sources = read_table(args.sources, ["lat", "lon"])
    if sources["lat"].size == 0:
        raise EmptySources(f"{args.sources} contains no sources")
    targets = np.column_stack([tracts["lat"], tracts["lon"]])
    src = np.column_stack([sources["lat"], sources["lon"]])
    d = nearest_source_distance(targets, src, great_circle=args.great_circle)
    keep = d <= args.cutoff
    d, y = d[keep], tracts["outcome"][keep]
    if d.size < 3:
        raise InvalidSample(f"only {d.size} tracts lie within {args.cutoff:g} miles of a source")
    results: dict = {
        "n_tracts": int(keep.size),
        "n_within_cutoff": int(d.size),
        "mean_distance": float(d.mean()),
    }

    if args.scale == "log":
        if np.any(y <= 0):
            raise InvalidSample("log scale needs strictly positive outcomes; use --scale level")
        response = np.log(y)
    else:
        response = y
    regression: dict = {"scale": args.scale}
    try:
        fit = ols_fit({"distance": d}, response)
        slope = fit.coefficients["distance"]
        regression.update(fit.as_dict())
        regression["slope"] = slope
        regression["slope_se"] = fit.standard_errors["distance"]
        regression["slope_p_value"] = fit.p_values["distance"]
        regression["significant_5pct"] = fit.p_values["distance"] < 0.05
        if args.scale == "log":
            regression["pct_change_per_10_miles"] = pct_change_per_10_miles(slope)
    except SpatialBoundaryError as exc:
        regression.update(_failure(exc))
    results["regression"] = regression

    rank: dict = {}
    try:
        rho = spearman(d, y)
        rank = {"rho": rho, "p_value": spearman_pvalue(rho, d.size)}
    except SpatialBoundaryError as exc:
        rank = _failure(exc)
    results["spearman"] = rank

    bins = binned_means(d, y, args.bins)
    results["binned_means"] = [
        {"lower": b.lower, "upper": b.upper, "count": b.count, "mean": b.mean,
         "ci_low": b.mean - b.ci_half_width, "ci_high": b.mean + b.ci_half_width}
        for b in bins.bins
    ]

    sample = SpatialSample(d, y)
    np_result, curve = _nonparametric(sample, args)
    results["nonparametric"] = np_result
    if curve is not None and args.curve_out:
        _write_curve(args.curve_out, curve)
    _emit(args, "analyze-decay", results)
    return _status(regression, rank, np_result)


def _proportion_ci(k: int, n: int) -> tuple[float, float, float]:
    p = k / n
    half = Z_95 * math.sqrt(p * (1 - p) / n)
    return p, p - half, p + half


def cmd_analyze_survival(args) -> int:
    covariates = tuple(args.covariates) if args.covariates is not None else SURVIVAL_COVARIATES
    t = read_table(args.input, ["survived", "income"],
                   optional=[] if args.covariates is not None else covariates)
    if args.covariates is not None:
        t.update(read_table(args.input, covariates))
    y = t["survived"]
    if not np.all((y == 0) | (y == 1)):
        raise InvalidSample("survived must be 0 or 1 in every row")
    income = t["income"]
    n = y.size
    if n < 4:
        raise InvalidSample(f"need at least 4 branches to form income quartiles, got {n}")
    order = np.argsort(income, kind="stable")
    quartile = np.empty(n, dtype=np.int64)
    quartile[order] = (np.arange(n) * 4) // n

    table = []
    counts = []
    for q in range(4):
        m = quartile == q
        k, size = int(y[m].sum()), int(m.sum())
        rate, lo, hi = _proportion_ci(k, size)
        counts.append((k, size - k))
        table.append({"quartile": f"Q{q + 1}", "n": size, "survived": k, "closed": size - k,
                      "survival_rate": rate, "ci_low": lo, "ci_high": hi,
                      "mean_income": float(income[m].mean())})
    results: dict = {"n_branches": n, "overall_survival_rate": float(y.mean()),
                     "quartiles": table}
    try:
        chi = chi_squared_independence(counts)
        chi_out = {"statistic": chi.statistic, "dof": chi.dof, "p_value": chi.p_value}
    except SpatialBoundaryError as exc:
        chi_out = _failure(exc)
    results["chi_squared"] = chi_out

    names = ["income"] + [c for c in covariates if c in t]
    try:
        design = {c: standardize(t[c]) for c in names}
        lf = logistic_fit(design, y)
        logit = {"covariates": names, **lf.as_dict()}
    except SpatialBoundaryError as exc:
        logit = {"covariates": names, **_failure(exc)}
    results["logistic"] = logit
    _emit(args, "analyze-survival", results)
    return _status(chi_out, logit)


def cmd_make_fixture(args) -> int:
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "survival":
        f = survival_fixture(args.seed)
        write_columns(out / "branches.csv", f.columns())
        return EXIT_OK
    make = volume_fixture if args.kind == "volume" else approval_fixture
    f = make(args.n, args.seed)
    write_columns(out / "tracts.csv",
                  {"id": f.tract_id, "lat": f.lat, "lon": f.lon, "outcome": f.outcome})
    write_columns(out / "sources.csv", {"lat": f.source_lat, "lon": f.source_lon})
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def _add_estimation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps", type=_threshold, default=DEFAULT_DECAY_THRESHOLD,
                   help="decay threshold in (0, 1) (default 0.10)")
    p.add_argument("--bandwidths", type=_float_list, default=DEFAULT_BANDWIDTHS,
                   help="comma-separated CV candidates (default 2,5,10,15,20)")
    p.add_argument("--bandwidth", type=_positive_float, default=None,
                   help="skip cross-validation and use this bandwidth")
    p.add_argument("--grid-size", type=_positive_int, default=DEFAULT_GRID_SIZE,
                   help="evaluation points from 0 to the largest distance (default 200)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="spatial-boundary",
        description="Nonparametric spatial boundary estimation and the supporting analyses.",
        epilog="Exit codes: 0 ok, 1 I/O, 2 usage/config, 3 parse, 4 validation, 5 numerical.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    dgps = [k.value for k in DgpKind]

    p = sub.add_parser("simulate", help="write one simulated sample as distance,outcome CSV")
    p.add_argument("--dgp", choices=dgps, required=True)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sd", type=_positive_float, default=0.1)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("mc-study", help="Monte Carlo comparison of the two boundary estimators")
    p.add_argument("--dgp", nargs="+", choices=dgps + ["all"], default=["all"])
    p.add_argument("--replications", type=_positive_int, default=500)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0, help="base seed; replication r uses seed + r")
    p.add_argument("--noise-sd", type=_positive_float, default=0.1)
    p.add_argument("--eps", type=_threshold, default=DEFAULT_DECAY_THRESHOLD)
    p.add_argument("--bandwidths", type=_float_list, default=DEFAULT_BANDWIDTHS)
    p.add_argument("--fixed-bandwidth", type=_positive_float, default=None,
                   help="skip per-replication CV (fast mode)")
    p.add_argument("--degeneracy-floor", action="store_true",
                   help="apply the 1e-8 floor on the fitted decay rate (off by default)")
    p.add_argument("--hump-convention", choices=["excess", "peak"], default="excess")
    p.add_argument("--hump-excess-decay", type=_threshold, default=0.8)
    p.add_argument("--jobs", type=_positive_int, default=default_jobs(),
                   help="worker processes (default from SPATIAL_BOUNDARY_JOBS, else 1)")
    p.add_argument("--outcomes", action="store_true", help="include per-replication results")
    p.add_argument("--plot-dir", default=None, help="write plot_<dgp>.csv files here")
    p.add_argument("--report", default=None, help="report path (default stdout)")
    p.set_defaults(func=cmd_mc_study)

    p = sub.add_parser("estimate", help="CV bandwidth, curve and boundary for a distance,outcome CSV")
    p.add_argument("input")
    _add_estimation(p)
    p.add_argument("--reference", choices=[m.value for m in ReferenceMode], default="origin")
    p.add_argument("--curve-out", default=None, help="write distance,estimate,valid CSV here")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("boundary", help="boundary of a distance,estimate,valid curve CSV")
    p.add_argument("input")
    p.add_argument("--eps", type=_threshold, default=DEFAULT_DECAY_THRESHOLD)
    p.add_argument("--reference", choices=[m.value for m in ReferenceMode], default="origin")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("analyze-decay", help="distance decay of a tract outcome")
    p.add_argument("tracts", help="CSV with id,lat,lon,outcome")
    p.add_argument("sources", help="CSV with lat,lon")
    p.add_argument("--scale", choices=["log", "level"], default="log",
                   help="regress log(outcome) or the outcome itself on distance")
    p.add_argument("--cutoff", type=_positive_float, default=100.0, help="max distance in miles")
    p.add_argument("--bins", type=_float_list, default=DEFAULT_BIN_EDGES)
    p.add_argument("--great-circle", action="store_true",
                   help="haversine distances instead of 69 miles per degree")
    _add_estimation(p)
    p.add_argument("--curve-out", default=None)
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_analyze_decay)

    p = sub.add_parser("analyze-survival", help="branch survival by income quartile")
    p.add_argument("input", help="CSV with survived,income and optional covariates")
    p.add_argument("--covariates", type=lambda s: [c.strip() for c in s.split(",") if c.strip()],
                   default=None,
                   help="extra logistic covariates (default: any of " + ",".join(SURVIVAL_COVARIATES) + ")")
    p.add_argument("--report", default=None)
    p.set_defaults(func=cmd_analyze_survival)

    p = sub.add_parser("make-fixture", help="write a synthetic input fixture")
    p.add_argument("kind", choices=["volume", "approval", "survival"])
    p.add_argument("--n", type=_positive_int, default=5000, help="tracts (ignored for survival)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(func=cmd_make_fixture)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InvalidConfig as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"parse error: {exc}\n  hint: {_HINTS['ParseError']}", file=sys.stderr)
        return EXIT_PARSE
    except (InputError, NumericalError) as exc:
        kind = "numerical failure" if isinstance(exc, NumericalError) else "invalid input"
        msg = f"{kind}: {type(exc).__name__}: {exc}"
        hint = _HINTS.get(type(exc).__name__)
        if hint:
            msg += f"\n  hint: {hint}"
        print(msg, file=sys.stderr)
        return EXIT_NUMERICAL if isinstance(exc, NumericalError) else EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_OTHER


if __name__ == "__main__":
    sys.exit(main())
