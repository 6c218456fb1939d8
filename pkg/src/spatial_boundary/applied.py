"""Statistics for the empirical analyses: distances, binned means, OLS,
rank correlation, chi-squared independence and logistic regression."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import stats

from .errors import (
    Collinear,
    CompleteSeparation,
    DegenerateMarginal,
    EmptySources,
    InputError,
    NoBins,
    NotStandardized,
    SingleClass,
    TooFewRows,
    ZeroVariance,
)

MILES_PER_DEGREE = 69.0
EARTH_RADIUS_MILES = 3958.8
#: Distance categories used for the summary tables (miles).
DEFAULT_BIN_EDGES = (0.0, 10.0, 25.0, 50.0, 100.0)
Z_95 = 1.959963984540054


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float

    def __post_init__(self) -> None:
        lat, lon = float(self.latitude), float(self.longitude)
        if not (-90.0 <= lat <= 90.0):
            raise InputError(f"latitude {self.latitude!r} outside [-90, 90]")
        if not (-180.0 <= lon <= 180.0):
            raise InputError(f"longitude {self.longitude!r} outside [-180, 180]")
        object.__setattr__(self, "latitude", lat)
        object.__setattr__(self, "longitude", lon)


def flat_distance_miles(a: GeoPoint, b: GeoPoint, *, great_circle: bool = False) -> float:
    """``69 * sqrt(dlat**2 + dlon**2)``.

    Longitude degrees count the same as latitude degrees, as in the source
    analysis.  ``great_circle=True`` switches to the haversine distance.
    """
    if great_circle:
        return _haversine(a.latitude, a.longitude, b.latitude, b.longitude)
    return MILES_PER_DEGREE * math.sqrt(
        (a.latitude - b.latitude) ** 2 + (a.longitude - b.longitude) ** 2
    )


def _haversine(lat1, lon1, lat2, lon2):
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(lon2) - np.radians(lon1)
    h = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    out = 2 * EARTH_RADIUS_MILES * np.arcsin(np.sqrt(np.minimum(h, 1.0)))
    return float(out) if np.ndim(out) == 0 else out


def _coords(points: Sequence[GeoPoint] | ArrayLike) -> NDArray[np.float64]:
    if isinstance(points, np.ndarray):
        arr = np.asarray(points, dtype=float).reshape(-1, 2)
    else:
        arr = np.array([(p.latitude, p.longitude) for p in points], dtype=float).reshape(-1, 2)
    return arr


def nearest_source_distance(
    targets: Sequence[GeoPoint] | ArrayLike,
    sources: Sequence[GeoPoint] | ArrayLike,
    *,
    great_circle: bool = False,
    chunk: int = 1024,
) -> NDArray[np.float64]:
    """Distance from each target to its nearest source (exhaustive search).

    Points may be :class:`GeoPoint` sequences or ``(m, 2)`` arrays of
    ``(lat, lon)``.  Uses the same arithmetic as :func:`flat_distance_miles`
    pair by pair, so the result equals the brute-force minimum exactly.
    """
    t = _coords(targets)
    s = _coords(sources)
    if s.shape[0] == 0:
        raise EmptySources("no source locations given")
    out = np.empty(t.shape[0])
    for start in range(0, t.shape[0], chunk):
        block = t[start : start + chunk]
        if great_circle:
            dist = _haversine(block[:, None, 0], block[:, None, 1], s[None, :, 0], s[None, :, 1])
        else:
            dlat = block[:, None, 0] - s[None, :, 0]
            dlon = block[:, None, 1] - s[None, :, 1]
            dist = MILES_PER_DEGREE * np.sqrt(dlat**2 + dlon**2)
        out[start : start + chunk] = dist.min(axis=1)
    return out


# -- binned means ----------------------------------------------------------------


@dataclass(frozen=True)
class Bin:
    lower: float
    upper: float
    mean: float
    ci_half_width: float
    count: int


@dataclass(frozen=True)
class BinnedSeries:
    bins: tuple[Bin, ...]

    def means(self) -> list[float]:
        return [b.mean for b in self.bins]


def binned_means(
    distances: ArrayLike, outcomes: ArrayLike, bin_edges: Sequence[float] = DEFAULT_BIN_EDGES
) -> BinnedSeries:
    """Mean outcome per distance bin with a normal 95% interval ``1.96 sd / sqrt(count)``.

    Bins are ``[lower, upper)`` except the last, which includes its upper
    edge.  Empty bins are dropped; a single-observation bin has an undefined
    (NaN) interval.
    """
    d = np.asarray(distances, dtype=float).ravel()
    y = np.asarray(outcomes, dtype=float).ravel()
    if d.shape != y.shape:
        raise InputError("distances and outcomes differ in length")
    edges = np.asarray(bin_edges, dtype=float)
    if edges.size < 2:
        raise NoBins("need at least two bin edges")
    if np.any(np.diff(edges) <= 0):
        raise InputError("bin edges must be strictly increasing")
    idx = np.searchsorted(edges, d, side="right") - 1
    idx[d == edges[-1]] = edges.size - 2
    bins = []
    for k in range(edges.size - 1):
        yk = y[idx == k]
        if yk.size == 0:
            continue
        sd = float(np.std(yk, ddof=1)) if yk.size > 1 else math.nan
        bins.append(Bin(float(edges[k]), float(edges[k + 1]), float(yk.mean()),
                        Z_95 * sd / math.sqrt(yk.size), int(yk.size)))
    return BinnedSeries(tuple(bins))


# -- OLS ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegressionFit:
    coefficients: dict[str, float]
    standard_errors: dict[str, float]
    t_values: dict[str, float]
    p_values: dict[str, float]
    r_squared: float
    n: int
    df_resid: int
    residuals: NDArray[np.float64]

    def as_dict(self) -> dict:
        return {
            "coefficients": self.coefficients,
            "standard_errors": self.standard_errors,
            "t_values": self.t_values,
            "p_values": self.p_values,
            "r_squared": self.r_squared,
            "n": self.n,
            "df_resid": self.df_resid,
        }


def _design(design: Mapping[str, ArrayLike]) -> tuple[list[str], NDArray]:
    if not design:
        raise InputError("design has no columns")
    names = list(design)
    if "intercept" in names:
        raise InputError("'intercept' is added automatically; do not pass it as a column")
    cols = [np.asarray(design[k], dtype=float).ravel() for k in names]
    n = cols[0].size
    if any(c.size != n for c in cols):
        raise InputError("design columns differ in length")
    if not all(np.all(np.isfinite(c)) for c in cols):
        raise InputError("design columns must be finite")
    return names, np.column_stack([np.ones(n)] + cols)


def ols_fit(design: Mapping[str, ArrayLike], response: ArrayLike) -> RegressionFit:
    """Least squares with an intercept and homoskedastic standard errors.

    Solved by QR.  ``r_squared`` is the centred R²; a constant response gives 0.
    """
    names, X = _design(design)
    y = np.asarray(response, dtype=float).ravel()
    n, p = X.shape
    if y.size != n:
        raise InputError("response length does not match the design")
    if n <= p:
        raise TooFewRows(f"need more than {p} rows for {p} coefficients, got {n}")
    Q, R = np.linalg.qr(X)
    # |R_kk| is the length of column k orthogonal to the columns before it.
    if np.any(np.abs(np.diag(R)) <= 1e-10 * np.linalg.norm(X, axis=0)):
        raise Collinear("design columns are (nearly) collinear")
    beta = np.linalg.solve(R, Q.T @ y)
    resid = y - X @ beta
    rss = float(resid @ resid)
    df = n - p
    sigma2 = rss / df
    Rinv = np.linalg.inv(R)
    se = np.sqrt(sigma2 * np.sum(Rinv**2, axis=1))
    yc = y - y.mean()
    tss = float(yc @ yc)
    r2 = 0.0 if tss == 0 else min(max(1.0 - rss / tss, 0.0), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = beta / se
    pvals = 2 * stats.t.sf(np.abs(tvals), df)
    keys = ["intercept"] + names
    return RegressionFit(
        coefficients=dict(zip(keys, map(float, beta))),
        standard_errors=dict(zip(keys, map(float, se))),
        t_values=dict(zip(keys, map(float, tvals))),
        p_values=dict(zip(keys, map(float, pvals))),
        r_squared=r2,
        n=n,
        df_resid=df,
        residuals=resid,
    )


def pct_change_per_10_miles(slope: float, miles: float = 10.0) -> float:
    """Percent change in the outcome per ``miles`` implied by a log-outcome slope."""
    return math.expm1(miles * slope) * 100.0


# -- rank correlation and contingency tables -----------------------------------------


def spearman(x: ArrayLike, y: ArrayLike) -> float:
    """Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise InputError("x and y differ in length")
    if x.size < 3:
        raise TooFewRows(f"spearman needs n >= 3, got {x.size}")
    rx = stats.rankdata(x) - (x.size + 1) / 2
    ry = stats.rankdata(y) - (y.size + 1) / 2
    sxx, syy = float(rx @ rx), float(ry @ ry)
    if sxx == 0 or syy == 0:
        raise ZeroVariance("all values of x or of y are tied")
    return float(np.clip((rx @ ry) / math.sqrt(sxx * syy), -1.0, 1.0))


def spearman_pvalue(rho: float, n: int) -> float:
    """Two-sided p-value of ``rho`` from the t approximation with n - 2 df."""
    if abs(rho) >= 1:
        return 0.0
    t = rho * math.sqrt((n - 2) / (1 - rho * rho))
    return float(2 * stats.t.sf(abs(t), n - 2))


@dataclass(frozen=True)
class ChiSquaredResult:
    statistic: float
    dof: int
    p_value: float
    expected: NDArray[np.float64]


def chi_squared_independence(table: ArrayLike) -> ChiSquaredResult:
    """Pearson chi-squared test of independence, without continuity correction."""
    obs = np.asarray(table, dtype=float)
    if obs.ndim != 2 or min(obs.shape) < 2:
        raise InputError(f"need a 2-D table of at least 2x2, got shape {obs.shape}")
    if not np.all(np.isfinite(obs)) or np.any(obs < 0):
        raise InputError("counts must be finite and non-negative")
    rows, cols = obs.sum(axis=1), obs.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise DegenerateMarginal("every row and column total must be positive")
    expected = np.outer(rows, cols) / obs.sum()
    statistic = float(np.sum((obs - expected) ** 2 / expected))
    dof = (obs.shape[0] - 1) * (obs.shape[1] - 1)
    return ChiSquaredResult(statistic, dof, float(stats.chi2.sf(statistic, dof)), expected)


# -- logistic regression -------------------------------------------------------------


@dataclass(frozen=True)
class LogisticFit:
    coefficients: dict[str, float]
    odds_ratios: dict[str, float]
    standard_errors: dict[str, float]
    converged: bool
    iterations: int
    log_likelihood: float
    null_log_likelihood: float
    auc: float
    gradient: NDArray[np.float64]

    def as_dict(self) -> dict:
        return {
            "coefficients": self.coefficients,
            "odds_ratios": self.odds_ratios,
            "standard_errors": self.standard_errors,
            "converged": self.converged,
            "iterations": self.iterations,
            "log_likelihood": self.log_likelihood,
            "null_log_likelihood": self.null_log_likelihood,
            "auc": self.auc,
        }


def standardize(x: ArrayLike) -> NDArray[np.float64]:
    """Centre and scale to unit standard deviation (population sd, ddof=0)."""
    x = np.asarray(x, dtype=float)
    sd = x.std()
    if sd == 0:
        raise ZeroVariance("cannot standardize a constant column")
    return (x - x.mean()) / sd


def _loglik(eta: NDArray, y: NDArray) -> float:
    # log L = sum y*eta - log(1 + e^eta), evaluated without overflow
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def auc_score(scores: ArrayLike, labels: ArrayLike) -> float:
    """Area under the ROC curve via the Mann-Whitney rank statistic (ties count 1/2)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    n1, n0 = int(y.sum()), int((~y).sum())
    if n1 == 0 or n0 == 0:
        raise SingleClass("AUC needs both classes")
    ranks = stats.rankdata(s)
    return float((ranks[y].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def logistic_fit(
    design: Mapping[str, ArrayLike],
    response: ArrayLike,
    *,
    raw: bool = False,
    max_iter: int = 100,
    step_tol: float = 1e-8,
    loglik_tol: float = 1e-10,
) -> LogisticFit:
    """Logistic regression with an intercept, fitted by IRLS.

    Columns must already be standardized (mean 0, sd 1 within 1e-6) unless
    ``raw`` is set.  Iterates until the largest coefficient step is below
    ``step_tol`` or the log-likelihood gains less than ``loglik_tol``.
    """
    names, X = _design(design)
    y = np.asarray(response, dtype=float).ravel()
    if y.size != X.shape[0]:
        raise InputError("response length does not match the design")
    if not np.all((y == 0) | (y == 1)):
        raise InputError("response must be 0/1")
    if y.min() == y.max():
        raise SingleClass(f"response has a single class ({int(y[0])})")
    if not raw:
        for k, name in enumerate(names, start=1):
            c = X[:, k]
            if abs(c.mean()) > 1e-6 or abs(c.std() - 1.0) > 1e-6:
                raise NotStandardized(
                    f"column {name!r} has mean {c.mean():.3g}, sd {c.std():.3g}; "
                    "standardize it or pass raw=True"
                )
    n, p = X.shape
    beta = np.zeros(p)
    ybar = y.mean()
    beta[0] = math.log(ybar / (1 - ybar))
    eta = X @ beta
    ll = _loglik(eta, y)
    null_ll = ll
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = 0.5 * (1.0 + np.tanh(0.5 * eta))
        w = mu * (1.0 - mu)
        H = X.T @ (X * w[:, None])
        step = np.linalg.solve(H, X.T @ (y - mu))
        t = 1.0
        for _ in range(30):
            cand = beta + t * step
            eta_c = X @ cand
            ll_c = _loglik(eta_c, y)
            if ll_c >= ll:
                break
            t *= 0.5
        gain = ll_c - ll
        max_step = float(np.max(np.abs(cand - beta)))
        beta, eta, ll = cand, eta_c, ll_c
        if np.max(np.abs(beta)) > 1e3 and gain > loglik_tol:
            raise CompleteSeparation(
                "coefficients diverge while the likelihood keeps improving; "
                "the classes are (quasi-)separable"
            )
        if max_step < step_tol or gain < loglik_tol:
            converged = True
            break
    if converged:
        # The stopping rule fires one step early.  Newton converges
        # quadratically, so up to two more full steps bring the score down to
        # rounding level; the likelihood gain is then below its own rounding
        # noise, so a step is judged by the score instead.
        mu = 0.5 * (1.0 + np.tanh(0.5 * eta))
        grad = X.T @ (y - mu)
        for _ in range(2):
            w = mu * (1.0 - mu)
            cand = beta + np.linalg.solve(X.T @ (X * w[:, None]), grad)
            eta_c = X @ cand
            mu_c = 0.5 * (1.0 + np.tanh(0.5 * eta_c))
            grad_c = X.T @ (y - mu_c)
            if not np.max(np.abs(grad_c)) < np.max(np.abs(grad)):
                break
            beta, eta, mu, grad = cand, eta_c, mu_c, grad_c
            ll = _loglik(eta, y)
    if np.all((2 * y - 1) * eta > 0):
        # A hyperplane that classifies every point correctly means no finite MLE.
        raise CompleteSeparation("the linear predictor separates the two classes perfectly")
    mu = 0.5 * (1.0 + np.tanh(0.5 * eta))
    w = mu * (1.0 - mu)
    cov = np.linalg.inv(X.T @ (X * w[:, None]))
    se = np.sqrt(np.diag(cov))
    keys = ["intercept"] + names
    coef = dict(zip(keys, map(float, beta)))
    return LogisticFit(
        coefficients=coef,
        odds_ratios={k: math.exp(v) for k, v in coef.items()},
        standard_errors=dict(zip(keys, map(float, se))),
        converged=converged,
        iterations=it,
        log_likelihood=ll,
        null_log_likelihood=null_ll,
        auc=auc_score(eta, y),
        gradient=X.T @ (y - mu),
    )
