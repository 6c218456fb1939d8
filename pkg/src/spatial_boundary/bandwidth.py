"""Leave-one-out cross-validation and grid-search bandwidth selection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Literal

import numpy as np
from numpy.typing import NDArray

from ._kernels import leave_one_out_moments
from .errors import IllConditioned, InvalidGrid, NoValidPredictions, TooFewObservations
from .estimator import (
    INV_SQRT_2PI,
    MIN_WEIGHT_MASS,
    MIN_WEIGHTED_VARIANCE,
    Bandwidth,
    SpatialSample,
    _weighted_line,
    as_bandwidth,
)

DEFAULT_BANDWIDTHS = (2.0, 5.0, 10.0, 15.0, 20.0)
#: A candidate needs valid leave-one-out predictions for this share of observations.
MIN_COVERAGE = 0.95

Method = Literal["fast", "naive"]


@dataclass(frozen=True)
class BandwidthGrid:
    candidates: tuple[float, ...] = DEFAULT_BANDWIDTHS

    def __post_init__(self) -> None:
        c = tuple(float(h) for h in self.candidates)
        if not c:
            raise InvalidGrid("bandwidth grid is empty")
        if not all(math.isfinite(h) and h > 0 for h in c):
            raise InvalidGrid(f"bandwidths must be positive and finite: {c}")
        if any(b <= a for a, b in zip(c, c[1:])):
            raise InvalidGrid(f"bandwidths must be strictly increasing: {c}")
        object.__setattr__(self, "candidates", c)

    @classmethod
    def parse(cls, text: str) -> "BandwidthGrid":
        """Build from a comma-separated list such as ``"2,5,10"``."""
        try:
            values = [float(tok) for tok in text.split(",") if tok.strip()]
        except ValueError as exc:
            raise InvalidGrid(f"cannot parse bandwidth list {text!r}") from exc
        return cls(tuple(values))

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self) -> int:
        return len(self.candidates)


@dataclass(frozen=True)
class CvScore:
    bandwidth: float
    score: float
    n_valid: int
    eligible: bool


@dataclass(frozen=True)
class CvResult:
    scores: tuple[CvScore, ...]
    selected: Bandwidth


def _check_n(sample: SpatialSample) -> None:
    if sample.n < 3:
        raise TooFewObservations(f"leave-one-out CV needs n >= 3, got {sample.n}")


def _refit_without(d: NDArray, y: NDArray, i: int, h: float) -> float | None:
    keep = np.ones(d.size, dtype=bool)
    keep[i] = False
    x = d[keep] - d[i]
    w = np.exp(-0.5 * np.square(x / h)) * (INV_SQRT_2PI / h)
    try:
        return _weighted_line(x, y[keep], w).intercept
    except IllConditioned:
        return None


def loo_predictions_naive(
    sample: SpatialSample, bandwidth: Bandwidth | float
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Refit without each observation in turn.  The reference implementation."""
    _check_n(sample)
    h = as_bandwidth(bandwidth).h
    d, y = sample.distances, sample.outcomes
    pred = np.full(sample.n, np.nan)
    valid = np.zeros(sample.n, dtype=bool)
    for i in range(sample.n):
        p = _refit_without(d, y, i, h)
        if p is not None:
            pred[i] = p
            valid[i] = True
    return pred, valid


#: Above this ratio of raw to centred second moment the one-pass formula
#: has lost too many digits and the point is refitted directly.
_MAX_MOMENT_RATIO = 1e3


def loo_predictions_fast(
    sample: SpatialSample, bandwidth: Bandwidth | float
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Leave-one-out predictions from one O(n^2) pass of pairwise kernel moments.

    The moments at ``d_i`` exclude observation ``i`` by construction, so no
    downdating is involved.  Where the neighbours of ``d_i`` sit mostly on
    one side and far away, the one-pass variance cancels badly; those points
    are refitted exactly.  Same conditioning rules as
    :func:`loo_predictions_naive`.
    """
    _check_n(sample)
    h = as_bandwidth(bandwidth).h
    d, y = sample.distances, sample.outcomes
    # Predictions are equivariant under shifts of y; centring keeps t1 small.
    shift = math.fsum(y) / y.size
    s0, s1, s2, t0, t1 = leave_one_out_moments(d, y - shift, h)
    scale = INV_SQRT_2PI / h
    mass = s0 * scale
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        xbar = s1 / s0
        m2 = s2 / s0
        var = m2 - xbar * xbar
        ybar = t0 / s0
        slope = (t1 / s0 - xbar * ybar) / var
        pred = ybar - slope * xbar + shift
        shaky = (mass >= MIN_WEIGHT_MASS) & ~(m2 <= _MAX_MOMENT_RATIO * var)
    valid = (mass >= MIN_WEIGHT_MASS) & (var >= MIN_WEIGHTED_VARIANCE) & np.isfinite(pred)
    for i in np.flatnonzero(shaky):
        p = _refit_without(d, y, int(i), h)
        valid[i] = p is not None
        pred[i] = math.nan if p is None else p
    pred = np.where(valid, pred, np.nan)
    return pred, valid


def loo_cv_score(
    sample: SpatialSample, bandwidth: Bandwidth | float, method: Method = "fast"
) -> tuple[float, int]:
    """Mean squared leave-one-out prediction error and the number of valid predictions.

    Observations whose leave-one-out fit is ill-conditioned are left out of
    the mean.
    """
    if method == "fast":
        pred, valid = loo_predictions_fast(sample, bandwidth)
    elif method == "naive":
        pred, valid = loo_predictions_naive(sample, bandwidth)
    else:
        raise ValueError(f"unknown method {method!r}")
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise NoValidPredictions(
            f"no valid leave-one-out prediction at h={as_bandwidth(bandwidth).h:g}"
        )
    resid = sample.outcomes[valid] - pred[valid]
    return math.fsum(resid * resid) / n_valid, n_valid


def select_bandwidth(
    sample: SpatialSample,
    grid: BandwidthGrid | Iterable[float] | None = None,
    *,
    min_coverage: float = MIN_COVERAGE,
    method: Method = "fast",
) -> CvResult:
    """Pick the candidate with the smallest CV score; ties go to the smaller bandwidth.

    Candidates covering fewer than ``min_coverage`` of the observations are
    scored but not eligible.
    """
    _check_n(sample)
    if grid is None:
        grid = BandwidthGrid()
    elif not isinstance(grid, BandwidthGrid):
        grid = BandwidthGrid(tuple(grid))
    need = math.ceil(min_coverage * sample.n - 1e-9)
    scores = []
    for h in grid:
        try:
            score, n_valid = loo_cv_score(sample, h, method=method)
        except NoValidPredictions:
            score, n_valid = math.inf, 0
        scores.append(CvScore(h, score, n_valid, eligible=n_valid >= max(need, 1)))
    eligible = [s for s in scores if s.eligible]
    if not eligible:
        raise NoValidPredictions(
            f"no bandwidth in {grid.candidates} reaches {min_coverage:.0%} leave-one-out coverage"
        )
    # min() keeps the first minimum and candidates are ascending.
    best = min(eligible, key=lambda s: s.score)
    return CvResult(scores=tuple(scores), selected=Bandwidth(best.bandwidth))
