"""Gaussian-kernel local linear regression of an outcome on distance.

At an evaluation point ``d0`` the fit minimises

    sum_i K_h(d_i - d0) * (Y_i - b0 - b1 * (d_i - d0))**2,   K_h(u) = K(u/h)/h

with the standard normal density as ``K``.  The intercept ``b0`` is the
curve estimate at ``d0``.

Samples are stored sorted by (distance, outcome).  All weighted sums run over
that canonical order, so reordering the input never changes a result, not even
in the last bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import (
    AllPointsIllConditioned,
    EmptyGrid,
    IllConditioned,
    InvalidBandwidth,
    InvalidGrid,
    InvalidSample,
)

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

#: Fits with less total kernel weight than this are refused.
MIN_WEIGHT_MASS = 1e-12
#: Fits whose kernel-weighted variance of distances (miles**2) is below this are refused.
MIN_WEIGHTED_VARIANCE = 1e-12
#: Default number of points in the evaluation grid.
DEFAULT_GRID_SIZE = 200


def _frozen(a: NDArray) -> NDArray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpatialSample:
    """Paired (distance, outcome) observations.

    Arrays are copied, sorted by distance (ties by outcome) and made read-only.
    """

    distances: NDArray[np.float64]
    outcomes: NDArray[np.float64]

    def __post_init__(self) -> None:
        d = np.array(self.distances, dtype=np.float64).ravel()
        y = np.array(self.outcomes, dtype=np.float64).ravel()
        if d.shape != y.shape:
            raise InvalidSample(
                f"distances and outcomes differ in length ({d.size} vs {y.size})"
            )
        if d.size < 2:
            raise InvalidSample(f"need at least 2 observations, got {d.size}")
        if not np.all(np.isfinite(d)):
            raise InvalidSample("distances must be finite")
        if np.any(d < 0):
            raise InvalidSample("distances must be non-negative")
        if not np.all(np.isfinite(y)):
            raise InvalidSample("outcomes must be finite")
        order = np.lexsort((y, d))
        object.__setattr__(self, "distances", _frozen(d[order]))
        object.__setattr__(self, "outcomes", _frozen(y[order]))

    @property
    def n(self) -> int:
        return int(self.distances.size)

    @property
    def max_distance(self) -> float:
        return float(self.distances[-1])

    @property
    def distance_range(self) -> float:
        return float(self.distances[-1] - self.distances[0])

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"SpatialSample(n={self.n}, distance=[{self.distances[0]:g}, {self.max_distance:g}])"


@dataclass(frozen=True)
class Bandwidth:
    """Kernel bandwidth in miles."""

    h: float

    def __post_init__(self) -> None:
        h = float(self.h)
        if not (math.isfinite(h) and h > 0):
            raise InvalidBandwidth(f"bandwidth must be positive and finite, got {self.h!r}")
        object.__setattr__(self, "h", h)

    def __float__(self) -> float:
        return self.h


def as_bandwidth(h: Bandwidth | float) -> Bandwidth:
    return h if isinstance(h, Bandwidth) else Bandwidth(h)


@dataclass(frozen=True)
class LocalFit:
    intercept: float
    slope: float
    effective_weight_mass: float


@dataclass(frozen=True, eq=False)
class CurveEstimate:
    """Curve estimate on a grid.  ``values`` is NaN wherever ``valid_mask`` is False."""

    grid: NDArray[np.float64]
    values: NDArray[np.float64]
    bandwidth: Bandwidth
    valid_mask: NDArray[np.bool_]

    def __post_init__(self) -> None:
        grid = np.array(self.grid, dtype=np.float64).ravel()
        values = np.array(self.values, dtype=np.float64).ravel()
        mask = np.array(self.valid_mask, dtype=bool).ravel()
        if not (grid.size == values.size == mask.size):
            raise InvalidGrid("grid, values and valid_mask must have equal length")
        _check_grid(grid)
        if not np.all(np.isfinite(values[mask])):
            raise InvalidGrid("values must be finite wherever valid_mask is true")
        object.__setattr__(self, "grid", _frozen(grid))
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid_mask", _frozen(mask))
        object.__setattr__(self, "bandwidth", as_bandwidth(self.bandwidth))

    @property
    def n_valid(self) -> int:
        return int(self.valid_mask.sum())


def kernel_weight(u: ArrayLike) -> float | NDArray[np.float64]:
    """Standard normal density ``exp(-u**2 / 2) / sqrt(2*pi)``."""
    w = np.exp(-0.5 * np.square(u)) * INV_SQRT_2PI
    return float(w) if np.ndim(w) == 0 else w


def _weighted_line(x: NDArray, y: NDArray, w: NDArray) -> LocalFit:
    # Two-pass centred solution of the 2x2 weighted normal equations.
    mass = float(np.sum(w))
    if not mass >= MIN_WEIGHT_MASS:
        raise IllConditioned(f"total kernel weight {mass:.3g} below {MIN_WEIGHT_MASS:g}")
    xbar = float(np.sum(w * x)) / mass
    xc = x - xbar
    sxx = float(np.sum(w * xc * xc))
    if not sxx >= MIN_WEIGHTED_VARIANCE * mass:
        raise IllConditioned(
            f"weighted distance variance {sxx / mass:.3g} below {MIN_WEIGHTED_VARIANCE:g}"
        )
    ybar = float(np.sum(w * y)) / mass
    slope = float(np.sum(w * xc * (y - ybar))) / sxx
    intercept = ybar - slope * xbar
    if not (math.isfinite(intercept) and math.isfinite(slope)):
        raise IllConditioned("non-finite local coefficients")
    return LocalFit(intercept=intercept, slope=slope, effective_weight_mass=mass)


def local_linear_fit(
    sample: SpatialSample, eval_point: float, bandwidth: Bandwidth | float
) -> LocalFit:
    """Kernel-weighted straight-line fit centred at ``eval_point``.

    Returns the intercept (the curve estimate at ``eval_point``), the local
    slope and the total kernel weight.

    Raises
    ------
    IllConditioned
        If the total weight underflows or the weight sits on a single distance.
    """
    d0 = float(eval_point)
    if not math.isfinite(d0):
        raise InvalidGrid(f"evaluation point must be finite, got {eval_point!r}")
    h = as_bandwidth(bandwidth).h
    x = sample.distances - d0
    w = np.exp(-0.5 * np.square(x / h)) * (INV_SQRT_2PI / h)
    return _weighted_line(x, sample.outcomes, w)


def _check_grid(grid: NDArray) -> None:
    if grid.size == 0:
        raise EmptyGrid("evaluation grid is empty")
    if not np.all(np.isfinite(grid)):
        raise InvalidGrid("grid points must be finite")
    if grid.size > 1 and not np.all(np.diff(grid) > 0):
        raise InvalidGrid("grid must be strictly increasing")


def default_grid(sample: SpatialSample, size: int = DEFAULT_GRID_SIZE) -> NDArray[np.float64]:
    """``size`` equally spaced points from 0 to the largest observed distance."""
    if size < 2:
        raise InvalidGrid(f"grid size must be at least 2, got {size}")
    if sample.max_distance <= 0:
        raise InvalidGrid("all distances are zero; cannot build a default grid")
    return np.linspace(0.0, sample.max_distance, size)


def estimate_curve(
    sample: SpatialSample,
    grid: Iterable[float] | NDArray | None,
    bandwidth: Bandwidth | float,
    *,
    allow_extrapolation: bool = False,
) -> CurveEstimate:
    """Evaluate the local linear estimate at every grid point.

    Points outside ``[0, max distance]`` are marked invalid unless
    ``allow_extrapolation`` is set.  Points whose local fit is ill-conditioned
    are marked invalid rather than raising; only a grid with no valid point at
    all is an error.
    """
    bw = as_bandwidth(bandwidth)
    if grid is None:
        g = default_grid(sample)
    else:
        g = np.array(grid if isinstance(grid, np.ndarray) else list(grid), dtype=np.float64).ravel()
    _check_grid(g)
    values = np.full(g.size, np.nan)
    mask = np.zeros(g.size, dtype=bool)
    upper = sample.max_distance
    for k, d0 in enumerate(g):
        if not allow_extrapolation and (d0 < 0 or d0 > upper):
            continue
        try:
            fit = local_linear_fit(sample, d0, bw)
        except IllConditioned:
            continue
        values[k] = fit.intercept
        mask[k] = True
    if not mask.any():
        raise AllPointsIllConditioned("no grid point produced a well-conditioned fit")
    return CurveEstimate(grid=g, values=values, bandwidth=bw, valid_mask=mask)
