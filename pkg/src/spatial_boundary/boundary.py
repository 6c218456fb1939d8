"""Boundary distances from estimated curves and from parametric decay fits.

The boundary is the first distance past the reference point at which the
curve has fallen to ``(1 - decay_threshold)`` of its reference level.  When
the curve never gets there, the result says so explicitly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .errors import (
    DegenerateData,
    InsufficientCurve,
    InvalidThreshold,
    ReferencePointInvalid,
    TooFewObservations,
    UnconvergedFit,
    ZeroDistance,
)
from .estimator import CurveEstimate, SpatialSample

DEFAULT_DECAY_THRESHOLD = 0.10
#: Rates (kappa, alpha) at or below this are treated as "no decay".
DEGENERACY_FLOOR = 1e-8
#: Search interval for the decay rate.  The lower end sits below the
#: degeneracy floor so flat data can be told apart from slow decay.
RATE_BOUNDS = (1e-12, 1e3)
MAX_ITERATIONS = 500
REL_TOL = 1e-10
_MAX_HALVINGS = 60


class ReferenceMode(str, enum.Enum):
    AT_ORIGIN = "origin"
    AT_MAXIMUM = "maximum"


class BoundaryKind(str, enum.Enum):
    FINITE = "finite"
    NO_BOUNDARY = "no_boundary"


@dataclass(frozen=True)
class BoundaryResult:
    """A boundary distance, or an explicit statement that there is none.

    ``threshold_level = baseline + (1 - decay_threshold) * (reference_level - baseline)``;
    ``baseline`` is zero except for decay measured above a floor level.
    """

    kind: BoundaryKind
    d_star: float | None
    reference_level: float
    threshold_level: float
    reference_mode: ReferenceMode
    decay_threshold: float
    reference_distance: float = 0.0
    baseline: float = 0.0

    @property
    def is_finite(self) -> bool:
        return self.kind is BoundaryKind.FINITE

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "d_star": self.d_star,
            "reference_level": self.reference_level,
            "threshold_level": self.threshold_level,
            "reference_mode": self.reference_mode.value,
            "reference_distance": self.reference_distance,
            "decay_threshold": self.decay_threshold,
            "baseline": self.baseline,
        }


def _check_threshold(decay_threshold: float) -> float:
    eps = float(decay_threshold)
    if not (0.0 < eps < 1.0):
        raise InvalidThreshold(f"decay threshold must lie in (0, 1), got {decay_threshold!r}")
    return eps


def find_boundary(
    curve: CurveEstimate,
    decay_threshold: float = DEFAULT_DECAY_THRESHOLD,
    reference_mode: ReferenceMode | str = ReferenceMode.AT_ORIGIN,
    *,
    baseline: float = 0.0,
) -> BoundaryResult:
    """First downward crossing of the threshold level, scanning right from the reference.

    The reference is the first grid point (``"origin"``) or the largest valid
    value (``"maximum"``).  The crossing is located by linear interpolation
    between the two valid grid points that bracket it.  Invalid grid points
    are skipped.
    """
    eps = _check_threshold(decay_threshold)
    mode = ReferenceMode(reference_mode)
    valid = np.flatnonzero(curve.valid_mask)
    if valid.size < 2:
        raise InsufficientCurve(f"need at least 2 valid grid points, got {valid.size}")
    values = curve.values
    if mode is ReferenceMode.AT_ORIGIN:
        ref = 0
        if not curve.valid_mask[0]:
            raise ReferencePointInvalid(
                f"curve is not valid at its first grid point d={curve.grid[0]:g}"
            )
    else:
        ref = int(valid[np.argmax(values[valid])])
    ref_level = float(values[ref])
    if not ref_level - baseline > 0:
        raise ReferencePointInvalid(
            f"reference level {ref_level:g} is not above the baseline {baseline:g}"
        )
    level = baseline + (1.0 - eps) * (ref_level - baseline)
    common = dict(
        reference_level=ref_level,
        threshold_level=level,
        reference_mode=mode,
        decay_threshold=eps,
        reference_distance=float(curve.grid[ref]),
        baseline=float(baseline),
    )
    after = valid[valid > ref]
    prev = ref
    for k in after:
        if values[k] <= level:
            g0, g1 = curve.grid[prev], curve.grid[k]
            v0, v1 = values[prev], values[k]
            d_star = float(g0 + (v0 - level) / (v0 - v1) * (g1 - g0))
            return BoundaryResult(BoundaryKind.FINITE, d_star, **common)
        prev = k
    return BoundaryResult(BoundaryKind.NO_BOUNDARY, None, **common)


# -- parametric models -----------------------------------------------------------


@dataclass(frozen=True)
class ExponentialModel:
    """``A * exp(-kappa * d)``."""

    A: float
    kappa: float

    def __call__(self, d):
        return self.A * np.exp(-self.kappa * np.asarray(d, dtype=float))

    @property
    def rate(self) -> float:
        return self.kappa


@dataclass(frozen=True)
class PowerLawModel:
    """``A * (d + offset) ** (-alpha)``."""

    A: float
    alpha: float
    offset: float = 0.0

    def __call__(self, d):
        return self.A * np.power(np.asarray(d, dtype=float) + self.offset, -self.alpha)

    @property
    def rate(self) -> float:
        return self.alpha


@dataclass(frozen=True)
class ParametricFit:
    model: ExponentialModel | PowerLawModel
    sse: float
    converged: bool
    iterations: int


# Residual/Jacobian callback: theta -> (fitted values, Jacobian of fitted values).
_Model = Callable[[NDArray], tuple[NDArray, NDArray]]


def _gauss_newton(
    model: _Model, y: NDArray, theta0: NDArray, log_rate_bounds: tuple[float, float], max_iter: int
) -> tuple[NDArray, float, bool, int]:
    """Gauss-Newton with step halving on ``theta = (A, log rate)``.

    The log-rate is held inside ``log_rate_bounds``; when it sits on a bound
    and the step points outward, only ``A`` is updated.
    """
    lo, hi = log_rate_bounds
    theta = theta0.astype(float).copy()
    theta[1] = min(max(theta[1], lo), hi)
    f, J = model(theta)
    r = y - f
    sse = math.fsum(r * r)
    for it in range(1, max_iter + 1):
        step = np.linalg.lstsq(J, r, rcond=None)[0]
        if (theta[1] <= lo and step[1] < 0) or (theta[1] >= hi and step[1] > 0):
            step = np.array([np.linalg.lstsq(J[:, :1], r, rcond=None)[0][0], 0.0])
        t = 1.0
        for _ in range(_MAX_HALVINGS):
            cand = theta + t * step
            cand[1] = min(max(cand[1], lo), hi)
            f_c, J_c = model(cand)
            r_c = y - f_c
            sse_c = math.fsum(r_c * r_c)
            if sse_c < sse:
                break
            t *= 0.5
        else:
            # No descent along the Gauss-Newton direction: at the optimum to working precision.
            return theta, sse, True, it
        moved = np.abs(cand - theta) / (1.0 + np.abs(theta))
        improvement = (sse - sse_c) / sse if sse > 0 else 0.0
        theta, f, J, r, sse = cand, f_c, J_c, r_c, sse_c
        if improvement < REL_TOL or moved.max() < REL_TOL or sse == 0.0:
            return theta, sse, True, it
    return theta, sse, False, max_iter


def _check_fit_sample(sample: SpatialSample) -> None:
    if sample.n < 3:
        raise TooFewObservations(f"parametric fit needs n >= 3, got {sample.n}")
    if sample.distance_range == 0:
        raise DegenerateData("all distances are identical")


def fit_exponential(
    sample: SpatialSample,
    *,
    max_iter: int = MAX_ITERATIONS,
    rate_bounds: tuple[float, float] = RATE_BOUNDS,
) -> ParametricFit:
    """Least-squares fit of ``A * exp(-kappa * d)``.

    Starts from ``A`` = mean outcome over the first decile of distances and
    ``kappa`` = 1 / distance range.  ``kappa`` is optimised on the log scale
    inside ``rate_bounds``.  A fit that hits ``max_iter`` is returned with
    ``converged=False``.
    """
    _check_fit_sample(sample)
    d, y = sample.distances, sample.outcomes
    near = d <= np.quantile(d, 0.1)
    theta0 = np.array([float(np.mean(y[near])), -math.log(sample.distance_range)])

    def model(theta):
        kappa = math.exp(theta[1])
        e = np.exp(-kappa * d)
        f = theta[0] * e
        return f, np.column_stack([e, -kappa * d * f])

    bounds = (math.log(rate_bounds[0]), math.log(rate_bounds[1]))
    theta, sse, ok, it = _gauss_newton(model, y, theta0, bounds, max_iter)
    return ParametricFit(ExponentialModel(float(theta[0]), math.exp(theta[1])), sse, ok, it)


def fit_power_law(
    sample: SpatialSample,
    *,
    offset: float = 0.0,
    max_iter: int = MAX_ITERATIONS,
    rate_bounds: tuple[float, float] = RATE_BOUNDS,
) -> ParametricFit:
    """Least-squares fit of ``A * (d + offset) ** (-alpha)``.

    Starting values come from a log-log regression when every outcome is
    positive, otherwise ``alpha = 1`` with the matching least-squares ``A``.

    Raises
    ------
    ZeroDistance
        If some ``d + offset`` is not positive.
    """
    _check_fit_sample(sample)
    x = sample.distances + float(offset)
    if np.any(x <= 0):
        raise ZeroDistance("power law is undefined at zero distance; pass a positive offset")
    y = sample.outcomes
    logx = np.log(x)
    alpha0 = 1.0
    A0 = None
    if np.all(y > 0) and np.ptp(logx) > 0:
        slope, intercept = np.polyfit(logx, np.log(y), 1)
        if slope < 0:
            alpha0, A0 = -slope, math.exp(intercept)
    if A0 is None:
        g = x**-alpha0
        A0 = float(np.dot(g, y) / np.dot(g, g))
    lo, hi = rate_bounds
    alpha0 = min(max(alpha0, lo), hi)

    def model(theta):
        alpha = math.exp(theta[1])
        g = np.exp(-alpha * logx)
        f = theta[0] * g
        return f, np.column_stack([g, -alpha * logx * f])

    theta, sse, ok, it = _gauss_newton(
        model, y, np.array([A0, math.log(alpha0)]), (math.log(lo), math.log(hi)), max_iter
    )
    return ParametricFit(PowerLawModel(float(theta[0]), math.exp(theta[1]), float(offset)), sse, ok, it)


def parametric_boundary(
    fit: ParametricFit,
    decay_threshold: float = DEFAULT_DECAY_THRESHOLD,
    *,
    reference_distance: float | None = None,
    degeneracy_floor: float | None = DEGENERACY_FLOOR,
) -> BoundaryResult:
    """Closed-form boundary of a fitted decay model.

    Exponential: ``-log(1 - eps) / kappa`` measured from d = 0.  Power law:
    the distance where the curve reaches ``(1 - eps)`` of its value at
    ``reference_distance`` (required, since the power law is infinite at 0).
    A rate at or below ``degeneracy_floor`` means no boundary; pass
    ``degeneracy_floor=None`` to disable that check.  A non-positive amplitude
    never decays downward, so it also yields no boundary.
    """
    eps = _check_threshold(decay_threshold)
    if not fit.converged:
        raise UnconvergedFit(f"fit stopped after {fit.iterations} iterations without converging")
    m = fit.model
    if isinstance(m, ExponentialModel):
        ref_d = 0.0
        ref_level = m.A
        d_star = -math.log1p(-eps) / m.kappa
    else:
        if reference_distance is None or not reference_distance > 0:
            raise InvalidThreshold("a power-law boundary needs a positive reference_distance")
        ref_d = float(reference_distance)
        base = ref_d + m.offset
        ref_level = m.A * base**-m.alpha
        d_star = base * (1.0 - eps) ** (-1.0 / m.alpha) - m.offset
    result = dict(
        reference_level=float(ref_level),
        threshold_level=float((1.0 - eps) * ref_level),
        reference_mode=ReferenceMode.AT_ORIGIN,
        decay_threshold=eps,
        reference_distance=ref_d,
    )
    degenerate = degeneracy_floor is not None and m.rate <= degeneracy_floor
    if degenerate or m.A <= 0 or not math.isfinite(d_star):
        return BoundaryResult(BoundaryKind.NO_BOUNDARY, None, **result)
    return BoundaryResult(BoundaryKind.FINITE, float(d_star), **result)
