"""Synthetic data shaped like the published tract and branch tables.

The real extracts are not shipped.  These generators produce inputs with a
known truth so the analysis pipelines can be checked end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .applied import MILES_PER_DEGREE, nearest_source_distance

#: log(applications) = 4.81 - 0.0089 * distance
VOLUME_INTERCEPT = 4.81
VOLUME_SLOPE = -0.0089
APPROVAL_MEAN = 0.523
APPROVAL_SD = 0.092

#: (survived, total) per income quartile, poorest first.
SURVIVAL_COUNTS = ((10250, 13333), (10503, 13324), (10307, 13327), (9848, 13328))
#: Mean branches per tract and population density per income quartile.
QUARTILE_BRANCHES = (3.82, 3.97, 4.03, 4.15)
QUARTILE_DENSITY = (3842.0, 4567.0, 5234.0, 6892.0)
#: Log-odds per standard deviation used to decide which branches close.
SURVIVAL_EFFECTS = {"branches_in_tract": -0.144, "pop_density": -0.052, "n_banks": 0.171}


@dataclass(frozen=True)
class TractFixture:
    tract_id: NDArray[np.int64]
    lat: NDArray[np.float64]
    lon: NDArray[np.float64]
    outcome: NDArray[np.float64]
    source_lat: NDArray[np.float64]
    source_lon: NDArray[np.float64]
    distance: NDArray[np.float64]


def _tract_layout(rng: np.random.Generator, n_tracts: int, n_sources: int, max_offset: float):
    src_lat = rng.uniform(31.0, 37.0, n_sources)
    src_lon = rng.uniform(-121.0, -112.0, n_sources)
    home = rng.integers(0, n_sources, n_tracts)
    r = rng.uniform(0.0, max_offset, n_tracts) / MILES_PER_DEGREE
    theta = rng.uniform(0.0, 2 * np.pi, n_tracts)
    lat = src_lat[home] + r * np.sin(theta)
    lon = src_lon[home] + r * np.cos(theta)
    d = nearest_source_distance(np.column_stack([lat, lon]), np.column_stack([src_lat, src_lon]))
    return lat, lon, src_lat, src_lon, d


def volume_fixture(
    n_tracts: int = 5000,
    seed: int = 0,
    *,
    n_sources: int = 8,
    noise_sd: float = 0.6,
    max_offset: float = 120.0,
) -> TractFixture:
    """Tracts whose log application volume falls 0.0089 per mile of distance.

    ``outcome = exp(4.81 - 0.0089 * d + N(0, noise_sd))`` with ``d`` the
    distance to the nearest source.  Some tracts lie beyond 100 miles so a
    distance cutoff has something to remove.
    """
    rng = np.random.default_rng(seed)
    lat, lon, slat, slon, d = _tract_layout(rng, n_tracts, n_sources, max_offset)
    y = np.exp(VOLUME_INTERCEPT + VOLUME_SLOPE * d + rng.normal(0.0, noise_sd, n_tracts))
    return TractFixture(np.arange(1, n_tracts + 1), lat, lon, y, slat, slon, d)


def approval_fixture(
    n_tracts: int = 5000,
    seed: int = 0,
    *,
    n_sources: int = 8,
    max_offset: float = 120.0,
) -> TractFixture:
    """Tracts whose approval rate does not depend on distance at all."""
    rng = np.random.default_rng(seed)
    lat, lon, slat, slon, d = _tract_layout(rng, n_tracts, n_sources, max_offset)
    y = np.clip(rng.normal(APPROVAL_MEAN, APPROVAL_SD, n_tracts), 0.0, 1.0)
    return TractFixture(np.arange(1, n_tracts + 1), lat, lon, y, slat, slon, d)


@dataclass(frozen=True)
class BranchFixture:
    survived: NDArray[np.int64]
    income: NDArray[np.float64]
    branches_in_tract: NDArray[np.int64]
    pop_density: NDArray[np.float64]
    n_banks: NDArray[np.int64]

    def columns(self) -> dict[str, NDArray]:
        return {
            "survived": self.survived,
            "income": self.income,
            "branches_in_tract": self.branches_in_tract,
            "pop_density": self.pop_density,
            "n_banks": self.n_banks,
        }


def _z(x: NDArray) -> NDArray:
    return (x - x.mean()) / x.std()


def survival_fixture(
    seed: int = 0, counts: tuple[tuple[int, int], ...] = SURVIVAL_COUNTS
) -> BranchFixture:
    """Branches with exactly the published survivor counts per income quartile.

    Incomes are lognormal (median about $58k); sorting them and cutting at
    the quartile sizes in ``counts`` fixes each branch's quartile.  Inside a
    quartile the survivors are a weighted draw without replacement (Gumbel
    top-k) favouring few branches in the tract, low density and many
    competing banks, so the covariates carry the expected signs without
    changing any quartile count.
    """
    rng = np.random.default_rng(seed)
    sizes = [t for _, t in counts]
    n = sum(sizes)
    income = np.sort(rng.lognormal(np.log(58_000.0), 0.45, n))
    quartile = np.repeat(np.arange(len(sizes)), sizes)

    branches = np.empty(n, dtype=np.int64)
    density = np.empty(n)
    for q, size in enumerate(sizes):
        m = quartile == q
        mean_b = QUARTILE_BRANCHES[min(q, len(QUARTILE_BRANCHES) - 1)]
        branches[m] = 1 + rng.poisson(mean_b - 1.0, size)
        mean_den = QUARTILE_DENSITY[min(q, len(QUARTILE_DENSITY) - 1)]
        density[m] = rng.lognormal(np.log(mean_den) - 0.5 * 0.9**2, 0.9, size)
    banks = 1 + rng.binomial(branches - 1, 0.6)

    score = (
        SURVIVAL_EFFECTS["branches_in_tract"] * _z(branches.astype(float))
        + SURVIVAL_EFFECTS["pop_density"] * _z(density)
        + SURVIVAL_EFFECTS["n_banks"] * _z(banks.astype(float))
    )
    key = score + rng.gumbel(size=n)
    survived = np.zeros(n, dtype=np.int64)
    start = 0
    for (s, _), size in zip(counts, sizes):
        block = slice(start, start + size)
        top = np.argsort(-key[block], kind="stable")[:s]
        survived[start + top] = 1
        start += size

    # Shuffle rows so file order carries no information.
    perm = rng.permutation(n)
    return BranchFixture(survived[perm], income[perm], branches[perm], density[perm], banks[perm])


def permuted_labels(fixture: BranchFixture, seed: int) -> BranchFixture:
    """The same branches with survival labels shuffled, breaking every association."""
    rng = np.random.default_rng(seed)
    return BranchFixture(
        rng.permutation(fixture.survived),
        fixture.income,
        fixture.branches_in_tract,
        fixture.pop_density,
        fixture.n_banks,
    )
