import math

import numpy as np
import pytest

import oracles
from spatial_boundary.applied import (
    GeoPoint,
    auc_score,
    binned_means,
    chi_squared_independence,
    flat_distance_miles,
    logistic_fit,
    nearest_source_distance,
    ols_fit,
    pct_change_per_10_miles,
    spearman,
    standardize,
)
from spatial_boundary.errors import (
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
from spatial_boundary.montecarlo import DgpKind, DgpSpec, generate_dgp

# -- distances -------------------------------------------------------------------


def test_flat_distance_examples():
    a = GeoPoint(34.05, -118.24)
    assert flat_distance_miles(a, a) == 0.0
    assert flat_distance_miles(GeoPoint(10.0, 5.0), GeoPoint(11.0, 5.0)) == 69.0
    assert flat_distance_miles(a, GeoPoint(34.05, -117.24)) == pytest.approx(69.0, rel=1e-12)


def test_great_circle_flag():
    a, b = GeoPoint(0.0, 0.0), GeoPoint(0.0, 1.0)
    assert flat_distance_miles(a, b, great_circle=True) == pytest.approx(69.09, abs=0.01)


def test_geopoint_validation():
    with pytest.raises(InputError):
        GeoPoint(91.0, 0.0)
    with pytest.raises(InputError):
        GeoPoint(0.0, -181.0)


def test_nearest_hand_grid():
    sources = [GeoPoint(0, 0), GeoPoint(0, 1), GeoPoint(1, 0), GeoPoint(2, 2)]
    targets = [GeoPoint(0, 0.5), GeoPoint(1, 1), GeoPoint(3, 3)]
    d = nearest_source_distance(targets, sources)
    assert d.tolist() == [34.5, 69.0, 69.0 * math.sqrt(2.0)]


def test_nearest_coincident_and_single_source():
    src = np.array([[40.0, -75.0], [41.0, -74.0]])
    assert nearest_source_distance(np.array([[41.0, -74.0]]), src)[0] == 0.0
    t = GeoPoint(38.5, -77.1)
    s = GeoPoint(40.0, -75.0)
    assert nearest_source_distance([t], [s])[0] == flat_distance_miles(t, s)


def test_nearest_matches_brute_force_exactly():
    rng = np.random.default_rng(12)
    for _ in range(20):
        t = np.column_stack([rng.uniform(25, 49, 300), rng.uniform(-124, -67, 300)])
        s = np.column_stack([rng.uniform(25, 49, 40), rng.uniform(-124, -67, 40)])
        assert nearest_source_distance(t, s, chunk=64).tolist() == oracles.nearest_distance(t, s)


def test_nearest_empty_sources():
    with pytest.raises(EmptySources):
        nearest_source_distance([GeoPoint(0, 0)], [])


# -- binned means -------------------------------------------------------------------


def test_binned_constant_and_arithmetic():
    out = binned_means([1, 5, 15, 30, 70], [2.0] * 5)
    assert out.means() == [2.0] * 4
    assert all(b.ci_half_width == 0.0 for b in out.bins if b.count > 1)
    two = binned_means([0.5, 1.5, 2.5], [1.0, 3.0, 5.0], [0, 2, 3])
    assert two.means() == [2.0, 5.0]
    assert math.isnan(two.bins[1].ci_half_width)


def test_binned_edges_and_empty_bins():
    out = binned_means([0.0, 10.0, 100.0], [1.0, 2.0, 3.0])
    assert [(b.lower, b.count) for b in out.bins] == [(0.0, 1), (10.0, 1), (50.0, 1)]
    with pytest.raises(NoBins):
        binned_means([1.0], [1.0], [0.0])


def test_binned_dgp1_against_analytic_means():
    s = generate_dgp(DgpSpec(DgpKind.STRONG_DECAY), 20000, 8)
    out = binned_means(s.distances, s.outcomes)
    for b in out.bins:
        lo, hi = b.lower, b.upper
        truth = 0.8 * (math.exp(-0.05 * lo) - math.exp(-0.05 * hi)) / (0.05 * (hi - lo))
        assert abs(b.mean - truth) < 3 * 0.1 / math.sqrt(b.count)


# -- OLS ----------------------------------------------------------------------------


def test_ols_exact_line():
    x = np.linspace(0, 100, 50)
    fit = ols_fit({"distance": x}, 4.81 - 0.0089 * x)
    assert fit.coefficients["intercept"] == pytest.approx(4.81, rel=1e-12)
    assert fit.coefficients["distance"] == pytest.approx(-0.0089, rel=1e-10)
    assert fit.r_squared == pytest.approx(1.0)


def test_ols_six_point_golden():
    fit = ols_fit({"x": np.arange(6.0)}, [2.1, 3.9, 6.1, 7.9, 10.2, 11.8])
    assert fit.coefficients["intercept"] == pytest.approx(72 / 35, rel=1e-13)
    assert fit.coefficients["x"] == pytest.approx(346 / 175, rel=1e-13)
    assert fit.r_squared == pytest.approx(0.9983821199232757, rel=1e-12)
    assert fit.standard_errors["intercept"] == pytest.approx(0.120486541998354, rel=1e-10)
    assert fit.standard_errors["x"] == pytest.approx(0.0397953950776689, rel=1e-10)


def test_ols_orthogonal_response():
    x = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    fit = ols_fit({"x": x}, [1.0, 0.0, -2.0, 0.0, 1.0])
    assert abs(fit.coefficients["x"]) < 1e-15


def test_ols_against_normal_equations():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(5, 30))
        a, b = rng.normal(0, 1, n), rng.uniform(0, 50, n)
        y = 1 + 2 * a - 0.1 * b + rng.normal(0, 0.5, n)
        fit = ols_fit({"a": a, "b": b}, y)
        got = [fit.coefficients[k] for k in ("intercept", "a", "b")]
        np.testing.assert_allclose(got, oracles.ols([a, b], y), rtol=1e-9, atol=1e-12)


def test_ols_residual_orthogonality_and_r2_invariance():
    rng = np.random.default_rng(4)
    x = rng.uniform(0, 100, 200)
    y = 3 - 0.02 * x + rng.normal(0, 1, 200)
    fit = ols_fit({"x": x}, y)
    assert abs(fit.residuals.sum()) < 1e-8 * np.abs(y).sum()
    assert abs(fit.residuals @ x) < 1e-8 * np.abs(y * x).sum()
    assert ols_fit({"x": 5 * x - 7}, y).r_squared == pytest.approx(fit.r_squared, rel=1e-12)


def test_ols_errors():
    with pytest.raises(TooFewRows):
        ols_fit({"x": [1.0, 2.0]}, [1.0, 2.0])
    x = np.arange(10.0)
    with pytest.raises(Collinear):
        ols_fit({"x": x, "x2": 2 * x}, x)


def test_pct_change():
    assert pct_change_per_10_miles(-0.0089) == pytest.approx(-8.515442642554800, rel=1e-13)
    assert pct_change_per_10_miles(0.0089) == pytest.approx(9.308065632633, rel=1e-12)
    assert pct_change_per_10_miles(0.0) == 0.0
    a, b = pct_change_per_10_miles(-0.013), pct_change_per_10_miles(0.013)
    assert (1 + a / 100) * (1 + b / 100) == pytest.approx(1.0, rel=1e-14)


# -- Spearman and chi-squared ------------------------------------------------------------


def test_spearman_monotone():
    x = np.arange(10.0)
    assert spearman(x, x**3) == 1.0
    assert spearman(x, -np.exp(x)) == -1.0


def test_spearman_eight_point_golden():
    x = [3.1, 1.2, 5.5, 2.0, 5.5, 7.3, 0.4, 6.6]
    y = [2.0, 1.0, 4.0, 3.5, 3.0, 8.0, 0.5, 5.0]
    # cov 38, var_x 83/2, var_y 42 on the average ranks.
    assert spearman(x, y) == pytest.approx(38 / math.sqrt(83 / 2 * 42), rel=1e-14)
    assert spearman(x, y) == pytest.approx(0.910195959054077, rel=1e-13)


def test_spearman_against_oracle_and_monotone_invariance():
    rng = np.random.default_rng(6)
    for _ in range(20):
        n = int(rng.integers(3, 40))
        x = rng.integers(0, 8, n).astype(float)
        y = x + rng.integers(-3, 4, n)
        if np.ptp(x) == 0 or np.ptp(y) == 0:
            continue
        assert spearman(x, y) == pytest.approx(oracles.spearman(x, y), abs=1e-12)
        assert spearman(np.exp(x), y**3) == pytest.approx(spearman(x, y), abs=1e-12)


def test_spearman_errors():
    with pytest.raises(ZeroVariance):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(TooFewRows):
        spearman([1, 2], [1, 2])


def test_chi_squared_examples():
    res = chi_squared_independence([[10, 20], [20, 10]])
    assert res.statistic == pytest.approx(20 / 3, rel=1e-14)
    assert res.dof == 1
    assert res.p_value == pytest.approx(0.009823274507519248, rel=1e-10)
    np.testing.assert_allclose(res.expected, 15.0)
    prop = chi_squared_independence([[10, 20], [30, 60], [5, 10]])
    assert prop.statistic == pytest.approx(0.0, abs=1e-12) and prop.p_value == pytest.approx(1.0)


def test_chi_squared_published_counts():
    # Survivors and closures per income quartile; reproduces the reported 96.00.
    table = [[10250, 3083], [10503, 2821], [10307, 3020], [9848, 3480]]
    res = chi_squared_independence(table)
    assert res.statistic == pytest.approx(96.00141634324042, rel=1e-12)
    assert res.dof == 3 and res.p_value < 1e-15


def test_chi_squared_oracle_and_invariances():
    rng = np.random.default_rng(7)
    for _ in range(20):
        r, c = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        t = rng.integers(1, 60, (r, c))
        stat = chi_squared_independence(t).statistic
        assert stat == pytest.approx(oracles.chi_squared(t), rel=1e-12)
        assert chi_squared_independence(t[::-1, ::-1]).statistic == pytest.approx(stat, rel=1e-12)
        assert chi_squared_independence(3 * t).statistic == pytest.approx(3 * stat, rel=1e-12)


def test_chi_squared_errors():
    with pytest.raises(DegenerateMarginal):
        chi_squared_independence([[0, 0], [1, 2]])
    with pytest.raises(InputError):
        chi_squared_independence([[1, 2, 3]])


# -- logistic ------------------------------------------------------------------------------


def _logit_data(seed, n=1000, b0=-0.5, b1=0.8):
    rng = np.random.default_rng(seed)
    x = standardize(rng.normal(0, 1, n))
    p = 1 / (1 + np.exp(-(b0 + b1 * x)))
    return x, (rng.uniform(size=n) < p).astype(float)


def test_logistic_recovers_truth_and_matches_grid_oracle():
    x, y = _logit_data(0)
    fit = logistic_fit({"x": x}, y)
    assert fit.converged
    for k, truth in (("intercept", -0.5), ("x", 0.8)):
        assert abs(fit.coefficients[k] - truth) < 3 * fit.standard_errors[k]
    X = np.column_stack([np.ones_like(x), x])
    grid = oracles.logistic_grid_mle(X, y, [0.0, 0.0], half_width=2.0)
    np.testing.assert_allclose([fit.coefficients["intercept"], fit.coefficients["x"]], grid, atol=1e-7)
    assert np.max(np.abs(fit.gradient)) < 1e-6


def test_logistic_invariants():
    x, y = _logit_data(1)
    fit = logistic_fit({"x": x}, y)
    for k, v in fit.coefficients.items():
        assert fit.odds_ratios[k] == math.exp(v)
    assert fit.log_likelihood >= fit.null_log_likelihood
    assert 0.5 <= fit.auc <= 1.0


def test_odds_ratio_transform():
    assert math.exp(-0.077) == pytest.approx(0.926, abs=5e-4)


def test_logistic_null_relationship():
    x, y = _logit_data(2, b1=0.8)
    y = np.random.default_rng(99).permutation(y)
    fit = logistic_fit({"x": x}, y)
    assert abs(fit.coefficients["x"]) < 3 * fit.standard_errors["x"]
    assert abs(fit.auc - 0.5) < 0.05


def test_logistic_errors():
    x = standardize(np.arange(20.0))
    with pytest.raises(SingleClass):
        logistic_fit({"x": x}, np.ones(20))
    with pytest.raises(NotStandardized):
        logistic_fit({"x": np.arange(20.0)}, np.arange(20) % 2)
    with pytest.raises(CompleteSeparation):
        logistic_fit({"x": x}, (x > 0).astype(float))
    raw = logistic_fit({"x": np.arange(20.0)}, (np.arange(20) % 3 == 0), raw=True)
    assert raw.converged


def test_auc_ties_and_classes():
    assert auc_score([0.1, 0.2, 0.3, 0.4], [0, 0, 1, 1]) == 1.0
    assert auc_score([0.5, 0.5], [0, 1]) == 0.5
    with pytest.raises(SingleClass):
        auc_score([0.1, 0.2], [1, 1])


def test_standardize():
    z = standardize([1.0, 2.0, 3.0, 4.0])
    assert abs(z.mean()) < 1e-15 and z.std() == pytest.approx(1.0)
    with pytest.raises(ZeroVariance):
        standardize([2.0, 2.0])
