import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parpa import (
    AnnualStats,
    DataFormatError,
    DegenerateMonthError,
    InsufficientDataError,
    MonthlySeries,
    annual_stats,
    denormalize,
    normalize,
    periodic_stats,
)


def test_series_validation():
    s = MonthlySeries(2000, 3, [1.0, 2.0, 3.0], label="X")
    assert len(s) == 3
    assert s.month_of(0) == 3 and s.month_of(10) == 1
    assert s.stamp(0) == "2000-03" and s.stamp(10) == "2001-01"
    with pytest.raises(DataFormatError):
        MonthlySeries(2000, 1, [1.0, -2.0])
    with pytest.raises(DataFormatError):
        MonthlySeries(2000, 1, [1.0, np.nan])
    with pytest.raises(DataFormatError):
        MonthlySeries(2000, 13, [1.0])
    with pytest.raises(DataFormatError):
        MonthlySeries(2000, 1, [])


def test_series_slicing_keeps_calendar():
    s = MonthlySeries(2000, 11, np.arange(1.0, 25.0), label="X")
    part = s.slice(3, 10)
    assert part.start_year == 2001 and part.start_month == 2
    assert part.label == "X"
    np.testing.assert_array_equal(part.values, s.values[3:10])
    assert s.index_of(2001, 2) == 3
    with pytest.raises(IndexError):
        s.index_of(1999, 1)


def test_periodic_stats_constant_series():
    s = MonthlySeries(2000, 1, np.full(120, 100.0))
    stats = periodic_stats(s)
    np.testing.assert_allclose(stats.mean, 100.0)
    np.testing.assert_allclose(stats.std, 0.0)
    np.testing.assert_array_equal(stats.count, 10)


def test_periodic_stats_hand_case():
    # January observations {90, 110}: mean 100, sample std sqrt(200)
    vals = np.full(24, 100.0)
    vals[0], vals[12] = 90.0, 110.0
    s = MonthlySeries(2000, 1, vals)
    stats = periodic_stats(s)
    assert stats.mean[0] == pytest.approx(100.0)
    assert stats.std[0] == pytest.approx(14.1421, abs=1e-4)
    assert stats.std[0] == pytest.approx(np.sqrt(200.0), rel=1e-12)


def test_periodic_stats_single_year_rejected():
    s = MonthlySeries(2000, 1, np.arange(1.0, 13.0))
    with pytest.raises(InsufficientDataError, match="Jan"):
        periodic_stats(s)
    # but a mean-only pass is allowed
    stats = periodic_stats(s, require_std=False)
    np.testing.assert_allclose(stats.mean, np.arange(1.0, 13.0))


def test_annual_stats_constant_series():
    s = MonthlySeries(2000, 1, np.full(60, 42.0))
    ann = annual_stats(s, 12)
    np.testing.assert_allclose(ann.a_series, 42.0)
    np.testing.assert_allclose(ann.a_std, 0.0)
    assert ann.first_index == 12


def test_annual_stats_hand_case():
    s = MonthlySeries(2000, 1, np.r_[np.arange(1.0, 13.0), 7.0])
    ann = annual_stats(s, 12)
    assert ann.a_series.shape == (1,)
    assert ann.a_series[0] == pytest.approx(6.5)


def test_annual_stats_boundary():
    s = MonthlySeries(2000, 1, np.arange(1.0, 13.0))
    with pytest.raises(InsufficientDataError):
        annual_stats(s, 12)


def test_annual_stats_population_divisor():
    rng = np.random.default_rng(1)
    s = MonthlySeries(2000, 1, 100.0 + rng.random(12 * 6))
    ann = annual_stats(s, 12)
    months = s.month_index()[12:]
    for m in range(12):
        group = ann.a_series[months == m]
        assert ann.a_std[m] == pytest.approx(np.std(group), rel=1e-12)  # divisor N
        assert ann.a_mean[m] == pytest.approx(np.mean(group), rel=1e-12)


def test_normalize_cases():
    vals = np.full(24, 100.0)
    vals[0], vals[12] = 90.0, 110.0
    s = MonthlySeries(2000, 1, vals)
    stats = periodic_stats(s, require_std=False)
    # override with a clean hand case: mean 100, std 20 everywhere
    stats = type(stats)(mean=np.full(12, 100.0), std=np.full(12, 20.0),
                        count=np.full(12, 2))
    z = normalize(MonthlySeries(2000, 1, [90.0]), stats)
    assert z[0] == pytest.approx(-0.5)
    z = normalize(MonthlySeries(2000, 1, np.full(24, 100.0)), stats)
    np.testing.assert_allclose(z, 0.0)
    z = normalize(MonthlySeries(2000, 1, np.full(24, 120.0)), stats)
    np.testing.assert_allclose(z, 1.0)


def test_normalize_degenerate_month():
    s = MonthlySeries(2000, 1, np.full(36, 5.0))
    stats = periodic_stats(s)
    with pytest.raises(DegenerateMonthError):
        normalize(s, stats)


@settings(max_examples=50, deadline=None)
@given(
    start_month=st.integers(1, 12),
    seed=st.integers(0, 2**32 - 1),
    n_years=st.integers(2, 8),
)
def test_normalize_roundtrip(start_month, seed, n_years):
    rng = np.random.default_rng(seed)
    vals = np.exp(rng.normal(4.0, 0.6, size=12 * n_years))
    s = MonthlySeries(2001, start_month, vals)
    stats = periodic_stats(s)
    z = normalize(s, stats)
    back = denormalize(z, s.start_year, s.start_month, stats)
    np.testing.assert_allclose(back, s.values, rtol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_periodic_stats_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    vals = 50.0 + rng.random(12 * 5)
    s = MonthlySeries(2000, 1, vals)
    base = periodic_stats(s)
    # permute observations within one calendar month (swap two years of March)
    swapped = vals.copy()
    swapped[2], swapped[26] = swapped[26], swapped[2]
    other = periodic_stats(MonthlySeries(2000, 1, swapped))
    np.testing.assert_allclose(other.mean, base.mean, rtol=1e-13)
    np.testing.assert_allclose(other.std, base.std, rtol=1e-13)


@settings(max_examples=30, deadline=None)
@given(shift=st.floats(1.0, 500.0), seed=st.integers(0, 2**32 - 1))
def test_annual_stats_shift_equivariance(shift, seed):
    rng = np.random.default_rng(seed)
    vals = 100.0 + 10.0 * rng.random(12 * 6)
    a = annual_stats(MonthlySeries(2000, 1, vals))
    b = annual_stats(MonthlySeries(2000, 1, vals + shift))
    np.testing.assert_allclose(b.a_series, a.a_series + shift, rtol=1e-10)
    np.testing.assert_allclose(b.a_mean, a.a_mean + shift, rtol=1e-10)
    np.testing.assert_allclose(b.a_std, a.a_std, atol=1e-10 * max(1.0, shift))
