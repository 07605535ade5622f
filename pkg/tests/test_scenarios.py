import math

import numpy as np
import pytest

from parpa import (
    DegenerateMonthError,
    FitMethod,
    InsufficientDataError,
    ModelKind,
    MonthlySeries,
    PeriodicModel,
    PeriodicStats,
    PositivityViolationError,
    build_correlation,
    fit_parp,
    fit_parpa,
    identity_correlation,
    lambda_bound,
    shifted_lognormal_params,
    simulate,
)
from parpa._kernels import active_backend

from conftest import gen_par1, gen_parpa

ONES = np.ones(12, dtype=np.int64)


def toy_model(phi=0.0, mu=100.0, sigma=20.0, resid_std=1.0):
    """Hand-built order-1 model with uniform per-month constants."""
    stats = PeriodicStats(mean=np.full(12, mu), std=np.full(12, sigma),
                          count=np.full(12, 99))
    return PeriodicModel(orders=ONES, phi=np.full((12, 1), phi), psi=None,
                         resid_std=np.full(12, resid_std), stats=stats,
                         annual=None, kind=ModelKind.PARP)


class TestLambdaBound:
    def test_zero_phi_hand_case(self):
        model = toy_model(phi=0.0)
        assert lambda_bound(model, 1, [0.0]) == pytest.approx(-5.0)

    def test_with_lag_hand_case(self):
        model = toy_model(phi=0.5)
        assert lambda_bound(model, 1, [1.0]) == pytest.approx(-5.5)

    def test_zero_conditional_mean_boundary(self):
        # engineered state: conditional mean exactly zero -> bound is zero
        model = toy_model(phi=0.5)
        lam = lambda_bound(model, 1, [-10.0])  # -5 - 0.5*(-10) = 0
        assert lam == pytest.approx(0.0)
        with pytest.raises(PositivityViolationError):
            shifted_lognormal_params(lam, 1.0)

    def test_state_dependence(self):
        model = toy_model(phi=0.5)
        assert lambda_bound(model, 1, [1.0]) != lambda_bound(model, 1, [-1.0])

    def test_degenerate_sigma(self):
        model = toy_model()
        broken = PeriodicStats(mean=model.stats.mean,
                               std=np.zeros(12), count=model.stats.count)
        degenerate = PeriodicModel(orders=model.orders, phi=model.phi, psi=None,
                                   resid_std=model.resid_std, stats=broken,
                                   annual=None, kind=ModelKind.PARP)
        with pytest.raises(DegenerateMonthError):
            lambda_bound(degenerate, 1, [0.0])


class TestShiftedLogNormal:
    def test_closed_form_case(self):
        p = shifted_lognormal_params(-2.0, 1.0)
        assert p.theta == pytest.approx(1.25, rel=1e-12)
        assert p.sigma_xi**2 == pytest.approx(0.223144, abs=1e-6)
        assert p.mu_xi == pytest.approx(0.581575, abs=1e-6)
        assert math.exp(p.mu_xi + p.sigma_xi**2 / 2) == pytest.approx(2.0, rel=1e-12)

    def test_rejects_nonnegative_shift(self):
        with pytest.raises(PositivityViolationError):
            shifted_lognormal_params(0.0, 1.0)
        with pytest.raises(PositivityViolationError):
            shifted_lognormal_params(0.5, 1.0)

    def test_rejects_bad_std(self):
        with pytest.raises(ValueError):
            shifted_lognormal_params(-1.0, 0.0)
        with pytest.raises(ValueError):
            shifted_lognormal_params(-1.0, -2.0)

    def test_identities_hold_over_random_pairs(self, rng):
        for _ in range(500):
            lam = -float(rng.uniform(0.05, 50.0))
            sd = float(rng.uniform(0.01, 5.0))
            p = shifted_lognormal_params(lam, sd)
            assert abs(math.exp(p.mu_xi + p.sigma_xi**2 / 2) + lam) < 1e-9 * max(1, -lam)
            assert abs(p.sigma_xi**2 - math.log(p.theta)) < 1e-12
            assert p.resid_std == pytest.approx(sd, rel=1e-9)

    def test_monte_carlo_moments(self, rng):
        # independent sampler: draw xi directly, never through the kernels
        lam, sd = -2.5, 1.3
        p = shifted_lognormal_params(lam, sd)
        draws = np.exp(rng.normal(p.mu_xi, p.sigma_xi, size=1_000_000)) + lam
        assert abs(draws.mean()) < 4 * sd / 1000.0
        assert abs(draws.std() - sd) < 0.01 * sd * 4


class TestBuildCorrelation:
    def test_scalar_case(self, rng):
        months = np.tile(np.arange(12), 40)
        resid = rng.standard_normal(months.size)
        corr = build_correlation(months, resid)
        np.testing.assert_allclose(corr.corr, np.ones((12, 1, 1)))
        np.testing.assert_allclose(corr.chol, np.ones((12, 1, 1)))

    def test_independent_residuals_near_identity(self, rng):
        months = np.tile(np.arange(12), 3000)
        resid = rng.standard_normal((months.size, 3))
        corr = build_correlation(months, resid)
        for m in range(12):
            np.testing.assert_allclose(corr.corr[m], np.eye(3), atol=0.05)
            np.testing.assert_allclose(corr.chol[m], np.eye(3), atol=0.05)

    def test_known_pair_correlation(self, rng):
        months = np.tile(np.arange(12), 20000)
        base = rng.standard_normal(months.size)
        other = 0.5 * base + np.sqrt(1 - 0.25) * rng.standard_normal(months.size)
        corr = build_correlation(months, np.column_stack([base, other]))
        expected = np.array([[1.0, 0.0], [0.5, np.sqrt(0.75)]])
        for m in range(12):
            np.testing.assert_allclose(corr.chol[m], expected, atol=0.02)

    def test_cholesky_identity_invariant(self, rng):
        months = np.tile(np.arange(12), 50)
        resid = rng.standard_normal((months.size, 4))
        corr = build_correlation(months, resid)
        for m in range(12):
            np.testing.assert_allclose(corr.chol[m] @ corr.chol[m].T,
                                       corr.corr[m], atol=1e-9)
            np.testing.assert_allclose(np.diag(corr.corr[m]), 1.0, rtol=0)

    def test_semidefinite_repaired_by_jitter(self, rng):
        # three perfectly collinear subsystems: sample correlation is rank 1
        months = np.tile(np.arange(12), 30)
        base = rng.standard_normal(months.size)
        resid = np.column_stack([base, 2.0 * base, -base])
        corr = build_correlation(months, resid)
        # raw Cholesky may survive on a lucky rounding for a few months, but
        # the ladder has to engage somewhere on a rank-1 matrix
        assert np.any(corr.jitter > 0)
        for m in range(12):
            np.testing.assert_allclose(corr.chol[m] @ corr.chol[m].T,
                                       corr.corr[m], atol=1e-12)

    def test_insufficient_month(self, rng):
        months = np.zeros(5, dtype=int)  # January only
        with pytest.raises(InsufficientDataError):
            build_correlation(months, rng.standard_normal((5, 2)))


class TestSimulate:
    def test_invalid_arguments(self, rng):
        s = gen_par1(rng, 600, 0.4)
        model = fit_parp(s, ONES)
        with pytest.raises(ValueError):
            simulate(model, s, horizon=0)
        with pytest.raises(ValueError):
            simulate(model, s, horizon=12, n_scenarios=0)

    def test_zero_resid_std_refused(self, rng):
        s = gen_par1(rng, 600, 0.4)
        model = fit_parp(s, ONES)
        broken = PeriodicModel(orders=model.orders, phi=model.phi, psi=None,
                               resid_std=np.zeros(12), stats=model.stats,
                               annual=None, kind=ModelKind.PARP)
        with pytest.raises(ValueError):
            simulate(broken, s, horizon=12, n_scenarios=10)

    def test_scenario_mean_tracks_month_means(self, rng):
        # phi = 0: every step's mean must equal the month mean within MC noise
        s = gen_par1(rng, 80 * 12, 0.0)
        model = fit_parp(s, ONES)
        flat = PeriodicModel(orders=model.orders, phi=np.zeros_like(model.phi),
                             psi=None, resid_std=model.resid_std, stats=model.stats,
                             annual=None, kind=ModelKind.PARP)
        panel = simulate(flat, s, horizon=24, n_scenarios=2000, seed=11)
        months = (s.month_index()[-1] + 1 + np.arange(24)) % 12
        mean = panel.mean_forecast()[:, 0]
        for k in range(24):
            m = months[k]
            tol = 3.0 * model.stats.std[m] * model.resid_std[m] / np.sqrt(2000)
            assert abs(mean[k] - model.stats.mean[m]) < tol

    def test_panel_positive_and_reproducible(self, rng):
        s, _, _ = gen_parpa(rng, 150 * 12, phi=0.35, psi=0.2)
        model = fit_parpa(s, ONES)
        panel = simulate(model, s, horizon=60, n_scenarios=500, seed=99)
        assert np.all(panel.values > 0)
        again = simulate(model, s, horizon=60, n_scenarios=500, seed=99)
        np.testing.assert_array_equal(panel.values, again.values)
        other = simulate(model, s, horizon=60, n_scenarios=500, seed=100)
        assert not np.array_equal(panel.values, other.values)

    def test_backends_agree(self, rng):
        if active_backend() != "numba":
            pytest.skip("numba backend unavailable")
        s = gen_par1(rng, 100 * 12, 0.5)
        model = fit_parp(s, ONES)
        a = simulate(model, s, horizon=36, n_scenarios=300, seed=3, backend="numba")
        b = simulate(model, s, horizon=36, n_scenarios=300, seed=3, backend="numpy")
        np.testing.assert_allclose(a.values, b.values, rtol=1e-12)

    def test_correlation_recovered_in_panel(self, rng):
        # two subsystems, month-constant true correlation 0.6
        s1 = gen_par1(rng, 120 * 12, 0.3, label="A")
        s2 = gen_par1(rng, 120 * 12, 0.3, label="B")
        m1, m2 = fit_parp(s1, ONES), fit_parp(s2, ONES)
        corr = identity_correlation(2, ("A", "B"))
        rho = 0.6
        target = np.broadcast_to(np.array([[1.0, rho], [rho, 1.0]]), (12, 2, 2)).copy()
        chol = np.linalg.cholesky(target)
        corr = type(corr)(corr=target, chol=chol, jitter=np.zeros(12),
                          subsystems=("A", "B"))
        panel = simulate([m1, m2], [s1, s2], corr, horizon=12,
                         n_scenarios=100_000, seed=5)
        # correlation of the step-1 values across scenarios approximates rho
        sample = np.corrcoef(panel.values[:, 0, 0], panel.values[:, 0, 1])[0, 1]
        assert abs(sample - rho) < 0.03

    def test_histories_must_align(self, rng):
        s1 = gen_par1(rng, 600, 0.3, label="A")
        s2 = gen_par1(rng, 599, 0.3, label="B")
        with pytest.raises(ValueError):
            simulate([fit_parp(s1, ONES), fit_parp(s2, ONES)], [s1, s2], horizon=6,
                     n_scenarios=10)

    def test_positivity_violation_is_reported_with_context(self):
        # an explosive coefficient and a history far below the mean force a
        # nonnegative bound: -mu/sigma - 1.5 * (-4.5) = +1.75
        model = toy_model(phi=1.5, mu=100.0, sigma=20.0, resid_std=0.5)
        hist = MonthlySeries(2000, 12, [10.0])
        with pytest.raises(PositivityViolationError, match="scenario 1, step 1"):
            simulate(model, hist, horizon=1, n_scenarios=4, seed=0)

    def test_panel_csv_dump(self, rng, tmp_path):
        s = gen_par1(rng, 50 * 12, 0.2)
        model = fit_parp(s, ONES)
        panel = simulate(model, s, horizon=3, n_scenarios=2, seed=1)
        path = tmp_path / "panel.csv"
        panel.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "omega,k,subsystem,value"
        assert len(lines) == 1 + 2 * 3
