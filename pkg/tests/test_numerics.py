import numpy as np
import pytest

from _oracles import (
    logistic_grid_mle,
    logistic_loglik,
    ols_by_inversion,
    sandwich_brute_force,
)
from trunclong.estimators import build_design
from trunclong.numerics import (
    DesignMatrix,
    SeparationError,
    SingularDesignError,
    logistic_fit,
    ols,
    sandwich_covariance,
)


def _design(values, columns, clusters=None):
    values = np.asarray(values, dtype=float)
    if clusters is None:
        clusters = np.arange(values.shape[0])
    return DesignMatrix(values, columns, np.asarray(clusters))


def pooled_table_design(cohort):
    return build_design(cohort, ("intercept", "time"))


class TestOls:
    def test_pooled_linear_fit_of_bundled_cohort(self, table_cohort):
        X, y = pooled_table_design(table_cohort)
        fit = ols(X, y)
        assert fit.beta[0] == pytest.approx(1371.0 / 18.0, abs=1e-9)
        assert fit.beta[1] == pytest.approx(11.0 / 12.0, abs=1e-9)
        assert fit.n_obs == 18
        assert fit.n_clusters == 4

    def test_response_equal_to_one_column(self):
        rng = np.random.default_rng(1)
        X = _design(np.column_stack([np.ones(12), rng.normal(size=12), rng.normal(size=12)]),
                    ("intercept", "a", "b"))
        y = X.values[:, 1].copy()
        fit = ols(X, y)
        assert np.allclose(fit.beta, [0.0, 1.0, 0.0], atol=1e-10)
        assert fit.sigma2 == pytest.approx(0.0, abs=1e-12)

    def test_matches_normal_equations_oracle(self):
        rng = np.random.default_rng(7)
        X = _design(np.column_stack([np.ones(10), rng.normal(size=10), rng.normal(size=10)]),
                    ("intercept", "a", "b"))
        y = rng.normal(size=10)
        fit = ols(X, y)
        assert np.allclose(fit.beta, ols_by_inversion(X.values, y), atol=1e-10)

    def test_weighted_matches_oracle(self):
        rng = np.random.default_rng(8)
        X = _design(np.column_stack([np.ones(15), rng.normal(size=15)]), ("intercept", "a"))
        y = rng.normal(size=15)
        w = rng.uniform(0.2, 3.0, size=15)
        fit = ols(X, y, weights=w)
        assert np.allclose(fit.beta, ols_by_inversion(X.values, y, w), atol=1e-10)
        resid = y - X.values @ fit.beta
        rss = float(np.sum(w * resid**2))
        assert fit.sigma2 == pytest.approx(rss / 13.0, rel=1e-12)

    def test_singular_design_names_offending_columns(self):
        base = np.column_stack([np.ones(9), np.arange(9.0)])
        X = _design(np.column_stack([base, 2.0 * base[:, 1]]), ("intercept", "t", "t_copy"))
        with pytest.raises(SingularDesignError) as err:
            ols(X, np.arange(9.0))
        assert "t_copy" in err.value.columns or "t" in err.value.columns
        assert err.value.rank == 2

    def test_residuals_orthogonal_to_design(self, table_cohort):
        X, y = pooled_table_design(table_cohort)
        fit = ols(X, y)
        resid = y - X.values @ fit.beta
        assert np.max(np.abs(X.values.T @ resid)) < 1e-8 * max(1.0, np.abs(y).sum())

    def test_dimension_mismatch(self, table_cohort):
        X, y = pooled_table_design(table_cohort)
        with pytest.raises(ValueError):
            ols(X, y[:-1])
        with pytest.raises(ValueError):
            ols(X, y, weights=np.ones(3))

    def test_deterministic(self, table_cohort):
        X, y = pooled_table_design(table_cohort)
        a, b = ols(X, y), ols(X, y)
        assert a.beta.tobytes() == b.beta.tobytes()
        assert a.cov_model.tobytes() == b.cov_model.tobytes()

    def test_covariances_are_symmetric_psd(self, table_cohort):
        X, y = pooled_table_design(table_cohort)
        fit = ols(X, y)
        robust = sandwich_covariance(X, y, fit.beta)
        for cov in (fit.cov_model, robust):
            assert np.allclose(cov, cov.T, atol=1e-12)
            assert np.linalg.eigvalsh(cov).min() > -1e-8


class TestSandwich:
    def test_zero_residuals_give_zero_matrix(self):
        X = _design(np.column_stack([np.ones(6), np.arange(6.0)]), ("intercept", "t"),
                    clusters=[0, 0, 1, 1, 2, 2])
        beta = np.array([2.0, -1.0])
        y = X.values @ beta
        cov = sandwich_covariance(X, y, beta)
        assert np.allclose(cov, 0.0, atol=1e-12)

    def test_singleton_clusters_equal_hc0(self):
        rng = np.random.default_rng(3)
        X = _design(np.column_stack([np.ones(14), rng.normal(size=14)]), ("intercept", "a"))
        y = rng.normal(size=14)
        beta = ols(X, y).beta
        cov = sandwich_covariance(X, y, beta)
        resid = y - X.values @ beta
        bread = np.linalg.inv(X.values.T @ X.values)
        meat = (X.values * (resid**2)[:, None]).T @ X.values
        hc0 = bread @ meat @ bread
        assert np.allclose(cov, hc0, rtol=1e-10, atol=1e-14)

    def test_three_cluster_hand_instance_matches_brute_force(self):
        X = _design(
            [[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 0.0], [1.0, 3.0], [1.0, 1.0], [1.0, 4.0]],
            ("intercept", "t"),
            clusters=["u", "u", "u", "v", "v", "w", "w"],
        )
        y = np.array([5.0, 4.0, 6.0, 7.0, 2.0, 3.0, 8.0])
        beta = ols(X, y).beta
        cov = sandwich_covariance(X, y, beta)
        oracle = sandwich_brute_force(X.values, y, beta, list(X.cluster_ids))
        assert np.allclose(cov, oracle, rtol=1e-10, atol=1e-14)

    def test_bundled_cohort_matches_brute_force(self, table_cohort):
        X, y = pooled_table_design(table_cohort)
        beta = ols(X, y).beta
        cov = sandwich_covariance(X, y, beta)
        oracle = sandwich_brute_force(X.values, y, beta, list(X.cluster_ids))
        assert np.allclose(cov, oracle, rtol=1e-10, atol=1e-14)


class TestLogistic:
    def test_intercept_only_even_split(self):
        X = _design(np.ones((4, 1)), ("intercept",))
        fit = logistic_fit(X, np.array([1.0, 1.0, 0.0, 0.0]))
        assert fit.beta[0] == pytest.approx(0.0, abs=1e-12)
        assert fit.converged

    def test_intercept_only_three_quarters(self):
        X = _design(np.ones((4, 1)), ("intercept",))
        fit = logistic_fit(X, np.array([1.0, 1.0, 1.0, 0.0]))
        assert fit.beta[0] == pytest.approx(np.log(3.0), abs=1e-9)

    def test_six_point_instance_matches_grid_oracle(self):
        x = np.array([-2.0, -1.0, 0.0, 0.0, 1.0, 2.0])
        d = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0])
        X = _design(np.column_stack([np.ones(6), x]), ("intercept", "x"))
        fit = logistic_fit(X, d)
        # frozen value computed with the grid oracle below
        assert fit.beta[0] == pytest.approx(0.0, abs=1e-4)
        assert fit.beta[1] == pytest.approx(0.4196176, abs=1e-4)
        grid_beta, grid_ll = logistic_grid_mle(X.values, d, lo=(-5.0, -5.0), hi=(5.0, 5.0))
        assert np.max(np.abs(fit.beta - grid_beta)) < 1e-4
        assert fit.loglik == pytest.approx(grid_ll, abs=1e-6)

    def test_score_vanishes_at_solution(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=40)
        eta = 0.3 - 0.8 * x
        d = (rng.uniform(size=40) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
        X = _design(np.column_stack([np.ones(40), x]), ("intercept", "x"))
        fit = logistic_fit(X, d)
        mu = 1.0 / (1.0 + np.exp(-(X.values @ fit.beta)))
        assert np.max(np.abs(X.values.T @ (d - mu))) < 1e-8

    def test_loglik_trace_is_monotone(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=60)
        d = (rng.uniform(size=60) < 0.3).astype(float)
        X = _design(np.column_stack([np.ones(60), x]), ("intercept", "x"))
        fit = logistic_fit(X, d)
        diffs = np.diff(fit.loglik_trace)
        assert np.all(diffs >= -1e-12)
        assert fit.loglik_trace[-1] == pytest.approx(logistic_loglik(X.values, d, fit.beta), abs=1e-12)

    def test_complete_separation_raises(self):
        x = np.array([-3.0, -2.0, -1.0, 1.0, 2.0, 3.0])
        d = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
        X = _design(np.column_stack([np.ones(6), x]), ("intercept", "x"))
        with pytest.raises(SeparationError):
            logistic_fit(X, d)

    def test_outcome_validation(self):
        X = _design(np.ones((4, 1)), ("intercept",))
        with pytest.raises(ValueError):
            logistic_fit(X, np.array([0.0, 0.5, 1.0, 1.0]))
        with pytest.raises(ValueError):
            logistic_fit(X, np.array([1.0, 1.0, 1.0, 1.0]))

    def test_deterministic(self):
        x = np.array([-2.0, -1.0, 0.0, 0.0, 1.0, 2.0])
        d = np.array([0.0, 1.0, 0.0, 1.0, 0.0, 1.0])
        X = _design(np.column_stack([np.ones(6), x]), ("intercept", "x"))
        a, b = logistic_fit(X, d), logistic_fit(X, d)
        assert a.beta.tobytes() == b.beta.tobytes()


class TestDesignMatrix:
    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            _design([[1.0, np.nan]], ("intercept", "x"))

    def test_rejects_bad_cluster_length(self):
        with pytest.raises(ValueError):
            DesignMatrix(np.ones((3, 1)), ("intercept",), np.arange(2))

    def test_column_lookup(self, table_cohort):
        X, _ = pooled_table_design(table_cohort)
        assert np.allclose(X.column("intercept"), 1.0)
        with pytest.raises(KeyError):
            X.column("nope")
