import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from trunclong.models import (
    AliveAndHealthy,
    NaiveExtrapolation,
    PatternMixtureModel,
    PrincipalStratification,
    RegressionConditioningOnAlive,
    TerminalDeclineModel,
    UnconditionalMixedModel,
)
from trunclong.simulator import SimConfig, simulate

ALL_ESTIMATORS = [
    NaiveExtrapolation(),
    UnconditionalMixedModel(),
    PatternMixtureModel(),
    PrincipalStratification(),
    TerminalDeclineModel(),
    RegressionConditioningOnAlive(),
    AliveAndHealthy(times=(0.0, 1.0)),
]


@pytest.mark.parametrize("estimator", ALL_ESTIMATORS, ids=lambda e: type(e).__name__)
def test_get_params_set_params_clone(estimator):
    params = estimator.get_params()
    assert params
    twin = clone(estimator)
    assert twin.get_params() == params
    key = next(iter(params))
    twin.set_params(**{key: params[key]})


@pytest.mark.parametrize("estimator", ALL_ESTIMATORS, ids=lambda e: type(e).__name__)
def test_unfitted_access_raises(estimator):
    with pytest.raises(NotFittedError):
        estimator._report()


def test_fit_returns_self_and_exposes_report(table_cohort):
    est = NaiveExtrapolation(horizon=5.0)
    assert est.fit(table_cohort) is est
    assert est.report_.value("mean_at_5") == pytest.approx(54.5, abs=1e-9)


def test_rca_class_matches_function(table_cohort):
    est = RegressionConditioningOnAlive(regressors=("intercept", "time"), horizons=(5.0,))
    est.fit(table_cohort)
    assert est.report_.value("coef:time") == pytest.approx(11.0 / 12.0, abs=1e-9)
    pred = est.predict([0.0, 5.0])
    assert pred[1] == pytest.approx(80.75, abs=1e-9)
    assert est.cov_robust_.shape == (2, 2)


def test_unconditional_class_predicts_population_trajectory(table_cohort):
    est = UnconditionalMixedModel(regressors=("intercept", "time"), horizons=(5.0,))
    est.fit(table_cohort)
    pred = est.predict([5.0])
    assert pred[0] == pytest.approx(est.report_.value("mean_at_5"), abs=1e-9)


def test_pattern_mixture_class(table_cohort):
    est = PatternMixtureModel(boundaries=(0.0, 6.0), random_effects="none", horizon=5.0)
    est.fit(table_cohort)
    assert est.report_.strata["survivor"].value("mean_at_5") == pytest.approx(82.0, abs=1e-9)


def test_terminal_decline_class(table_cohort):
    est = TerminalDeclineModel(random_effects="none")
    est.fit(table_cohort)
    assert est.report_.value("slope") == pytest.approx(-9.5, abs=1e-9)


def test_alive_and_healthy_class(table_cohort):
    est = AliveAndHealthy(threshold=80.0, times=tuple(float(t) for t in range(6)))
    est.fit(table_cohort)
    assert est.curve_.groups["all"].proportions[0] == 0.75
    assert est.report_.value("pah_at_5") == 0.25


def test_principal_stratification_class_contrast():
    config = SimConfig(n_subjects=800, seed=19, horizon=5, p_group=0.5,
                       intercept_mean=(85.0, 85.0), intercept_sd=(7.0, 7.0),
                       slope_mean=(-1.0, -1.0), slope_sd=(0.0, 0.0), residual_sd=2.0,
                       hazard_intercept=3.2, hazard_response_coef=-0.07)
    cohort, _ = simulate(config)
    est = PrincipalStratification(horizon=5.0, confounders=("baseline_frailty",), response_time=5.0)
    est.fit(cohort)
    assert np.isfinite(est.contrast_)
    assert est.report_.model_kind == "principal_strat"
