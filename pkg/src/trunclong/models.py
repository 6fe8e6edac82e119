"""Estimator classes with the scikit-learn fit/get_params surface.

Each class wraps one estimand engine: construct with the engine's
options, call ``fit(cohort)``, and read ``report_`` (an
:class:`~trunclong.estimators.EstimandReport`) plus any engine-specific
fitted attributes.  The classes are plain ``BaseEstimator`` subclasses,
so ``get_params`` / ``set_params`` / ``clone`` work as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .cohort import Cohort
from .estimators import (
    DEFAULT_REF_AGE,
    ModelSpec,
    compute_pah_curve,
    joint_pah,
    naive_extrapolation_summary,
    pattern_mixture_fit,
    principal_strat_estimate,
    rca_fit_with_model,
    terminal_decline_fit,
    unconditional_fit_with_model,
    _regressor_value,
)

__all__ = [
    "NaiveExtrapolation",
    "UnconditionalMixedModel",
    "PatternMixtureModel",
    "PrincipalStratification",
    "TerminalDeclineModel",
    "RegressionConditioningOnAlive",
    "AliveAndHealthy",
]


class _CohortEstimator(BaseEstimator):
    def _report(self):
        if not hasattr(self, "report_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet; call fit(cohort) first")
        return self.report_


def _trajectory_eval(columns, beta, times, group, baseline_age):
    X = np.array(
        [[_regressor_value(r, float(group), baseline_age, float(t)) for r in columns] for t in times]
    )
    return X @ beta


class NaiveExtrapolation(_CohortEstimator):
    """Per-subject lines extended past death to a horizon, then averaged."""

    def __init__(self, horizon: float = 5.0, matching_window: float = 0.0):
        self.horizon = horizon
        self.matching_window = matching_window

    def fit(self, cohort: Cohort, y=None):
        self.report_ = naive_extrapolation_summary(cohort, self.horizon, self.matching_window)
        return self


class UnconditionalMixedModel(_CohortEstimator):
    """Random intercept-and-slope model treating deaths as missing at random."""

    def __init__(
        self,
        regressors: tuple[str, ...] = ("intercept", "time"),
        horizons: tuple[float, ...] = (),
        ref_age: float = DEFAULT_REF_AGE,
        trajectory_times: tuple[float, ...] | None = None,
    ):
        self.regressors = regressors
        self.horizons = horizons
        self.ref_age = ref_age
        self.trajectory_times = trajectory_times

    def fit(self, cohort: Cohort, y=None):
        spec = ModelSpec(fixed_regressors=tuple(self.regressors))
        self.report_, self.lmm_ = unconditional_fit_with_model(
            cohort, spec, tuple(self.horizons), self.ref_age, self.trajectory_times
        )
        return self

    def predict(self, times, group: int = 0, baseline_age: float | None = None):
        self._report()
        age = self.ref_age if baseline_age is None else baseline_age
        return _trajectory_eval(self.lmm_.columns, self.lmm_.beta, times, group, age)


class PatternMixtureModel(_CohortEstimator):
    """Separate trajectory fits per stratum defined by time of death."""

    def __init__(
        self,
        boundaries: tuple[float, ...] = (),
        regressors: tuple[str, ...] = ("intercept", "time"),
        random_effects: str = "intercept_slope",
        horizon: float | None = None,
        ref_age: float = DEFAULT_REF_AGE,
        matching_window: float = 0.0,
    ):
        self.boundaries = boundaries
        self.regressors = regressors
        self.random_effects = random_effects
        self.horizon = horizon
        self.ref_age = ref_age
        self.matching_window = matching_window

    def fit(self, cohort: Cohort, y=None):
        spec = ModelSpec(fixed_regressors=tuple(self.regressors), random_effects=self.random_effects)
        self.report_ = pattern_mixture_fit(
            cohort, list(self.boundaries), spec, self.horizon, self.ref_age, self.matching_window
        )
        return self


class PrincipalStratification(_CohortEstimator):
    """Always-survivor group contrast under explainable nonrandom survival."""

    def __init__(
        self,
        horizon: float = 5.0,
        confounders: tuple[str, ...] = ("baseline_age",),
        response_time: float | None = None,
        matching_window: float = 0.0,
    ):
        self.horizon = horizon
        self.confounders = confounders
        self.response_time = response_time
        self.matching_window = matching_window

    def fit(self, cohort: Cohort, y=None):
        self.report_ = principal_strat_estimate(
            cohort, self.horizon, tuple(self.confounders), self.response_time, self.matching_window
        )
        return self

    @property
    def contrast_(self) -> float:
        return self._report().value("difference")


class TerminalDeclineModel(_CohortEstimator):
    """Decedents-only fit on the years-from-death time scale."""

    def __init__(
        self,
        regressors: tuple[str, ...] = ("intercept", "time"),
        random_effects: str = "none",
        eval_times: tuple[float, ...] = (),
        ref_age: float = DEFAULT_REF_AGE,
    ):
        self.regressors = regressors
        self.random_effects = random_effects
        self.eval_times = eval_times
        self.ref_age = ref_age

    def fit(self, cohort: Cohort, y=None):
        spec = ModelSpec(
            fixed_regressors=tuple(self.regressors),
            random_effects=self.random_effects,
            time_scale="from_death",
        )
        self.report_ = terminal_decline_fit(cohort, spec, tuple(self.eval_times), self.ref_age)
        return self


class RegressionConditioningOnAlive(_CohortEstimator):
    """Pooled regression over survivors with cluster-robust standard errors."""

    def __init__(
        self,
        regressors: tuple[str, ...] = ("intercept", "time"),
        horizons: tuple[float, ...] = (),
        ref_age: float = DEFAULT_REF_AGE,
        trajectory_times: tuple[float, ...] | None = None,
    ):
        self.regressors = regressors
        self.horizons = horizons
        self.ref_age = ref_age
        self.trajectory_times = trajectory_times

    def fit(self, cohort: Cohort, y=None):
        spec = ModelSpec(fixed_regressors=tuple(self.regressors), random_effects="none")
        self.report_, self.linear_ = rca_fit_with_model(
            cohort, spec, tuple(self.horizons), self.ref_age, self.trajectory_times
        )
        self.cov_robust_ = self.linear_.cov_robust
        return self

    def predict(self, times, group: int = 0, baseline_age: float | None = None):
        self._report()
        age = self.ref_age if baseline_age is None else baseline_age
        return _trajectory_eval(self.linear_.columns, self.linear_.beta, times, group, age)


class AliveAndHealthy(_CohortEstimator):
    """Empirical alive-and-healthy proportion of the baseline cohort over time."""

    def __init__(
        self,
        threshold: float = 80.0,
        times: tuple[float, ...] = (),
        by_group: bool = True,
        matching_window: float = 0.0,
    ):
        self.threshold = threshold
        self.times = times
        self.by_group = by_group
        self.matching_window = matching_window

    def fit(self, cohort: Cohort, y=None):
        self.report_ = joint_pah(
            cohort, self.threshold, tuple(self.times), self.by_group, self.matching_window
        )
        self.curve_ = compute_pah_curve(
            cohort, self.threshold, tuple(self.times), self.by_group, self.matching_window
        )
        return self
