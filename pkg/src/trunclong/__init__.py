"""Analysis of longitudinal outcomes truncated by death.

Provides a cohort data model, six estimand engines that accommodate
deaths in deliberately different ways, nonresponse imputation, a
counterfactual cohort simulator, and a command-line front end.
"""

from .cohort import (
    Cohort,
    DeathStratum,
    Observation,
    Subject,
    Violation,
    assign_strata,
    cohort_fingerprint,
    read_cohort_csv,
    survivors_at,
    validate,
    write_cohort_csv,
    years_from_death_view,
)
from .datasets import hypothetical_cohort
from .estimators import (
    EstimandReport,
    ModelSpec,
    PahCurve,
    joint_pah,
    naive_extrapolation_summary,
    pattern_mixture_fit,
    principal_strat_estimate,
    rca_fit,
    terminal_decline_fit,
    unconditional_fit,
)
from .imputation import em_mvn, impute_single
from .models import (
    AliveAndHealthy,
    NaiveExtrapolation,
    PatternMixtureModel,
    PrincipalStratification,
    RegressionConditioningOnAlive,
    TerminalDeclineModel,
    UnconditionalMixedModel,
)
from .simulator import SimConfig, simulate, true_estimands

__version__ = "0.1.0"

__all__ = [
    "AliveAndHealthy",
    "Cohort",
    "DeathStratum",
    "EstimandReport",
    "ModelSpec",
    "NaiveExtrapolation",
    "Observation",
    "PahCurve",
    "PatternMixtureModel",
    "PrincipalStratification",
    "RegressionConditioningOnAlive",
    "SimConfig",
    "Subject",
    "TerminalDeclineModel",
    "UnconditionalMixedModel",
    "Violation",
    "assign_strata",
    "cohort_fingerprint",
    "em_mvn",
    "hypothetical_cohort",
    "impute_single",
    "joint_pah",
    "naive_extrapolation_summary",
    "pattern_mixture_fit",
    "principal_strat_estimate",
    "rca_fit",
    "read_cohort_csv",
    "simulate",
    "survivors_at",
    "terminal_decline_fit",
    "true_estimands",
    "unconditional_fit",
    "validate",
    "write_cohort_csv",
    "years_from_death_view",
    "__version__",
]
