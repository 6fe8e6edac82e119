"""Estimand engines for longitudinal cohorts with deaths.

Each engine maps a cohort to an :class:`EstimandReport`, accommodating
deaths in a deliberately different way: extrapolating past them, treating
them as missing at random, stratifying on them, conditioning on
counterfactual survival, re-indexing time from death, restricting to the
dynamic survivor cohort, or folding survival into a joint alive-and-healthy
outcome.  The engines answer different questions about the same data, so
every estimate carries an explicit conditioning label and reports from
different engines are compared side by side, never merged or averaged.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cohort import (
    Cohort,
    Subject,
    assign_strata,
    cohort_fingerprint,
    survivors_at,
    years_from_death_view,
)
from .numerics import (
    DesignMatrix,
    LinearFit,
    LmmFit,
    lmm_fit,
    logistic_fit,
    ols,
    sandwich_covariance,
)

__all__ = [
    "REGRESSORS",
    "ModelSpec",
    "Estimate",
    "TrajectoryPoint",
    "EstimandReport",
    "PahSeries",
    "PahCurve",
    "build_design",
    "subject_lines",
    "weighted_mean",
    "naive_extrapolation_summary",
    "unconditional_fit",
    "pattern_mixture_fit",
    "principal_strat_estimate",
    "terminal_decline_fit",
    "rca_fit",
    "compute_pah_curve",
    "joint_pah",
    "MODEL_KINDS",
]

REGRESSORS = ("intercept", "group", "baseline_age", "time", "time2", "group:time", "group:time2")

MODEL_KINDS = (
    "unconditional",
    "naive_extrapolation",
    "pattern_mixture",
    "principal_strat",
    "terminal_decline",
    "rca",
    "joint_pah",
)

DEFAULT_REF_AGE = 70.0
_TIME_EPS = 1e-9


@dataclass(frozen=True)
class ModelSpec:
    """Regression specification shared by the fitted engines.

    ``fixed_regressors`` is a subset of :data:`REGRESSORS`;
    ``random_effects`` is ``"intercept_slope"`` or ``"none"``;
    ``time_scale`` is ``"from_baseline"`` or ``"from_death"``.
    """

    fixed_regressors: tuple[str, ...] = REGRESSORS
    random_effects: str = "intercept_slope"
    time_scale: str = "from_baseline"

    def __post_init__(self) -> None:
        object.__setattr__(self, "fixed_regressors", tuple(self.fixed_regressors))
        unknown = [r for r in self.fixed_regressors if r not in REGRESSORS]
        if unknown:
            raise ValueError(f"unknown regressors {unknown}; choose from {REGRESSORS}")
        if not self.fixed_regressors:
            raise ValueError("fixed_regressors must not be empty")
        if self.random_effects not in ("intercept_slope", "none"):
            raise ValueError(f"random_effects must be 'intercept_slope' or 'none', got {self.random_effects!r}")
        if self.time_scale not in ("from_baseline", "from_death"):
            raise ValueError(f"time_scale must be 'from_baseline' or 'from_death', got {self.time_scale!r}")


@dataclass(frozen=True)
class Estimate:
    """A named estimand value, its units, and its conditioning set."""

    name: str
    value: float
    units: str
    conditioning: str


@dataclass(frozen=True)
class TrajectoryPoint:
    group: str
    stratum: str
    time: float
    value: float


@dataclass(frozen=True)
class EstimandReport:
    """Output of one estimand engine.

    Estimates from different ``model_kind`` values target different
    quantities even when their names coincide; the ``conditioning`` label
    on each estimate says what was held fixed or conditioned on.
    """

    model_kind: str
    estimates: tuple[Estimate, ...] = ()
    standard_errors: dict = field(default_factory=dict)
    strata: dict = field(default_factory=dict)
    trajectories: tuple[TrajectoryPoint, ...] = ()
    notes: tuple[str, ...] = ()
    fingerprint: str | None = None

    def __post_init__(self) -> None:
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")

    def estimate(self, name: str) -> Estimate:
        for est in self.estimates:
            if est.name == name:
                return est
        raise KeyError(f"report has no estimate named {name!r}")

    def value(self, name: str) -> float:
        return self.estimate(name).value

    def to_dict(self) -> dict:
        return {
            "model_kind": self.model_kind,
            "estimates": [
                {"name": e.name, "value": e.value, "units": e.units, "conditioning": e.conditioning}
                for e in self.estimates
            ],
            "standard_errors": dict(self.standard_errors),
            "strata": {label: sub.to_dict() for label, sub in self.strata.items()},
            "trajectories": [
                {"group": p.group, "stratum": p.stratum, "time": p.time, "value": p.value}
                for p in self.trajectories
            ],
            "notes": list(self.notes),
            "cohort_fingerprint": self.fingerprint,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EstimandReport":
        return cls(
            model_kind=data["model_kind"],
            estimates=tuple(
                Estimate(e["name"], float(e["value"]), e["units"], e["conditioning"])
                for e in data.get("estimates", [])
            ),
            standard_errors={k: float(v) for k, v in data.get("standard_errors", {}).items()},
            strata={k: cls.from_dict(v) for k, v in data.get("strata", {}).items()},
            trajectories=tuple(
                TrajectoryPoint(p["group"], p["stratum"], float(p["time"]), float(p["value"]))
                for p in data.get("trajectories", [])
            ),
            notes=tuple(data.get("notes", [])),
            fingerprint=data.get("cohort_fingerprint"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EstimandReport":
        return cls.from_dict(json.loads(text))

    def trajectories_csv(self) -> str:
        lines = ["group,stratum,time,value"]
        for p in self.trajectories:
            lines.append(f"{p.group},{p.stratum},{p.time!r},{p.value!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class PahSeries:
    times: tuple[float, ...]
    proportions: tuple[float, ...]
    missing_counts: tuple[int, ...]
    n_baseline: int
    years_healthy: float


@dataclass(frozen=True)
class PahCurve:
    """Proportion alive-and-healthy over time, per group label."""

    threshold: float
    groups: dict


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _observed_rows(cohort: Cohort, time_scale: str) -> list[tuple[Subject, float, float]]:
    index = {s.id: s for s in cohort.subjects}
    rows: list[tuple[Subject, float, float]] = []
    if time_scale == "from_death":
        for obs in years_from_death_view(cohort):
            if not obs.missing:
                rows.append((index[obs.subject_id], obs.time, obs.value))
    else:
        for obs in cohort.observations:
            if not obs.missing:
                rows.append((index[obs.subject_id], obs.time, obs.value))
    return rows


def _regressor_value(name: str, subject_group: float, baseline_age: float, t: float) -> float:
    if name == "intercept":
        return 1.0
    if name == "group":
        return subject_group
    if name == "baseline_age":
        return baseline_age
    if name == "time":
        return t
    if name == "time2":
        return t * t
    if name == "group:time":
        return subject_group * t
    if name == "group:time2":
        return subject_group * t * t
    raise KeyError(name)


def build_design(
    cohort: Cohort, regressors: tuple[str, ...], time_scale: str = "from_baseline"
) -> tuple[DesignMatrix, np.ndarray]:
    """Design matrix and response over the non-missing observation rows.

    With ``time_scale="from_death"`` only decedents contribute and times
    are re-indexed as negative years from death.
    """
    rows = _observed_rows(cohort, time_scale)
    if not rows:
        raise ValueError("no observed rows to build a design from")
    values = np.array(
        [[_regressor_value(r, float(s.group), s.baseline_age, t) for r in regressors] for s, t, _ in rows]
    )
    y = np.array([v for _, _, v in rows])
    clusters = np.array([s.id for s, _, _ in rows])
    return DesignMatrix(values, tuple(regressors), clusters), y


def subject_lines(cohort: Cohort) -> dict:
    """Per-subject least-squares line (intercept, slope) on observed values.

    Subjects with fewer than two observed values are omitted.
    """
    out: dict[str, tuple[float, float]] = {}
    for s in cohort.subjects:
        pts = [(o.time, o.value) for o in cohort.observations_for(s.id) if not o.missing]
        if len(pts) < 2:
            continue
        t = np.array([p[0] for p in pts])
        v = np.array([p[1] for p in pts])
        slope, intercept = np.polyfit(t, v, 1)
        out[s.id] = (float(intercept), float(slope))
    return out


def _value_near(cohort: Cohort, subject_id: str, t: float, window: float) -> float | None:
    best: tuple[float, float] | None = None
    for obs in cohort.observations_for(subject_id):
        if obs.missing:
            continue
        gap = abs(obs.time - t)
        if gap <= window + _TIME_EPS and (best is None or gap < best[0]):
            best = (gap, obs.value)
    return None if best is None else best[1]


def _group_labels(cohort: Cohort) -> list[str]:
    groups = sorted({s.group for s in cohort.subjects})
    return [str(g) for g in groups] if len(groups) > 1 else ["all"]


def _trajectory_points(
    columns: tuple[str, ...],
    beta: np.ndarray,
    cohort: Cohort,
    times: tuple[float, ...],
    ref_age: float,
    stratum: str = "",
) -> tuple[TrajectoryPoint, ...]:
    points = []
    for label in _group_labels(cohort):
        g = 0.0 if label == "all" else float(label)
        for t in times:
            x = np.array([_regressor_value(r, g, ref_age, t) for r in columns])
            points.append(TrajectoryPoint(label, stratum, float(t), float(x @ beta)))
    return tuple(points)


def _fitted_mean_estimates(
    columns: tuple[str, ...],
    beta: np.ndarray,
    cov: np.ndarray,
    cohort: Cohort,
    horizons: tuple[float, ...],
    ref_age: float,
    conditioning: str,
    name_prefix: str = "mean_at_",
) -> tuple[list[Estimate], dict]:
    estimates, ses = [], {}
    labels = _group_labels(cohort)
    for h in horizons:
        for label in labels:
            g = 0.0 if label == "all" else float(label)
            x = np.array([_regressor_value(r, g, ref_age, h) for r in columns])
            name = f"{name_prefix}{h:g}" + ("" if label == "all" else f"_group{label}")
            cond = conditioning.format(t=f"{h:g}")
            if label != "all":
                cond += f", group={label}, baseline_age={ref_age:g}"
            elif "baseline_age" in columns:
                cond += f", baseline_age={ref_age:g}"
            estimates.append(Estimate(name, float(x @ beta), "points", cond))
            ses[name] = float(math.sqrt(max(x @ cov @ x, 0.0)))
    return estimates, ses


def _coef_estimates(
    columns: tuple[str, ...], beta: np.ndarray, cov: np.ndarray, conditioning: str
) -> tuple[list[Estimate], dict]:
    per_year = {"time": "points/year", "group:time": "points/year"}
    estimates, ses = [], {}
    for j, name in enumerate(columns):
        units = per_year.get(name, "points/year^2" if name.endswith("time2") else "points")
        estimates.append(Estimate(f"coef:{name}", float(beta[j]), units, conditioning))
        ses[f"coef:{name}"] = float(math.sqrt(max(cov[j, j], 0.0)))
    return estimates, ses


def weighted_mean(values: np.ndarray, weights: np.ndarray) -> float:
    """Weighted average sum(w*y)/sum(w); invariant to rescaling the weights."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = float(weights.sum())
    if total <= 0.0:
        raise ValueError("weights sum to zero")
    return float(np.sum(weights * values) / total)


# ---------------------------------------------------------------------------
# engines
# ---------------------------------------------------------------------------


def naive_extrapolation_summary(
    cohort: Cohort, horizon: float, matching_window: float = 0.0
) -> EstimandReport:
    """Project every decedent along their own least-squares line to the horizon.

    Demonstrates what treating deaths as ignorable implicitly does: each
    subject contributes their observed value at the horizon when they have
    one, otherwise the value of their individual line there.  Extrapolated
    values are deliberately not clamped to the response bounds.  Reports
    the mean of those values and the mean of the per-subject slopes.
    """
    lines = subject_lines(cohort)
    missing = [s.id for s in cohort.subjects if s.id not in lines]
    if missing:
        raise ValueError(f"subjects with fewer than 2 observed values cannot be extrapolated: {missing}")

    at_horizon, slopes = [], []
    for s in cohort.subjects:
        intercept, slope = lines[s.id]
        observed = _value_near(cohort, s.id, horizon, matching_window)
        at_horizon.append(observed if observed is not None else intercept + slope * horizon)
        slopes.append(slope)

    cond = "none (immortal cohort: decedent trajectories extrapolated past death)"
    times = sorted(set(cohort.observed_times()) | {float(horizon)})
    points = []
    for label in _group_labels(cohort):
        members = [s for s in cohort.subjects if label == "all" or s.group == int(label)]
        for t in times:
            vals = []
            for s in members:
                obs = _value_near(cohort, s.id, t, matching_window)
                ic, sl = lines[s.id]
                vals.append(obs if obs is not None else ic + sl * t)
            points.append(TrajectoryPoint(label, "", float(t), float(np.mean(vals))))

    return EstimandReport(
        model_kind="naive_extrapolation",
        estimates=(
            Estimate(f"mean_at_{horizon:g}", float(np.mean(at_horizon)), "points", cond),
            Estimate("mean_slope", float(np.mean(slopes)), "points/year", cond),
        ),
        trajectories=tuple(points),
        fingerprint=cohort_fingerprint(cohort),
    )


def unconditional_fit(
    cohort: Cohort,
    spec: ModelSpec = ModelSpec(),
    horizons: tuple[float, ...] = (),
    ref_age: float = DEFAULT_REF_AGE,
    trajectory_times: tuple[float, ...] | None = None,
) -> EstimandReport:
    """Random intercept-and-slope mixed model fit to all observed rows.

    Deaths are left untouched: the likelihood treats the resulting
    imbalance as missing at random, so fitted means at late horizons
    implicitly extend decedents' trajectories beyond death.  The estimand
    is the immortal-cohort mean trajectory.
    """
    report, _ = unconditional_fit_with_model(cohort, spec, horizons, ref_age, trajectory_times)
    return report


def unconditional_fit_with_model(
    cohort: Cohort,
    spec: ModelSpec = ModelSpec(),
    horizons: tuple[float, ...] = (),
    ref_age: float = DEFAULT_REF_AGE,
    trajectory_times: tuple[float, ...] | None = None,
) -> tuple[EstimandReport, LmmFit]:
    """As :func:`unconditional_fit`, also returning the underlying mixed fit."""
    if spec.time_scale != "from_baseline":
        raise ValueError("unconditional fit uses the from-baseline time scale")
    if spec.random_effects != "intercept_slope":
        raise ValueError("unconditional fit requires random_effects='intercept_slope'")
    for needed in ("intercept", "time"):
        if needed not in spec.fixed_regressors:
            raise ValueError(f"fixed_regressors must include {needed!r} for the random-effect design")

    X, y = build_design(cohort, spec.fixed_regressors, spec.time_scale)
    fit = lmm_fit(X, y)

    cond = "none (immortal cohort: deaths treated as missing at random)"
    estimates, ses = _coef_estimates(X.columns, fit.beta, fit.cov_beta, cond)
    mean_est, mean_ses = _fitted_mean_estimates(
        X.columns, fit.beta, fit.cov_beta, cohort, tuple(horizons), ref_age, "immortal-cohort mean at t={t}"
    )
    estimates += mean_est
    ses.update(mean_ses)

    notes = []
    if not fit.converged:
        notes.append("mixed-model optimizer did not converge; estimates use the best point found")
    if fit.boundary:
        notes.append("variance parameters on the boundary of the admissible region")

    times = trajectory_times if trajectory_times is not None else cohort.observed_times()
    report = EstimandReport(
        model_kind="unconditional",
        estimates=tuple(estimates),
        standard_errors=ses,
        trajectories=_trajectory_points(X.columns, fit.beta, cohort, tuple(times), ref_age),
        notes=tuple(notes),
        fingerprint=cohort_fingerprint(cohort),
    )
    return report, fit


def _subcohort(cohort: Cohort, subject_ids: set) -> Cohort:
    subjects = tuple(s for s in cohort.subjects if s.id in subject_ids)
    observations = tuple(o for o in cohort.observations if o.subject_id in subject_ids)
    return Cohort(subjects, observations, cohort.response_bounds)


def pattern_mixture_fit(
    cohort: Cohort,
    boundaries: list[float],
    spec: ModelSpec = ModelSpec(),
    horizon: float | None = None,
    ref_age: float = DEFAULT_REF_AGE,
    matching_window: float = 0.0,
) -> EstimandReport:
    """Separate fits per stratum defined by time of death.

    Each stratum's sub-report carries two flavors: ``summary`` estimates
    (cross-sectional mean at the horizon among members observed there, and
    the mean of members' individual least-squares slopes) and a ``fit``
    (the requested regression, falling back to pooled least squares when a
    stratum has fewer than 2 subjects for a mixed model; the fallback is
    recorded in the sub-report notes).
    """
    if spec.time_scale != "from_baseline":
        raise ValueError("pattern-mixture fit uses the from-baseline time scale")
    assignment = assign_strata(cohort, boundaries)
    by_label: dict[str, set] = {}
    for sid, stratum in assignment.items():
        by_label.setdefault(stratum.label, set()).add(sid)

    strata_reports: dict[str, EstimandReport] = {}
    notes = []
    for label in sorted(by_label):
        members = by_label[label]
        sub = _subcohort(cohort, members)
        if not any(not o.missing for o in sub.observations):
            notes.append(f"stratum {label}: no observed values, skipped")
            continue
        stratum = assignment[next(iter(members))]
        if stratum.is_survivor:
            cond = "given death not observed during follow-up"
        else:
            lo, hi = stratum.bounds
            cond = f"given S in [{lo:g},{hi:g})"

        estimates: list[Estimate] = []
        sub_notes: list[str] = []
        ses: dict[str, float] = {}
        if horizon is not None:
            vals = [
                v
                for s in sub.subjects
                if (v := _value_near(sub, s.id, horizon, matching_window)) is not None
            ]
            if vals:
                estimates.append(
                    Estimate(
                        f"mean_at_{horizon:g}",
                        float(np.mean(vals)),
                        "points",
                        f"{cond}; members observed at t={horizon:g}",
                    )
                )
            else:
                sub_notes.append(f"no member observed at t={horizon:g}")
        lines = subject_lines(sub)
        if lines:
            estimates.append(
                Estimate(
                    "mean_slope",
                    float(np.mean([sl for _, sl in lines.values()])),
                    "points/year",
                    f"{cond}; mean of individual least-squares slopes",
                )
            )
            if len(lines) < len(sub.subjects):
                sub_notes.append(f"{len(sub.subjects) - len(lines)} member(s) lack 2 observed values for a slope")

        fit_regressors = tuple(r for r in spec.fixed_regressors if _regressor_varies(sub, r))
        X, y = build_design(sub, fit_regressors, spec.time_scale)
        use_lmm = spec.random_effects == "intercept_slope" and len(sub.subjects) >= 2
        if use_lmm and {"intercept", "time"} <= set(fit_regressors):
            fit = lmm_fit(X, y)
            beta, cov = fit.beta, fit.cov_beta
            if fit.boundary:
                sub_notes.append("variance parameters on the boundary of the admissible region")
            if not fit.converged:
                sub_notes.append("mixed-model optimizer did not converge; estimates use the best point found")
        else:
            linear = ols(X, y)
            beta, cov = linear.beta, linear.cov_model
            if spec.random_effects == "intercept_slope":
                sub_notes.append("fewer than 2 subjects for a mixed model; pooled least-squares fallback")
        coef_est, coef_ses = _coef_estimates(X.columns, beta, cov, cond)
        estimates += coef_est
        ses.update(coef_ses)

        times = tuple(sorted({o.time for o in sub.observations if not o.missing}))
        strata_reports[label] = EstimandReport(
            model_kind="pattern_mixture",
            estimates=tuple(estimates),
            standard_errors=ses,
            trajectories=_trajectory_points(X.columns, beta, sub, times, ref_age, stratum=label),
            notes=tuple(sub_notes),
        )

    points = tuple(p for rep in strata_reports.values() for p in rep.trajectories)
    return EstimandReport(
        model_kind="pattern_mixture",
        strata=strata_reports,
        trajectories=points,
        notes=tuple(notes),
        fingerprint=cohort_fingerprint(cohort),
    )


def _regressor_varies(cohort: Cohort, name: str) -> bool:
    if name == "intercept":
        return True
    if name in ("group", "group:time", "group:time2"):
        return len({s.group for s in cohort.subjects}) > 1
    if name == "baseline_age":
        return len({s.baseline_age for s in cohort.subjects}) > 1
    return True


def principal_strat_estimate(
    cohort: Cohort,
    horizon: float,
    confounders: tuple[str, ...] = ("baseline_age",),
    response_time: float | None = None,
    matching_window: float = 0.0,
) -> EstimandReport:
    """Survivor-stratum contrast between groups under explainable nonrandom survival.

    Within each group a logistic model of surviving past the horizon on
    the confounders yields survival probabilities pi_z(X).  Each group's
    survivors are then averaged with weights pi_{1-z}(X_i) - the other
    group's survival probability at their covariates - so both averages
    describe the stratum that would survive the horizon under either group
    assignment.  Subjects whose vital status at the horizon cannot be
    established from the data are excluded and counted.
    """
    if response_time is None:
        response_time = horizon

    status: dict[str, int] = {}
    excluded = 0
    for s in cohort.subjects:
        if s.death_observed and s.survival_time is not None:
            status[s.id] = 1 if s.survival_time <= horizon else 0
        else:
            rows = cohort.observations_for(s.id)
            last_scheduled = max((o.time for o in rows), default=None)
            if last_scheduled is not None and last_scheduled >= horizon - _TIME_EPS:
                status[s.id] = 0
            else:
                excluded += 1

    arms = {z: [s for s in cohort.subjects if s.id in status and s.group == z] for z in (0, 1)}
    for z in (0, 1):
        if not arms[z]:
            raise ValueError(f"group {z} has no subjects with known vital status at horizon {horizon:g}")

    notes = []
    pi_models: dict[int, object] = {}
    for z in (0, 1):
        survive = np.array([1.0 - status[s.id] for s in arms[z]])
        if survive.min() == survive.max():
            if survive.min() == 0.0:
                raise ValueError(f"group {z} has zero survivors at horizon {horizon:g}")
            pi_models[z] = 1.0
            notes.append(f"group {z}: no deaths by horizon; survival probability fixed at 1")
            continue
        values = np.array(
            [[1.0] + [s.covariate(name) for name in confounders] for s in arms[z]]
        )
        X = DesignMatrix(values, ("intercept", *confounders), np.array([s.id for s in arms[z]]))
        pi_models[z] = logistic_fit(X, survive)

    def pi(z: int, subject: Subject) -> float:
        model = pi_models[z]
        if isinstance(model, float):
            return model
        x = np.array([1.0] + [subject.covariate(name) for name in confounders])
        return float(1.0 / (1.0 + math.exp(-float(x @ model.beta))))

    arm_means, ses, counts = {}, {}, {}
    for z in (0, 1):
        values, weights = [], []
        for s in arms[z]:
            if status[s.id] != 0:
                continue
            v = _value_near(cohort, s.id, response_time, matching_window)
            if v is None:
                continue
            values.append(v)
            weights.append(pi(1 - z, s))
        if not values:
            raise ValueError(
                f"group {z} has no surviving subjects with a response near t={response_time:g}"
            )
        w = np.array(weights)
        v = np.array(values)
        if w.sum() <= 0.0:
            raise ValueError(f"group {z}: survivor weights are all zero")
        mean = weighted_mean(v, w)
        arm_means[z] = mean
        counts[z] = len(values)
        ses[z] = float(np.sqrt(np.sum((w / w.sum()) ** 2 * (v - mean) ** 2)))

    cond = (
        f"given D(0)=0 and D(1)=0 at horizon {horizon:g} "
        f"(survivors weighted by the other group's survival probability; response at t={response_time:g})"
    )
    estimates = (
        Estimate("mean_group0", arm_means[0], "points", cond),
        Estimate("mean_group1", arm_means[1], "points", cond),
        Estimate("difference", arm_means[1] - arm_means[0], "points", cond + "; group 1 minus group 0"),
        Estimate("excluded_indeterminate", float(excluded), "subjects", "vital status at horizon unknown"),
    )
    return EstimandReport(
        model_kind="principal_strat",
        estimates=estimates,
        standard_errors={
            "mean_group0": ses[0],
            "mean_group1": ses[1],
            "difference": float(math.hypot(ses[0], ses[1])),
        },
        notes=tuple(notes) + (f"survivors contributing: group0={counts[0]}, group1={counts[1]}",),
        fingerprint=cohort_fingerprint(cohort),
    )


def terminal_decline_fit(
    cohort: Cohort,
    spec: ModelSpec = ModelSpec(time_scale="from_death"),
    eval_times: tuple[float, ...] = (),
    ref_age: float = DEFAULT_REF_AGE,
) -> EstimandReport:
    """Fit the response on the years-from-death time scale (decedents only).

    Subjects alive at the end of follow-up are excluded: their death time,
    and hence their position on this time scale, is unknown.
    """
    if spec.time_scale != "from_death":
        raise ValueError("terminal-decline fit requires time_scale='from_death'")
    decedents = [s for s in cohort.subjects if s.death_observed]
    with_obs = [
        s for s in decedents if any(not o.missing for o in cohort.observations_for(s.id))
    ]
    if len(with_obs) < 2:
        raise ValueError("terminal decline needs at least 2 decedents with an observed value")

    sub = _subcohort(cohort, {s.id for s in with_obs})
    regressors = tuple(r for r in spec.fixed_regressors if _regressor_varies(sub, r))
    X, y = build_design(cohort, regressors, "from_death")

    notes = []
    if spec.random_effects == "intercept_slope" and {"intercept", "time"} <= set(regressors):
        fit = lmm_fit(X, y)
        beta, cov = fit.beta, fit.cov_beta
        if fit.boundary:
            notes.append("variance parameters on the boundary of the admissible region")
        if not fit.converged:
            notes.append("mixed-model optimizer did not converge; estimates use the best point found")
    else:
        linear = ols(X, y)
        beta, cov = linear.beta, linear.cov_model

    cond = "given death observed; time measured in years from death (negative before death)"
    estimates, ses = _coef_estimates(X.columns, beta, cov, cond)
    if "time" in X.columns:
        j = X.columns.index("time")
        estimates.append(Estimate("slope", float(beta[j]), "points/year", cond))
        ses["slope"] = float(math.sqrt(max(cov[j, j], 0.0)))
    mean_est, mean_ses = _fitted_mean_estimates(
        X.columns, beta, cov, sub, tuple(eval_times), ref_age,
        "expected value at t={t} years from death", name_prefix="value_at_",
    )
    estimates += mean_est
    ses.update(mean_ses)

    times = tuple(sorted({o.time for o in years_from_death_view(cohort) if not o.missing}))
    return EstimandReport(
        model_kind="terminal_decline",
        estimates=tuple(estimates),
        standard_errors=ses,
        trajectories=_trajectory_points(X.columns, beta, sub, times, ref_age),
        notes=tuple(notes),
        fingerprint=cohort_fingerprint(cohort),
    )


def rca_fit(
    cohort: Cohort,
    spec: ModelSpec = ModelSpec(random_effects="none"),
    horizons: tuple[float, ...] = (),
    ref_age: float = DEFAULT_REF_AGE,
    trajectory_times: tuple[float, ...] | None = None,
) -> EstimandReport:
    """Regression conditioning on being alive: pooled fit, no random effects.

    Observations from the same person are treated as independent, which
    avoids any implicit completion of trajectories beyond death; the
    cluster-robust sandwich covariance (clustered by subject) accounts for
    the within-person correlation that the point estimates ignore.  Fitted
    values describe the prevalent mean among survivors at each time, not
    any individual's trajectory.
    """
    report, _ = rca_fit_with_model(cohort, spec, horizons, ref_age, trajectory_times)
    return report


def rca_fit_with_model(
    cohort: Cohort,
    spec: ModelSpec = ModelSpec(random_effects="none"),
    horizons: tuple[float, ...] = (),
    ref_age: float = DEFAULT_REF_AGE,
    trajectory_times: tuple[float, ...] | None = None,
) -> tuple[EstimandReport, LinearFit]:
    """As :func:`rca_fit`, also returning the fit with its robust covariance."""
    if spec.random_effects != "none":
        raise ValueError("regression conditioning on being alive uses random_effects='none'")
    if spec.time_scale != "from_baseline":
        raise ValueError("regression conditioning on being alive uses the from-baseline time scale")

    X, y = build_design(cohort, spec.fixed_regressors, spec.time_scale)
    linear = ols(X, y)
    robust = sandwich_covariance(X, y, linear.beta)
    linear = replace(linear, cov_robust=robust)

    cond = "given alive at t"
    estimates, ses = _coef_estimates(X.columns, linear.beta, robust, cond)
    mean_est, mean_ses = _fitted_mean_estimates(
        X.columns, linear.beta, robust, cohort, tuple(horizons), ref_age, "given alive at t={t}"
    )
    estimates += mean_est
    ses.update(mean_ses)

    times = trajectory_times if trajectory_times is not None else cohort.observed_times()
    report = EstimandReport(
        model_kind="rca",
        estimates=tuple(estimates),
        standard_errors=ses,
        trajectories=_trajectory_points(X.columns, linear.beta, cohort, tuple(times), ref_age),
        fingerprint=cohort_fingerprint(cohort),
    )
    return report, linear


def compute_pah_curve(
    cohort: Cohort,
    healthy_threshold: float,
    times: tuple[float, ...],
    by_group: bool = True,
    matching_window: float = 0.0,
) -> PahCurve:
    """Empirical proportion alive-and-healthy at each time.

    The denominator is always the full baseline cohort (per group label),
    never the survivors.  Survivors without an observed value near a time
    are excluded from the numerator and tallied as missing; no value is
    imputed for them.  Years of healthy life is the trapezoid area under
    the curve over the requested span.
    """
    if not times:
        raise ValueError("times must not be empty")
    times = tuple(float(t) for t in times)
    labels = ["all"]
    if by_group and len({s.group for s in cohort.subjects}) > 1:
        labels += [str(g) for g in sorted({s.group for s in cohort.subjects})]

    groups = {}
    for label in labels:
        members = [s for s in cohort.subjects if label == "all" or s.group == int(label)]
        denom = len(members)
        props, missing_counts = [], []
        for t in times:
            alive = survivors_at(cohort, t)
            healthy = 0
            unobserved = 0
            for s in members:
                if s.id not in alive:
                    continue
                v = _value_near(cohort, s.id, t, matching_window)
                if v is None:
                    unobserved += 1
                elif v >= healthy_threshold:
                    healthy += 1
            props.append(healthy / denom if denom else 0.0)
            missing_counts.append(unobserved)
        yhl = float(np.trapezoid(props, times)) if len(times) > 1 else 0.0
        groups[label] = PahSeries(times, tuple(props), tuple(missing_counts), denom, yhl)
    return PahCurve(threshold=float(healthy_threshold), groups=groups)


def joint_pah(
    cohort: Cohort,
    healthy_threshold: float,
    times: tuple[float, ...],
    by_group: bool = True,
    matching_window: float = 0.0,
) -> EstimandReport:
    """Joint alive-and-healthy summary of the whole cohort over time."""
    curve = compute_pah_curve(cohort, healthy_threshold, times, by_group, matching_window)
    estimates: list[Estimate] = []
    points: list[TrajectoryPoint] = []
    notes: list[str] = []
    for label, series in curve.groups.items():
        suffix = "" if label == "all" else f"_group{label}"
        cond = (
            f"alive with value >= {healthy_threshold:g}; denominator is the full baseline cohort"
            + ("" if label == "all" else f" of group {label}")
        )
        for t, p in zip(series.times, series.proportions):
            estimates.append(Estimate(f"pah_at_{t:g}{suffix}", p, "proportion", cond))
            points.append(TrajectoryPoint(label, "", t, p))
        if len(series.times) > 1:
            span = series.times[-1] - series.times[0]
            rate = (series.proportions[0] - series.proportions[-1]) / span if span > 0 else 0.0
            estimates.append(Estimate(f"decline_rate{suffix}", rate, "proportion/year", cond + "; linear trend"))
            estimates.append(Estimate(f"years_healthy{suffix}", series.years_healthy, "years", cond + "; area under curve"))
        total_missing = sum(series.missing_counts)
        if total_missing:
            notes.append(f"{label}: {total_missing} survivor visit(s) without an observed value excluded from numerators")
    return EstimandReport(
        model_kind="joint_pah",
        estimates=tuple(estimates),
        trajectories=tuple(points),
        notes=tuple(notes),
        fingerprint=cohort_fingerprint(cohort),
    )
