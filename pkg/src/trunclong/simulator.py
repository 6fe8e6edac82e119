"""Synthetic aging cohorts with response-dependent mortality.

Subjects carry a latent linear-plus-quadratic trajectory; each year the
probability of dying before the next visit is a logistic function of the
current latent value, so a negative coefficient makes low responders die
sooner.  With counterfactuals enabled, both group assignments are played
out for every subject from shared trajectory draws (common random
numbers), while each arm consumes its own pre-drawn death uniforms so
that counterfactual survival is conditionally independent across arms
given the subject's covariates.  The standardized latent intercept draw
is emitted as an observed baseline covariate (``baseline_frailty``),
which makes survival explainable by observables by construction.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .cohort import Cohort, Observation, Subject

__all__ = [
    "SimConfig",
    "PotentialOutcome",
    "PotentialOutcomeFrame",
    "TrueEstimands",
    "simulate",
    "true_estimands",
    "read_sim_config",
    "write_counterfactuals_csv",
]

FRAILTY_COVARIATE = "baseline_frailty"


@dataclass(frozen=True)
class SimConfig:
    """Generator parameters; per-group pairs are ordered (group 0, group 1)."""

    n_subjects: int
    seed: int
    horizon: int
    baseline_age_range: tuple[float, float] = (70.0, 80.0)
    p_group: float = 0.5
    intercept_mean: tuple[float, float] = (85.0, 85.0)
    intercept_sd: tuple[float, float] = (6.0, 6.0)
    slope_mean: tuple[float, float] = (-1.0, -1.0)
    slope_sd: tuple[float, float] = (0.5, 0.5)
    quadratic_coef: tuple[float, float] = (0.0, 0.0)
    residual_sd: float = 3.0
    hazard_intercept: float = -4.0
    hazard_response_coef: float = 0.0
    nonresponse_prob: float = 0.0
    response_bounds: tuple[float, float] | None = None
    emit_counterfactuals: bool = False

    def __post_init__(self) -> None:
        for name in ("baseline_age_range", "intercept_mean", "intercept_sd", "slope_mean",
                     "slope_sd", "quadratic_coef"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if self.response_bounds is not None:
            object.__setattr__(self, "response_bounds", tuple(float(v) for v in self.response_bounds))
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be positive")
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        if not 0.0 <= self.p_group <= 1.0:
            raise ValueError("p_group must be in [0, 1]")
        if not 0.0 <= self.nonresponse_prob <= 1.0:
            raise ValueError("nonresponse_prob must be in [0, 1]")
        for name in ("intercept_sd", "slope_sd"):
            if any(v < 0 for v in getattr(self, name)):
                raise ValueError(f"{name} entries must be nonnegative")
        if self.residual_sd < 0:
            raise ValueError("residual_sd must be nonnegative")
        if self.baseline_age_range[1] < self.baseline_age_range[0]:
            raise ValueError("baseline_age_range must be ordered (lo, hi)")

    def to_json(self) -> str:
        data = asdict(self)
        return json.dumps(data, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown simulation config fields: {sorted(unknown)}")
        return cls(**data)


def read_sim_config(path: str) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        return SimConfig.from_dict(json.load(fh))


@dataclass(frozen=True)
class PotentialOutcome:
    """Both-arm outcomes for one subject; index 0/1 is the group assignment."""

    subject_id: str
    assigned_group: int
    survival: tuple[float | None, float | None]
    dead_by_horizon: tuple[bool, bool]
    latent: tuple[tuple[float, ...], tuple[float, ...]]


@dataclass(frozen=True)
class PotentialOutcomeFrame:
    horizon: int
    outcomes: tuple[PotentialOutcome, ...]


@dataclass(frozen=True)
class TrueEstimands:
    """Exact estimands enumerated from a potential-outcome frame."""

    horizon: float
    response_time: float
    n_always_survivors: int
    always_survivor_mean: tuple[float, float]
    always_survivor_se: tuple[float, float]
    sace: float
    survivor_mean: tuple[float, float]
    population_mean: tuple[float, float]


def _expit(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def _death_time(latent: np.ndarray, u_death: np.ndarray, config: SimConfig) -> float | None:
    for t in range(config.horizon):
        p = _expit(config.hazard_intercept + config.hazard_response_coef * float(latent[t]))
        if u_death[t] < p:
            return t + 0.5
    return None


def simulate(config: SimConfig) -> tuple[Cohort, PotentialOutcomeFrame | None]:
    """Generate a cohort (and, optionally, its potential-outcome frame).

    Subjects are generated independently from per-subject derived seeds,
    with a fixed draw order per subject, so results do not depend on
    generation order and rerunning with one changed hazard parameter
    reuses identical underlying uniforms.
    """
    root = np.random.SeedSequence(config.seed)
    children = root.spawn(config.n_subjects)
    horizon = config.horizon
    times = np.arange(horizon + 1, dtype=float)
    width = len(str(config.n_subjects - 1))

    subjects: list[Subject] = []
    observations: list[Observation] = []
    outcomes: list[PotentialOutcome] = []
    for i in range(config.n_subjects):
        rng = np.random.default_rng(children[i])
        age_u = rng.uniform()
        group_u = rng.uniform()
        b0 = rng.standard_normal()
        b1 = rng.standard_normal()
        eps = rng.standard_normal(horizon + 1)
        u_death = rng.uniform(size=(2, horizon))
        u_nonresp = rng.uniform(size=horizon + 1)

        lo, hi = config.baseline_age_range
        age = lo + age_u * (hi - lo)
        group = 1 if group_u < config.p_group else 0

        latent = {}
        survival = {}
        for z in (0, 1):
            intercept = config.intercept_mean[z] + config.intercept_sd[z] * b0
            slope = config.slope_mean[z] + config.slope_sd[z] * b1
            latent[z] = intercept + slope * times + config.quadratic_coef[z] * times**2
            survival[z] = _death_time(latent[z], u_death[z], config)

        sid = f"s{i:0{width}d}"
        s_real = survival[group]
        subjects.append(
            Subject(
                id=sid,
                baseline_age=age,
                group=group,
                survival_time=s_real,
                death_observed=s_real is not None,
                extra_covariates=((FRAILTY_COVARIATE, float(b0)),),
            )
        )
        last_visit = horizon if s_real is None else int(math.floor(s_real))
        for t in range(last_visit + 1):
            if u_nonresp[t] < config.nonresponse_prob:
                observations.append(Observation(sid, float(t), None, missing=True))
            else:
                value = float(latent[group][t] + config.residual_sd * eps[t])
                if config.response_bounds is not None:
                    blo, bhi = config.response_bounds
                    value = min(max(value, blo), bhi)
                observations.append(Observation(sid, float(t), value, missing=False))
        if config.emit_counterfactuals:
            outcomes.append(
                PotentialOutcome(
                    subject_id=sid,
                    assigned_group=group,
                    survival=(survival[0], survival[1]),
                    dead_by_horizon=(survival[0] is not None, survival[1] is not None),
                    latent=(tuple(map(float, latent[0])), tuple(map(float, latent[1]))),
                )
            )

    cohort = Cohort(tuple(subjects), tuple(observations), response_bounds=config.response_bounds)
    frame = PotentialOutcomeFrame(horizon, tuple(outcomes)) if config.emit_counterfactuals else None
    return cohort, frame


def true_estimands(
    frame: PotentialOutcomeFrame, horizon: float, response_time: float
) -> TrueEstimands:
    """Enumerate the always-survivor stratum and its exact latent means.

    The stratum is the set of subjects who would survive past ``horizon``
    under both group assignments; means are taken from the latent
    trajectories at ``response_time``, which must sit on the simulated
    integer grid.
    """
    idx = int(round(response_time))
    if not (0 <= idx <= frame.horizon and abs(idx - response_time) < 1e-9):
        raise ValueError(f"response_time must be an integer in [0, {frame.horizon}]")

    def alive_past(s: float | None) -> bool:
        return s is None or s > horizon

    stratum = [o for o in frame.outcomes if alive_past(o.survival[0]) and alive_past(o.survival[1])]
    if not stratum:
        raise ValueError("always-survivor stratum is empty")

    def mean_se(values: list[float]) -> tuple[float, float]:
        arr = np.asarray(values)
        se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        return float(arr.mean()), se

    as_stats = [mean_se([o.latent[z][idx] for o in stratum]) for z in (0, 1)]
    surv_mean = []
    pop_mean = []
    for z in (0, 1):
        alive = [o.latent[z][idx] for o in frame.outcomes if alive_past(o.survival[z])]
        surv_mean.append(float(np.mean(alive)) if alive else math.nan)
        pop_mean.append(float(np.mean([o.latent[z][idx] for o in frame.outcomes])))
    return TrueEstimands(
        horizon=float(horizon),
        response_time=float(response_time),
        n_always_survivors=len(stratum),
        always_survivor_mean=(as_stats[0][0], as_stats[1][0]),
        always_survivor_se=(as_stats[0][1], as_stats[1][1]),
        sace=as_stats[1][0] - as_stats[0][0],
        survivor_mean=(surv_mean[0], surv_mean[1]),
        population_mean=(pop_mean[0], pop_mean[1]),
    )


def write_counterfactuals_csv(frame: PotentialOutcomeFrame, path: str) -> None:
    """One row per subject and arm: survival, death-by-horizon, latent values."""
    buf = io.StringIO()
    header = ["subject_id", "arm", "survival_time", "d_horizon"] + [
        f"y_t{t}" for t in range(frame.horizon + 1)
    ]
    buf.write(",".join(header) + "\n")
    for o in frame.outcomes:
        for z in (0, 1):
            s = o.survival[z]
            row = [
                o.subject_id,
                str(z),
                "" if s is None else repr(float(s)),
                "1" if o.dead_by_horizon[z] else "0",
            ] + [repr(v) for v in o.latent[z]]
            buf.write(",".join(row) + "\n")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(buf.getvalue())
