"""Cohort data model for longitudinal responses truncated by death.

A cohort couples per-subject survival information with a long-format grid
of timed response observations.  Follow-up that ends because the subject
died is structural truncation, not missing data: no observation may sit at
or beyond an observed survival time.  Intermittent nonresponse, by
contrast, is represented by observation rows flagged ``missing``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field, replace

__all__ = [
    "Subject",
    "Observation",
    "Cohort",
    "DeathStratum",
    "Violation",
    "SURVIVOR_STRATUM",
    "CohortFormatError",
    "validate",
    "survivors_at",
    "assign_strata",
    "years_from_death_view",
    "read_cohort_csv",
    "write_cohort_csv",
    "cohort_fingerprint",
]

SURVIVOR_STRATUM = "survivor"

SUBJECTS_HEADER = ("subject_id", "baseline_age", "group", "survival_time", "death_observed")
OBSERVATIONS_HEADER = ("subject_id", "time", "value")


class CohortFormatError(ValueError):
    """Raised when a cohort CSV file cannot be parsed."""


@dataclass(frozen=True)
class Subject:
    """One study participant.

    ``survival_time`` is years from baseline at death and is present only
    when ``death_observed``.  A subject with ``death_observed = False`` is
    administratively censored (alive at end of follow-up); no death time is
    imputed for such subjects.
    """

    id: str
    baseline_age: float
    group: int
    survival_time: float | None = None
    death_observed: bool = False
    extra_covariates: tuple[tuple[str, float], ...] = ()

    def covariate(self, name: str) -> float:
        if name == "baseline_age":
            return self.baseline_age
        if name == "group":
            return float(self.group)
        for key, value in self.extra_covariates:
            if key == name:
                return value
        raise KeyError(f"subject {self.id} has no covariate {name!r}")


@dataclass(frozen=True)
class Observation:
    """One scheduled response measurement.

    ``missing = True`` marks nonresponse: the visit happened (or was
    scheduled) but no value was recorded.  ``value`` is ``None`` iff
    ``missing``.
    """

    subject_id: str
    time: float
    value: float | None = None
    missing: bool = False


@dataclass(frozen=True)
class Cohort:
    """Immutable bundle of subjects and their observations.

    All operations on a cohort are pure reads; instances are safe to share
    across threads.  ``response_bounds``, when set, is the closed interval
    of valid response values.
    """

    subjects: tuple[Subject, ...]
    observations: tuple[Observation, ...]
    response_bounds: tuple[float, float] | None = None

    _by_subject: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self) -> None:
        by_subject: dict[str, list[Observation]] = {s.id: [] for s in self.subjects}
        for obs in self.observations:
            if obs.subject_id in by_subject:
                by_subject[obs.subject_id].append(obs)
        object.__setattr__(self, "_by_subject", by_subject)

    def subject(self, subject_id: str) -> Subject:
        for s in self.subjects:
            if s.id == subject_id:
                return s
        raise KeyError(subject_id)

    def observations_for(self, subject_id: str) -> tuple[Observation, ...]:
        return tuple(self._by_subject.get(subject_id, ()))

    def observed_times(self) -> tuple[float, ...]:
        """Sorted unique times with at least one non-missing value."""
        times = sorted({o.time for o in self.observations if not o.missing})
        return tuple(times)

    def with_observations(self, observations: tuple[Observation, ...]) -> "Cohort":
        return replace(self, observations=observations)


@dataclass(frozen=True)
class DeathStratum:
    """A bin of the survival axis, or the distinguished survivor stratum.

    Decedent strata carry half-open bounds ``[lo, hi)`` on survival time.
    The survivor stratum (``bounds is None``) collects subjects without an
    observed death.
    """

    label: str
    bounds: tuple[float, float] | None = None

    @property
    def is_survivor(self) -> bool:
        return self.bounds is None


@dataclass(frozen=True)
class Violation:
    """One broken cohort invariant, naming the offending record and rule."""

    subject_id: str
    rule: str
    detail: str

    def __str__(self) -> str:
        return f"{self.subject_id}: {self.rule} ({self.detail})"


def validate(cohort: Cohort) -> list[Violation]:
    """Check every cohort invariant; return the list of violations.

    An empty list means the cohort is well formed.  Violations are data,
    not failures: callers decide whether to proceed.
    """
    violations: list[Violation] = []
    seen_ids: set[str] = set()
    for s in cohort.subjects:
        if s.id in seen_ids:
            violations.append(Violation(s.id, "duplicate-subject-id", "subject id appears twice"))
        seen_ids.add(s.id)
        if s.death_observed:
            if s.survival_time is None:
                violations.append(Violation(s.id, "missing-survival-time", "death observed without a survival time"))
            elif s.survival_time <= 0:
                violations.append(
                    Violation(s.id, "nonpositive-survival-time", f"survival_time={s.survival_time!r}")
                )
        elif s.survival_time is not None:
            violations.append(
                Violation(s.id, "survival-time-without-death", "survival_time present but death not observed")
            )

    subject_index = {s.id: s for s in cohort.subjects}
    last_time: dict[str, float] = {}
    for obs in cohort.observations:
        sid = obs.subject_id
        if sid not in subject_index:
            violations.append(Violation(sid, "unknown-subject", f"observation at t={obs.time:g} has no subject"))
            continue
        if obs.time < 0:
            violations.append(Violation(sid, "negative-time", f"t={obs.time!r}"))
        if obs.missing != (obs.value is None):
            violations.append(
                Violation(sid, "missing-flag-mismatch", f"t={obs.time:g}: missing={obs.missing}, value={obs.value!r}")
            )
        if sid in last_time and obs.time <= last_time[sid]:
            violations.append(
                Violation(sid, "non-increasing-times", f"t={obs.time:g} follows t={last_time[sid]:g}")
            )
        last_time[sid] = obs.time
        subj = subject_index[sid]
        if subj.death_observed and subj.survival_time is not None and obs.time >= subj.survival_time:
            violations.append(
                Violation(sid, "observation-after-death", f"t={obs.time:g} >= survival_time={subj.survival_time:g}")
            )
        if obs.value is not None and cohort.response_bounds is not None:
            lo, hi = cohort.response_bounds
            if not (lo <= obs.value <= hi):
                violations.append(
                    Violation(sid, "value-out-of-bounds", f"t={obs.time:g}: {obs.value!r} outside [{lo:g}, {hi:g}]")
                )
    return violations


def survivors_at(cohort: Cohort, t: float) -> set[str]:
    """Subject ids alive at time ``t`` (strictly after any observed death).

    Subjects without an observed death count as alive at every time.
    """
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t!r}")
    alive = set()
    for s in cohort.subjects:
        if not s.death_observed or (s.survival_time is not None and s.survival_time > t):
            alive.add(s.id)
    return alive


def assign_strata(cohort: Cohort, boundaries: list[float]) -> dict[str, DeathStratum]:
    """Map each subject to a death-time stratum.

    Decedents fall into half-open bins ``[b_k, b_{k+1})`` built from the
    strictly increasing ``boundaries`` (extended by -inf/+inf at the ends);
    subjects without an observed death go to the survivor stratum.
    """
    for lo, hi in zip(boundaries, boundaries[1:]):
        if hi <= lo:
            raise ValueError(f"boundaries must be strictly increasing, got {boundaries!r}")
    edges = [-math.inf, *boundaries, math.inf]
    strata = [
        DeathStratum(label=_bin_label(lo, hi), bounds=(lo, hi)) for lo, hi in zip(edges, edges[1:])
    ]
    survivor = DeathStratum(label=SURVIVOR_STRATUM, bounds=None)

    assignment: dict[str, DeathStratum] = {}
    for s in cohort.subjects:
        if not s.death_observed or s.survival_time is None:
            assignment[s.id] = survivor
            continue
        for stratum in strata:
            lo, hi = stratum.bounds  # type: ignore[misc]
            if lo <= s.survival_time < hi:
                assignment[s.id] = stratum
                break
    return assignment


def _bin_label(lo: float, hi: float) -> str:
    lo_s = "-inf" if lo == -math.inf else f"{lo:g}"
    hi_s = "inf" if hi == math.inf else f"{hi:g}"
    return f"death[{lo_s},{hi_s})"


def years_from_death_view(cohort: Cohort) -> tuple[Observation, ...]:
    """Re-index decedents' observations as (negative) years from death.

    Each time ``t`` becomes ``t - survival_time``.  Subjects without an
    observed death contribute no rows: their death time is unknown, so a
    from-death time scale is undefined for them.
    """
    out: list[Observation] = []
    for s in cohort.subjects:
        if not s.death_observed or s.survival_time is None:
            continue
        for obs in cohort.observations_for(s.id):
            out.append(replace(obs, time=obs.time - s.survival_time))
    return tuple(out)


# ---------------------------------------------------------------------------
# CSV interchange format
#
# subjects file:     subject_id,baseline_age,group,survival_time,death_observed
# observations file: subject_id,time,value
#
# survival_time and value are empty when absent; death_observed is 0/1.
# Extra subject columns after death_observed load into extra_covariates and
# are written back only when present, so the canonical five-column format
# round-trips byte for byte.
# ---------------------------------------------------------------------------


def _format_number(x: float) -> str:
    return repr(int(x)) if float(x).is_integer() and abs(x) < 1e16 else repr(float(x))


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise CohortFormatError(f"{where}: not a number: {text!r}") from None


def read_cohort_csv(
    subjects_path: str,
    observations_path: str,
    response_bounds: tuple[float, float] | None = None,
) -> Cohort:
    """Load a cohort from the two-file CSV format.

    Malformed rows raise :class:`CohortFormatError` naming the file and
    line number.
    """
    subjects: list[Subject] = []
    with open(subjects_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:5]) != SUBJECTS_HEADER:
            raise CohortFormatError(
                f"{subjects_path}: expected header {','.join(SUBJECTS_HEADER)}, got {header!r}"
            )
        extra_names = tuple(header[5:])
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            where = f"{subjects_path}:{lineno}"
            if len(row) != 5 + len(extra_names):
                raise CohortFormatError(f"{where}: expected {5 + len(extra_names)} fields, got {len(row)}")
            sid, age_s, group_s, surv_s, dead_s = row[:5]
            if dead_s not in ("0", "1"):
                raise CohortFormatError(f"{where}: death_observed must be 0 or 1, got {dead_s!r}")
            extras = tuple(
                (name, _parse_float(text, where)) for name, text in zip(extra_names, row[5:])
            )
            subjects.append(
                Subject(
                    id=sid,
                    baseline_age=_parse_float(age_s, where),
                    group=int(_parse_float(group_s, where)),
                    survival_time=None if surv_s == "" else _parse_float(surv_s, where),
                    death_observed=dead_s == "1",
                    extra_covariates=extras,
                )
            )

    observations: list[Observation] = []
    with open(observations_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != OBSERVATIONS_HEADER:
            raise CohortFormatError(
                f"{observations_path}: expected header {','.join(OBSERVATIONS_HEADER)}, got {header!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            where = f"{observations_path}:{lineno}"
            if len(row) != 3:
                raise CohortFormatError(f"{where}: expected 3 fields, got {len(row)}")
            sid, time_s, value_s = row
            missing = value_s == ""
            observations.append(
                Observation(
                    subject_id=sid,
                    time=_parse_float(time_s, where),
                    value=None if missing else _parse_float(value_s, where),
                    missing=missing,
                )
            )
    return Cohort(tuple(subjects), tuple(observations), response_bounds=response_bounds)


def _render_subjects(cohort: Cohort) -> str:
    extra_names: tuple[str, ...] = ()
    for s in cohort.subjects:
        if s.extra_covariates:
            extra_names = tuple(name for name, _ in s.extra_covariates)
            break
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(SUBJECTS_HEADER) + list(extra_names))
    for s in cohort.subjects:
        row = [
            s.id,
            _format_number(s.baseline_age),
            str(s.group),
            "" if s.survival_time is None else _format_number(s.survival_time),
            "1" if s.death_observed else "0",
        ]
        extras = dict(s.extra_covariates)
        row += [_format_number(extras[name]) for name in extra_names]
        writer.writerow(row)
    return buf.getvalue()


def _render_observations(cohort: Cohort) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(OBSERVATIONS_HEADER)
    for obs in cohort.observations:
        writer.writerow(
            [
                obs.subject_id,
                _format_number(obs.time),
                "" if obs.value is None else _format_number(obs.value),
            ]
        )
    return buf.getvalue()


def write_cohort_csv(cohort: Cohort, subjects_path: str, observations_path: str) -> None:
    """Write a cohort in the two-file CSV format (UTF-8, comma-separated)."""
    with open(subjects_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(_render_subjects(cohort))
    with open(observations_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(_render_observations(cohort))


def cohort_fingerprint(cohort: Cohort) -> str:
    """Stable content hash of a cohort, for cross-report consistency checks."""
    digest = hashlib.sha256()
    digest.update(_render_subjects(cohort).encode("utf-8"))
    digest.update(_render_observations(cohort).encode("utf-8"))
    return digest.hexdigest()
