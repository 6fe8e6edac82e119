"""Single imputation of intermittent nonresponse.

Missing responses are filled in from a multivariate-normal model fit by
EM within cells defined by death-time stratum and group, conditioning on
the subject's observed values plus baseline covariates appended as extra
columns.  Follow-up truncated by death is not missing data and is never
imputed; observed values pass through bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .cohort import Cohort, assign_strata

__all__ = ["MvnModel", "CellReport", "ImputationReport", "em_mvn", "impute_single"]


@dataclass(frozen=True)
class MvnModel:
    """Multivariate-normal model fit to a partially observed matrix.

    ``timepoints`` labels the columns; appended covariate columns carry
    their covariate names.  ``loglik_trace`` holds the observed-data
    log-likelihood per EM iteration and is non-decreasing.
    """

    mean: np.ndarray
    covariance: np.ndarray
    timepoints: tuple
    loglik_trace: tuple[float, ...]
    converged: bool
    iterations: int
    ridge_applied: bool = False


@dataclass
class CellReport:
    stratum: str
    group: int
    n_subjects: int
    n_missing: int
    n_imputed: int = 0
    n_clamped: int = 0
    skipped: bool = False
    reason: str = ""
    dropped_columns: list = field(default_factory=list)
    ridge_applied: bool = False

    def to_dict(self) -> dict:
        return {
            "stratum": self.stratum,
            "group": self.group,
            "n_subjects": self.n_subjects,
            "n_missing": self.n_missing,
            "n_imputed": self.n_imputed,
            "n_clamped": self.n_clamped,
            "skipped": self.skipped,
            "reason": self.reason,
            "dropped_columns": list(self.dropped_columns),
            "ridge_applied": self.ridge_applied,
        }


@dataclass
class ImputationReport:
    cells: list

    @property
    def total_imputed(self) -> int:
        return sum(c.n_imputed for c in self.cells)

    @property
    def total_clamped(self) -> int:
        return sum(c.n_clamped for c in self.cells)

    def to_json(self) -> str:
        return json.dumps(
            {
                "cells": [c.to_dict() for c in self.cells],
                "total_imputed": self.total_imputed,
                "total_clamped": self.total_clamped,
            },
            indent=2,
        )


def _observed_loglik_and_moments(
    data: np.ndarray, mean: np.ndarray, cov: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """One E-step: observed-data loglik plus completed first/second moments."""
    n, k = data.shape
    sum_x = np.zeros(k)
    sum_xx = np.zeros((k, k))
    loglik = 0.0
    masks: dict[bytes, list[int]] = {}
    observed = ~np.isnan(data)
    for i in range(n):
        masks.setdefault(observed[i].tobytes(), []).append(i)
    for key, rows in masks.items():
        o = np.frombuffer(key, dtype=bool)
        m = ~o
        xo = data[np.ix_(rows, np.where(o)[0])]
        S_oo = cov[np.ix_(np.where(o)[0], np.where(o)[0])]
        cho = scipy.linalg.cho_factor(S_oo, lower=True)
        dev = xo - mean[o]
        solved = scipy.linalg.cho_solve(cho, dev.T).T
        logdet = 2.0 * float(np.sum(np.log(np.diag(cho[0]))))
        quad = np.einsum("ij,ij->i", dev, solved)
        loglik += float(-0.5 * np.sum(quad + logdet + o.sum() * math.log(2.0 * math.pi)))

        completed = np.tile(mean, (len(rows), 1))
        completed[:, o] = xo
        if m.any():
            S_mo = cov[np.ix_(np.where(m)[0], np.where(o)[0])]
            completed[:, m] = mean[m] + solved @ S_mo.T
            C = cov[np.ix_(np.where(m)[0], np.where(m)[0])] - S_mo @ scipy.linalg.cho_solve(cho, S_mo.T)
            C = (C + C.T) / 2.0
            mm = np.ix_(np.where(m)[0], np.where(m)[0])
            sum_xx[mm] += len(rows) * C
        sum_x += completed.sum(axis=0)
        sum_xx += completed.T @ completed
    return loglik, sum_x, sum_xx


def em_mvn(
    data: np.ndarray,
    max_iter: int = 500,
    tol: float = 1e-8,
    column_labels: tuple | None = None,
) -> MvnModel:
    """EM fit of a multivariate normal to a matrix with missing entries.

    Missing entries are NaN.  Every column needs at least 2 observed
    entries; rows with nothing observed carry no information and are
    dropped.  The M-step uses maximum-likelihood (denominator n) moments;
    a non-positive-definite update is repaired with a 1e-8 ridge and
    flagged.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("data must be a 2-d matrix")
    observed = ~np.isnan(data)
    # rows with nothing observed contribute no likelihood; drop them
    data = data[observed.any(axis=1)]
    if data.shape[0] == 0:
        raise ValueError("no rows with observed entries")
    n, k = data.shape
    observed = ~np.isnan(data)
    short = [j for j in range(k) if observed[:, j].sum() < 2]
    if short:
        raise ValueError(f"columns with fewer than 2 observed entries: {short}")
    labels = tuple(column_labels) if column_labels is not None else tuple(range(k))
    if len(labels) != k:
        raise ValueError("column_labels length must match column count")

    if observed.all():
        mean = data.mean(axis=0)
        cov = np.cov(data, rowvar=False, ddof=0).reshape(k, k)
        cov, ridge = _ensure_pd(cov)
        ll = _observed_loglik_and_moments(data, mean, cov)[0]
        return MvnModel(mean, cov, labels, (ll,), True, 1, ridge)

    mean = np.nanmean(data, axis=0)
    var = np.nanvar(data, axis=0)
    cov = np.diag(np.maximum(var, 1e-4))
    ridge_applied = False
    trace: list[float] = []
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        ll, sum_x, sum_xx = _observed_loglik_and_moments(data, mean, cov)
        trace.append(ll)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol:
            converged = True
            break
        mean = sum_x / n
        cov = sum_xx / n - np.outer(mean, mean)
        cov = (cov + cov.T) / 2.0
        cov, ridge = _ensure_pd(cov)
        ridge_applied = ridge_applied or ridge
    return MvnModel(mean, cov, labels, tuple(trace), converged, iterations, ridge_applied)


def _ensure_pd(cov: np.ndarray) -> tuple[np.ndarray, bool]:
    try:
        scipy.linalg.cho_factor(cov, lower=True)
        return cov, False
    except scipy.linalg.LinAlgError:
        return cov + 1e-8 * np.eye(cov.shape[0]), True


def _conditional(
    model: MvnModel, row: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Conditional mean and covariance of the row's NaN entries given the rest."""
    o = ~np.isnan(row)
    m = np.where(~o)[0]
    oi = np.where(o)[0]
    S_oo = model.covariance[np.ix_(oi, oi)]
    S_mo = model.covariance[np.ix_(m, oi)]
    cho = scipy.linalg.cho_factor(S_oo, lower=True)
    dev = row[oi] - model.mean[oi]
    cond_mean = model.mean[m] + S_mo @ scipy.linalg.cho_solve(cho, dev)
    cond_cov = model.covariance[np.ix_(m, m)] - S_mo @ scipy.linalg.cho_solve(cho, S_mo.T)
    return m, cond_mean, (cond_cov + cond_cov.T) / 2.0


def _cell_rng(seed: int, stratum: str, group: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{stratum}|{group}".encode("utf-8")).digest()
    cell_key = int.from_bytes(digest[:8], "big")
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, cell_key])


def impute_single(
    cohort: Cohort,
    boundaries: list[float],
    noise: bool = False,
    seed: int = 0,
) -> tuple[Cohort, ImputationReport]:
    """Replace nonresponse values within (death stratum x group) cells.

    Each cell's subjects-by-timepoints matrix (with baseline age appended
    as an extra column when it varies) is fit by :func:`em_mvn`; missing
    values become conditional means, plus a draw from the conditional
    normal when ``noise`` is set.  Cells are seeded independently from
    ``seed`` and a stable hash of the cell label, so results do not
    depend on processing order.  Imputed values are clamped to the
    cohort's response bounds.  Cells too sparse to fit are skipped and
    reported, leaving their rows missing.
    """
    assignment = assign_strata(cohort, boundaries)
    cells: dict[tuple[str, int], list] = {}
    subject_index = {s.id: s for s in cohort.subjects}
    for s in cohort.subjects:
        cells.setdefault((assignment[s.id].label, s.group), []).append(s)

    imputed_values: dict[tuple[str, float], float] = {}
    clamped_rows: set[tuple[str, float]] = set()
    reports: list[CellReport] = []
    lo_hi = cohort.response_bounds

    for (stratum, group), members in sorted(cells.items()):
        rows_by_subject = {s.id: cohort.observations_for(s.id) for s in members}
        times = sorted({o.time for rows in rows_by_subject.values() for o in rows})
        n_missing = sum(1 for rows in rows_by_subject.values() for o in rows if o.missing)
        report = CellReport(stratum, group, len(members), n_missing)
        reports.append(report)
        if n_missing == 0:
            continue

        time_index = {t: j for j, t in enumerate(times)}
        matrix = np.full((len(members), len(times)), np.nan)
        targets: list[tuple[int, int, str, float]] = []
        for i, s in enumerate(members):
            for o in rows_by_subject[s.id]:
                if o.missing:
                    targets.append((i, time_index[o.time], s.id, o.time))
                else:
                    matrix[i, time_index[o.time]] = o.value

        labels: list = list(times)
        covariate_cols = []
        ages = np.array([s.baseline_age for s in members])
        if len(set(ages.tolist())) > 1:
            covariate_cols.append(("baseline_age", ages))
        else:
            report.dropped_columns.append("baseline_age (constant in cell)")
        report.dropped_columns.append("group (constant in cell)")
        for name, col in covariate_cols:
            matrix = np.column_stack([matrix, col])
            labels.append(name)

        observed_counts = (~np.isnan(matrix)).sum(axis=0)
        keep = observed_counts >= 2
        for j, ok in enumerate(keep):
            if not ok:
                label = f"t={labels[j]:g}" if isinstance(labels[j], float) else str(labels[j])
                report.dropped_columns.append(f"{label} (fewer than 2 observed values)")
        kept_targets = [t for t in targets if keep[t[1]]]
        if len(kept_targets) < len(targets):
            report.reason = "some timepoints too sparse to model; their values left missing"
        col_map = {j: jj for jj, j in enumerate(np.where(keep)[0])}
        matrix = matrix[:, keep]
        labels = [lab for lab, ok in zip(labels, keep) if ok]

        row_has_obs = (~np.isnan(matrix)).any(axis=1)
        usable_rows = {i for i in range(len(members)) if row_has_obs[i]}
        kept_targets = [t for t in kept_targets if t[0] in usable_rows]
        if matrix.shape[1] < 1 or len(usable_rows) < 2 or not kept_targets:
            report.skipped = True
            report.reason = report.reason or "cell too sparse to fit; left unimputed"
            continue

        try:
            model = em_mvn(matrix[sorted(usable_rows)], column_labels=tuple(labels))
        except (ValueError, scipy.linalg.LinAlgError) as exc:
            report.skipped = True
            report.reason = f"cell too sparse to fit ({exc}); left unimputed"
            continue
        report.ridge_applied = model.ridge_applied

        rng = _cell_rng(seed, stratum, group)
        row_of = {i: r for r, i in enumerate(sorted(usable_rows))}
        by_row: dict[int, list] = {}
        for i, j, sid, t in kept_targets:
            by_row.setdefault(i, []).append((col_map[j], sid, t))
        for i in sorted(by_row):
            row = matrix[row_of[i]]
            m_idx, cond_mean, cond_cov = _conditional(model, row)
            if noise:
                try:
                    chol = np.linalg.cholesky(cond_cov + 1e-12 * np.eye(len(m_idx)))
                except np.linalg.LinAlgError:
                    chol = np.zeros_like(cond_cov)
                draw = cond_mean + chol @ rng.standard_normal(len(m_idx))
            else:
                draw = cond_mean
            position = {int(mj): float(v) for mj, v in zip(m_idx, draw)}
            for j_new, sid, t in by_row[i]:
                value = position[j_new]
                if lo_hi is not None:
                    clamped = min(max(value, lo_hi[0]), lo_hi[1])
                    if clamped != value:
                        clamped_rows.add((sid, t))
                        report.n_clamped += 1
                    value = clamped
                imputed_values[(sid, t)] = value
                report.n_imputed += 1

    new_observations = []
    for o in cohort.observations:
        key = (o.subject_id, o.time)
        if o.missing and key in imputed_values:
            new_observations.append(replace(o, value=imputed_values[key], missing=False))
        else:
            new_observations.append(o)
    return cohort.with_observations(tuple(new_observations)), ImputationReport(reports)
