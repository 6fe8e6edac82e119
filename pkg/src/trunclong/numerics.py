"""Dense numerical kernel: least squares, cluster-robust covariance,
logistic regression by IRLS, and a two-random-effect linear mixed model.

Everything here is a pure function of its inputs and deterministic:
identical inputs yield bit-identical outputs.  The mixed model maximizes
the Gaussian marginal likelihood (ML, not REML) over three variance
parameters with the fixed effects profiled out by generalized least
squares; the random-effect covariance is parameterized through the
log-Cholesky factor of G / sigma2 so positive semidefiniteness needs no
constrained optimization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize
from scipy.special import expit

__all__ = [
    "NumericsError",
    "SingularDesignError",
    "SeparationError",
    "DesignMatrix",
    "LinearFit",
    "LogisticFit",
    "LmmFit",
    "LmmOptions",
    "ols",
    "sandwich_covariance",
    "logistic_fit",
    "lmm_fit",
    "lmm_profiled_loglik",
    "lmm_predict",
]

RANK_TOL = 1e-10


class NumericsError(RuntimeError):
    """Base class for numerical failures (singularity, separation)."""


class SingularDesignError(NumericsError):
    """Design matrix is rank deficient.

    Carries the names of the aliased columns so callers can report which
    regressors to drop instead of silently pseudo-inverting.
    """

    def __init__(self, columns: tuple[str, ...], rank: int):
        self.columns = columns
        self.rank = rank
        super().__init__(f"design is rank deficient (rank {rank}); aliased columns: {', '.join(columns)}")


class SeparationError(NumericsError):
    """Logistic fit diverged, indicating complete or quasi-complete separation."""


@dataclass(frozen=True)
class DesignMatrix:
    """Regressor matrix with named columns and a cluster id per row."""

    values: np.ndarray
    columns: tuple[str, ...]
    cluster_ids: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        clusters = np.asarray(self.cluster_ids)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "cluster_ids", clusters)
        if values.ndim != 2:
            raise ValueError("design values must be a 2-d array")
        if len(self.columns) != values.shape[1] or len(self.columns) < 1:
            raise ValueError(f"{len(self.columns)} column names for {values.shape[1]} columns")
        if clusters.shape != (values.shape[0],):
            raise ValueError("cluster_ids must supply one id per row")
        if not np.all(np.isfinite(values)):
            raise ValueError("design contains non-finite entries")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_columns(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.columns.index(name)]
        except ValueError:
            raise KeyError(f"no design column named {name!r}") from None


@dataclass(frozen=True)
class LinearFit:
    """Least-squares solution with model-based and optional robust covariance."""

    beta: np.ndarray
    sigma2: float
    cov_model: np.ndarray
    cov_robust: np.ndarray | None
    n_obs: int
    n_clusters: int
    columns: tuple[str, ...]

    def coef(self, name: str) -> float:
        return float(self.beta[self.columns.index(name)])


@dataclass(frozen=True)
class LogisticFit:
    """Logistic regression solution (logit link, Bernoulli likelihood)."""

    beta: np.ndarray
    cov: np.ndarray
    converged: bool
    iterations: int
    loglik: float
    loglik_trace: tuple[float, ...]
    columns: tuple[str, ...]

    def predict_proba(self, X: DesignMatrix) -> np.ndarray:
        if X.columns != self.columns:
            raise ValueError(f"design columns {X.columns} do not match fit columns {self.columns}")
        return expit(X.values @ self.beta)


@dataclass(frozen=True)
class LmmFit:
    """Maximum-likelihood fit of the random-intercept-and-slope mixed model.

    ``G`` is the 2x2 covariance of the per-cluster random effects ordered
    as the ``z_columns`` used in fitting; ``theta`` is the internal
    log-Cholesky parameterization of G / sigma2 at the optimum (the three
    searched variance parameters).  ``boundary`` marks solutions pinned to
    the edge of the admissible variance region (for example a degenerate
    zero-residual fit); their loglik is evaluated with the residual
    variance floored at a tiny positive value so it stays finite.
    """

    beta: np.ndarray
    G: np.ndarray
    sigma2: float
    loglik: float
    converged: bool
    iterations: int
    boundary: bool
    theta: np.ndarray
    cov_beta: np.ndarray
    columns: tuple[str, ...]
    z_columns: tuple[str, str]
    random_effects: dict = field(repr=False)

    def coef(self, name: str) -> float:
        return float(self.beta[self.columns.index(name)])


@dataclass(frozen=True)
class LmmOptions:
    """Tunable tolerances for :func:`lmm_fit`."""

    deviance_tol: float = 1e-8
    max_iter: int = 2000
    log_diag_bound: float = 10.0
    offdiag_bound: float = 2.5e4
    gradient_tol: float = 1e-5


def _check_lengths(X: DesignMatrix, y: np.ndarray, what: str) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (X.n_rows,):
        raise ValueError(f"{what} has shape {y.shape}, expected ({X.n_rows},)")
    return y


def _rank_check(M: np.ndarray, columns: tuple[str, ...]) -> None:
    """Raise SingularDesignError naming the aliased columns of M."""
    q, r, pivots = scipy.linalg.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    threshold = RANK_TOL * max(diag[0], 1e-300) * max(M.shape)
    rank = int(np.sum(diag > threshold))
    if rank < M.shape[1]:
        offending = tuple(columns[j] for j in sorted(pivots[rank:]))
        raise SingularDesignError(offending, rank)


def ols(X: DesignMatrix, y: np.ndarray, weights: np.ndarray | None = None) -> LinearFit:
    """Ordinary or weighted least squares.

    Parameters
    ----------
    X : DesignMatrix
    y : array of length n_rows
    weights : optional nonnegative array of length n_rows

    Returns
    -------
    LinearFit with ``beta`` minimizing the (weighted) residual sum of
    squares, ``sigma2 = RSS / (n - p)`` and ``cov_model = sigma2 *
    (X'WX)^-1``.  ``cov_robust`` is left unset; see
    :func:`sandwich_covariance`.

    Raises
    ------
    SingularDesignError
        if the weighted design is rank deficient; the error names the
        aliased columns.
    """
    y = _check_lengths(X, y, "response")
    if weights is None:
        w = np.ones(X.n_rows)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (X.n_rows,):
            raise ValueError(f"weights has shape {w.shape}, expected ({X.n_rows},)")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
    sw = np.sqrt(w)
    Xw = X.values * sw[:, None]
    _rank_check(Xw, X.columns)

    xtwx = Xw.T @ Xw
    xtwy = Xw.T @ (y * sw)
    cho = scipy.linalg.cho_factor(xtwx)
    beta = scipy.linalg.cho_solve(cho, xtwy)

    resid = y - X.values @ beta
    rss = float(np.sum(w * resid**2))
    n, p = X.n_rows, X.n_columns
    sigma2 = rss / (n - p) if n > p else 0.0
    xtwx_inv = scipy.linalg.cho_solve(cho, np.eye(p))
    cov_model = sigma2 * xtwx_inv
    cov_model = (cov_model + cov_model.T) / 2.0
    return LinearFit(
        beta=beta,
        sigma2=sigma2,
        cov_model=cov_model,
        cov_robust=None,
        n_obs=n,
        n_clusters=len(np.unique(X.cluster_ids)),
        columns=X.columns,
    )


def _cluster_slices(cluster_ids: np.ndarray) -> list[np.ndarray]:
    order: dict = {}
    for i, cid in enumerate(cluster_ids):
        order.setdefault(cid, []).append(i)
    return [np.asarray(ix) for ix in order.values()]


def sandwich_covariance(X: DesignMatrix, y: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Cluster-robust covariance (X'X)^-1 [sum_c (X_c'r_c)(X_c'r_c)'] (X'X)^-1.

    Clusters come from ``X.cluster_ids``; with every cluster of size one
    this reduces to the HC0 heteroskedasticity-robust estimator.
    """
    y = _check_lengths(X, y, "response")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (X.n_columns,):
        raise ValueError(f"beta has shape {beta.shape}, expected ({X.n_columns},)")
    _rank_check(X.values, X.columns)
    xtx = X.values.T @ X.values
    cho = scipy.linalg.cho_factor(xtx)
    bread = scipy.linalg.cho_solve(cho, np.eye(X.n_columns))

    resid = y - X.values @ beta
    meat = np.zeros((X.n_columns, X.n_columns))
    for ix in _cluster_slices(X.cluster_ids):
        score = X.values[ix].T @ resid[ix]
        meat += np.outer(score, score)
    cov = bread @ meat @ bread
    return (cov + cov.T) / 2.0


def _bernoulli_loglik(eta: np.ndarray, d: np.ndarray) -> float:
    # sum d*eta - log(1 + exp(eta)), stable for large |eta|
    return float(np.sum(d * eta - np.logaddexp(0.0, eta)))


def logistic_fit(
    X: DesignMatrix,
    d: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 100,
) -> LogisticFit:
    """Logistic regression by iteratively reweighted least squares.

    Each IRLS step is taken with step-halving so the log-likelihood never
    decreases.  Convergence is declared when the largest coefficient
    change falls below ``tol``.  A coefficient sup-norm above 1e3 is
    treated as complete or quasi-complete separation.

    Raises
    ------
    SeparationError, SingularDesignError
    """
    d = _check_lengths(X, d, "outcome")
    if not np.all((d == 0.0) | (d == 1.0)):
        raise ValueError("outcome entries must be 0 or 1")
    if d.min() == d.max():
        raise ValueError("outcome must contain at least one 0 and one 1")
    _rank_check(X.values, X.columns)

    p = X.n_columns
    beta = np.zeros(p)
    eta = X.values @ beta
    loglik = _bernoulli_loglik(eta, d)
    trace = [loglik]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        mu = np.clip(expit(eta), 1e-12, 1.0 - 1e-12)
        w = mu * (1.0 - mu)
        z = eta + (d - mu) / w
        xtwx = X.values.T @ (w[:, None] * X.values)
        xtwz = X.values.T @ (w * z)
        try:
            cho = scipy.linalg.cho_factor(xtwx)
        except scipy.linalg.LinAlgError:
            raise SingularDesignError(X.columns, rank=p - 1) from None
        proposal = scipy.linalg.cho_solve(cho, xtwz)

        step = proposal - beta
        scale = 1.0
        for _ in range(40):
            candidate = beta + scale * step
            cand_ll = _bernoulli_loglik(X.values @ candidate, d)
            if cand_ll >= loglik - 1e-12:
                break
            scale /= 2.0
        else:
            candidate, cand_ll = beta, loglik
        delta = float(np.max(np.abs(candidate - beta)))
        beta, loglik = candidate, cand_ll
        trace.append(loglik)
        eta = X.values @ beta
        if np.max(np.abs(beta)) > 1e3:
            raise SeparationError(
                f"coefficient norm exceeded 1e3 after {iterations} iterations; data are separated"
            )
        if delta < tol:
            converged = True
            break

    mu = np.clip(expit(eta), 1e-12, 1.0 - 1e-12)
    if not converged and float(np.max(np.abs(mu - d))) < 1e-8:
        # fitted probabilities saturated without the coefficients settling:
        # the likelihood is maximized at infinity
        raise SeparationError(
            f"fitted probabilities saturated after {iterations} iterations without "
            "convergence; data are separated"
        )
    w = mu * (1.0 - mu)
    xtwx = X.values.T @ (w[:, None] * X.values)
    cov = scipy.linalg.cho_solve(scipy.linalg.cho_factor(xtwx), np.eye(p))
    cov = (cov + cov.T) / 2.0
    return LogisticFit(
        beta=beta,
        cov=cov,
        converged=converged,
        iterations=iterations,
        loglik=loglik,
        loglik_trace=tuple(trace),
        columns=X.columns,
    )


# ---------------------------------------------------------------------------
# Linear mixed model
# ---------------------------------------------------------------------------


def _theta_to_psi(theta: np.ndarray) -> np.ndarray:
    """Map (log l11, l21, log l22) to Psi = L L' = G / sigma2."""
    L = np.array([[math.exp(theta[0]), 0.0], [theta[1], math.exp(theta[2])]])
    return L @ L.T


class _LmmWorkspace:
    """Per-fit cache grouping clusters by identical random-effect design.

    Clusters sharing the same Z block also share V = I + Z Psi Z', so the
    marginal-likelihood pieces can be evaluated batchwise with one small
    factorization per pattern instead of one per cluster.
    """

    def __init__(self, X: DesignMatrix, y: np.ndarray, z_columns: tuple[str, str]):
        self.columns = X.columns
        self.z_columns = z_columns
        self.p = X.n_columns
        self.n = X.n_rows
        z_idx = [X.columns.index(name) for name in z_columns]
        Z = X.values[:, z_idx]

        slices = _cluster_slices(X.cluster_ids)
        if len(slices) < 2:
            raise ValueError("mixed model needs at least 2 clusters")
        self.cluster_order = [X.cluster_ids[ix[0]] for ix in slices]

        groups: dict[bytes, list[int]] = {}
        self._cluster_rows = slices
        self._cluster_Z = [Z[ix] for ix in slices]
        self._cluster_X = [X.values[ix] for ix in slices]
        self._cluster_y = [y[ix] for ix in slices]
        for c, ix in enumerate(slices):
            key = Z[ix].tobytes() + bytes(len(ix))
            groups.setdefault(key, []).append(c)
        self.patterns = []
        for members in groups.values():
            Zp = self._cluster_Z[members[0]]
            Xs = np.stack([self._cluster_X[c] for c in members])
            ys = np.stack([self._cluster_y[c] for c in members])
            self.patterns.append((Zp, Xs, ys, members))

    def profile(self, theta: np.ndarray) -> tuple[float, np.ndarray, float, np.ndarray]:
        """Return (loglik, beta, sigma2_hat, A) at variance parameters theta.

        A is sum_c X_c' V_c^-1 X_c, the GLS information matrix up to the
        1/sigma2 factor.
        """
        psi = _theta_to_psi(theta)
        A = np.zeros((self.p, self.p))
        bvec = np.zeros(self.p)
        logdet = 0.0
        cache = []
        for Zp, Xs, ys, members in self.patterns:
            k = Zp.shape[0]
            V = np.eye(k) + Zp @ psi @ Zp.T
            cho = scipy.linalg.cho_factor(V, lower=True)
            logdet += 2.0 * float(np.sum(np.log(np.diag(cho[0])))) * len(members)
            Vinv = scipy.linalg.cho_solve(cho, np.eye(k))
            XtVi = np.einsum("mkp,kl->mpl", Xs, Vinv)
            A += np.einsum("mpl,mlq->pq", XtVi, Xs)
            bvec += np.einsum("mpl,ml->p", XtVi, ys)
            cache.append((Xs, ys, Vinv))
        try:
            choA = scipy.linalg.cho_factor(A)
        except scipy.linalg.LinAlgError:
            raise SingularDesignError(self.columns, rank=self.p - 1) from None
        beta = scipy.linalg.cho_solve(choA, bvec)
        q = 0.0
        for Xs, ys, Vinv in cache:
            r = ys - Xs @ beta
            q += float(np.einsum("mk,kl,ml->", r, Vinv, r))
        sigma2 = max(q, 0.0) / self.n
        loglik = -0.5 * (
            self.n * math.log(2.0 * math.pi * max(sigma2, 1e-300)) + logdet + self.n
        )
        return loglik, beta, sigma2, A

    def deviance(self, theta: np.ndarray) -> float:
        try:
            return -2.0 * self.profile(theta)[0]
        except (SingularDesignError, scipy.linalg.LinAlgError):
            return np.inf

    def blups(self, theta: np.ndarray, beta: np.ndarray) -> dict:
        """Empirical best linear unbiased predictions per cluster."""
        psi = _theta_to_psi(theta)
        out = {}
        for c, cid in enumerate(self.cluster_order):
            Zc = self._cluster_Z[c]
            rc = self._cluster_y[c] - self._cluster_X[c] @ beta
            V = np.eye(Zc.shape[0]) + Zc @ psi @ Zc.T
            out[cid] = psi @ Zc.T @ scipy.linalg.cho_solve(
                scipy.linalg.cho_factor(V, lower=True), rc
            )
        return out


def _numerical_gradient(fun, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    grad = np.zeros_like(theta)
    for j in range(len(theta)):
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        grad[j] = (fun(up) - fun(dn)) / (2.0 * h)
    return grad


def _newton_polish(ws: _LmmWorkspace, theta: np.ndarray, bounds, options: LmmOptions):
    """Damped Newton refinement on the profiled deviance.

    Drives the central-difference gradient toward zero; coordinates pinned
    to a bound are left where the box search put them.
    """
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    dev = ws.deviance(theta)
    h = 1e-5
    for _ in range(40):
        free = (theta > lo + 1e-9) & (theta < hi - 1e-9)
        if not free.any():
            break
        grad = _numerical_gradient(ws.deviance, theta, h)
        if float(np.max(np.abs(grad[free]))) < options.gradient_tol:
            break
        hess = np.zeros((3, 3))
        for j in range(3):
            up, dn = theta.copy(), theta.copy()
            up[j] += h
            dn[j] -= h
            hess[:, j] = (
                _numerical_gradient(ws.deviance, up, h) - _numerical_gradient(ws.deviance, dn, h)
            ) / (2.0 * h)
        hess = (hess + hess.T) / 2.0
        step = None
        for ridge in (0.0, 1e-6, 1e-3, 1e0, 1e3):
            try:
                cand = np.linalg.solve(hess + ridge * np.eye(3), -grad)
            except np.linalg.LinAlgError:
                continue
            if np.all(np.isfinite(cand)):
                step = cand
                break
        if step is None:
            break
        step[~free] = 0.0
        improved = False
        scale = 1.0
        for _ in range(25):
            trial = np.clip(theta + scale * step, lo, hi)
            trial_dev = ws.deviance(trial)
            if trial_dev < dev - 1e-14:
                theta, dev, improved = trial, trial_dev, True
                break
            scale /= 2.0
        if not improved:
            break
    return theta, dev


def _start_points(ws: _LmmWorkspace, options: LmmOptions) -> list[np.ndarray]:
    starts = [np.array([-0.5, 0.0, -0.5]), np.array([-3.0, 0.0, -3.0]), np.array([1.5, 0.0, 1.5])]
    # Moment-based start from per-cluster least squares where feasible.
    intercepts, slopes, resid_ss, resid_n = [], [], 0.0, 0
    for c in range(len(ws.cluster_order)):
        Zc, yc = ws._cluster_Z[c], ws._cluster_y[c]
        if Zc.shape[0] >= 3 and np.linalg.matrix_rank(Zc) == 2:
            coef, res, *_ = np.linalg.lstsq(Zc, yc, rcond=None)
            intercepts.append(coef[0])
            slopes.append(coef[1])
            if res.size:
                resid_ss += float(res[0])
                resid_n += Zc.shape[0] - 2
    if len(intercepts) >= 3 and resid_n > 0 and resid_ss > 0:
        sigma2_0 = resid_ss / resid_n
        psi0 = np.cov(np.vstack([intercepts, slopes]), ddof=1) / sigma2_0
        psi0 += 1e-6 * np.eye(2)
        try:
            L0 = np.linalg.cholesky(psi0)
            theta0 = np.array([math.log(L0[0, 0]), L0[1, 0], math.log(L0[1, 1])])
            bound = options.log_diag_bound
            theta0[0] = min(max(theta0[0], -bound), bound)
            theta0[2] = min(max(theta0[2], -bound), bound)
            theta0[1] = min(max(theta0[1], -options.offdiag_bound), options.offdiag_bound)
            starts.insert(0, theta0)
        except np.linalg.LinAlgError:
            pass
    return starts


def lmm_fit(
    X: DesignMatrix,
    y: np.ndarray,
    z_columns: tuple[str, str] = ("intercept", "time"),
    options: LmmOptions = LmmOptions(),
) -> LmmFit:
    """Fit the linear mixed model y_c = X_c beta + Z_c b_c + eps by ML.

    Per-cluster covariance is Z_c G Z_c' + sigma2 I with b_c the random
    intercept and slope.  The three parameters of the Cholesky factor of
    G / sigma2 are searched (Nelder-Mead inside a box, then a damped
    Newton polish on the profiled deviance); beta and sigma2 are profiled
    out in closed form at every candidate.

    A response fit exactly by the fixed effects alone returns the
    degenerate G = 0, sigma2 = 0 solution with ``boundary=True``.
    Non-convergence returns the best point found with ``converged=False``
    rather than raising.
    """
    y = _check_lengths(X, y, "response")
    _rank_check(X.values, X.columns)
    for name in z_columns:
        if name not in X.columns:
            raise KeyError(f"random-effect column {name!r} not in design")

    ws = _LmmWorkspace(X, y, z_columns)

    base = ols(X, y)
    resid0 = y - X.values @ base.beta
    scale = float(np.mean(y**2)) + 1.0
    if float(np.mean(resid0**2)) <= 1e-14 * scale:
        theta = np.array([-options.log_diag_bound, 0.0, -options.log_diag_bound])
        loglik, beta, sigma2, A = ws.profile(theta)
        cov_beta = sigma2 * scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), np.eye(ws.p))
        return LmmFit(
            beta=beta,
            G=np.zeros((2, 2)),
            sigma2=sigma2,
            loglik=loglik,
            converged=True,
            iterations=0,
            boundary=True,
            theta=theta,
            cov_beta=(cov_beta + cov_beta.T) / 2.0,
            columns=X.columns,
            z_columns=z_columns,
            random_effects={cid: np.zeros(2) for cid in ws.cluster_order},
        )

    b = options.log_diag_bound
    bounds = [(-b, b), (-options.offdiag_bound, options.offdiag_bound), (-b, b)]
    best_theta, best_dev, total_iter, any_success = None, np.inf, 0, False
    for start in _start_points(ws, options):
        result = minimize(
            ws.deviance,
            start,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "xatol": 1e-9,
                "fatol": options.deviance_tol / 10.0,
                "maxiter": options.max_iter,
                "maxfev": options.max_iter,
                "adaptive": True,
            },
        )
        total_iter += result.nit
        if result.fun < best_dev:
            best_theta, best_dev = np.asarray(result.x), float(result.fun)
            any_success = bool(result.success)

    theta, dev = _newton_polish(ws, best_theta, bounds, options)

    loglik, beta, sigma2, A = ws.profile(theta)
    psi = _theta_to_psi(theta)
    G = sigma2 * psi
    cov_beta = sigma2 * scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), np.eye(ws.p))

    lo = np.array([bb[0] for bb in bounds])
    hi = np.array([bb[1] for bb in bounds])
    at_bound = bool(np.any(theta <= lo + 1e-6) or np.any(theta >= hi - 1e-6))
    boundary = at_bound or sigma2 <= 1e-12 * scale
    free = (theta > lo + 1e-9) & (theta < hi - 1e-9)
    grad = _numerical_gradient(ws.deviance, theta)
    grad_ok = not free.any() or float(np.max(np.abs(grad[free]))) < 1e-3
    converged = bool(any_success or grad_ok or boundary)

    return LmmFit(
        beta=beta,
        G=(G + G.T) / 2.0,
        sigma2=sigma2,
        loglik=loglik,
        converged=converged,
        iterations=total_iter,
        boundary=boundary,
        theta=theta,
        cov_beta=(cov_beta + cov_beta.T) / 2.0,
        columns=X.columns,
        z_columns=z_columns,
        random_effects=ws.blups(theta, beta),
    )


def lmm_profiled_loglik(
    X: DesignMatrix, y: np.ndarray, z_columns: tuple[str, str], theta: np.ndarray
) -> float:
    """Profiled marginal log-likelihood at variance parameters ``theta``.

    ``theta`` is the log-Cholesky parameterization used by
    :func:`lmm_fit`; beta and sigma2 are profiled out.
    """
    y = _check_lengths(X, y, "response")
    ws = _LmmWorkspace(X, y, z_columns)
    return ws.profile(np.asarray(theta, dtype=float))[0]


def lmm_predict(fit: LmmFit, X_new: DesignMatrix, include_blups: bool = False) -> np.ndarray:
    """Predicted responses, optionally adding per-cluster BLUPs.

    With ``include_blups`` every row's cluster must have been present in
    the fitted data; the population mean trajectory is the
    ``include_blups=False`` path.
    """
    if not fit.converged:
        raise ValueError("cannot predict from a non-converged fit")
    if X_new.columns != fit.columns:
        raise ValueError(f"design columns {X_new.columns} do not match fit columns {fit.columns}")
    pred = X_new.values @ fit.beta
    if not include_blups:
        return pred
    z_idx = [fit.columns.index(name) for name in fit.z_columns]
    Z = X_new.values[:, z_idx]
    for i, cid in enumerate(X_new.cluster_ids):
        if cid not in fit.random_effects:
            raise KeyError(f"cluster {cid!r} was not present in the fitted data")
        pred[i] += float(Z[i] @ fit.random_effects[cid])
    return pred
