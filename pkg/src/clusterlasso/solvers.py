"""Penalized least-squares solvers.

Objectives (no intercept)::

    lasso:        ||y - X b||^2 / n + lam * ||b||_1
    group lasso:  ||y - X b||^2 / n + lam * sum_r w_r ||X_r b_r||_2 / sqrt(n)

The group penalty acts on fitted group contributions, so each block is
rotated to an orthonormal basis of its column space before descent; the block
update is then a closed-form group soft-threshold.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .clustering import Partition
from .linalg import DEFAULT_RANK_TOL, as_array

DEFAULT_TOL = 1e-7
DEFAULT_KKT_TOL = 1e-6
DEFAULT_MAX_ITER = 100_000
DEFAULT_N_LAMBDA = 100
DEFAULT_LAMBDA_MIN_RATIO = 1e-3


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    kkt_tol: float = DEFAULT_KKT_TOL
    center: bool = False
    track_objective: bool = False


@dataclass
class LassoFit:
    lam: float
    beta: np.ndarray
    objective: float
    iterations: int
    kkt_residual: float
    converged: bool
    intercept: float = 0.0
    history: np.ndarray | None = None

    def predict(self, X) -> np.ndarray:
        return as_array(X) @ self.beta + self.intercept

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta)


@dataclass
class GroupLassoFit:
    lam: float
    beta: np.ndarray
    group_norms: np.ndarray
    active_groups: np.ndarray
    weights: np.ndarray
    objective: float
    iterations: int
    kkt_residual: float
    converged: bool
    partition: Partition
    intercept: float = 0.0
    history: np.ndarray | None = None
    theta: np.ndarray | None = field(default=None, repr=False)

    def predict(self, X) -> np.ndarray:
        return as_array(X) @ self.beta + self.intercept

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta)


@dataclass
class PathResult:
    lambdas: np.ndarray
    fits: list
    warm_start: list[int | None] = field(default_factory=list)

    def __post_init__(self):
        if len(self.lambdas) != len(self.fits):
            raise ValueError("one fit per lambda required")
        if np.any(np.diff(self.lambdas) >= 0):
            raise ValueError("lambdas must be strictly decreasing")

    def __len__(self):
        return len(self.fits)


def lasso_objective(X, y, beta, lam) -> float:
    r = y - X @ beta
    return float(r @ r / len(y) + lam * np.abs(beta).sum())


def lasso_kkt_residual(X, y, beta, lam) -> float:
    """Largest distance of ``2 X^T r / n`` from ``lam * subdiff(|beta|)``."""
    n = len(y)
    g = 2.0 * X.T @ (y - X @ beta) / n
    active = beta != 0
    viol = np.maximum(np.abs(g) - lam, 0.0)
    viol[active] = np.abs(g[active] - lam * np.sign(beta[active]))
    return float(viol.max()) if viol.size else 0.0


def lambda_max_lasso(X, y) -> float:
    """Smallest penalty at which the all-zero vector solves the Lasso."""
    A = as_array(X)
    y = np.asarray(y, dtype=float)
    return float(np.max(np.abs(2.0 * A.T @ y / len(y))))


def _prepare(X, y, center: bool):
    A = np.asarray(as_array(X), dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != A.shape[0]:
        raise ValueError(f"response has length {y.shape[0]}, design has {A.shape[0]} rows")
    if center:
        xm, ym = A.mean(axis=0), y.mean()
        return np.asfortranarray(A - xm), y - ym, xm, ym
    return np.asfortranarray(A), y.copy(), None, 0.0


def lasso_cd(X, y, lam: float, opts: SolverOptions = SolverOptions(), beta0=None) -> LassoFit:
    """Cyclic coordinate-descent Lasso with KKT certification.

    Sweeps until the largest coefficient change relative to the largest
    coefficient falls below ``opts.tol``; if the KKT residual still exceeds
    ``opts.kkt_tol`` the tolerance is tightened and descent resumes. A fit
    that fails within ``opts.max_iter`` sweeps is returned with
    ``converged=False`` and a :class:`ConvergenceWarning`.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    A, yc, xm, ym = _prepare(X, y, opts.center)
    p = A.shape[1]
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=float)
    tol, used, kkt = opts.tol, 0, math.inf
    segments = []
    if lam >= lambda_max_lasso(A, yc):
        # zero is optimal; skip descent so round-off cannot leave tiny nonzeros
        beta[:] = 0.0
        kkt = lasso_kkt_residual(A, yc, beta, lam)
    while used < opts.max_iter and kkt > opts.kkt_tol:
        h = np.zeros(opts.max_iter - used + 1) if opts.track_objective else np.zeros(0)
        sweeps, _ = _kernels.lasso_cd_kernel(A, yc, beta, float(lam), opts.max_iter - used, tol, h)
        if opts.track_objective:
            segments.append(h[: sweeps + 1] if not segments else h[1 : sweeps + 1])
        used += sweeps
        kkt = lasso_kkt_residual(A, yc, beta, lam)
        if kkt <= opts.kkt_tol:
            break
        tol /= 10.0
        if tol < 1e-15:
            break
    converged = kkt <= opts.kkt_tol
    if not converged:
        warnings.warn(
            f"lasso did not reach KKT tolerance at lambda={lam:.4g} (residual {kkt:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    intercept = 0.0 if xm is None else float(ym - xm @ beta)
    return LassoFit(
        lam=float(lam),
        beta=beta,
        objective=lasso_objective(A, yc, beta, lam),
        iterations=used,
        kkt_residual=kkt,
        converged=converged,
        intercept=intercept,
        history=np.concatenate(segments) if segments else None,
    )


def lambda_grid(lam_max: float, n_lambda: int, lambda_min_ratio: float) -> np.ndarray:
    if n_lambda < 2:
        raise ValueError("need at least two lambda values")
    if lam_max <= 0:
        lam_max = 1.0
    return lam_max * np.logspace(0.0, math.log10(lambda_min_ratio), n_lambda)


def lasso_path(
    X,
    y,
    n_lambda: int = DEFAULT_N_LAMBDA,
    lambda_min_ratio: float = DEFAULT_LAMBDA_MIN_RATIO,
    opts: SolverOptions = SolverOptions(),
    lambdas=None,
) -> PathResult:
    """Warm-started Lasso fits on a log-spaced grid from ``lambda_max`` down."""
    A, yc, xm, ym = _prepare(X, y, opts.center)
    if lambdas is None:
        lambdas = lambda_grid(lambda_max_lasso(A, yc), n_lambda, lambda_min_ratio)
    lambdas = np.asarray(lambdas, dtype=float)
    inner = SolverOptions(opts.max_iter, opts.tol, opts.kkt_tol, False, opts.track_objective)
    fits, warm = [], []
    beta = None
    for k, lam in enumerate(lambdas):
        fit = lasso_cd(A, yc, lam, inner, beta0=beta)
        if xm is not None:
            fit.intercept = float(ym - xm @ fit.beta)
        fits.append(fit)
        warm.append(None if k == 0 else k - 1)
        beta = fit.beta
    return PathResult(lambdas, fits, warm)


@dataclass
class GroupDesign:
    """Per-group orthonormalised blocks of a design.

    ``Q[:, starts[g]:starts[g]+widths[g]]`` spans the column space of group
    ``g`` scaled so that ``Q_g^T Q_g / n = I``; ``back[g]`` maps block
    coordinates to the minimum-norm coefficients of the original columns.
    """

    Q: np.ndarray
    starts: np.ndarray
    widths: np.ndarray
    back: list[np.ndarray]
    partition: Partition
    n: int
    rank_deficient: np.ndarray

    @classmethod
    def build(cls, X, partition: Partition, rank_tol: float = DEFAULT_RANK_TOL) -> "GroupDesign":
        A = as_array(X)
        n = A.shape[0]
        if partition.p != A.shape[1]:
            raise ValueError(f"partition covers {partition.p} columns, design has {A.shape[1]}")
        blocks, back, widths, deficient = [], [], [], []
        for g in partition.groups:
            Xg = A[:, list(g)]
            U, s, Vt = np.linalg.svd(Xg, full_matrices=False)
            keep = (s**2 > rank_tol * s[0] ** 2) if s.size and s[0] > 0 else np.zeros(s.size, bool)
            k = int(keep.sum())
            blocks.append(math.sqrt(n) * U[:, keep])
            back.append(math.sqrt(n) * Vt[keep].T / s[keep])
            widths.append(k)
            deficient.append(k < len(g))
        widths = np.array(widths, dtype=np.int64)
        starts = np.concatenate([[0], np.cumsum(widths)[:-1]]).astype(np.int64)
        Q = np.asfortranarray(np.hstack(blocks)) if blocks else np.zeros((n, 0))
        return cls(Q, starts, widths, back, partition, n, np.array(deficient))

    def theta_to_beta(self, theta: np.ndarray) -> np.ndarray:
        beta = np.zeros(self.partition.p)
        for g, grp in enumerate(self.partition.groups):
            s, k = self.starts[g], self.widths[g]
            if k:
                beta[list(grp)] = self.back[g] @ theta[s : s + k]
        return beta

    def block_gradients(self, resid: np.ndarray) -> list[np.ndarray]:
        G = 2.0 * self.Q.T @ resid / self.n
        return [G[s : s + k] for s, k in zip(self.starts, self.widths)]


def default_group_weights(partition: Partition) -> np.ndarray:
    return np.sqrt(partition.sizes.astype(float))


def lambda_max_group(X, y, partition: Partition, weights=None, design: GroupDesign | None = None) -> float:
    """Smallest penalty at which every group is zero."""
    y = np.asarray(y, dtype=float)
    gd = design or GroupDesign.build(X, partition)
    w = default_group_weights(partition) if weights is None else np.asarray(weights, float)
    norms = np.array([np.linalg.norm(g) for g in gd.block_gradients(y)])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(norms > 0, norms / w, 0.0)
    return float(ratio.max()) if ratio.size else 0.0


def _group_kkt(gd: GroupDesign, resid, theta, weights, lam) -> float:
    worst = 0.0
    for g, grad in enumerate(gd.block_gradients(resid)):
        k = gd.widths[g]
        if k == 0:
            continue
        th = theta[gd.starts[g] : gd.starts[g] + k]
        nt = np.linalg.norm(th)
        if nt == 0:
            v = max(np.linalg.norm(grad) - lam * weights[g], 0.0)
        else:
            v = np.linalg.norm(grad - lam * weights[g] * th / nt)
        worst = max(worst, float(v))
    return worst


def group_lasso_bcd(
    X,
    y,
    partition: Partition,
    lam: float,
    weights=None,
    opts: SolverOptions = SolverOptions(),
    theta0=None,
    design: GroupDesign | None = None,
) -> GroupLassoFit:
    """Group Lasso with the groupwise prediction penalty, by block-cyclic descent.

    Default weights are ``sqrt(|G_r|)``. Groups whose columns are rank
    deficient are handled through the positive-spectrum subspace only;
    coefficients outside it stay at zero.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    A, yc, xm, ym = _prepare(X, y, opts.center)
    gd = design or GroupDesign.build(A, partition)
    w = default_group_weights(partition) if weights is None else np.asarray(weights, float)
    if w.shape != (partition.q,):
        raise ValueError(f"expected {partition.q} weights, got shape {w.shape}")
    theta = np.zeros(gd.Q.shape[1]) if theta0 is None else np.array(theta0, dtype=float)
    tol, used, kkt = opts.tol, 0, math.inf
    segments = []
    if lam >= lambda_max_group(A, yc, partition, w, gd):
        theta[:] = 0.0
        kkt = _group_kkt(gd, yc, theta, w, lam)
    while used < opts.max_iter and kkt > opts.kkt_tol:
        h = np.zeros(opts.max_iter - used + 1) if opts.track_objective else np.zeros(0)
        sweeps, _ = _kernels.group_bcd_kernel(
            gd.Q, yc, theta, gd.starts, gd.widths, w, float(lam), opts.max_iter - used, tol, h
        )
        if opts.track_objective:
            segments.append(h[: sweeps + 1] if not segments else h[1 : sweeps + 1])
        used += sweeps
        kkt = _group_kkt(gd, yc - gd.Q @ theta, theta, w, lam)
        if kkt <= opts.kkt_tol:
            break
        tol /= 10.0
        if tol < 1e-15:
            break
    converged = kkt <= opts.kkt_tol
    if not converged:
        warnings.warn(
            f"group lasso did not reach KKT tolerance at lambda={lam:.4g} (residual {kkt:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    beta = gd.theta_to_beta(theta)
    norms = np.array(
        [np.linalg.norm(theta[s : s + k]) for s, k in zip(gd.starts, gd.widths)]
    )
    active = norms > 0
    # exact zeros for inactive groups regardless of round-off in the back map
    for g, grp in enumerate(partition.groups):
        if not active[g]:
            beta[list(grp)] = 0.0
    r = yc - A @ beta
    obj = float(r @ r / len(yc) + lam * np.sum(w * norms))
    fit = GroupLassoFit(
        lam=float(lam),
        beta=beta,
        group_norms=norms,
        active_groups=active,
        weights=w,
        objective=obj,
        iterations=used,
        kkt_residual=kkt,
        converged=converged,
        partition=partition,
        intercept=0.0 if xm is None else float(ym - xm @ beta),
        history=np.concatenate(segments) if segments else None,
        theta=theta,
    )
    return fit


def group_lasso_path(
    X,
    y,
    partition: Partition,
    weights=None,
    n_lambda: int = DEFAULT_N_LAMBDA,
    lambda_min_ratio: float = DEFAULT_LAMBDA_MIN_RATIO,
    opts: SolverOptions = SolverOptions(),
    lambdas=None,
) -> PathResult:
    A, yc, xm, ym = _prepare(X, y, opts.center)
    gd = GroupDesign.build(A, partition)
    w = default_group_weights(partition) if weights is None else np.asarray(weights, float)
    if lambdas is None:
        lambdas = lambda_grid(lambda_max_group(A, yc, partition, w, gd), n_lambda, lambda_min_ratio)
    lambdas = np.asarray(lambdas, dtype=float)
    inner = SolverOptions(opts.max_iter, opts.tol, opts.kkt_tol, False, opts.track_objective)
    fits, warm, theta = [], [], None
    for k, lam in enumerate(lambdas):
        fit = group_lasso_bcd(A, yc, partition, lam, w, inner, theta0=theta, design=gd)
        if xm is not None:
            fit.intercept = float(ym - xm @ fit.beta)
        fits.append(fit)
        warm.append(None if k == 0 else k - 1)
        theta = fit.theta
    return PathResult(lambdas, fits, warm)


@dataclass
class CVResult:
    lambdas: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    lambda_min: float
    lambda_1se: float
    folds: np.ndarray


def fold_assignment(n: int, K: int, seed: int) -> np.ndarray:
    """Fold label per observation from a seeded shuffle (sizes differ by <= 1)."""
    if K < 2 or K > n:
        raise ValueError(f"need 2 <= K <= n, got K={K}, n={n}")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    for k, chunk in enumerate(np.array_split(perm, K)):
        folds[chunk] = k
    return folds


def cv_select(
    X,
    y,
    method: str = "lasso",
    partition: Partition | None = None,
    K: int = 10,
    seed: int = 0,
    n_lambda: int = DEFAULT_N_LAMBDA,
    lambda_min_ratio: float = DEFAULT_LAMBDA_MIN_RATIO,
    weights=None,
    opts: SolverOptions = SolverOptions(),
    lambdas=None,
) -> CVResult:
    """K-fold cross-validation over a common lambda grid.

    The grid comes from the full data. ``cv_mean`` averages per-fold mean
    squared prediction errors; ``cv_se`` is their standard deviation over
    ``sqrt(K)``. ``lambda_1se`` is the largest lambda whose mean error is
    within one standard error of the minimum.
    """
    A = as_array(X)
    y = np.asarray(y, dtype=float).ravel()
    n = A.shape[0]
    if method == "lasso":
        grid = lambdas if lambdas is not None else lambda_grid(
            lambda_max_lasso(A, y), n_lambda, lambda_min_ratio
        )
        fit_path = lambda Xt, yt: lasso_path(Xt, yt, opts=opts, lambdas=grid)
    elif method == "group-lasso":
        if partition is None:
            raise ValueError("group-lasso cross-validation needs a partition")
        grid = lambdas if lambdas is not None else lambda_grid(
            lambda_max_group(A, y, partition, weights), n_lambda, lambda_min_ratio
        )
        fit_path = lambda Xt, yt: group_lasso_path(Xt, yt, partition, weights, opts=opts, lambdas=grid)
    else:
        raise ValueError(f"unknown method {method!r}")
    grid = np.asarray(grid, dtype=float)
    folds = fold_assignment(n, K, seed)
    errs = np.empty((K, len(grid)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for k in range(K):
            test = folds == k
            path = fit_path(A[~test], y[~test])
            preds = np.stack([f.predict(A[test]) for f in path.fits], axis=1)
            errs[k] = np.mean((y[test][:, None] - preds) ** 2, axis=0)
    mean = errs.mean(axis=0)
    se = errs.std(axis=0, ddof=1) / math.sqrt(K)
    i_min = int(np.argmin(mean))
    ok = np.flatnonzero(mean <= mean[i_min] + se[i_min])
    return CVResult(grid, mean, se, float(grid[i_min]), float(grid[ok.min()]), folds)


def lambda0_group(sigma: float, n: int, p: int | None = None, t: float = 0.0, m_min: float = 1.0, log_p: float | None = None) -> float:
    """Noise level for the group Lasso oracle inequality.

    ``sigma * 2/sqrt(n) * sqrt(1 + sqrt(a) + a)`` with
    ``a = (4 t + 4 log p) / m_min``. ``log_p`` may be passed directly.
    """
    lp = math.log(p) if log_p is None else log_p
    a = (4.0 * t + 4.0 * lp) / m_min
    return sigma * 2.0 / math.sqrt(n) * math.sqrt(1.0 + math.sqrt(a) + a)


def lambda0_reduced(sigma_hat_z_max: float, xi: float, n: int, q: int, t: float) -> float:
    """``2 ||sigma_Z||_inf xi sqrt((t^2 + 2 log q) / n)`` for the Lasso on a
    reduced design; ``xi^2 = sigma^2 + B^2``."""
    return 2.0 * sigma_hat_z_max * xi * math.sqrt((t * t + 2.0 * math.log(q)) / n)
