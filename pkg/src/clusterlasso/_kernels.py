"""Compiled inner loops for the coordinate-descent solvers."""

import numpy as np
from numba import njit


@njit(cache=True)
def _soft(z, t):
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


@njit(cache=True)
def _lasso_objective(r, beta, lam, n):
    return np.dot(r, r) / n + lam * np.sum(np.abs(beta))


@njit(cache=True)
def _lasso_sweep(X, r, beta, col_sq, lam, n, idx):
    """One cyclic pass over coordinates ``idx``; returns the largest |change|."""
    max_d = 0.0
    for j in idx:
        cs = col_sq[j]
        if cs == 0.0:
            continue
        old = beta[j]
        z = np.dot(X[:, j], r) / n + cs * old
        new = _soft(z, lam / 2.0) / cs
        if new != old:
            d = new - old
            r -= d * X[:, j]
            beta[j] = new
            if abs(d) > max_d:
                max_d = abs(d)
    return max_d


@njit(cache=True)
def lasso_cd_kernel(X, y, beta, lam, max_iter, tol, history):
    """Cyclic coordinate descent with an active-set inner loop.

    ``beta`` is updated in place. ``history`` (length >= max_iter + 1, or 0
    to skip) receives the objective after every sweep. Returns the number of
    sweeps and a convergence flag.
    """
    n, p = X.shape
    col_sq = np.empty(p)
    for j in range(p):
        col_sq[j] = np.dot(X[:, j], X[:, j]) / n
    r = y - X @ beta
    track = history.shape[0] > 0
    if track:
        history[0] = _lasso_objective(r, beta, lam, n)
    all_idx = np.arange(p)
    sweeps = 0
    while sweeps < max_iter:
        max_d = _lasso_sweep(X, r, beta, col_sq, lam, n, all_idx)
        sweeps += 1
        if track:
            history[sweeps] = _lasso_objective(r, beta, lam, n)
        scale = np.max(np.abs(beta))
        if max_d <= tol * max(scale, 1e-300) or (max_d == 0.0):
            return sweeps, True
        active = np.nonzero(beta)[0]
        while sweeps < max_iter:
            max_d = _lasso_sweep(X, r, beta, col_sq, lam, n, active)
            sweeps += 1
            if track:
                history[sweeps] = _lasso_objective(r, beta, lam, n)
            scale = np.max(np.abs(beta))
            if max_d <= tol * max(scale, 1e-300):
                break
    return sweeps, False


@njit(cache=True)
def _group_objective(r, theta, starts, widths, weights, lam, n):
    pen = 0.0
    for g in range(starts.shape[0]):
        s = starts[g]
        nrm = np.sqrt(np.sum(theta[s : s + widths[g]] ** 2))
        pen += weights[g] * nrm
    return np.dot(r, r) / n + lam * pen


@njit(cache=True)
def _group_sweep(Q, r, theta, starts, widths, weights, lam, n, groups):
    max_d = 0.0
    for g in groups:
        k = widths[g]
        if k == 0:
            continue
        s = starts[g]
        z = np.empty(k)
        for i in range(k):
            z[i] = np.dot(Q[:, s + i], r) / n + theta[s + i]
        nz = np.sqrt(np.sum(z**2))
        thr = lam * weights[g] / 2.0
        shrink = 0.0 if nz <= thr else 1.0 - thr / nz
        for i in range(k):
            d = shrink * z[i] - theta[s + i]
            if d != 0.0:
                r -= d * Q[:, s + i]
                theta[s + i] += d
                if abs(d) > max_d:
                    max_d = abs(d)
    return max_d


@njit(cache=True)
def group_bcd_kernel(Q, y, theta, starts, widths, weights, lam, max_iter, tol, history):
    """Block-cyclic descent for ``||y - Q theta||^2/n + lam sum_g w_g ||theta_g||``
    where each block of ``Q`` satisfies ``Q_g^T Q_g / n = I``."""
    n = Q.shape[0]
    ng = starts.shape[0]
    r = y.copy()
    for i in range(theta.shape[0]):
        if theta[i] != 0.0:
            r -= theta[i] * Q[:, i]
    track = history.shape[0] > 0
    if track:
        history[0] = _group_objective(r, theta, starts, widths, weights, lam, n)
    all_groups = np.arange(ng)
    sweeps = 0
    while sweeps < max_iter:
        max_d = _group_sweep(Q, r, theta, starts, widths, weights, lam, n, all_groups)
        sweeps += 1
        if track:
            history[sweeps] = _group_objective(r, theta, starts, widths, weights, lam, n)
        scale = np.max(np.abs(theta)) if theta.shape[0] > 0 else 0.0
        if max_d <= tol * max(scale, 1e-300) or max_d == 0.0:
            return sweeps, True
        act = np.zeros(ng, dtype=np.bool_)
        for g in range(ng):
            s = starts[g]
            for i in range(widths[g]):
                if theta[s + i] != 0.0:
                    act[g] = True
                    break
        active = np.nonzero(act)[0]
        while sweeps < max_iter:
            max_d = _group_sweep(Q, r, theta, starts, widths, weights, lam, n, active)
            sweeps += 1
            if track:
                history[sweeps] = _group_objective(r, theta, starts, widths, weights, lam, n)
            scale = np.max(np.abs(theta))
            if max_d <= tol * max(scale, 1e-300):
                break
    return sweeps, False
