"""Slow, independent reference computations used only by the tests."""

from __future__ import annotations


import numpy as np


def naive_cancor(X, g1, g2) -> float:
    """Largest canonical correlation via the eigenvalues of
    ``S11^-1 S12 S22^-1 S21`` (full-rank groups only)."""
    X = np.asarray(X, float)
    n = X.shape[0]
    A, B = X[:, list(g1)], X[:, list(g2)]
    S11, S22, S12 = A.T @ A / n, B.T @ B / n, A.T @ B / n
    M = np.linalg.solve(S11, S12) @ np.linalg.solve(S22, S12.T)
    ev = np.linalg.eigvals(M).real
    return float(np.sqrt(max(ev.max(), 0.0)))


def set_partitions(items):
    """All set partitions of ``items`` (Bell-number many)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]


def refines(fine, coarse) -> bool:
    """Every block of ``fine`` lies inside one block of ``coarse``."""
    where = {}
    for k, g in enumerate(coarse):
        for j in g:
            where[j] = k
    return all(len({where[j] for j in g}) == 1 for g in fine)


def triple_loop_cross_cov(X, g1, g2):
    X = np.asarray(X, float)
    n = X.shape[0]
    out = np.zeros((len(g1), len(g2)))
    for a, j in enumerate(g1):
        for b, k in enumerate(g2):
            s = 0.0
            for i in range(n):
                s += X[i, j] * X[i, k]
            out[a, b] = s / n
    return out


def pg_lasso(X, y, lam, iters=200_000, tol=1e-15):
    """Accelerated projected gradient on the split ``beta = u - v``, ``u, v >= 0``."""
    X = np.asarray(X, float)
    n, p = X.shape
    L = 2.0 * np.linalg.eigvalsh(X.T @ X / n).max()
    step = 1.0 / L
    w = np.zeros(2 * p)
    z = w.copy()
    t = 1.0

    def grad(w):
        beta = w[:p] - w[p:]
        g = -2.0 * X.T @ (y - X @ beta) / n
        return np.concatenate([g + lam, -g + lam])

    for _ in range(iters):
        w_new = np.maximum(z - step * grad(z), 0.0)
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        z = w_new + (t - 1) / t_new * (w_new - w)
        if np.max(np.abs(w_new - w)) < tol:
            w = w_new
            break
        w, t = w_new, t_new
    return w[:p] - w[p:]


def lasso_obj(X, y, beta, lam):
    r = y - X @ beta
    return float(r @ r / len(y) + lam * np.abs(beta).sum())


def mc_cone_min(X, groups, active, draws, rng, cone=3.0, chunk=20_000):
    """Smallest sampled value of ``(m_S0 |S0| / m_bar) ||X b||^2 / ||b_S0||_{2,1}^2``
    over ``b`` with ``||b_S0c||_{2,1} <= cone ||b_S0||_{2,1}``."""
    X = np.asarray(X, float)
    sizes = np.array([len(g) for g in groups], float)
    m_bar = sizes.mean()
    S0 = list(active)
    Sc = [r for r in range(len(groups)) if r not in S0]
    const = sizes[S0].mean() * len(S0) / m_bar
    p = X.shape[1]
    best = np.inf
    done = 0
    while done < draws:
        k = min(chunk, draws - done)
        done += k
        B = rng.standard_normal((p, k))
        for g in groups:
            B[list(g)] *= rng.exponential(size=k)
        fits = {r: X[:, list(g)] @ B[list(g)] for r, g in enumerate(groups)}
        wn = {r: np.linalg.norm(fits[r], axis=0) * np.sqrt(sizes[r] / m_bar) for r in fits}
        a = sum(wn[r] for r in S0)
        c = sum((wn[r] for r in Sc), np.zeros(k))
        scale = np.where(c > 0, rng.uniform(0, cone, k) * a / np.where(c > 0, c, 1.0), 0.0)
        fit = sum(fits[r] for r in S0) + sum((fits[r] * scale for r in Sc), np.zeros((X.shape[0], k)))
        vals = const * np.sum(fit**2, axis=0) / a**2
        best = min(best, float(vals.min()))
    return best
