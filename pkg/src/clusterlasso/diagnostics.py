"""Computable theory for cluster Lasso methods.

Group compatibility bounds from between-group canonical correlations,
population coefficients of the representative model, squared bias of the
representative reduction, and beta-min / separation checks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .clustering import Partition
from .linalg import DEFAULT_RANK_TOL, as_array, basis_canonical_correlation, column_basis, min_eigenvalue

PSD_TOL = 1e-8


class PreconditionError(ValueError):
    pass


@dataclass
class CompatReport:
    Lambda_min_sq: float
    rho: float
    rho_S0: float
    bound_chain: tuple[float, float, float]
    incoherence_between: bool
    incoherence_within: bool
    C: float
    group_sizes: list[int]
    m_bar: float
    m_bar_S0: float
    active_groups: list[int]
    singular_groups: list[int] = field(default_factory=list)

    @property
    def conditions_hold(self) -> bool:
        return self.Lambda_min_sq > 0 and self.incoherence_between and self.incoherence_within

    @property
    def bound(self) -> float:
        return self.bound_chain[0]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bound_chain"] = list(self.bound_chain)
        d["conditions_hold"] = self.conditions_hold
        return d


@dataclass
class LatentSpec:
    """One active variable per cluster: ``X_(r,1) = U_r``,
    ``X_(r,j) = U_r + N(0, tau_r^2)`` for ``j >= 2``, ``Y = U^T beta_tilde + eps``."""

    cov_u: np.ndarray
    m: np.ndarray
    tau: np.ndarray
    beta_tilde: np.ndarray

    def __post_init__(self):
        self.cov_u = np.atleast_2d(np.asarray(self.cov_u, dtype=float))
        self.m = np.asarray(self.m, dtype=np.int64)
        self.tau = np.asarray(self.tau, dtype=float)
        self.beta_tilde = np.asarray(self.beta_tilde, dtype=float)
        q = self.cov_u.shape[0]
        if not (self.m.shape == self.tau.shape == self.beta_tilde.shape == (q,)):
            raise ValueError("cov_u, m, tau and beta_tilde must agree on q")
        if np.any(self.m < 1):
            raise ValueError("cluster sizes must be >= 1")

    @property
    def q(self) -> int:
        return self.cov_u.shape[0]

    def first_indices(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.m)[:-1]]).astype(np.int64)

    def partition(self) -> Partition:
        starts = self.first_indices()
        return Partition(tuple(tuple(range(s, s + k)) for s, k in zip(starts, self.m)))

    def loading(self) -> np.ndarray:
        """``p x q`` map with ``X = loading @ U + delta``."""
        E = np.zeros((int(self.m.sum()), self.q))
        for r, (s, k) in enumerate(zip(self.first_indices(), self.m)):
            E[s : s + k, r] = 1.0
        return E

    def sigma(self) -> np.ndarray:
        E = self.loading()
        noise = np.zeros(E.shape[0])
        for r, (s, k) in enumerate(zip(self.first_indices(), self.m)):
            noise[s + 1 : s + k] = self.tau[r] ** 2
        return E @ self.cov_u @ E.T + np.diag(noise)

    def beta0(self) -> np.ndarray:
        b = np.zeros(int(self.m.sum()))
        b[self.first_indices()] = self.beta_tilde
        return b

    def w_variance(self) -> np.ndarray:
        """Variance of the averaged perturbation in each cluster representative."""
        return self.tau**2 * (self.m - 1) / self.m.astype(float) ** 2


@dataclass
class PopulationModel:
    Sigma: np.ndarray
    beta0: np.ndarray
    partition: Partition
    rhos: np.ndarray | None = None
    latent: LatentSpec | None = None

    def __post_init__(self):
        self.Sigma = np.asarray(self.Sigma, dtype=float)
        self.beta0 = np.asarray(self.beta0, dtype=float)
        p = self.Sigma.shape[0]
        if self.Sigma.shape != (p, p) or self.beta0.shape != (p,) or self.partition.p != p:
            raise ValueError("Sigma, beta0 and partition disagree on p")
        if np.max(np.abs(self.Sigma - self.Sigma.T)) > 1e-10 * max(1.0, np.abs(self.Sigma).max()):
            raise ValueError("Sigma is not symmetric")
        if min_eigenvalue(self.Sigma) < -PSD_TOL:
            raise ValueError("Sigma is not positive semidefinite")

    @classmethod
    def equicorrelation(cls, sizes: Sequence[int], rhos: Sequence[float], beta0) -> "PopulationModel":
        sizes = [int(k) for k in sizes]
        blocks = [np.full((k, k), r) + (1 - r) * np.eye(k) for k, r in zip(sizes, rhos)]
        from scipy.linalg import block_diag

        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        part = Partition(tuple(tuple(range(s, s + k)) for s, k in zip(starts, sizes)))
        return cls(block_diag(*blocks), np.asarray(beta0, float), part, np.asarray(rhos, float))

    @classmethod
    def from_latent(cls, spec: LatentSpec) -> "PopulationModel":
        return cls(spec.sigma(), spec.beta0(), spec.partition(), latent=spec)

    def averaging(self) -> np.ndarray:
        """``q x p`` matrix mapping covariates to cluster representatives."""
        A = np.zeros((self.partition.q, self.partition.p))
        for r, g in enumerate(self.partition.groups):
            A[r, list(g)] = 1.0 / len(g)
        return A

    def cov_representatives(self) -> np.ndarray:
        A = self.averaging()
        return A @ self.Sigma @ A.T

    def within_rhos(self) -> np.ndarray:
        if self.rhos is not None:
            return np.asarray(self.rhos, float)
        out = []
        for g in self.partition.groups:
            if len(g) == 1:
                out.append(1.0)
                continue
            B = self.Sigma[np.ix_(g, g)]
            out.append(float(B[~np.eye(len(g), dtype=bool)].mean()))
        return np.array(out)


def group_compat_bound(X, partition: Partition, active_groups: Sequence[int], C: float = 0.5,
                       rank_tol: float = DEFAULT_RANK_TOL) -> CompatReport:
    """Lower bounds on the group compatibility constant from canonical
    correlations between groups.

    ``bound_chain`` holds, in order, the sharp bound, ``(1-C)^2 Lambda^2``
    and ``(1-C)^2 (1 - |S0| rho_S0)``. They are valid lower bounds only
    when both incoherence flags hold.
    """
    A = as_array(X)
    S0 = sorted({int(r) for r in active_groups})
    if not S0:
        raise ValueError("need at least one active group")
    if S0[0] < 0 or S0[-1] >= partition.q:
        raise ValueError("active group index out of range")
    if not 0 < C < 1:
        raise ValueError("C must lie in (0, 1)")
    sizes = partition.sizes.astype(float)
    m_bar = float(sizes.mean())
    m_bar_S0 = float(sizes[S0].mean())
    bases = [column_basis(A[:, list(g)], rank_tol) for g in partition.groups]
    singular = [r for r, (g, Q) in enumerate(zip(partition.groups, bases)) if Q.shape[1] < len(g)]
    if any(r in singular for r in S0):
        warnings.warn("active group with singular within-group covariance; using pseudo-inverses",
                      stacklevel=2)

    R = np.hstack([bases[r] for r in S0])
    R = R.T @ R
    lam_sq = max(min_eigenvalue(R), 0.0) if R.size else 0.0

    def scaled_cc(r, l):
        return m_bar / math.sqrt(sizes[r] * sizes[l]) * basis_canonical_correlation(bases[r], bases[l])

    others = [l for l in range(partition.q) if l not in S0]
    rho = max((scaled_cc(r, l) for r in S0 for l in others), default=0.0)
    rho_S0 = max((scaled_cc(r, l) for i, r in enumerate(S0) for l in S0[i + 1 :]), default=0.0)
    s0 = len(S0)
    ratio = m_bar / m_bar_S0
    cond_between = rho <= C * lam_sq * ratio / (3 * s0)
    cond_within = rho_S0 < 1.0 / s0
    if lam_sq > 0:
        b1 = (lam_sq * ratio - 3 * s0 * rho) ** 2 / (lam_sq * ratio**2)
    else:
        b1 = 0.0
    b2 = (1 - C) ** 2 * lam_sq
    b3 = (1 - C) ** 2 * (1 - s0 * rho_S0)
    return CompatReport(
        Lambda_min_sq=float(lam_sq),
        rho=float(rho),
        rho_S0=float(rho_S0),
        bound_chain=(float(b1), float(b2), float(b3)),
        incoherence_between=bool(cond_between),
        incoherence_within=bool(cond_within),
        C=float(C),
        group_sizes=[int(k) for k in sizes],
        m_bar=m_bar,
        m_bar_S0=m_bar_S0,
        active_groups=S0,
        singular_groups=singular,
    )


def group_21_norm(X, partition: Partition, beta, groups: Sequence[int]) -> float:
    """``sum_r ||X_r beta_r||_2 sqrt(m_r / m_bar)`` over ``groups``."""
    A = as_array(X)
    m_bar = partition.sizes.mean()
    total = 0.0
    for r in groups:
        g = list(partition.groups[r])
        total += np.linalg.norm(A[:, g] @ beta[g]) * math.sqrt(len(g) / m_bar)
    return float(total)


def gamma0_general(M: PopulationModel) -> np.ndarray:
    """Population coefficients of ``Y`` regressed on the cluster representatives."""
    A = M.averaging()
    cov_z = A @ M.Sigma @ A.T
    if min_eigenvalue(cov_z) <= 1e-12 * max(1.0, np.abs(cov_z).max()):
        raise PreconditionError("covariance of the cluster representatives is singular")
    return np.linalg.solve(cov_z, A @ M.Sigma @ M.beta0)


def representative_weights(M: PopulationModel) -> np.ndarray:
    """Per-variable weights ``w_j`` (row sums of Sigma normalised within each group)."""
    rows = M.Sigma.sum(axis=1)
    w = np.empty(M.partition.p)
    for g in M.partition.groups:
        g = list(g)
        w[g] = rows[g] / rows[g].sum()
    return w


def gamma0_equicorr(M: PopulationModel, tol: float = 1e-10) -> np.ndarray:
    """``gamma0_r = |G_r| sum_{j in G_r} w_j beta0_j`` for uncorrelated
    representatives.

    Exact when Sigma is block diagonal over the partition; with equal row
    sums inside a block it reduces to the plain within-group sum.
    """
    cov_z = M.cov_representatives()
    off = cov_z - np.diag(np.diag(cov_z))
    if np.max(np.abs(off), initial=0.0) > tol * max(1.0, np.abs(cov_z).max()):
        raise PreconditionError(
            "cluster representatives are correlated; use gamma0_general instead"
        )
    lab = M.partition.labels()
    if np.any(np.abs(M.Sigma[lab[:, None] != lab[None, :]]) > tol):
        warnings.warn("Sigma is not block diagonal over the partition; "
                      "the weight formula is then only approximate", stacklevel=2)
    w = representative_weights(M)
    return np.array([len(g) * float(w[list(g)] @ M.beta0[list(g)]) for g in M.partition.groups])


def gamma0_perturbation(M: PopulationModel):
    """Approximate coefficients for nearly uncorrelated representatives.

    Uses conditional covariances given the other representatives (Schur
    complements under Gaussianity). Returns ``(approx, nu, C, bound)`` per
    group with ``|gamma0_r - approx_r| <= bound_r = nu_r ||beta0||_1 / C_r``.
    """
    A = M.averaging()
    q = M.partition.q
    approx, nus, cs = np.empty(q), np.empty(q), np.empty(q)
    l1 = float(np.abs(M.beta0).sum())
    for r, g in enumerate(M.partition.groups):
        g = list(g)
        rest = np.delete(A, r, axis=0)
        if rest.shape[0]:
            K = M.Sigma @ rest.T
            cond = M.Sigma - K @ np.linalg.solve(rest @ M.Sigma @ rest.T, K.T)
        else:
            cond = M.Sigma.copy()
        outside = np.setdiff1d(np.arange(M.partition.p), g)
        nus[r] = float(np.abs(cond[np.ix_(outside, g)]).max()) if outside.size else 0.0
        cs[r] = float(A[r] @ cond @ A[r])
        block = cond[np.ix_(g, g)]
        w = block.sum(axis=1) / block.sum()
        approx[r] = len(g) * float(w @ M.beta0[g])
    return approx, nus, cs, nus * l1 / cs


def standardized_gamma(M: PopulationModel) -> np.ndarray:
    """``gamma0_r * sd(representative_r)``."""
    return gamma0_general(M) * np.sqrt(np.diag(M.cov_representatives()))


def bias_population(M: PopulationModel) -> float:
    """``E[(mu_X - mu_Xbar)^2]`` from Sigma (projection residual variance)."""
    g = gamma0_general(M)
    total = float(M.beta0 @ M.Sigma @ M.beta0)
    explained = float(g @ M.cov_representatives() @ g)
    return max(total - explained, 0.0)


def bias_equicorr(M: PopulationModel) -> float:
    """Squared bias for block-diagonal equi-correlation:
    ``sum_r (1 - rho_r) sum_{j in G_r} (beta0_j - mean_r)^2``."""
    rhos = M.within_rhos()
    total = 0.0
    for rho, g in zip(rhos, M.partition.groups):
        b = M.beta0[list(g)]
        total += (1.0 - rho) * float(np.sum((b - b.mean()) ** 2))
    return total


@dataclass
class OneActiveBias:
    bound: float
    exact_w_term: float
    taum_ratio: float | None
    taum_holds: bool | None


def bias_bound_one_active(M: PopulationModel, n: int | None = None, taum_const: float = 1.0) -> OneActiveBias:
    """Upper bound ``s0 max|beta|^2 max_r (m_r - 1) tau_r^2 / m_r^2`` on the squared bias.

    ``exact_w_term`` is ``E|W^T beta_tilde|^2``, the intermediate quantity
    between the bias and the bound. When ``n`` is given, the report also
    checks ``max_r tau_r^2 / m_r <= taum_const * log(q) / n``.
    """
    spec = M.latent
    if spec is None:
        raise PreconditionError("model has no latent one-active specification")
    bt = spec.beta_tilde
    s0 = int(np.count_nonzero(bt))
    wv = spec.w_variance()
    bound = s0 * float(np.max(bt**2)) * float(np.max(wv)) if bt.size else 0.0
    exact = float(np.sum(bt**2 * wv))
    ratio = holds = None
    if n is not None:
        lhs = float(np.max(spec.tau**2 / spec.m))
        rhs = math.log(spec.q) / n
        ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
        holds = lhs <= taum_const * rhs
    return OneActiveBias(bound, exact, ratio, holds)


@dataclass
class GammaShift:
    bound: float
    closed_form_bound: float
    lambda_min_u: float
    detection_threshold: float
    detection_premise: bool
    detection_conclusion: bool


def gamma_shift_bound_one_active(M: PopulationModel) -> GammaShift:
    """Bound on ``||beta_tilde - gamma0||_2^2`` for the one-active model.

    ``bound = 2 E|W^T beta_tilde|^2 / lambda_min(Cov U)``; the coarser
    ``closed_form_bound`` replaces the middle term by the bias bound. The
    detection check: if ``min_{active} |beta_tilde_r| > 2 D`` with
    ``D = sqrt(closed_form_bound)`` then ``min_{active} |gamma0_r| > D``.
    """
    spec = M.latent
    if spec is None:
        raise PreconditionError("model has no latent one-active specification")
    lmin = min_eigenvalue(spec.cov_u)
    if lmin <= 0:
        raise PreconditionError("Cov(U) must be positive definite")
    bb = bias_bound_one_active(M)
    bound = 2.0 * bb.exact_w_term / lmin
    closed = 2.0 * bb.bound / lmin
    D = math.sqrt(closed)
    active = np.flatnonzero(spec.beta_tilde)
    premise = bool(active.size and np.min(np.abs(spec.beta_tilde[active])) > 2 * D)
    conclusion = False
    if active.size:
        g = gamma0_general(M)
        conclusion = bool(np.min(np.abs(g[active])) > D)
    return GammaShift(bound, closed, lmin, D, premise, conclusion)


def betamin_threshold(s_gamma: float, q: int, n: int, phi0_sq: float, C: float) -> float:
    """``C s(gamma0) sqrt(log q / n) / phi0^2``."""
    return C * s_gamma * math.sqrt(math.log(q) / n) / phi0_sq


def cluster_separation_check(Sigma, partition: Partition) -> tuple[bool, float]:
    """Do within-cluster absolute covariances all exceed between-cluster ones?

    Returns ``(holds, margin)`` with margin = min within minus max between
    (off-diagonal absolute entries). Empty sets count as ``+inf`` / ``0``.
    """
    S = np.abs(np.asarray(Sigma, dtype=float))
    lab = partition.labels()
    same = lab[:, None] == lab[None, :]
    off = ~np.eye(len(lab), dtype=bool)
    within = S[same & off]
    between = S[~same]
    lo = float(within.min()) if within.size else math.inf
    hi = float(between.max()) if between.size else 0.0
    return lo > hi, lo - hi
