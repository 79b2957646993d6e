"""Dense linear algebra used throughout: design matrices, cross-covariances,
symmetric eigendecompositions and empirical canonical correlations."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

DEFAULT_RANK_TOL = 1e-9
SYMMETRY_TOL = 1e-10


class DegenerateGroupWarning(UserWarning):
    """A group of columns has no positive spectrum (all-zero columns)."""


@dataclass(frozen=True)
class DesignMatrix:
    """An ``n x p`` matrix of covariate observations.

    Rows are samples, columns are covariates. ``col_names`` is optional and
    must have length ``p`` when given.
    """

    data: np.ndarray
    col_names: tuple[str, ...] | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise ValueError(f"design must be 2-dimensional, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"design must have n >= 1 and p >= 1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("design contains non-finite entries")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)
        if self.col_names is not None:
            names = tuple(str(c) for c in self.col_names)
            if len(names) != data.shape[1]:
                raise ValueError(
                    f"{len(names)} column names given for {data.shape[1]} columns"
                )
            object.__setattr__(self, "col_names", names)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def centered(self) -> "DesignMatrix":
        return DesignMatrix(self.data - self.data.mean(axis=0), self.col_names)


def as_array(X) -> np.ndarray:
    if isinstance(X, DesignMatrix):
        return X.data
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-dimensional design, got shape {arr.shape}")
    return arr


def check_group(group: Sequence[int], p: int) -> np.ndarray:
    """Validate a group index set and return it as a sorted int array."""
    idx = np.asarray(group, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ValueError("group must be non-empty")
    if np.any(idx < 0) or np.any(idx >= p):
        raise ValueError(f"group indices out of range [0, {p}): {idx.tolist()}")
    idx = np.sort(idx)
    if np.any(np.diff(idx) == 0):
        raise ValueError(f"group contains duplicate indices: {idx.tolist()}")
    return idx


def cross_covariance(X, g_r: Sequence[int], g_l: Sequence[int]) -> np.ndarray:
    """Raw cross-product block ``X[:, g_r].T @ X[:, g_l] / n`` (no centering)."""
    A = as_array(X)
    r = check_group(g_r, A.shape[1])
    l = check_group(g_l, A.shape[1])
    return A[:, r].T @ A[:, l] / A.shape[0]


def sym_eigen(M) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues in descending order."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    scale = max(np.max(np.abs(M)), np.finfo(float).tiny) if M.size else 1.0
    if M.size and np.max(np.abs(M - M.T)) > SYMMETRY_TOL * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    w, V = np.linalg.eigh((M + M.T) / 2)
    return w[::-1].copy(), V[:, ::-1].copy()


def min_eigenvalue(M) -> float:
    w, _ = sym_eigen(M)
    return float(w[-1])


def inv_sqrt_psd(M, rank_tol: float = DEFAULT_RANK_TOL) -> tuple[np.ndarray, int]:
    """Pseudo-inverse square root of a PSD matrix.

    Eigenvalues below ``rank_tol`` times the largest are treated as zero.
    Returns the matrix and the retained rank.
    """
    w, V = sym_eigen(M)
    if w.size == 0 or w[0] <= 0:
        return np.zeros_like(np.asarray(M, dtype=float)), 0
    keep = w > rank_tol * w[0]
    Vk = V[:, keep]
    return (Vk / np.sqrt(w[keep])) @ Vk.T, int(keep.sum())


def sqrt_psd(M, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    w, V = sym_eigen(M)
    if w.size == 0 or w[0] <= 0:
        return np.zeros_like(np.asarray(M, dtype=float))
    keep = w > rank_tol * w[0]
    Vk = V[:, keep]
    return (Vk * np.sqrt(w[keep])) @ Vk.T


def whitened_cross_block(X, g_r, g_l, rank_tol: float = DEFAULT_RANK_TOL):
    """``S_rr^{-1/2} S_rl S_ll^{-1/2}`` with pseudo-inverse square roots.

    Also returns whether either diagonal block was rank deficient.
    """
    A = as_array(X)
    r = check_group(g_r, A.shape[1])
    l = check_group(g_l, A.shape[1])
    n = A.shape[0]
    Xr, Xl = A[:, r], A[:, l]
    wr, kr = inv_sqrt_psd(Xr.T @ Xr / n, rank_tol)
    wl, kl = inv_sqrt_psd(Xl.T @ Xl / n, rank_tol)
    singular = kr < len(r) or kl < len(l)
    return wr @ (Xr.T @ Xl / n) @ wl, singular, (kr, kl)


def canonical_correlation(
    X, g_r: Sequence[int], g_l: Sequence[int], rank_tol: float = DEFAULT_RANK_TOL
) -> float:
    """Largest empirical canonical correlation between two disjoint column groups.

    Computed as the top singular value of the whitened cross block. An
    all-zero group gives 0 and emits :class:`DegenerateGroupWarning`.
    """
    A = as_array(X)
    r = check_group(g_r, A.shape[1])
    l = check_group(g_l, A.shape[1])
    if np.intersect1d(r, l).size:
        raise ValueError("canonical correlation requires disjoint groups")
    W, _, (kr, kl) = whitened_cross_block(A, r, l, rank_tol)
    if kr == 0 or kl == 0:
        warnings.warn("group with all-zero columns", DegenerateGroupWarning, stacklevel=2)
        return 0.0
    s = np.linalg.svd(W, compute_uv=False)
    return float(np.clip(s[0], 0.0, 1.0))


def column_basis(block: np.ndarray, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of the column space of ``block``.

    Uses the same relative truncation as :func:`inv_sqrt_psd` applied to
    ``block.T @ block`` (squared singular values against the largest).
    """
    if block.shape[1] == 1:
        nrm = np.linalg.norm(block)
        if nrm == 0:
            return np.zeros((block.shape[0], 0))
        return block / nrm
    U, s, _ = np.linalg.svd(block, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((block.shape[0], 0))
    keep = s**2 > rank_tol * s[0] ** 2
    return U[:, keep]


def basis_canonical_correlation(Qr: np.ndarray, Ql: np.ndarray) -> float:
    """Top canonical correlation from two orthonormal bases (cosine of the
    smallest principal angle)."""
    if Qr.shape[1] == 0 or Ql.shape[1] == 0:
        return 0.0
    M = Qr.T @ Ql
    if M.shape[0] == 1 or M.shape[1] == 1:
        return float(min(np.linalg.norm(M), 1.0))
    return float(min(np.linalg.svd(M, compute_uv=False)[0], 1.0))
