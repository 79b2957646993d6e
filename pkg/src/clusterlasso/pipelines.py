"""Cluster-then-select estimators: cluster representative Lasso (CRL) and
cluster group Lasso (CGL), plus plain Lasso for comparison."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .clustering import Partition
from .linalg import as_array
from .solvers import (
    SolverOptions,
    default_group_weights,
    group_lasso_bcd,
    group_lasso_path,
    lasso_cd,
    lasso_path,
)


@dataclass
class SelectionResult:
    method: str
    selected_clusters: tuple[int, ...]
    selected_variables: tuple[int, ...]
    lam: float
    fit: object
    partition: Partition | None = None

    def predict(self, X) -> np.ndarray:
        if self.method == "CRL":
            return self.fit.predict(cluster_representatives(X, self.partition))
        return self.fit.predict(X)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "lambda": self.lam,
            "selected_clusters": list(self.selected_clusters),
            "selected_variables": list(self.selected_variables),
            "kkt_residual": float(self.fit.kkt_residual),
            "converged": bool(self.fit.converged),
        }


def cluster_representatives(X, partition: Partition, standardize: bool = False) -> np.ndarray:
    """Column ``r`` is the mean of the columns in group ``r`` (canonical order).

    With ``standardize`` each representative is rescaled to unit mean square.
    """
    A = as_array(X)
    if partition.p != A.shape[1]:
        raise ValueError(f"partition covers {partition.p} columns, design has {A.shape[1]}")
    Z = np.column_stack([A[:, list(g)].mean(axis=1) for g in partition.groups])
    if standardize:
        s = np.sqrt((Z**2).mean(axis=0))
        Z = Z / np.where(s > 0, s, 1.0)
    return Z


def _union(partition: Partition, clusters: Iterable[int]) -> tuple[int, ...]:
    return tuple(sorted(j for r in clusters for j in partition.groups[r]))


def crl_select(fit, partition: Partition) -> SelectionResult:
    clusters = tuple(int(r) for r in np.flatnonzero(fit.beta))
    return SelectionResult("CRL", clusters, _union(partition, clusters), fit.lam, fit, partition)


def cgl_select(fit, partition: Partition) -> SelectionResult:
    clusters = tuple(int(r) for r in np.flatnonzero(fit.active_groups))
    variables = tuple(int(j) for j in np.flatnonzero(fit.beta))
    return SelectionResult("CGL", clusters, variables, fit.lam, fit, partition)


def lasso_select(fit) -> SelectionResult:
    variables = tuple(int(j) for j in np.flatnonzero(fit.beta))
    return SelectionResult("Lasso", variables, variables, fit.lam, fit, None)


def crl_fit(X, y, partition: Partition, lam: float, opts: SolverOptions = SolverOptions(),
            standardize: bool = False) -> SelectionResult:
    """Lasso on the cluster representatives; a cluster is selected when its
    coefficient is nonzero and then contributes all of its variables."""
    Z = cluster_representatives(X, partition, standardize)
    return crl_select(lasso_cd(Z, y, lam, opts), partition)


def cgl_fit(X, y, partition: Partition, lam: float, weights=None,
            opts: SolverOptions = SolverOptions()) -> SelectionResult:
    fit = group_lasso_bcd(X, y, partition, lam, weights, opts)
    return cgl_select(fit, partition)


def lasso_fit(X, y, lam: float, opts: SolverOptions = SolverOptions()) -> SelectionResult:
    return lasso_select(lasso_cd(X, y, lam, opts))


def method_path(method: str, X, y, partition: Partition | None = None, weights=None,
                n_lambda: int = 100, lambda_min_ratio: float = 1e-3,
                opts: SolverOptions = SolverOptions(), standardize: bool = False,
                lambdas=None) -> list[SelectionResult]:
    """Selections along a regularization path for ``CRL``, ``CGL`` or ``Lasso``.

    The CRL grid is built on the representative design, the design actually
    fitted.
    """
    if method == "CRL":
        Z = cluster_representatives(X, partition, standardize)
        path = lasso_path(Z, y, n_lambda, lambda_min_ratio, opts, lambdas=lambdas)
        return [crl_select(f, partition) for f in path.fits]
    if method == "CGL":
        path = group_lasso_path(X, y, partition, weights, n_lambda, lambda_min_ratio, opts, lambdas=lambdas)
        return [cgl_select(f, partition) for f in path.fits]
    if method == "Lasso":
        path = lasso_path(X, y, n_lambda, lambda_min_ratio, opts, lambdas=lambdas)
        return [lasso_select(f) for f in path.fits]
    raise ValueError(f"unknown method {method!r}")


def screening_eval(result, S0) -> tuple[int, float]:
    """``(|S_hat|, |S_hat & S0| / |S0|)`` for a selection or a plain index set."""
    S0 = set(int(j) for j in S0)
    if not S0:
        raise ValueError("true active set must be non-empty")
    sel = result.selected_variables if isinstance(result, SelectionResult) else result
    sel = set(int(j) for j in sel)
    return len(sel), len(sel & S0) / len(S0)


__all__ = [
    "SelectionResult",
    "cgl_fit",
    "cluster_representatives",
    "crl_fit",
    "default_group_weights",
    "lasso_fit",
    "method_path",
    "screening_eval",
]
