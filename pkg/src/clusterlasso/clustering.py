"""Variable clustering.

Two procedures live here:

* bottom-up merging driven by empirical canonical correlations, stopped either
  at a separation level ``tau`` or at the iteration with the smallest maximal
  between-cluster canonical correlation;
* ordinary agglomerative clustering on ``1 - |corr|`` with average linkage,
  cut before the largest jump in merge heights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.spatial.distance import squareform

from .linalg import (
    DEFAULT_RANK_TOL,
    as_array,
    basis_canonical_correlation,
    column_basis,
)

TIE_TOL = 1e-12


@dataclass(frozen=True)
class Partition:
    """Disjoint groups covering ``0..p-1``, stored in canonical order
    (groups sorted by smallest member, members ascending)."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(i) for i in g)) for g in self.groups)
        if any(len(g) == 0 for g in groups):
            raise ValueError("partition contains an empty group")
        groups = tuple(sorted(groups, key=lambda g: g[0]))
        members = [i for g in groups for i in g]
        p = len(members)
        if sorted(members) != list(range(p)):
            raise ValueError("groups must be disjoint and cover 0..p-1")
        object.__setattr__(self, "groups", groups)

    @property
    def p(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def q(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(g) for g in self.groups])

    def labels(self) -> np.ndarray:
        """Group number of each covariate."""
        out = np.empty(self.p, dtype=np.int64)
        for r, g in enumerate(self.groups):
            out[list(g)] = r
        return out

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "Partition":
        buckets: dict[int, list[int]] = {}
        for j, lab in enumerate(labels):
            buckets.setdefault(int(lab), []).append(j)
        return cls(tuple(tuple(v) for v in buckets.values()))

    @classmethod
    def singletons(cls, p: int) -> "Partition":
        return cls(tuple((j,) for j in range(p)))

    @classmethod
    def single(cls, p: int) -> "Partition":
        return cls((tuple(range(p)),))

    def to_text(self) -> str:
        return "".join(",".join(str(i) for i in g) + "\n" for g in self.groups)

    @classmethod
    def from_text(cls, text: str) -> "Partition":
        groups = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                groups.append(tuple(int(tok) for tok in line.split(",")))
            except ValueError as exc:
                raise ValueError(f"partition line {lineno}: {exc}") from None
        return cls(tuple(groups))

    def to_dict(self) -> dict:
        return {"groups": [list(g) for g in self.groups]}

    @classmethod
    def from_dict(cls, doc: dict) -> "Partition":
        return cls(tuple(tuple(g) for g in doc["groups"]))


@dataclass(frozen=True)
class MergeStep:
    b: int
    left: tuple[int, ...]
    right: tuple[int, ...]
    value: float


@dataclass
class MergeTrace:
    """Merge history. ``value`` is the maximal canonical correlation after the
    merge (canonical-correlation clustering) or the linkage height (ordinary
    clustering). ``initial`` is the value before any merge."""

    p: int
    steps: list[MergeStep] = field(default_factory=list)
    initial: float = 0.0
    kind: str = "rho_max"
    cut: int | None = None

    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.steps])

    def path(self) -> list[tuple[int, float]]:
        """``(b, value)`` rows including ``b = 0``."""
        return [(0, self.initial)] + [(s.b, s.value) for s in self.steps]

    def partition_at(self, b: int) -> Partition:
        """Partition after the first ``b`` merges."""
        if not 0 <= b <= len(self.steps):
            raise ValueError(f"iteration {b} outside 0..{len(self.steps)}")
        labels = np.arange(self.p)
        for step in self.steps[:b]:
            labels[list(step.right)] = labels[step.left[0]]
        return Partition.from_labels(labels)


def finer_than(p1: Partition, p2: Partition) -> bool:
    """True iff every group of ``p1`` is contained in a group of ``p2``."""
    if p1.p != p2.p:
        raise ValueError(f"partitions over different p ({p1.p} vs {p2.p})")
    lab2 = p2.labels()
    return all(len({lab2[i] for i in g}) == 1 for g in p1.groups)


def _bases(A: np.ndarray, groups: Iterable[Sequence[int]], rank_tol: float):
    return [column_basis(A[:, list(g)], rank_tol) for g in groups]


def rho_max(X, partition: Partition, rank_tol: float = DEFAULT_RANK_TOL) -> float:
    """Largest canonical correlation over all pairs of groups (0 for one group)."""
    A = as_array(X)
    if partition.p != A.shape[1]:
        raise ValueError(f"partition covers {partition.p} columns, design has {A.shape[1]}")
    bases = _bases(A, partition.groups, rank_tol)
    best = 0.0
    for r in range(len(bases)):
        for l in range(r + 1, len(bases)):
            best = max(best, basis_canonical_correlation(bases[r], bases[l]))
    return best


def is_tau_separated(X, partition: Partition, tau: float, rank_tol: float = DEFAULT_RANK_TOL) -> bool:
    return rho_max(X, partition, rank_tol) <= tau


class _CancorMerger:
    """Incremental state for canonical-correlation merging.

    Groups live in slots indexed by their smallest member, so slot order is
    the canonical group order. ``cc[i, j]`` (``i < j``) holds the canonical
    correlation between the groups in slots ``i`` and ``j``; everything else
    is ``-inf``. Only the row/column of a freshly merged group is recomputed.
    """

    def __init__(self, A: np.ndarray, rank_tol: float):
        self.A = A
        self.rank_tol = rank_tol
        p = A.shape[1]
        self.members: dict[int, list[int]] = {j: [j] for j in range(p)}
        norms = np.linalg.norm(A, axis=0)
        safe = np.where(norms > 0, norms, 1.0)
        U = A / safe
        self.bases: dict[int, np.ndarray] = {
            j: (U[:, [j]] if norms[j] > 0 else np.zeros((A.shape[0], 0))) for j in range(p)
        }
        C = np.abs(U.T @ U)
        np.clip(C, 0.0, 1.0, out=C)
        C[norms == 0, :] = 0.0
        C[:, norms == 0] = 0.0
        self.cc = np.full((p, p), -np.inf)
        iu = np.triu_indices(p, k=1)
        self.cc[iu] = C[iu]

    @property
    def q(self) -> int:
        return len(self.members)

    def current_max(self) -> float:
        if self.q < 2:
            return 0.0
        return float(self.cc.max())

    def best_pair(self) -> tuple[int, int]:
        m = self.cc.max()
        # row-major scan of the upper triangle gives the lexicographically
        # least pair among ties
        i, j = np.argwhere(self.cc >= m - TIE_TOL)[0]
        return int(i), int(j)

    def merge(self, i: int, j: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        left, right = tuple(self.members[i]), tuple(self.members[j])
        del self.members[j]
        del self.bases[j]
        self.cc[j, :] = -np.inf
        self.cc[:, j] = -np.inf
        merged = sorted(left + right)
        self.members[i] = merged
        Q = column_basis(self.A[:, merged], self.rank_tol)
        self.bases[i] = Q
        for s in self.members:
            if s == i:
                continue
            val = basis_canonical_correlation(Q, self.bases[s])
            if s < i:
                self.cc[s, i] = val
            else:
                self.cc[i, s] = val
        return left, right

    def partition(self) -> Partition:
        return Partition(tuple(tuple(m) for m in self.members.values()))


def cancor_cluster(X, tau: float, rank_tol: float = DEFAULT_RANK_TOL):
    """Merge the most canonically correlated pair of clusters until the
    maximal between-cluster canonical correlation is at most ``tau``.

    Returns ``(partition, trace)``. If no nontrivial partition reaches
    ``tau`` the result is the single cluster.
    """
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    A = as_array(X)
    state = _CancorMerger(A, rank_tol)
    trace = MergeTrace(p=A.shape[1], initial=state.current_max())
    b = 0
    while state.q > 1 and state.current_max() > tau:
        b += 1
        left, right = state.merge(*state.best_pair())
        trace.steps.append(MergeStep(b, left, right, state.current_max()))
    trace.cut = b
    return state.partition(), trace


def cancor_merge_all(X, rank_tol: float = DEFAULT_RANK_TOL) -> MergeTrace:
    """Run the canonical-correlation merging down to one cluster."""
    A = as_array(X)
    state = _CancorMerger(A, rank_tol)
    trace = MergeTrace(p=A.shape[1], initial=state.current_max())
    for b in range(1, A.shape[1]):
        left, right = state.merge(*state.best_pair())
        trace.steps.append(MergeStep(b, left, right, state.current_max()))
    return trace


def auto_cutoff(trace: MergeTrace) -> int:
    """Iteration with the smallest recorded maximal canonical correlation.

    Candidates are ``b = 0 .. p-2``; the trivial one-cluster state (value 0
    by convention) only competes when ``p = 2``. Ties go to the earliest b.
    """
    path = np.array([v for _, v in trace.path()])
    if trace.p > 2:
        path = path[:-1]
    return int(np.argmin(path))


def cancor_cluster_auto(X, rank_tol: float = DEFAULT_RANK_TOL):
    """Data-driven canonical-correlation clustering.

    Returns ``(partition, trace, b_hat)``.
    """
    A = as_array(X)
    if A.shape[1] < 2:
        raise ValueError("automatic cutoff needs p >= 2")
    trace = cancor_merge_all(A, rank_tol)
    b_hat = auto_cutoff(trace)
    trace.cut = b_hat
    return trace.partition_at(b_hat), trace, b_hat


def correlation_dissimilarity(X) -> np.ndarray:
    """``1 - |sample correlation|``; zero-variance columns sit at distance 1."""
    A = as_array(X)
    Ac = A - A.mean(axis=0)
    sd = np.sqrt((Ac**2).sum(axis=0))
    const = sd <= 1e-12 * max(1.0, float(np.abs(A).max()))
    Z = Ac / np.where(const, 1.0, sd)
    R = np.clip(np.abs(Z.T @ Z), 0.0, 1.0)
    R[const, :] = 0.0
    R[:, const] = 0.0
    D = 1.0 - R
    np.fill_diagonal(D, 0.0)
    return D


def corr_hclust(X):
    """Average-linkage clustering on ``1 - |corr|`` cut before the largest
    jump in linkage heights.

    Returns ``(partition, trace)``; trace values are the heights ``h_b``.
    The all-singletons state counts as height 0 at ``b = 0``.
    """
    A = as_array(X)
    p = A.shape[1]
    if p < 2:
        raise ValueError("hierarchical clustering needs p >= 2")
    D = correlation_dissimilarity(A)
    Z = linkage(squareform(D, checks=False), method="average")
    members: dict[int, tuple[int, ...]] = {j: (j,) for j in range(p)}
    trace = MergeTrace(p=p, initial=0.0, kind="height")
    for b, (a, c, h, _) in enumerate(Z, start=1):
        ga, gc = members.pop(int(a)), members.pop(int(c))
        left, right = (ga, gc) if ga[0] < gc[0] else (gc, ga)
        members[p + b - 1] = tuple(sorted(ga + gc))
        trace.steps.append(MergeStep(b, left, right, float(h)))
    # gaps[b] = h_{b+1} - h_b; cutting at b keeps the first b merges
    gaps = np.diff(np.concatenate([[0.0], trace.values()]))
    trace.cut = int(np.argmax(gaps))
    return trace.partition_at(trace.cut), trace


def consistency_thresholds(n: int, q: int, d: Sequence[int], t: float) -> np.ndarray:
    """Matrix of separation margins ``Delta*_{r,l}`` for given group ranks.

    ``t_r = sqrt(d_r/n) + sqrt(2/n * (t + log(q(q+1))))`` and
    ``Delta*_{r,l} = (3 min(t_r,t_l) + max(t_r,t_l)) / ((1-t_r)(1-t_l))``.
    Entries with ``t_r >= 1`` or ``t_l >= 1`` are ``inf``.
    """
    d = np.asarray(d, dtype=float)
    if d.shape != (q,):
        raise ValueError(f"expected {q} ranks, got {d.shape}")
    tr = np.sqrt(d / n) + math.sqrt((2.0 / n) * (t + math.log(q * (q + 1))))
    lo = np.minimum.outer(tr, tr)
    hi = np.maximum.outer(tr, tr)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (3 * lo + hi) / np.outer(1 - tr, 1 - tr)
    bad = (tr >= 1)
    out[bad, :] = np.inf
    out[:, bad] = np.inf
    return out


def cluster(X, method: str = "cancor", tau: float | str = "auto", rank_tol: float = DEFAULT_RANK_TOL):
    """Convenience dispatcher returning ``(partition, trace)``."""
    if method == "cancor":
        if tau == "auto":
            part, trace, _ = cancor_cluster_auto(X, rank_tol)
            return part, trace
        return cancor_cluster(X, float(tau), rank_tol)
    if method == "corr":
        return corr_hclust(X)
    raise ValueError(f"unknown clustering method {method!r}")
