"""Simulation scenarios: covariance builders, coefficient configurations,
Gaussian designs and the experiment runner for CRL / CGL / Lasso."""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import block_diag

from .clustering import Partition, cancor_cluster_auto, corr_hclust
from .linalg import DesignMatrix, min_eigenvalue, sym_eigen
from .pipelines import cluster_representatives, method_path, screening_eval
from .solvers import ConvergenceWarning, SolverOptions, cv_select

GENERATOR = "numpy.PCG64"
METHODS = ("CRL", "CGL", "Lasso")


def rng_from(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(seed))


def _equicorr_block(size: int, rho: float) -> np.ndarray:
    if size > 1 and not (-1.0 / (size - 1) < rho < 1):
        raise ValueError(f"rho={rho} outside (-1/{size - 1}, 1) for block size {size}")
    return np.full((size, size), rho) + (1 - rho) * np.eye(size)


def make_sigma_block(num_blocks: int, block_size: int, rho: float) -> np.ndarray:
    """Block-diagonal covariance with equi-correlated unit-variance blocks."""
    if block_size > 1 and not (-1.0 / (block_size - 1) < rho < 1):
        raise ValueError(f"rho={rho} outside (-1/{block_size - 1}, 1)")
    return block_diag(*([_equicorr_block(block_size, rho)] * num_blocks))


def make_sigma_single_block(p: int, block_size: int, rho: float) -> np.ndarray:
    """Identity except for one equi-correlated block on the first variables."""
    if block_size > p:
        raise ValueError("block larger than p")
    S = np.eye(p)
    S[:block_size, :block_size] = _equicorr_block(block_size, rho)
    return S


def make_sigma(spec: dict) -> np.ndarray:
    kind = spec["kind"]
    if kind == "block":
        return make_sigma_block(spec["num_blocks"], spec["block_size"], spec["rho"])
    if kind == "single-block":
        return make_sigma_single_block(spec["p"], spec["block_size"], spec["rho"])
    if kind == "identity":
        return np.eye(spec["p"])
    if kind == "custom":
        S = np.asarray(spec["matrix"], dtype=float)
        if min_eigenvalue(S) < -1e-8:
            raise ValueError("custom covariance is not positive semidefinite")
        return S
    raise ValueError(f"unknown covariance kind {kind!r}")


def true_partition(spec: dict) -> Partition | None:
    """Block structure implied by a covariance spec (singletons outside blocks)."""
    kind = spec["kind"]
    if kind == "block":
        k = spec["block_size"]
        return Partition(tuple(tuple(range(b * k, (b + 1) * k)) for b in range(spec["num_blocks"])))
    if kind == "single-block":
        k = spec["block_size"]
        return Partition((tuple(range(k)),) + tuple((j,) for j in range(k, spec["p"])))
    if kind == "identity":
        return Partition.singletons(spec["p"])
    return None


# supports are zero-based
BETA_CATALOG = {
    "Aa": {"support": list(range(20)), "values": "grid", "flip_half": False},
    "Ab": {"support": [b * 10 + i for b in range(10) for i in (0, 1)], "values": "grid", "flip_half": False},
    "Ac": {"support": list(range(20)), "values": "grid", "flip_half": True},
    "Ad": {"support": [b * 10 + i for b in range(10) for i in (0, 1)], "values": "grid", "flip_half": True},
    "Ba": {"support": list(range(15)) + list(range(30, 35)), "values": "grid", "flip_half": False},
    "Bb": {"support": list(range(5)) + list(range(30, 45)), "values": "grid", "flip_half": False},
    "Bc": {"support": list(range(15)) + list(range(30, 35)), "values": "grid", "flip_half": True},
    "Bd": {"support": list(range(5)) + list(range(30, 45)), "values": "grid", "flip_half": True},
    "C": {"support": list(range(20)), "values": "duo", "flip_half": False},
}


def duo_small_value(p: int, n: int, sigma: float) -> float:
    """Coefficient for the weak partner in each correlated pair of scenario C."""
    return (1.0 / 3.0) * math.sqrt(math.log(p) / n) * sigma / 1.9


def make_beta(spec, seed, p: int = 1000, n: int = 100, sigma: float = 3.0) -> np.ndarray:
    """Realise a coefficient vector.

    ``spec`` is a catalogue name or a dict with ``support`` (zero-based),
    ``values`` (``"grid"``: a random permutation of ``2/s0, 4/s0, ..., 2``;
    ``"duo"``: 2 on even offsets and the weak value on odd offsets; a number;
    or a list) and ``flip_half`` (negate ``floor(s0/2)`` random entries).
    """
    if isinstance(spec, str):
        if spec not in BETA_CATALOG:
            raise ValueError(f"unknown coefficient configuration {spec!r}")
        spec = BETA_CATALOG[spec]
    rng = rng_from(seed)
    support = np.asarray(spec["support"], dtype=np.int64)
    s0 = support.size
    if s0 == 0 or support.max() >= p or support.min() < 0:
        raise ValueError("support must be non-empty and inside 0..p-1")
    vals = spec.get("values", "grid")
    if vals == "grid":
        v = rng.permutation(2.0 * np.arange(1, s0 + 1) / s0)
    elif vals == "duo":
        small = duo_small_value(p, n, sigma)
        v = np.where(np.arange(s0) % 2 == 0, 2.0, small)
    elif isinstance(vals, (int, float)):
        v = np.full(s0, float(vals))
    else:
        v = np.asarray(vals, dtype=float)
        if v.shape != (s0,):
            raise ValueError("value list must match the support size")
    if spec.get("flip_half", False):
        flip = rng.choice(s0, size=s0 // 2, replace=False)
        v = v.copy()
        v[flip] *= -1.0
    beta = np.zeros(p)
    beta[support] = v
    return beta


def correlated_support(X, seed, size: int = 10) -> np.ndarray:
    """A random variable plus the ``size - 1`` variables most correlated with it
    (absolute sample correlation)."""
    A = np.asarray(X.data if isinstance(X, DesignMatrix) else X, dtype=float)
    rng = rng_from(seed)
    k = int(rng.integers(A.shape[1]))
    Ac = A - A.mean(axis=0)
    sd = np.sqrt((Ac**2).sum(axis=0))
    c = np.abs(Ac.T @ Ac[:, k]) / np.where(sd > 0, sd * sd[k], np.inf)
    c[k] = np.inf
    order = np.argsort(-c, kind="stable")
    return np.sort(order[:size])


def psd_sqrt(Sigma) -> np.ndarray:
    w, V = sym_eigen(Sigma)
    if w[-1] < -1e-8 * max(1.0, w[0]):
        raise ValueError("covariance is not positive semidefinite")
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def gen_gaussian_design(Sigma, n: int, seed, root=None) -> DesignMatrix:
    """``n`` i.i.d. rows from ``N(0, Sigma)`` via the symmetric square root."""
    R = psd_sqrt(Sigma) if root is None else root
    Z = rng_from(seed).standard_normal((n, R.shape[0]))
    return DesignMatrix(Z @ R)


def gen_latent_design(cov_u, m: Sequence[int], tau: Sequence[float], n: int, seed):
    """Design with one unperturbed copy of each latent variable per cluster.

    Returns the design and the column index of each cluster's unperturbed
    variable (where ``beta_tilde`` is placed in the augmented coefficients).
    """
    cov_u = np.atleast_2d(np.asarray(cov_u, dtype=float))
    m = np.asarray(m, dtype=np.int64)
    tau = np.asarray(tau, dtype=float)
    rng = rng_from(seed)
    U = rng.standard_normal((n, cov_u.shape[0])) @ psd_sqrt(cov_u)
    cols = []
    for r in range(cov_u.shape[0]):
        cols.append(U[:, [r]])
        if m[r] > 1:
            cols.append(U[:, [r]] + tau[r] * rng.standard_normal((n, m[r] - 1)))
    firsts = np.concatenate([[0], np.cumsum(m)[:-1]]).astype(np.int64)
    return DesignMatrix(np.hstack(cols)), firsts


@dataclass
class Scenario:
    name: str
    sigma_spec: dict
    beta_spec: str | dict
    noise_sigma: float = 3.0
    n: int = 100
    p: int = 1000
    seed: int = 0
    n_test: int | None = None

    def __post_init__(self):
        if self.n_test is None:
            self.n_test = self.n

    @property
    def s0(self) -> int:
        spec = BETA_CATALOG[self.beta_spec] if isinstance(self.beta_spec, str) else self.beta_spec
        return len(spec["support"])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        keys = {"name", "sigma_spec", "beta_spec", "noise_sigma", "n", "p", "seed", "n_test"}
        unknown = set(d) - keys
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        return cls(**d)


SIGMA_A = {"kind": "block", "num_blocks": 100, "block_size": 10, "rho": 0.9}
SIGMA_B = {"kind": "single-block", "p": 1000, "block_size": 30, "rho": 0.9}
SIGMA_C = {"kind": "block", "num_blocks": 500, "block_size": 2, "rho": 0.9}


def catalog_scenario(name: str, noise_sigma: float = 3.0, seed: int = 0, n: int = 100) -> Scenario:
    if name not in BETA_CATALOG:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(BETA_CATALOG)}")
    sig = {"A": SIGMA_A, "B": SIGMA_B, "C": SIGMA_C}[name[0]]
    return Scenario(name, dict(sig), name, noise_sigma, n, 1000, seed)


SCENARIOS = tuple(BETA_CATALOG)


@dataclass
class ScreeningCurve:
    sizes: np.ndarray
    tpr: np.ndarray

    def at(self, s) -> np.ndarray:
        """Best TPR among path points with at most ``s`` selected variables."""
        s = np.atleast_1d(np.asarray(s))
        out = np.zeros(s.shape)
        for i, v in enumerate(s):
            ok = self.sizes <= v
            out[i] = self.tpr[ok].max() if ok.any() else 0.0
        return out


def screening_curve_from_path(selections, S0) -> ScreeningCurve:
    """Points ``(|S_hat|, TPR)`` along a path, one per distinct size (best TPR kept)."""
    best: dict[int, float] = {}
    for sel in selections:
        size, tpr = screening_eval(sel, S0)
        best[size] = max(best.get(size, 0.0), tpr)
    sizes = np.array(sorted(best), dtype=np.int64)
    return ScreeningCurve(sizes, np.array([best[s] for s in sizes]))


@dataclass
class RunResult:
    scenario: Scenario
    methods: tuple[str, ...]
    runs: int
    mse: dict[str, np.ndarray]
    mse_cv: dict[str, np.ndarray] | None
    lambda_best: dict[str, np.ndarray]
    curve_sizes: np.ndarray
    curves: dict[str, np.ndarray]
    partition: Partition
    clusterer: str
    oracle_mse: np.ndarray
    timing: dict[str, float] = field(default_factory=dict)
    generator: str = GENERATOR

    @staticmethod
    def _sd(x):
        return float(np.std(x, ddof=1)) if len(x) > 1 else 0.0

    def mse_table(self) -> list[dict]:
        rows = []
        for m in self.methods:
            row = {"method": m, "mse_mean": float(np.mean(self.mse[m])), "mse_sd": self._sd(self.mse[m])}
            if self.mse_cv is not None:
                row["cv_mse_mean"] = float(np.mean(self.mse_cv[m]))
                row["cv_mse_sd"] = self._sd(self.mse_cv[m])
            rows.append(row)
        return rows

    def mean_curve(self, method: str) -> np.ndarray:
        return self.curves[method].mean(axis=0)


def _cluster_design(X, clusterer, sigma_spec):
    if isinstance(clusterer, Partition):
        return clusterer, "given"
    if clusterer == "cancor":
        return cancor_cluster_auto(X)[0], clusterer
    if clusterer == "corr":
        return corr_hclust(X)[0], clusterer
    if clusterer == "true":
        part = true_partition(sigma_spec)
        if part is None:
            raise ValueError("no known block structure for this covariance")
        return part, clusterer
    raise ValueError(f"unknown clusterer {clusterer!r}")


def run_scenario(
    sc: Scenario,
    methods: Sequence[str] = METHODS,
    clusterer="cancor",
    n_lambda: int = 100,
    lambda_min_ratio: float = 1e-3,
    runs: int = 50,
    cv: bool = False,
    cv_folds: int = 10,
    opts: SolverOptions | None = None,
    progress=None,
) -> RunResult:
    """Repeat a scenario with a fixed design and fresh coefficients and noise.

    The training and test designs are drawn once from ``N(0, Sigma)``. Each
    run draws ``beta0`` (random values / signs where the configuration asks
    for them) and new noise for both sets. Per method, the reported MSE is
    the smallest test MSE along the lambda path; with ``cv`` the MSE at the
    cross-validated lambda is also recorded.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    Sigma = make_sigma(sc.sigma_spec)
    if Sigma.shape[0] != sc.p:
        raise ValueError(f"covariance has dimension {Sigma.shape[0]}, scenario says p={sc.p}")
    root = psd_sqrt(Sigma)
    X = gen_gaussian_design(Sigma, sc.n, np.random.SeedSequence([sc.seed, 0]), root).data
    X_test = gen_gaussian_design(Sigma, sc.n_test, np.random.SeedSequence([sc.seed, 1]), root).data
    t1 = time.perf_counter()
    partition, cl_name = _cluster_design(X, clusterer, sc.sigma_spec)
    t2 = time.perf_counter()

    sizes = np.arange(sc.p + 1)
    mse = {m: np.empty(runs) for m in methods}
    mse_cv = {m: np.empty(runs) for m in methods} if cv else None
    lam_best = {m: np.empty(runs) for m in methods}
    curves = {m: np.empty((runs, sizes.size)) for m in methods}
    oracle = np.empty(runs)
    for k in range(runs):
        rng = rng_from(np.random.SeedSequence([sc.seed, 2, k]))
        beta0 = make_beta(sc.beta_spec, rng, sc.p, sc.n, sc.noise_sigma)
        S0 = np.flatnonzero(beta0)
        y = X @ beta0 + sc.noise_sigma * rng.standard_normal(sc.n)
        y_test = X_test @ beta0 + sc.noise_sigma * rng.standard_normal(sc.n_test)
        oracle[k] = float(np.mean((y_test - X_test @ beta0) ** 2))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            for m in methods:
                sels = method_path(m, X, y, partition, n_lambda=n_lambda,
                                   lambda_min_ratio=lambda_min_ratio, opts=opts)
                errs = np.array([np.mean((y_test - s.predict(X_test)) ** 2) for s in sels])
                i = int(np.argmin(errs))
                mse[m][k] = errs[i]
                lam_best[m][k] = sels[i].lam
                if S0.size:
                    curves[m][k] = screening_curve_from_path(sels, S0).at(sizes)
                else:
                    curves[m][k] = np.nan  # TPR is undefined without active variables
                if cv:
                    lams = np.array([s.lam for s in sels])
                    if m == "CRL":
                        res = cv_select(cluster_representatives(X, partition), y, "lasso",
                                        K=cv_folds, seed=k, opts=opts, lambdas=lams)
                    elif m == "CGL":
                        res = cv_select(X, y, "group-lasso", partition, K=cv_folds, seed=k,
                                        opts=opts, lambdas=lams)
                    else:
                        res = cv_select(X, y, "lasso", K=cv_folds, seed=k, opts=opts, lambdas=lams)
                    j = int(np.flatnonzero(lams == res.lambda_min)[0])
                    mse_cv[m][k] = errs[j]
        if progress is not None:
            progress(k + 1, runs)
    t3 = time.perf_counter()
    return RunResult(
        scenario=sc,
        methods=methods,
        runs=runs,
        mse=mse,
        mse_cv=mse_cv,
        lambda_best=lam_best,
        curve_sizes=sizes,
        curves=curves,
        partition=partition,
        clusterer=cl_name,
        oracle_mse=oracle,
        timing={"design": t1 - t0, "clustering": t2 - t1, "fitting": t3 - t2},
    )
