"""Clustering of correlated covariates followed by cluster Lasso estimation."""

__version__ = "0.1.0"

from .linalg import (
    DesignMatrix,
    canonical_correlation,
    cross_covariance,
    min_eigenvalue,
    sym_eigen,
)
from .clustering import (
    MergeTrace,
    Partition,
    cancor_cluster,
    cancor_cluster_auto,
    consistency_thresholds,
    corr_hclust,
    finer_than,
    is_tau_separated,
    rho_max,
)
from .solvers import (
    SolverOptions,
    cv_select,
    group_lasso_bcd,
    group_lasso_path,
    lasso_cd,
    lasso_path,
)
from .pipelines import cgl_fit, cluster_representatives, crl_fit, lasso_fit, method_path
from .diagnostics import (
    PopulationModel,
    LatentSpec,
    bias_bound_one_active,
    bias_equicorr,
    gamma0_equicorr,
    gamma0_general,
    gamma_shift_bound_one_active,
    group_compat_bound,
)
from .simgen import Scenario, catalog_scenario, run_scenario

__all__ = [
    "__version__",
    "DesignMatrix",
    "canonical_correlation",
    "cross_covariance",
    "min_eigenvalue",
    "sym_eigen",
    "MergeTrace",
    "Partition",
    "cancor_cluster",
    "cancor_cluster_auto",
    "consistency_thresholds",
    "corr_hclust",
    "finer_than",
    "is_tau_separated",
    "rho_max",
    "SolverOptions",
    "cv_select",
    "group_lasso_bcd",
    "group_lasso_path",
    "lasso_cd",
    "lasso_path",
    "PopulationModel",
    "LatentSpec",
    "bias_bound_one_active",
    "bias_equicorr",
    "gamma0_equicorr",
    "gamma0_general",
    "gamma_shift_bound_one_active",
    "group_compat_bound",
    "cgl_fit",
    "cluster_representatives",
    "crl_fit",
    "lasso_fit",
    "method_path",
    "Scenario",
    "catalog_scenario",
    "run_scenario",
]
