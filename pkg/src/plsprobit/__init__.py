"""Partially linear probit models with spatially autocorrelated errors.

Estimation combines kernel-weighted likelihood profiling of the smooth
component with a GMM step for the slope vector and the SAR coefficient;
a simulation harness reproduces the finite-sample study the estimator was
designed around.
"""

from .data import Dataset, load_csv, write_csv
from .errors import (
    ConfigurationError,
    CovarianceSingularError,
    DataError,
    DegenerateInformationError,
    DivergenceError,
    FitError,
    HarnessError,
    NumericalError,
    OutOfSupportError,
    PLSProbitError,
)
from .gmm import (
    FitOptions,
    FitResult,
    MomentValue,
    Theta,
    covariance_estimate,
    fit_lsaep,
    fit_plpm,
    fit_plspm,
    instruments,
    moment_vector,
    plpm_moment_vector,
)
from .kernels import (
    gaussian_kernel,
    nadaraya_watson,
    select_bandwidth,
)
from .links import (
    LinkBundle,
    delta_weight,
    generalized_residual,
    link_bundle,
)
from .profile import (
    ProfileBatch,
    ProfileFit,
    ScoringConfig,
    fisher_info,
    initial_eta,
    profile_at,
    score_psi,
    solve_g_hat,
)
from .simulate import (
    ReplicationSummary,
    ScenarioConfig,
    generate_scenario,
    run_replications,
    summarize,
)
from .spatial import (
    SarVariance,
    WeightMatrix,
    build_knn_weights,
    load_weights,
    sar_variance,
    save_weights,
    simulate_sar_errors,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "CovarianceSingularError",
    "DataError",
    "Dataset",
    "DegenerateInformationError",
    "DivergenceError",
    "FitError",
    "FitOptions",
    "FitResult",
    "HarnessError",
    "LinkBundle",
    "MomentValue",
    "NumericalError",
    "OutOfSupportError",
    "PLSProbitError",
    "ProfileBatch",
    "ProfileFit",
    "ReplicationSummary",
    "SarVariance",
    "ScenarioConfig",
    "ScoringConfig",
    "Theta",
    "WeightMatrix",
    "build_knn_weights",
    "covariance_estimate",
    "delta_weight",
    "fisher_info",
    "fit_lsaep",
    "fit_plpm",
    "fit_plspm",
    "gaussian_kernel",
    "generalized_residual",
    "generate_scenario",
    "initial_eta",
    "instruments",
    "link_bundle",
    "load_csv",
    "load_weights",
    "moment_vector",
    "nadaraya_watson",
    "plpm_moment_vector",
    "profile_at",
    "run_replications",
    "sar_variance",
    "save_weights",
    "score_psi",
    "select_bandwidth",
    "simulate_sar_errors",
    "solve_g_hat",
    "summarize",
    "write_csv",
]
