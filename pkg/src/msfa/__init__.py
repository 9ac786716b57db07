"""Multi-scale factor analysis for hierarchical correlation networks."""

__version__ = "0.1.0"

from .exceptions import NumericalError, ValidationError
from .layout import (
    NetworkLayout, TimeSeriesPanel, center_panel, extract_cluster, standardize_panel,
    validate_layout,
)
from .local_factor import (
    BIC, Fixed, LocalFactorFit, VarianceThreshold, fit_local, select_num_factors_bic,
    select_num_factors_variance, within_cluster_cov,
)
from .global_factor import (
    GlobalFactorFit, cov_to_corr, factor_cross_cov, fit_global, network_factor_cov,
    whole_network_cov,
)
from .rv import (
    RvMatrix, RvTestResult, bonferroni_threshold, rv_coefficient, rv_from_covariance,
    rv_matrix, rv_null_moments, rv_permutation_null, rv_test,
)
from .simulate import (
    SimulationSpec, VarModel, build_modular_var, ground_truth, implied_stationary_cov,
    benchmark_spec, read_model, simulate_series, spectral_radius, write_model,
)
from .bench import (
    BenchConfig, BenchResult, RosterEntry, frobenius_sq_error, ledoit_wolf, mean_series_rv,
    run_benchmark, sample_correlation,
)
from .estimator import MSFA
