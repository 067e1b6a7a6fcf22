"""Smoothing-free inference for two-way fixed-effects panels.

Least-squares estimation after the within transformation, a frequency-
domain cluster covariance that needs no bandwidth or kernel choice,
naive and wild frequency bootstraps, a heteroskedasticity-robust
variant, kernel-HAC and moving-block baselines, and a Monte Carlo
harness with spatio-temporal data generators.
"""

__version__ = "0.1.0"

from .errors import ConfigError, EstimationError, PanelDataError
from .panel import (
    PanelData,
    Spectrum,
    WithinPanel,
    cross_sum,
    dft,
    idft,
    periodogram,
    two_way_demean,
    within_transform,
)
from .estimators import FeEstimate, fe_estimate_freq, fe_estimate_time
from .cluster import (
    CovEstimate,
    TestResult,
    cluster_phi_freq,
    cluster_phi_time,
    cov_estimate,
    phi_per_individual_diagnostic,
    pooled_scores,
    sigma_x_hat,
    wald_statistic,
    wald_test,
)
from .bootstrap import (
    BootstrapConfig,
    BootstrapDraw,
    BootstrapResult,
    DegenerateDrawError,
    StandardizedResidualSet,
    bootstrap_pvalue,
    draw_seed_sequence,
    naive_bootstrap_draw,
    run_bootstrap,
    standardized_residuals,
    wild_bootstrap_draw,
)
from .hetero import (
    HeteroScaleEstimates,
    hetero_scale_estimates,
    robust_cluster_phi,
    robust_cov_estimate,
    robust_naive_bootstrap_draw,
    run_robust_bootstrap,
)
from .comparators import (
    FixedBTable,
    HacConfig,
    MbbConfig,
    MbbResult,
    andrews_ar1_bandwidth,
    andrews_raw_bandwidth,
    dk_cov_estimate,
    dk_hac_phi,
    fixed_b_critical_values,
    mbb_bootstrap,
    score_series,
)
from .dgp import (
    ArmaSpec,
    DgpSpec,
    HeteroDesign,
    SimulatedPanel,
    SpatialSpec,
    build_dgp_spec,
    dgp_spec_from_dict,
    dgp_spec_to_dict,
    hetero_scale_map,
    heterogeneous_specs,
    simulate_panel,
)
from .harness import CellReport, Experiment, McReport, run_experiment, seed_plan

__all__ = [
    "ArmaSpec",
    "BootstrapConfig",
    "BootstrapDraw",
    "BootstrapResult",
    "CellReport",
    "ConfigError",
    "CovEstimate",
    "DegenerateDrawError",
    "DgpSpec",
    "EstimationError",
    "Experiment",
    "FeEstimate",
    "FixedBTable",
    "HacConfig",
    "HeteroDesign",
    "HeteroScaleEstimates",
    "MbbConfig",
    "MbbResult",
    "McReport",
    "PanelData",
    "PanelDataError",
    "SimulatedPanel",
    "SpatialSpec",
    "Spectrum",
    "StandardizedResidualSet",
    "TestResult",
    "WithinPanel",
    "andrews_ar1_bandwidth",
    "andrews_raw_bandwidth",
    "bootstrap_pvalue",
    "build_dgp_spec",
    "cluster_phi_freq",
    "cluster_phi_time",
    "cov_estimate",
    "cross_sum",
    "dft",
    "dgp_spec_from_dict",
    "dgp_spec_to_dict",
    "dk_cov_estimate",
    "dk_hac_phi",
    "draw_seed_sequence",
    "fe_estimate_freq",
    "fe_estimate_time",
    "fixed_b_critical_values",
    "hetero_scale_estimates",
    "hetero_scale_map",
    "heterogeneous_specs",
    "idft",
    "mbb_bootstrap",
    "naive_bootstrap_draw",
    "periodogram",
    "phi_per_individual_diagnostic",
    "pooled_scores",
    "robust_cluster_phi",
    "robust_cov_estimate",
    "robust_naive_bootstrap_draw",
    "run_bootstrap",
    "run_experiment",
    "run_robust_bootstrap",
    "score_series",
    "seed_plan",
    "sigma_x_hat",
    "simulate_panel",
    "standardized_residuals",
    "two_way_demean",
    "wald_statistic",
    "wald_test",
    "wild_bootstrap_draw",
    "within_transform",
]
