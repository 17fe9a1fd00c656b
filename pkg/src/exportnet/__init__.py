"""Stochastic growth of export values on a data-derived coupling network."""

from .errors import (
    CalibrationError,
    DegenerateSeriesError,
    DimensionError,
    NumericalBlowupError,
    PanelFormatError,
)
from .panel import (
    ExportPanel,
    InflationSchedule,
    PanelStatistics,
    compute_correlators,
    compute_rank_weights,
    compute_statistics,
    load_inflation,
    load_panel,
    save_panel,
)
from .params import ModelParams, drift_rate
from .network import (
    CouplingNetwork,
    build_coupling,
    kernel_residual,
    mean_link_weight,
    save_edge_list,
)
from .noise import (
    CorrelationFactor,
    NoiseState,
    factor_correlation,
    init_stationary,
    sample_correlated,
    step_noise,
)
from .simulate import (
    Trajectory,
    save_trajectory,
    simulate,
    simulate_ensemble,
    spawn_rngs,
    step,
    to_panel,
)
from .calibrate import (
    CalibrationReport,
    RegressionPoint,
    RegressionPointSet,
    VarianceFit,
    calibrate_all,
    calibrate_coupling,
    calibrate_mu_bar,
    compute_fg_points,
    estimate_uncertainty,
    fit_sigma_tau,
    load_params,
    save_report,
    theoretical_variance,
)
from .analysis import (
    GrowthCurve,
    RelaxationFit,
    TailFit,
    comparison_products,
    correlator_error,
    fit_relaxation,
    growth_rate,
    pareto_tail_exponent,
    reconstruct_correlators,
    spearman,
    spearman_trajectory,
    sweep_coupling,
)
from .synthetic import (
    SyntheticSpec,
    SyntheticTruth,
    generate_panel,
    make_factor_correlation,
    make_kernel_correlation,
    make_pareto_weights,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationError", "DegenerateSeriesError", "DimensionError",
    "NumericalBlowupError", "PanelFormatError",
    "ExportPanel", "InflationSchedule", "PanelStatistics",
    "compute_correlators", "compute_rank_weights", "compute_statistics",
    "load_inflation", "load_panel", "save_panel",
    "ModelParams", "drift_rate",
    "CouplingNetwork", "build_coupling", "kernel_residual",
    "mean_link_weight", "save_edge_list",
    "CorrelationFactor", "NoiseState", "factor_correlation",
    "init_stationary", "sample_correlated", "step_noise",
    "Trajectory", "save_trajectory", "simulate", "simulate_ensemble",
    "spawn_rngs", "step", "to_panel",
    "CalibrationReport", "RegressionPoint", "RegressionPointSet",
    "VarianceFit", "calibrate_all", "calibrate_coupling", "calibrate_mu_bar",
    "compute_fg_points", "estimate_uncertainty", "fit_sigma_tau",
    "load_params", "save_report", "theoretical_variance",
    "GrowthCurve", "RelaxationFit", "TailFit", "comparison_products",
    "correlator_error", "fit_relaxation", "growth_rate",
    "pareto_tail_exponent", "reconstruct_correlators", "spearman",
    "spearman_trajectory", "sweep_coupling",
    "SyntheticSpec", "SyntheticTruth", "generate_panel",
    "make_factor_correlation", "make_kernel_correlation", "make_pareto_weights",
]
