"""Differentially private chi-square hypothesis tests for categorical data."""

__version__ = "0.1.0"

from ._validation import (
    ConfigError,
    DataError,
    DegenerateTableError,
    DomainError,
    InsufficientSamplesError,
    InvalidNullError,
    ShapeError,
)
from .estimators import (
    NoisyHistogramTransformer,
    OutputPerturbationTest,
    PrivateGoodnessOfFit,
    PrivateIndependenceTest,
)
from .gof import (
    classical_gof_test,
    dp_mc_gof_test,
    mc_critical_value,
    projected_statistic,
    unprojected_statistic,
    zcdp_gof_test,
)
from .gwas import gauss_mixture_critical_value, gwas_sensitivity, output_perturbation_test, pearson_statistic
from .harness import ExperimentConfig, ExperimentRow, analytic_power, emit_csv, preset, run_experiment
from .minchi import (
    classical_independence_test,
    constant_model,
    dp_mc_min_test,
    independence_model,
    minimize_statistic,
    zcdp_min_chi2_test,
)
from .randnoise import NoisyHistogram, PrivacyBudget, RngStream, gaussian_mechanism, laplace_mechanism
from .report import Decision, StatKind, TestReport
from .specfun import chi2_cdf, chi2_quantile, chi2_sf

__all__ = [
    "ConfigError", "DataError", "DegenerateTableError", "DomainError",
    "InsufficientSamplesError", "InvalidNullError", "ShapeError",
    "NoisyHistogramTransformer", "OutputPerturbationTest", "PrivateGoodnessOfFit",
    "PrivateIndependenceTest",
    "classical_gof_test", "dp_mc_gof_test", "mc_critical_value", "projected_statistic",
    "unprojected_statistic", "zcdp_gof_test",
    "gauss_mixture_critical_value", "gwas_sensitivity", "output_perturbation_test",
    "pearson_statistic",
    "ExperimentConfig", "ExperimentRow", "analytic_power", "emit_csv", "preset", "run_experiment",
    "classical_independence_test", "constant_model", "dp_mc_min_test", "independence_model",
    "minimize_statistic", "zcdp_min_chi2_test",
    "NoisyHistogram", "PrivacyBudget", "RngStream", "gaussian_mechanism", "laplace_mechanism",
    "Decision", "StatKind", "TestReport",
    "chi2_cdf", "chi2_quantile", "chi2_sf",
]
