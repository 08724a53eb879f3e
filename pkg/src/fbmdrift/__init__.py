"""Decomposition of persistent fractional Brownian increments and
mean-variance programmed-strategy optimization.

The increment of a fractional Brownian motion with Hurst exponent
H in (1/2, 1) splits into two independent Gaussian parts: a rough
noise part driven only by the Brownian driver after the split time,
and a smooth part determined entirely by the driver's past, which is
differentiable in mean square. The smooth part acts like a locally
known drift rate: integrals of preselected strategies against it can
have nonzero expectation, which is what the optimizer exploits.
"""

from .driver import (
    BrownianDriver,
    HurstParams,
    TimeGrid,
    fbm_covariance,
    make_grid,
    make_hurst_params,
    sample_driver,
    simulate_fbm_exact,
)
from .decomposition import (
    DecompositionPath,
    diff_quotient_error,
    drh_relative_tail,
    drh_tail_variance,
    integrated_var_drh,
    kernel_f,
    kernel_f_prime,
    simulate_decomposition,
    solve_truncation_depth,
    var_drh,
    var_wh,
)
from .fracops import (
    GammaOperator,
    StrategyVector,
    build_gamma_operator,
    g_transform,
    g_transform_cell_avg,
    quadratic_form,
)
from .optimizer import (
    MarketParams,
    OptimizationResult,
    SolverError,
    drift_rhs,
    objective,
    solve_optimal,
    wealth_stats,
)
from .verify import CheckReport, available_checks, run_check, run_suite
from .config import ConfigError, RunConfig

__version__ = "0.1.0"

__all__ = [
    "BrownianDriver",
    "CheckReport",
    "ConfigError",
    "DecompositionPath",
    "GammaOperator",
    "HurstParams",
    "MarketParams",
    "OptimizationResult",
    "RunConfig",
    "SolverError",
    "StrategyVector",
    "TimeGrid",
    "available_checks",
    "build_gamma_operator",
    "diff_quotient_error",
    "drh_relative_tail",
    "drh_tail_variance",
    "drift_rhs",
    "fbm_covariance",
    "g_transform",
    "g_transform_cell_avg",
    "integrated_var_drh",
    "kernel_f",
    "kernel_f_prime",
    "make_grid",
    "make_hurst_params",
    "objective",
    "quadratic_form",
    "run_check",
    "run_suite",
    "sample_driver",
    "simulate_decomposition",
    "simulate_fbm_exact",
    "solve_optimal",
    "solve_truncation_depth",
    "var_drh",
    "var_wh",
    "wealth_stats",
]
