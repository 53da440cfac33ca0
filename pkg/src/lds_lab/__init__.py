"""Desk-scale experiments on emergence thresholds in learning linear dynamical systems."""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    LdsLabError,
    NumericalError,
    RankDeficiencyError,
    SimulationOverflowError,
    ValidationError,
)
from .model_core import (
    JordanSpec,
    StateSpaceModel,
    TrajectoryBatch,
    make_jordan_system,
    output_covariance,
    random_similarity,
    scalar_random_walk,
    simulate,
    state_covariance,
)
from .estimation import (
    ParamMask,
    analytic_best_in_class,
    least_squares_masked,
    top_left_mask,
    unstable_thresholds,
)
from .kalman import SteadyStateFilter, filter_coeffs, kalman_prediction_mse, solve_dare
from .filter_bounds import (
    lemma_quadratic_forms,
    lemma_toeplitz_closed_forms,
    optimal_truncated_filter,
    per_step_relaxed_bound,
    schur_lower_bound,
)
from .risk_kl import KLReport, gaussian_kl_full_obs, gaussian_kl_hidden

__all__ = [
    "ConvergenceError", "LdsLabError", "NumericalError", "RankDeficiencyError",
    "SimulationOverflowError", "ValidationError",
    "JordanSpec", "StateSpaceModel", "TrajectoryBatch", "make_jordan_system",
    "output_covariance", "random_similarity", "scalar_random_walk", "simulate",
    "state_covariance",
    "ParamMask", "analytic_best_in_class", "least_squares_masked", "top_left_mask",
    "unstable_thresholds",
    "SteadyStateFilter", "filter_coeffs", "kalman_prediction_mse", "solve_dare",
    "lemma_quadratic_forms", "lemma_toeplitz_closed_forms", "optimal_truncated_filter",
    "per_step_relaxed_bound", "schur_lower_bound",
    "KLReport", "gaussian_kl_full_obs", "gaussian_kl_hidden",
]
