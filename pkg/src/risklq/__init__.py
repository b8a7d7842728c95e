"""Risk-constrained linear-quadratic control over a lossy uplink.

A local controller filters noisy measurements and forwards its estimate to
a remote controller across a Bernoulli-failure channel; both apply linear
policies from a coupled backward recursion whose weights carry a risk
multiplier. The package solves the recursion, evaluates cost and a
variance-budget risk both in closed form and by seeded Monte Carlo, tests
mean-square boundedness at the infinite horizon, and searches the
multiplier that meets a given budget.
"""

from .dual import DualResult, bisect_multiplier, duality_report
from .errors import (CertificateFailed, DimensionMismatch, Diverged,
                     HorizonMismatch, InfeasibleWithinCap, MonotonicityViolation,
                     NotPD, NotPSD, NotSolvable, ProbabilityOutOfRange,
                     RiskLQError, SingularInnovation)
from .estimation import (CovarianceSchedule, EstimatorState, covariance_schedule,
                         initial_state, local_filter_step, remote_covariance_assessment,
                         remote_estimator_step, stationary_filter_covariance)
from .evaluation import (CostBreakdown, RiskRecursion, mc_evaluate, optimal_cost,
                         risk_consistency, risk_value, state_covariance_profile)
from .model import (StackedInputModel, SystemModel, ValidatedModel, load_model,
                    model_from_dict, model_to_dict, stack_inputs, validate,
                    with_epsilon)
from .policy import (ControlAction, MeanState, completed_square_penalties,
                     control_action, mean_path, mean_propagate)
from .riccati import (GainSet, RiccatiSolution, StationarySolution, solve_finite,
                      solve_stationary)
from .simulate import (NoiseSpec, Trajectory, TrajectoryEnsemble, default_noise,
                       ensemble, non_gaussian_invariance_check, replay,
                       simulate_trajectory)

__all__ = [
    "SystemModel", "ValidatedModel", "StackedInputModel", "validate",
    "stack_inputs", "with_epsilon", "load_model", "model_from_dict",
    "model_to_dict",
    "GainSet", "RiccatiSolution", "StationarySolution", "solve_finite",
    "solve_stationary",
    "EstimatorState", "CovarianceSchedule", "covariance_schedule",
    "initial_state", "local_filter_step", "remote_estimator_step",
    "stationary_filter_covariance", "remote_covariance_assessment",
    "MeanState", "ControlAction", "control_action", "mean_propagate",
    "mean_path", "completed_square_penalties",
    "CostBreakdown", "RiskRecursion", "optimal_cost", "risk_value",
    "state_covariance_profile", "mc_evaluate", "risk_consistency",
    "NoiseSpec", "Trajectory", "TrajectoryEnsemble", "default_noise",
    "ensemble", "simulate_trajectory", "replay", "non_gaussian_invariance_check",
    "DualResult", "bisect_multiplier", "duality_report",
    "RiskLQError", "DimensionMismatch", "NotPSD", "NotPD",
    "ProbabilityOutOfRange", "SingularInnovation", "NotSolvable", "Diverged",
    "HorizonMismatch", "InfeasibleWithinCap", "MonotonicityViolation",
    "CertificateFailed",
]
