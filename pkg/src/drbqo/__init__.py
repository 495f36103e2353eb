"""Distributionally robust Bayesian quadrature optimisation.

Maximise ``E_P[f(x, w)]`` under the least favourable reweighting ``P`` of a
fixed context sample inside a chi-square ball, using a Gaussian-process model
of ``f`` and posterior sampling.
"""

from .acquisition import (
    CandidatePolicy,
    ContextSet,
    IterationRecord,
    RunConfig,
    RunTrace,
    drbqo_run,
    drbqo_select_x,
    report_point,
    select_w_max_variance,
)
from .baselines import AlgorithmId, baseline_run, bqo_ts_select_x, quadrature_ei
from .bench import (
    ExperimentConfig,
    SyntheticProblem,
    build_regret_oracle,
    logistic_problem,
    run_experiment,
    shifted_problem,
)
from .errors import ConfigurationError, ContractViolation, DRBQOError, NumericalError
from .gp import (
    GPPosterior,
    fit,
    log_marginal_likelihood,
    posterior_mean_cov,
    quadrature_mean,
    quadrature_variance,
    sample_on_grid,
)
from .kernel import KernelSpec, LengthScales, kernel_eval, kernel_matrix, scaled_sq_dist
from .robust_weights import (
    ChiSquareBall,
    RobustSolution,
    brute_force_oracle,
    lambda_upper_bound,
    robust_gap_bounds,
    robust_value_gradient,
    robust_values,
    solve,
    weights_given_lambda,
)

__version__ = "0.1.0"
