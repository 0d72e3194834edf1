"""LMMSE estimation for blind linear inverse problems.

Observation model: y = A x + noise with a *random* forward matrix A.
The package propagates first/second moments of (x, A, noise) into the
observation covariance, builds the optimal affine (LMMSE) estimators for
the signal and for the operator together with their Tikhonov-equivalent
solvers, evaluates the matching error bounds, and reproduces the 1D
periodic-deconvolution experiments through the ``blind-lmmse`` CLI.
"""

from .moments import (
    BlindObsCov,
    OperatorEnsemble,
    ProblemMoments,
    cov_obs_blind,
    cov_op_obs,
    cross_cov_signal_obs,
    interaction_matrix,
    obs_mean,
)
from .convolution import (
    KernelStats,
    ShiftBasis,
    circular_convolve,
    conv_matrix_from_kernel,
    operator_cov_from_kernel,
    operator_mean_from_kernel,
    singular_moments_circulant,
    vec_lift_matrix,
)
from .estimators import (
    AffineEstimator,
    IllConditionedError,
    SampleSet,
    empirical_lmmse,
    expected_gap_sq,
    joint_estimate,
    lmmse_blind_signal,
    lmmse_general,
    lmmse_nonblind,
    lmmse_operator,
    tikhonov_operator,
    tikhonov_signal,
)
from .bounds import (
    BoundReport,
    SourceConditionPrior,
    approx_bound_rhs,
    default_lambda,
    lmmse_norm_bound,
    main_bound_rhs,
    matrix_power_psd,
    nonblind_bound_rhs,
    sampling_bound_rhs,
    sampling_threshold,
    source_condition_prior,
    spectrum_stats,
)
from .datagen import (
    Dataset,
    ShiftedKernelEnsemble,
    SinusoidPrior,
    generate_dataset,
    kernel_stats_from_draws,
    problem_moments_from,
    sample_kernel,
    sample_signals,
)

__version__ = "0.1.0"
