"""Gaussian stochastic process emulation, calibration and input screening.

Robust covariance-parameter estimation via marginal posterior modes under
the jointly robust prior (closed-form constant, moments and gradient) or
the Fisher-information reference prior, plus Bayesian calibration with a
GaSP discrepancy and inert-input screening from normalized inverse ranges.
"""

from .design import DesignMatrix
from .errors import (
    ConfigError,
    DataError,
    DegenerateOutputError,
    GaspError,
    NumericError,
    RankError,
    SingularCovarianceError,
)
from .gasp import GaSPModel, PredictiveDistribution, log_marginal_lik, predict
from .kernels import (
    CorrelationSpec,
    Kernel1D,
    Parameterization,
    RangeParams,
    corr1d,
    corr_matrix,
    corr_matrix_deriv,
    exponential,
    gaussian,
    matern15,
    matern25,
    power_exponential,
)
from .fit import FitConfig, FitResult, FittedEmulator, fit_emulator, fit_mode, robustness_check
from .priors import JRPriorParams, PriorSpec, jr_default_params, jr_log_density, jr_moments, reference_log_density
from .screen import ScreenResult, SobolIndices, normalized_inverse_ranges, sobol_emulator, sobol_mc
from .calibrate import (
    CalibrationProblem,
    PosteriorChain,
    calibration_metrics,
    check_propriety_preconditions,
    fit_emulator_modular,
    predict_calibrated,
    run_mcmc,
)
from .bench import maximin_lhd, nrmse

__version__ = "0.1.0"
