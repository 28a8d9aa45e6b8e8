"""Priors for the covariance parameters: jointly robust and reference.

The jointly robust (JR) prior puts a gamma-like density on the weighted
total  t = sum_l C_l beta_l (+ eta)  of the inverse range parameters:

    pi(beta[, eta]) = const * t^a * exp(-b t),

which is proper, has closed-form normalizing constant, moments and
gradient, and keeps the estimated correlation matrix away from both the
identity and the all-ones degenerate limits.

The reference prior is the root determinant of the expected Fisher
information of (sigma^2, ranges[, eta]); it is kept unnormalized and its
gradient is only available numerically.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError
from .gasp import fisher_info

EMULATION = "emulation"
CALIBRATION = "calibration"

REFERENCE = "reference"
JR = "jr"


@dataclass(frozen=True)
class JRPriorParams:
    """Hyperparameters (a, b, C_1..C_p) of the jointly robust prior."""

    a: float
    b: float
    C: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float).ravel()
        if C.size < 1 or np.any(C <= 0) or not np.all(np.isfinite(C)):
            raise ConfigError("scale constants C must be positive and finite")
        if not self.b > 0:
            raise ConfigError(f"rate b must be positive, got {self.b}")
        object.__setattr__(self, "C", C)

    @property
    def p(self):
        return self.C.size


@dataclass(frozen=True)
class PriorSpec:
    """Which prior to use and, for the JR prior, its hyperparameters.

    ``jr_params=None`` means "derive defaults from the design at fit time".
    """

    kind: str = JR
    jr_params: JRPriorParams = None
    nugget_included: bool = False

    def __post_init__(self):
        if self.kind not in (REFERENCE, JR):
            raise ConfigError(f"unknown prior kind {self.kind!r}")


def jr_default_params(design, context=EMULATION):
    """Default JR hyperparameters scaled to the design.

    C_l = n^(-1/p) * (x_max,l - x_min,l), b = 1, and a = 1/5 for emulation
    or a = 1/2 - p for calibration.
    """
    if context not in (EMULATION, CALIBRATION):
        raise ConfigError(f"unknown context {context!r}")
    widths = design.widths
    for l, w in enumerate(widths):
        if w <= 0:
            raise ConfigError(
                f"degenerate design: coordinate {l} has zero width, "
                "cannot scale prior constants"
            )
    p = design.p
    C = design.n ** (-1.0 / p) * widths
    a = 0.2 if context == EMULATION else 0.5 - p
    return JRPriorParams(a=a, b=1.0, C=C)


def _check_a_bound(params, with_nugget):
    bound = -(params.p + 1) if with_nugget else -params.p
    if not params.a > bound:
        raise ConfigError(
            f"JR prior requires a > {bound} for this form, got a={params.a}"
        )


def jr_log_normalizing_constant(params, with_nugget):
    """log of the constant that makes the JR density integrate to 1."""
    _check_a_bound(params, with_nugget)
    p, a, b = params.p, params.a, params.b
    k = p + 1 if with_nugget else p
    return (
        math.lgamma(k)  # log((k-1)!)
        + (a + k) * math.log(b)
        + float(np.sum(np.log(params.C)))
        - math.lgamma(a + k)
    )


def jr_log_density(params, beta, eta=None):
    """Normalized log density of the JR prior at (beta[, eta]).

    With ``eta=None`` the no-nugget form is used.  At t = 0 the signed
    limit is returned: -inf for a > 0, +inf for a < 0.
    """
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.size != params.p:
        raise ConfigError(f"beta has length {beta.size}, expected {params.p}")
    if np.any(beta < 0):
        raise ConfigError("beta must be nonnegative")
    with_nugget = eta is not None
    if with_nugget and eta < 0:
        raise ConfigError("eta must be nonnegative")
    logc = jr_log_normalizing_constant(params, with_nugget)
    t = float(params.C @ beta) + (float(eta) if with_nugget else 0.0)
    if t == 0.0:
        if params.a > 0:
            return -np.inf
        if params.a < 0:
            return np.inf
        return logc
    return logc + params.a * math.log(t) - params.b * t


def jr_log_density_grad(params, beta, eta=None):
    """Gradient of jr_log_density in (beta[, eta]):  a C_l / t - b C_l."""
    beta = np.asarray(beta, dtype=float).ravel()
    with_nugget = eta is not None
    _check_a_bound(params, with_nugget)
    t = float(params.C @ beta) + (float(eta) if with_nugget else 0.0)
    if t == 0.0:
        if params.a != 0.0:
            raise NumericError("JR prior gradient is singular at t = 0")
        t = np.inf  # a = 0: the a/t terms vanish
    grad = params.a * params.C / t - params.b * params.C
    if with_nugget:
        grad = np.append(grad, params.a / t - params.b)
    return grad


def jr_moments(params):
    """Closed-form prior mean and variance of each beta_i and of eta.

    These are the moments of the nugget form (dimension p + 1); eta has
    the same formulas with C_i replaced by 1.
    """
    _check_a_bound(params, with_nugget=True)
    p, a, b, C = params.p, params.a, params.b, params.C
    mean_unit = (a + p + 1) / ((p + 1) * b)
    var_unit = (
        (a + p + 1)
        * ((p + 1) ** 2 + p + a * p + 1)
        / ((p + 1) ** 2 * (p + 2) * b**2)
    )
    return {
        "mean_beta": mean_unit / C,
        "mean_eta": mean_unit,
        "var_beta": var_unit / C**2,
        "var_eta": var_unit,
    }


def _sample_jr(params, size, rng, with_nugget=True):
    """Draw (beta[, eta]) rows from the JR prior; test utility, not public API.

    The total t = sum C_l beta_l (+ eta) is Gamma(a + k, rate b) with k the
    number of summands, and given t the summands are a uniform (flat
    Dirichlet) split of t.
    """
    _check_a_bound(params, with_nugget)
    k = params.p + 1 if with_nugget else params.p
    t = rng.gamma(shape=params.a + k, scale=1.0 / params.b, size=size)
    w = rng.dirichlet(np.ones(k), size=size)
    parts = w * t[:, None]
    beta = parts[:, : params.p] / params.C
    if with_nugget:
        return beta, parts[:, params.p]
    return beta


def reference_log_density(model, params, eta=None, eta_param="linear", state=None):
    """Unnormalized log reference prior: 1/2 log det of the Fisher information.

    The information is computed with correlation derivatives taken in the
    parameterization carried by ``params``, so this is the prior density
    in those coordinates directly (the root-determinant form transforms
    with the Jacobian automatically).  ``eta=None`` omits the nugget
    coordinate; otherwise it is included, either linearly or on the log
    scale.  Returns -inf when the information matrix is singular.
    """
    include_nugget = eta is not None
    if state is None:
        state = model.state(params, eta if include_nugget else 0.0)
    info = fisher_info(
        model,
        params,
        state=state,
        eta_param=eta_param,
        include_nugget=include_nugget,
    )
    eigs = np.linalg.eigvalsh(info)
    scale = max(float(np.max(np.abs(eigs))), 1.0)
    if eigs[0] < -1e-8 * scale:
        raise NumericError(
            f"Fisher information not positive semi-definite; eigenvalues {eigs}"
        )
    if np.any(eigs <= 0):
        return -np.inf
    return 0.5 * float(np.sum(np.log(eigs)))
