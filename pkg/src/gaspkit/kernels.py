"""One-dimensional correlation kernels and their product composition.

Two stationary families are supported, both parameterized by a range
parameter ``gamma`` and a fixed roughness ``alpha``:

* power exponential,  c(d) = exp(-(d/gamma)^alpha),  0 < alpha <= 2;
* Matern with half-integer roughness alpha in {1/2, 3/2, 5/2}, using the
  closed-form polynomial-times-exponential expressions, e.g. for 5/2

      c(d) = (1 + sqrt(5) u + 5 u^2 / 3) exp(-sqrt(5) u),   u = d / gamma.

Multidimensional correlation is the coordinate-wise (Hadamard) product of
one-dimensional kernels, each with its own range parameter.

Three interchangeable parameterizations of the ranges are used throughout
the package: the range ``gamma``, the inverse range ``beta = 1/gamma`` and
the log inverse range ``xi = log(beta)``.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .design import DesignMatrix
from .errors import ConfigError, DataError

POWER_EXPONENTIAL = "power_exponential"
MATERN = "matern"

_MATERN_ROUGHNESS = (0.5, 1.5, 2.5)
_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


class Parameterization(str, Enum):
    """Which coordinate system range parameters are expressed in."""

    GAMMA = "gamma"
    XI = "xi"
    BETA = "beta"


@dataclass(frozen=True)
class Kernel1D:
    """A one-dimensional correlation family with fixed roughness."""

    family: str
    roughness: float

    def __post_init__(self):
        if self.family == POWER_EXPONENTIAL:
            if not (0.0 < self.roughness <= 2.0):
                raise ConfigError(
                    f"power exponential roughness must lie in (0, 2], got {self.roughness}"
                )
        elif self.family == MATERN:
            if self.roughness not in _MATERN_ROUGHNESS:
                raise ConfigError(
                    f"matern roughness must be one of {_MATERN_ROUGHNESS}, got {self.roughness}"
                )
        else:
            raise ConfigError(f"unknown kernel family {self.family!r}")


def matern25():
    return Kernel1D(MATERN, 2.5)


def matern15():
    return Kernel1D(MATERN, 1.5)


def exponential():
    return Kernel1D(MATERN, 0.5)


def power_exponential(alpha=1.9):
    return Kernel1D(POWER_EXPONENTIAL, alpha)


def gaussian():
    """Power exponential with roughness exactly 2 (ill-conditioned; use with jitter)."""
    return Kernel1D(POWER_EXPONENTIAL, 2.0)


@dataclass(frozen=True)
class CorrelationSpec:
    """One kernel per input coordinate."""

    kernels: tuple

    def __post_init__(self):
        kernels = tuple(self.kernels)
        if len(kernels) < 1:
            raise ConfigError("correlation spec requires at least one kernel")
        for k in kernels:
            if not isinstance(k, Kernel1D):
                raise ConfigError("correlation spec entries must be Kernel1D")
        object.__setattr__(self, "kernels", kernels)

    @property
    def p(self):
        return len(self.kernels)

    @classmethod
    def uniform(cls, kernel, p):
        """The same kernel repeated for all p coordinates."""
        return cls((kernel,) * p)


@dataclass(frozen=True)
class RangeParams:
    """A vector of per-coordinate range parameters in a stated parameterization.

    gamma and beta values must be nonnegative (zero is allowed and denotes
    the degenerate all-ones / identity correlation limits); xi values are
    unrestricted.
    """

    values: np.ndarray
    parameterization: Parameterization = Parameterization.GAMMA

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise ConfigError("range parameters must be nonempty")
        if np.any(np.isnan(values)):
            raise ConfigError("range parameters contain NaN")
        if self.parameterization != Parameterization.XI and np.any(values < 0):
            raise ConfigError(
                f"{self.parameterization.value} parameterization requires nonnegative values"
            )
        object.__setattr__(self, "values", values)

    @property
    def p(self):
        return self.values.size

    def gamma(self):
        """Values as ranges gamma."""
        if self.parameterization == Parameterization.GAMMA:
            return self.values.copy()
        return _safe_reciprocal(self.beta())

    def beta(self):
        """Values as inverse ranges beta = 1/gamma."""
        if self.parameterization == Parameterization.BETA:
            return self.values.copy()
        if self.parameterization == Parameterization.XI:
            return np.exp(self.values)
        return _safe_reciprocal(self.values)

    def xi(self):
        """Values as log inverse ranges xi = log(1/gamma)."""
        if self.parameterization == Parameterization.XI:
            return self.values.copy()
        with np.errstate(divide="ignore"):
            return np.log(self.beta())

    def to(self, parameterization):
        parameterization = Parameterization(parameterization)
        if parameterization == Parameterization.GAMMA:
            return RangeParams(self.gamma(), parameterization)
        if parameterization == Parameterization.BETA:
            return RangeParams(self.beta(), parameterization)
        return RangeParams(self.xi(), parameterization)


def _safe_reciprocal(x):
    with np.errstate(divide="ignore"):
        return np.where(x == 0.0, np.inf, 1.0 / np.where(x == 0.0, 1.0, x))


def _check_corr_args(kernel, d, gamma):
    d = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(d)) or np.any(d < 0):
        raise DataError("distances must be finite and nonnegative")
    if not gamma > 0:
        raise DataError(f"range parameter must be positive, got {gamma}")
    return d


def corr1d(kernel, d, gamma):
    """Evaluate a one-dimensional correlation at distance(s) d >= 0.

    Returns values in (0, 1] with c(0) = 1.  ``gamma`` may be ``inf``,
    which yields the all-ones limit.
    """
    d = _check_corr_args(kernel, d, gamma)
    u = d / gamma
    if kernel.family == POWER_EXPONENTIAL:
        return np.exp(-(u ** kernel.roughness))
    if kernel.roughness == 0.5:
        return np.exp(-u)
    if kernel.roughness == 1.5:
        t = _SQRT3 * u
        return (1.0 + t) * np.exp(-t)
    t = _SQRT5 * u
    return (1.0 + t + t * t / 3.0) * np.exp(-t)


def _scaled_radial_deriv(kernel, u):
    """s(u) = -u * dc/du, the nonnegative radial sensitivity at u = d/gamma."""
    if kernel.family == POWER_EXPONENTIAL:
        a = kernel.roughness
        return a * (u ** a) * np.exp(-(u ** a))
    if kernel.roughness == 0.5:
        return u * np.exp(-u)
    if kernel.roughness == 1.5:
        return 3.0 * u * u * np.exp(-_SQRT3 * u)
    return (5.0 * u * u / 3.0) * (1.0 + _SQRT5 * u) * np.exp(-_SQRT5 * u)


def _dbeta_limit(kernel, d):
    """dc/dbeta in the beta -> 0 limit (gamma -> inf), where -s(u)/beta is 0/0."""
    if kernel.family == MATERN:
        if kernel.roughness == 0.5:
            return -d
        return np.zeros_like(d)
    a = kernel.roughness
    if a > 1.0:
        return np.zeros_like(d)
    if a == 1.0:
        return -d
    with np.errstate(divide="ignore"):
        return np.where(d > 0, -np.inf, 0.0)


def corr1d_dgamma(kernel, d, gamma):
    """Partial derivative of corr1d with respect to gamma (nonnegative)."""
    d = _check_corr_args(kernel, d, gamma)
    return _scaled_radial_deriv(kernel, d / gamma) / gamma


def _distance_matrix(x):
    """|x_a - x_b| for a single coordinate column."""
    return np.abs(x[:, None] - x[None, :])


def _check_dims(spec, design, params):
    if not (spec.p == design.p == params.p):
        raise DataError(
            f"dimension mismatch: spec p={spec.p}, design p={design.p}, params p={params.p}"
        )


def corr_matrix(spec, design, params):
    """The n x n product correlation matrix over the design.

    Symmetric with unit diagonal; entry (a, b) is the product over
    coordinates of the one-dimensional correlations at |x_al - x_bl|.
    """
    _check_dims(spec, design, params)
    gamma = params.gamma()
    R = np.ones((design.n, design.n))
    for l in range(spec.p):
        D = _distance_matrix(design.values[:, l])
        R *= corr1d(spec.kernels[l], D, gamma[l])
    return R


def _corr1d_deriv(kernel, d, gamma, parameterization):
    """dc/d(coordinate) in the requested parameterization, boundary safe.

    Writing u = d/gamma and s(u) = -u dc/du, the chain rule through gamma
    (d gamma/d beta = -gamma^2, d gamma/d xi = -gamma) collapses to

        dc/dgamma = s(u)/gamma,   dc/dbeta = -s(u)*gamma,   dc/dxi = -s(u),

    which stay finite at gamma = inf (beta = 0) except for the genuinely
    singular power exponential case with roughness < 1.
    """
    u = d / gamma
    s = _scaled_radial_deriv(kernel, u)
    if parameterization == Parameterization.GAMMA:
        return s / gamma
    if parameterization == Parameterization.XI:
        return -s
    if np.isinf(gamma):
        return _dbeta_limit(kernel, d)
    return -s * gamma


def corr_matrix_deriv(spec, design, params, coord):
    """Partial derivative of the correlation matrix for one coordinate.

    The derivative is taken with respect to the coordinate's value in the
    parameterization carried by ``params``; the diagonal is identically
    zero because the correlation is pinned at 1 there.
    """
    _check_dims(spec, design, params)
    if not 0 <= coord < spec.p:
        raise DataError(f"coordinate {coord} out of range for p={spec.p}")
    gamma = params.gamma()
    out = np.ones((design.n, design.n))
    for l in range(spec.p):
        D = _distance_matrix(design.values[:, l])
        if l == coord:
            out *= _corr1d_deriv(
                spec.kernels[l], D, gamma[l], params.parameterization
            )
        else:
            out *= corr1d(spec.kernels[l], D, gamma[l])
    return out
