"""Gaussian stochastic process model: marginal likelihood and prediction.

The model is  y ~ N(H theta_m, sigma^2 C)  with C = R + eta I, R the product
correlation over the design and eta an optional nugget-variance ratio.  The
mean coefficients and variance are removed analytically under the standard
1/sigma^2 prior, leaving the marginal (integrated) likelihood

    log L(range params, eta | y) = -1/2 log|C| - 1/2 log|H' C^-1 H|
                                   - (n-q)/2 log(S^2) + const,

with S^2 = y' Q y and Q = C^-1 - C^-1 H (H' C^-1 H)^-1 H' C^-1.  Everything
downstream (mode estimation, the reference prior, prediction) is built from
the factorizations cached in :class:`LikelihoodState`.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .design import DesignMatrix
from .errors import ConfigError, DataError, RankError, SingularCovarianceError
from .kernels import Parameterization, corr1d, corr_matrix, corr_matrix_deriv

_JITTER_START = 1e-10
_JITTER_MAX = 1e-4

# running count of Cholesky factorizations, used by fit.profile_timings
_n_cholesky = 0


def cholesky_count():
    return _n_cholesky


def _chol_with_jitter(C):
    """Lower Cholesky factor of C, escalating diagonal jitter on failure."""
    global _n_cholesky
    mean_diag = float(np.mean(np.diag(C)))
    attempted = []
    jitter = 0.0
    while True:
        try:
            _n_cholesky += 1
            L = linalg.cholesky(C + jitter * np.eye(C.shape[0]), lower=True)
            return L, jitter
        except linalg.LinAlgError:
            attempted.append(jitter)
            jitter = _JITTER_START * mean_diag if jitter == 0.0 else jitter * 10.0
            if jitter > _JITTER_MAX * mean_diag * (1 + 1e-12):
                raise SingularCovarianceError(
                    "covariance Cholesky failed after jitter escalation "
                    f"(attempted {attempted})",
                    jitters=attempted,
                ) from None


def constant_basis(x):
    x = np.atleast_2d(x)
    return np.ones((x.shape[0], 1))


def linear_basis(x):
    x = np.atleast_2d(x)
    return np.column_stack([np.ones(x.shape[0]), x])


_BASIS_BUILDERS = {"constant": constant_basis, "linear": linear_basis}


class GaSPModel:
    """Immutable bundle of design, outputs, mean basis and kernel spec.

    Parameters
    ----------
    design : DesignMatrix or array
        The n x p experimental design.
    y : array, length n
        Observed outputs at the design points.
    spec : CorrelationSpec
        Per-coordinate correlation kernels.
    mean_basis : {"constant", "linear"} or callable, optional
        Basis function h(x) evaluated row-wise; defaults to a constant.
    nugget_enabled : bool, optional
        If True the working covariance is C = R + eta I with eta >= 0.
    """

    def __init__(self, design, y, spec, mean_basis="constant", nugget_enabled=False):
        if not isinstance(design, DesignMatrix):
            design = DesignMatrix(np.asarray(design, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if y.size != design.n:
            raise DataError(f"outputs length {y.size} != design rows {design.n}")
        if not np.all(np.isfinite(y)):
            raise DataError("outputs contain non-finite values")
        if spec.p != design.p:
            raise DataError(f"kernel count {spec.p} != design columns {design.p}")
        if callable(mean_basis):
            basis = mean_basis
        else:
            try:
                basis = _BASIS_BUILDERS[mean_basis]
            except KeyError:
                raise ConfigError(f"unknown mean basis {mean_basis!r}") from None
        H = np.atleast_2d(np.asarray(basis(design.values), dtype=float))
        if H.shape[0] != design.n:
            raise DataError("mean basis must return one row per design point")
        n, q = H.shape
        if n <= q:
            raise ConfigError(f"need n > q, got n={n}, q={q}")
        if np.linalg.matrix_rank(H) < q:
            raise RankError("mean basis matrix is rank deficient")
        self.design = design
        self.y = y
        self.spec = spec
        self.basis = basis
        self.H = H
        self.nugget_enabled = bool(nugget_enabled)

    @property
    def n(self):
        return self.design.n

    @property
    def p(self):
        return self.design.p

    @property
    def q(self):
        return self.H.shape[1]

    def state(self, params, eta=0.0):
        return LikelihoodState(self, params, eta)


class LikelihoodState:
    """Factorizations at one covariance-parameter point, built once and reused."""

    def __init__(self, model, params, eta=0.0):
        eta = float(eta)
        if eta < 0 or not np.isfinite(eta):
            raise DataError(f"nugget must be finite and nonnegative, got {eta}")
        self.model = model
        self.params = params
        self.eta = eta
        R = corr_matrix(model.spec, model.design, params)
        C = R + eta * np.eye(model.n) if eta != 0.0 else R
        self.R = R
        self.L, self.jitter = _chol_with_jitter(C)
        self.logdet_C = 2.0 * float(np.sum(np.log(np.diag(self.L))))
        H, y = model.H, model.y
        self.Cinv_H = linalg.cho_solve((self.L, True), H)
        self.Cinv_y = linalg.cho_solve((self.L, True), y)
        A = H.T @ self.Cinv_H
        try:
            self.LA = linalg.cholesky(A, lower=True)
        except linalg.LinAlgError:
            raise RankError("H' C^-1 H is singular") from None
        self.logdet_A = 2.0 * float(np.sum(np.log(np.diag(self.LA))))
        self.theta_hat = linalg.cho_solve((self.LA, True), H.T @ self.Cinv_y)
        resid = y - H @ self.theta_hat
        self.Qy = linalg.cho_solve((self.L, True), resid)
        self.S2 = float(resid @ self.Qy)
        self._Qmat = None

    @property
    def Q(self):
        """Explicit Q = C^-1 - C^-1 H (H'C^-1H)^-1 H'C^-1 (built lazily)."""
        if self._Qmat is None:
            Cinv = linalg.cho_solve((self.L, True), np.eye(self.model.n))
            B = linalg.cho_solve((self.LA, True), self.Cinv_H.T)
            self._Qmat = Cinv - self.Cinv_H @ B
        return self._Qmat

    def sigma2_hat(self):
        n, q = self.model.n, self.model.q
        return self.S2 / (n - q)

    def log_lik(self):
        n, q = self.model.n, self.model.q
        if self.S2 <= 0:
            return -np.inf
        return (
            -0.5 * self.logdet_C
            - 0.5 * self.logdet_A
            - 0.5 * (n - q) * np.log(self.S2)
        )

    def log_lik_grad(self):
        """Gradient of log_lik w.r.t. the active range coordinates (+ eta last).

        Component l is -1/2 tr(Q dC/dt_l) + (n-q)/2 (y'Q dC/dt_l Qy)/S^2 with
        dC/dt_l the correlation derivative in the parameterization carried by
        this state's params; the nugget component (dC/deta = I) is appended
        when the model has a nugget.
        """
        model = self.model
        n, q = model.n, model.q
        Q = self.Q
        w = self.Qy
        ncoord = model.p + (1 if model.nugget_enabled else 0)
        grad = np.empty(ncoord)
        for l in range(model.p):
            Rdot = corr_matrix_deriv(model.spec, model.design, self.params, l)
            tr = float(np.sum(Q * Rdot))
            quad = float(w @ (Rdot @ w))
            grad[l] = -0.5 * tr + 0.5 * (n - q) * quad / self.S2
        if model.nugget_enabled:
            tr = float(np.trace(Q))
            quad = float(w @ w)
            grad[model.p] = -0.5 * tr + 0.5 * (n - q) * quad / self.S2
        return grad


def log_marginal_lik(model, params, eta=0.0):
    """Marginal log likelihood (up to an additive constant)."""
    return model.state(params, eta).log_lik()


def log_marginal_lik_grad(model, params, eta=0.0):
    """Gradient of the marginal log likelihood; see LikelihoodState.log_lik_grad."""
    return model.state(params, eta).log_lik_grad()


def fisher_info(model, params, eta=0.0, state=None, eta_param="linear", include_nugget=None):
    """Expected Fisher information of (sigma^2, ranges[, eta]).

    The leading entry is n - q; the range block has entries tr(W_l W_k)
    with W_l = Rdot_l Q, and the first row/column holds tr(W_l).  When the
    model has a nugget an extra coordinate with dC/deta = I (W = Q) is
    appended; with ``eta_param="log"`` the nugget coordinate is log(eta)
    instead (W = eta Q).
    """
    if state is None:
        state = model.state(params, eta)
    if include_nugget is None:
        include_nugget = model.nugget_enabled
    n, q, p = model.n, model.q, model.p
    Q = state.Q
    Ws = [
        corr_matrix_deriv(model.spec, model.design, params, l) @ Q for l in range(p)
    ]
    if include_nugget:
        Ws.append(state.eta * Q if eta_param == "log" else Q)
    k = len(Ws)
    info = np.empty((k + 1, k + 1))
    info[0, 0] = n - q
    for l in range(k):
        info[0, l + 1] = info[l + 1, 0] = float(np.trace(Ws[l]))
        for m in range(l, k):
            info[l + 1, m + 1] = info[m + 1, l + 1] = float(np.sum(Ws[l] * Ws[m].T))
    return info


@dataclass
class PredictiveDistribution:
    """Student-t predictive marginals: mean, scale and shared dof."""

    mean: np.ndarray
    scale: np.ndarray
    dof: int
    extrapolated: np.ndarray

    def interval(self, level=0.95):
        tq = stats.t.ppf(0.5 + level / 2.0, df=self.dof)
        return self.mean - tq * self.scale, self.mean + tq * self.scale

    def sample(self, rng):
        return self.mean + self.scale * rng.standard_t(self.dof, size=self.mean.shape)


def cross_correlation(model, params, new_inputs):
    """m x n correlations between new inputs and the design."""
    gamma = params.gamma()
    X = model.design.values
    Xs = np.atleast_2d(np.asarray(new_inputs, dtype=float))
    if Xs.shape[1] != model.p:
        raise DataError(f"new inputs have {Xs.shape[1]} columns, expected {model.p}")
    r = np.ones((Xs.shape[0], model.n))
    for l in range(model.p):
        D = np.abs(Xs[:, [l]] - X[None, :, l])
        r *= corr1d(model.spec.kernels[l], D, gamma[l])
    return r


def predict(model, params, eta=0.0, new_inputs=None, state=None):
    """Universal-kriging predictive distribution at new inputs.

    Plug-in Student-t with n - q degrees of freedom; with eta = 0 the mean
    interpolates the training outputs and the scale vanishes at design
    points.  Points outside the design bounding box are flagged as
    extrapolated, not rejected.
    """
    Xs = np.atleast_2d(np.asarray(new_inputs, dtype=float))
    if not np.all(np.isfinite(Xs)):
        raise DataError("prediction inputs must be finite")
    if state is None:
        state = model.state(params, eta)
    n, q = model.n, model.q
    r = cross_correlation(model, params, Xs)
    hstar = np.atleast_2d(model.basis(Xs))
    mean = hstar @ state.theta_hat + r @ state.Qy
    Cinv_rT = linalg.cho_solve((state.L, True), r.T)
    u = hstar - r @ state.Cinv_H
    Ainv_uT = linalg.cho_solve((state.LA, True), u.T)
    var_factor = 1.0 - np.sum(r.T * Cinv_rT, axis=0) + np.sum(u.T * Ainv_uT, axis=0)
    var_factor = np.maximum(var_factor, 0.0)
    scale = np.sqrt(state.sigma2_hat() * var_factor)
    extrapolated = ~model.design.contains(Xs)
    return PredictiveDistribution(mean=mean, scale=scale, dof=n - q, extrapolated=extrapolated)
