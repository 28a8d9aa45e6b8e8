"""Marginal posterior mode estimation for the GaSP covariance parameters.

The mode is defined in one of three parameterizations of the ranges
(gamma, xi = log(1/gamma), beta = 1/gamma); the prior density is
transformed there with the appropriate Jacobian, so the three modes are
genuinely different estimators.  Optimization always runs on unconstrained
or box-constrained coordinates: xi for the gamma/xi modes, the scaled
inverse ranges C_l beta_l >= 0 for the beta mode, and log(eta) for the
nugget.  With the JR prior the whole objective gradient is analytic; with
the reference prior the likelihood gradient is analytic and the prior part
is differenced numerically, which is what makes it the slower of the two.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import gasp
from .errors import (
    ConfigError,
    DataError,
    DegenerateOutputError,
    NumericError,
    SingularCovarianceError,
)
from .kernels import Parameterization, RangeParams, corr_matrix
from .priors import (
    EMULATION,
    JR,
    REFERENCE,
    PriorSpec,
    jr_default_params,
    jr_log_density,
    jr_log_density_grad,
    reference_log_density,
)

ETA_FLOOR = 1e-12
ETA_CEIL = 1e8
_START_MULTIPLIERS = (1.0, 0.1, 10.0)
_START_ETAS = (1e-2, 1e-3, 1e-1)
_NONFINITE_PENALTY = 1e12


@dataclass(frozen=True)
class FitConfig:
    """Everything fit_mode needs besides the model itself."""

    parameterization: Parameterization = Parameterization.XI
    prior: PriorSpec = field(default_factory=PriorSpec)
    max_iter: int = 200
    tol: float = 1e-6
    multistart: int = 3
    bounds: np.ndarray = None  # (p, 2) in the working parameterization
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "parameterization", Parameterization(self.parameterization)
        )
        if self.max_iter < 0 or self.multistart < 1:
            raise ConfigError("max_iter must be >= 0 and multistart >= 1")


@dataclass
class FitDiagnostics:
    """Definition-of-robustness flags for a fitted correlation matrix."""

    min_offdiag_corr: float
    max_offdiag_corr: float
    flag_near_identity: bool
    flag_near_ones: bool

    @property
    def robust(self):
        return not (self.flag_near_identity or self.flag_near_ones)


@dataclass
class StartRecord:
    start_index: int
    objective: float
    n_iter: int
    converged: bool
    message: str


@dataclass
class FitTrace:
    """Optimizer accounting for one fit (all starts pooled)."""

    n_objective_evals: int
    n_gradient_evals: int
    n_cholesky: int
    grad_norm: float
    at_boundary: bool
    converged: bool
    starts: list


@dataclass
class FitResult:
    """Estimated covariance parameters plus diagnostics.

    The estimate is stored once and exposed in all three parameterizations;
    ``eta_hat`` is 0 for models without a nugget.
    """

    params: RangeParams
    eta_hat: float
    theta_m_hat: np.ndarray
    sigma2_hat: float
    log_posterior: float
    parameterization: Parameterization
    prior: PriorSpec
    jr_params: object
    diagnostics: FitDiagnostics
    trace: FitTrace

    def gamma(self):
        return self.params.gamma()

    def beta(self):
        return self.params.beta()

    def xi(self):
        return self.params.xi()


def robustness_check(model, params, eta=0.0):
    """Flags for the two degenerate correlation limits (identity / all ones).

    Operates on the correlation matrix alone, so it never raises on
    degenerate inputs.
    """
    R = corr_matrix(model.spec, model.design, params)
    off = R[~np.eye(R.shape[0], dtype=bool)]
    if off.size == 0:
        return FitDiagnostics(np.nan, np.nan, False, False)
    lo, hi = float(off.min()), float(off.max())
    return FitDiagnostics(
        min_offdiag_corr=lo,
        max_offdiag_corr=hi,
        flag_near_identity=hi < 1e-8,
        flag_near_ones=lo > 1.0 - 1e-8,
    )


def _resolve_jr_params(model, prior):
    if prior.kind != JR:
        return None
    if prior.jr_params is not None:
        if prior.jr_params.p != model.p:
            raise ConfigError(
                f"JR prior has {prior.jr_params.p} scale constants, model has p={model.p}"
            )
        return prior.jr_params
    return jr_default_params(model.design, context=EMULATION)


def _jr_prior_value_grad(jr, beta, eta, parameterization, want_grad=True):
    """JR prior log density and gradient in the given parameterization.

    The density over xi carries the Jacobian prod(beta_l), over gamma
    prod(beta_l^2), over beta nothing.
    """
    value = jr_log_density(jr, beta, eta)
    if parameterization == Parameterization.XI:
        with np.errstate(divide="ignore"):
            value += float(np.sum(np.log(beta)))
    elif parameterization == Parameterization.GAMMA:
        with np.errstate(divide="ignore"):
            value += 2.0 * float(np.sum(np.log(beta)))
    if not want_grad:
        return value, None
    base = jr_log_density_grad(jr, beta, eta)
    gb = base[: jr.p]
    if parameterization == Parameterization.XI:
        grad = beta * gb + 1.0
    elif parameterization == Parameterization.GAMMA:
        grad = -(beta**2) * gb - 2.0 * beta
    else:
        grad = gb.copy()
    if eta is not None:
        grad = np.append(grad, base[-1])
    return value, grad


def log_posterior(model, prior, params, eta=None, jr_params=None, state=None):
    """Log marginal posterior density in the parameterization of ``params``.

    ``eta`` is the nugget value (include it iff the model has a nugget);
    the nugget coordinate of the density is eta itself, not log(eta).
    """
    if state is None:
        state = model.state(params, eta if eta is not None else 0.0)
    lik = state.log_lik()
    if prior.kind == JR:
        jr = jr_params if jr_params is not None else _resolve_jr_params(model, prior)
        pv, _ = _jr_prior_value_grad(
            jr, params.beta(), eta, params.parameterization, want_grad=False
        )
    else:
        pv = reference_log_density(model, params, eta=eta, state=state)
    return lik + pv


def log_posterior_grad(model, prior, params, eta=None, jr_params=None, state=None):
    """Analytic gradient of log_posterior; JR prior only.

    Components follow the coordinates of ``params`` with the nugget
    appended last when ``eta`` is given.
    """
    if prior.kind != JR:
        raise ConfigError("analytic posterior gradient requires the JR prior")
    if state is None:
        state = model.state(params, eta if eta is not None else 0.0)
    lik_grad = state.log_lik_grad()
    jr = jr_params if jr_params is not None else _resolve_jr_params(model, prior)
    _, pg = _jr_prior_value_grad(jr, params.beta(), eta, params.parameterization)
    if eta is None and lik_grad.size == model.p + 1:
        lik_grad = lik_grad[: model.p]
    return lik_grad + pg


class _Objective:
    """Negative log posterior over the optimizer's working coordinates."""

    def __init__(self, model, prior, jr, parameterization, nugget):
        self.model = model
        self.prior = prior
        self.jr = jr
        self.parameterization = parameterization
        self.nugget = nugget
        self.n_obj = 0
        self.n_grad = 0

    def unpack(self, x):
        """All modes search over log(beta); the clip is the projection that
        keeps beta in a sane box when line-search steps go wild."""
        beta = np.exp(np.clip(x[: self.model.p], np.log(1e-12), np.log(1e12)))
        eta = None
        if self.nugget:
            eta = float(np.clip(np.exp(np.minimum(x[-1], np.log(ETA_CEIL))), ETA_FLOOR, ETA_CEIL))
        return beta, eta

    def _mode_params(self, beta):
        if self.parameterization == Parameterization.BETA:
            return RangeParams(beta, Parameterization.BETA)
        if self.parameterization == Parameterization.XI:
            with np.errstate(divide="ignore"):
                return RangeParams(np.log(beta), Parameterization.XI)
        return RangeParams(_recip(beta), Parameterization.GAMMA)

    def value(self, x):
        self.n_obj += 1
        try:
            v = self._posterior(x, want_grad=False)[0]
        except (SingularCovarianceError, NumericError):
            return _NONFINITE_PENALTY
        return -v if np.isfinite(v) else _NONFINITE_PENALTY

    def probe(self, x):
        """Classified value-only evaluation used to vet starting points."""
        self.n_obj += 1
        try:
            v = self._posterior(x, want_grad=False)[0]
        except SingularCovarianceError:
            return "cholesky", None
        except NumericError:
            return "nonfinite", None
        if not np.isfinite(v):
            return "nonfinite", None
        return "ok", -v

    def value_and_grad(self, x):
        self.n_obj += 1
        self.n_grad += 1
        try:
            v, g = self._posterior(x, want_grad=True)
        except (SingularCovarianceError, NumericError):
            return _NONFINITE_PENALTY, np.zeros_like(x)
        if not np.isfinite(v) or not np.all(np.isfinite(g)):
            return _NONFINITE_PENALTY, np.zeros_like(x)
        return -v, -g

    def _posterior(self, x, want_grad):
        model = self.model
        beta, eta = self.unpack(x)
        params = self._mode_params(beta)
        state = model.state(params, eta if eta is not None else 0.0)
        lik = state.log_lik()
        if self.prior.kind == JR:
            pv, pg = _jr_prior_value_grad(
                self.jr, beta, eta, self.parameterization, want_grad
            )
        else:
            pv = reference_log_density(model, params, eta=eta, state=state)
            pg = None
        value = lik + pv
        if not want_grad:
            return value, None
        grad_mode = state.log_lik_grad()
        if eta is None and grad_mode.size == model.p + 1:
            grad_mode = grad_mode[: model.p]
        if self.prior.kind == JR:
            grad_mode = grad_mode + pg
            grad = self._to_optimizer_coords(grad_mode, beta, eta)
        else:
            grad = self._to_optimizer_coords(grad_mode, beta, eta)
            grad = grad + self._reference_prior_fd_grad(x)
        return value, grad

    def _to_optimizer_coords(self, grad_mode, beta, eta):
        """Chain rule from mode coordinates to the log(beta) search space."""
        p = self.model.p
        g = np.array(grad_mode, dtype=float)
        if self.parameterization == Parameterization.GAMMA:
            g[:p] *= -_recip(beta)  # d gamma / d log(beta) = -gamma
        elif self.parameterization == Parameterization.BETA:
            g[:p] *= beta  # d beta / d log(beta) = beta
        if self.nugget:
            g[p] *= eta  # d eta / d log eta
        return g

    def _reference_prior_fd_grad(self, x):
        """Central differences of the reference prior part, objective coords."""
        grad = np.zeros_like(x)
        for i in range(x.size):
            h = 1e-4 * max(1.0, abs(x[i]))
            up, dn = x.copy(), x.copy()
            up[i] += h
            dn[i] -= h
            grad[i] = (self._prior_only(up) - self._prior_only(dn)) / (2 * h)
        return grad

    def _prior_only(self, x):
        beta, eta = self.unpack(x)
        params = self._mode_params(beta)
        return reference_log_density(self.model, params, eta=eta)


def _recip(v):
    with np.errstate(divide="ignore"):
        return np.where(v == 0.0, np.inf, 1.0 / np.where(v == 0.0, 1.0, v))


def _starting_points(cfg, jr_C, p, nugget, rng):
    """Three canonical starts at beta0 = m / C_l, m in {1, 0.1, 10}; extra
    starts (multistart > 3) draw per-coordinate multipliers to break the
    coordinate symmetry that traps swap-type local modes."""
    multipliers = list(_START_MULTIPLIERS)
    while len(multipliers) < cfg.multistart:
        multipliers.append(np.exp(rng.uniform(np.log(0.05), np.log(20.0), size=p)))
    starts = []
    for k in range(cfg.multistart):
        x0 = np.log(multipliers[k] / jr_C)
        if nugget:
            x0 = np.append(x0, np.log(_START_ETAS[k % len(_START_ETAS)]))
        starts.append(x0)
    return starts


def _optimizer_bounds(cfg, p, nugget):
    """Box bounds in the log(beta) search space, from user bounds in the
    working parameterization when given."""
    bounds = [(None, None)] * p
    if cfg.bounds is not None:
        user = np.asarray(cfg.bounds, dtype=float)
        if user.shape != (p, 2):
            raise ConfigError(f"bounds must have shape ({p}, 2)")
        with np.errstate(divide="ignore"):
            for l in range(p):
                lo, hi = user[l]
                if cfg.parameterization == Parameterization.GAMMA:
                    # log(beta) = -log(gamma) reverses the interval
                    bounds[l] = (_finite_or_none(-np.log(hi)), _finite_or_none(-np.log(lo)))
                else:  # xi and beta bounds map monotonically
                    if cfg.parameterization == Parameterization.BETA:
                        lo, hi = np.log(lo), np.log(hi)
                    bounds[l] = (_finite_or_none(lo), _finite_or_none(hi))
    if nugget:
        bounds.append((np.log(ETA_FLOOR), np.log(ETA_CEIL)))
    return bounds


def _finite_or_none(v):
    return float(v) if np.isfinite(v) else None


def _check_not_degenerate(model):
    coef, *_ = np.linalg.lstsq(model.H, model.y, rcond=None)
    resid = model.y - model.H @ coef
    if np.max(np.abs(resid)) <= 1e-10 * max(1.0, float(np.max(np.abs(model.y)))):
        raise DegenerateOutputError(
            "outputs lie in the column space of the mean basis (S^2 = 0); "
            "there is no stochastic component to fit"
        )


def fit_mode(model, cfg=None):
    """Maximize marginal likelihood times prior in the working parameterization.

    Runs a small multistart of L-BFGS-B (memory 10) and returns the best
    local mode found, with robustness diagnostics computed at the estimate.
    """
    if cfg is None:
        cfg = FitConfig()
    prior = cfg.prior
    if prior.kind == REFERENCE and cfg.parameterization == Parameterization.BETA:
        raise ConfigError(
            "reference prior with beta parameterization is disallowed: its mode "
            "degenerates to the all-ones correlation matrix"
        )
    jr = _resolve_jr_params(model, prior)
    if (
        prior.kind == JR
        and cfg.parameterization == Parameterization.BETA
        and not jr.a > 0
    ):
        raise ConfigError(
            f"beta parameterization requires JR prior with a > 0, got a={jr.a}"
        )
    _check_not_degenerate(model)
    nugget = model.nugget_enabled
    if jr is not None:
        start_scale = jr.C
    else:
        widths = np.where(model.design.widths > 0, model.design.widths, 1.0)
        start_scale = model.n ** (-1.0 / model.p) * widths
    rng = np.random.default_rng(cfg.seed)
    obj = _Objective(model, prior, jr, cfg.parameterization, nugget)
    bounds = _optimizer_bounds(cfg, model.p, nugget)
    chol_before = gasp.cholesky_count()

    records = []
    best = None
    failures = []
    for k, x0 in enumerate(_starting_points(cfg, start_scale, model.p, nugget, rng)):
        x0 = _clip_to_bounds(x0, bounds)
        status, f0 = obj.probe(x0)
        if status != "ok":
            failures.append(status)
            records.append(StartRecord(k, np.inf, 0, False, f"start failed: {status}"))
            continue
        if cfg.max_iter == 0:
            records.append(StartRecord(k, f0, 0, False, "zero iteration budget"))
            if best is None or f0 < best[1]:
                best = (x0, f0, True)
            continue
        res = optimize.minimize(
            obj.value_and_grad,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={
                "maxiter": cfg.max_iter,
                "maxcor": 10,
                "gtol": cfg.tol,
                "ftol": 1e-11,
            },
        )
        records.append(
            StartRecord(k, float(res.fun), int(res.nit), bool(res.success), str(res.message))
        )
        if np.isfinite(res.fun) and res.fun < _NONFINITE_PENALTY:
            if best is None or res.fun < best[1]:
                best = (res.x, float(res.fun), bool(res.success))
    if best is None:
        if failures and all(f == "cholesky" for f in failures):
            raise NumericError("all optimizer starts failed covariance factorization")
        raise ConfigError("objective was non-finite at every start")

    x_best, f_best, converged = best
    beta_hat, eta_hat = obj.unpack(x_best)
    params_hat = obj._mode_params(beta_hat)
    eta_val = eta_hat if nugget else 0.0
    state = model.state(params_hat, eta_val)
    _, g = obj.value_and_grad(x_best)
    obj.n_obj -= 1
    obj.n_grad -= 1
    at_boundary = _at_bounds(x_best, bounds)
    trace = FitTrace(
        n_objective_evals=obj.n_obj,
        n_gradient_evals=obj.n_grad,
        n_cholesky=gasp.cholesky_count() - chol_before,
        grad_norm=float(np.max(np.abs(_project_grad(g, x_best, bounds)))),
        at_boundary=at_boundary,
        converged=converged,
        starts=records,
    )
    return FitResult(
        params=params_hat,
        eta_hat=eta_hat if nugget else 0.0,
        theta_m_hat=state.theta_hat.copy(),
        sigma2_hat=state.sigma2_hat(),
        log_posterior=-f_best,
        parameterization=cfg.parameterization,
        prior=prior,
        jr_params=jr,
        diagnostics=robustness_check(model, params_hat),
        trace=trace,
    )


def _clip_to_bounds(x, bounds):
    out = x.copy()
    for i, (lo, hi) in enumerate(bounds):
        if lo is not None:
            out[i] = max(out[i], lo)
        if hi is not None:
            out[i] = min(out[i], hi)
    return out


def _at_bounds(x, bounds, tol=1e-10):
    for i, (lo, hi) in enumerate(bounds):
        if lo is not None and x[i] <= lo + tol:
            return True
        if hi is not None and x[i] >= hi - tol:
            return True
    return False


def _project_grad(g, x, bounds, tol=1e-10):
    """Zero out descent-blocked components at active bounds."""
    out = g.copy()
    for i, (lo, hi) in enumerate(bounds):
        if lo is not None and x[i] <= lo + tol and out[i] > 0:
            out[i] = 0.0
        if hi is not None and x[i] >= hi - tol and out[i] < 0:
            out[i] = 0.0
    return out


@dataclass
class ProfileTimings:
    seconds_total: float
    n_objective_evals: int
    n_gradient_evals: int
    n_cholesky: int


def profile_timings(model, cfg):
    """Wall-clock and evaluation counts for a single fit_mode call."""
    t0 = time.perf_counter()
    result = fit_mode(model, cfg)
    seconds = time.perf_counter() - t0
    return ProfileTimings(
        seconds_total=seconds,
        n_objective_evals=result.trace.n_objective_evals,
        n_gradient_evals=result.trace.n_gradient_evals,
        n_cholesky=result.trace.n_cholesky,
    )


class FittedEmulator:
    """A GaSP model bound to fitted covariance parameters."""

    def __init__(self, model, fit_result):
        self.model = model
        self.fit = fit_result

    def predict(self, new_inputs):
        return gasp.predict(
            self.model, self.fit.params, self.fit.eta_hat, new_inputs
        )

    def predict_mean(self, new_inputs):
        return self.predict(new_inputs).mean

    def draw(self, new_inputs, rng):
        """One draw from the Student-t predictive at each input."""
        return self.predict(new_inputs).sample(rng)


def fit_emulator(design, y, spec, cfg=None, mean_basis="constant", nugget=False):
    """Convenience: build a model, fit it, return a FittedEmulator."""
    model = gasp.GaSPModel(
        design, y, spec, mean_basis=mean_basis, nugget_enabled=nugget
    )
    result = fit_mode(model, cfg)
    return FittedEmulator(model, result)
