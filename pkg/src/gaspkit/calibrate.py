"""Bayesian calibration of a computer model with a GaSP discrepancy.

Field data are modeled as  y(x) = f(x, theta) + delta(x) + noise,  with the
discrepancy delta a GaSP (mean basis H, product correlation, nugget ratio
eta for the noise).  The sampler is Metropolis-within-Gibbs: conjugate
Gibbs draws for the mean coefficients (Gaussian) and variance
(inverse-gamma), adaptive random-walk Metropolis blocks for theta and for
(xi, log eta), with Robbins-Monro step adaptation during burn-in only.

The computer model may be a cheap callable f(X, theta) or, in the modular
mode, a fitted emulator over the joint (x, theta) input space whose
predictive distribution is sampled wherever a model evaluation is needed.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .design import DesignMatrix
from .errors import ConfigError, DataError, NumericError, RankError
from .fit import FitConfig, FittedEmulator, fit_emulator
from .gasp import GaSPModel
from .kernels import CorrelationSpec, Parameterization, RangeParams, matern25
from .priors import (
    CALIBRATION,
    JR,
    REFERENCE,
    PriorSpec,
    jr_default_params,
    jr_log_density,
    reference_log_density,
)

_RANK_TOL = 1e-10
_MAX_CONSECUTIVE_CHOL_FAILURES = 100
_ADAPT_TARGET = 0.325  # middle of the 0.25-0.4 acceptance window


@dataclass
class ProprietyReport:
    rank: int
    required_rank: int
    n: int
    q: int
    passes: bool


def check_propriety_preconditions(H, y=None):
    """Rank check of H_y = (H, y): full column rank and n >= q+1.

    Accepts either a CalibrationProblem or an explicit (H, y) pair; this is
    report-only, construction of a problem enforces the condition.
    """
    if isinstance(H, CalibrationProblem):
        prob = H
        H, y = prob.H, prob.y
    H = np.atleast_2d(np.asarray(H, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    Hy = np.column_stack([H, y])
    n, q1 = Hy.shape
    sv = np.linalg.svd(Hy, compute_uv=False)
    rank = int(np.sum(sv > _RANK_TOL * sv[0])) if sv.size and sv[0] > 0 else 0
    return ProprietyReport(
        rank=rank,
        required_rank=q1,
        n=n,
        q=q1 - 1,
        passes=(rank == q1) and (n >= q1),
    )


def nrmse(y_true, y_pred, observed_mean=None):
    """Root mean square error normalized by spread about the observed mean."""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.size != y_pred.size:
        raise DataError("prediction/truth length mismatch")
    center = float(np.mean(y_true)) if observed_mean is None else float(observed_mean)
    denom = float(np.sum((y_true - center) ** 2))
    if denom == 0.0:
        raise DataError("constant truth: NRMSE denominator is zero")
    return float(np.sqrt(np.sum((y_true - y_pred) ** 2) / denom))


def calibration_metrics(predictions, truth, lower=None, upper=None, observed_mean=None):
    """NRMSE plus 95% interval coverage and average length (when given)."""
    out = {"nrmse": nrmse(truth, predictions, observed_mean=observed_mean)}
    if lower is not None and upper is not None:
        lower = np.asarray(lower, dtype=float).ravel()
        upper = np.asarray(upper, dtype=float).ravel()
        truth = np.asarray(truth, dtype=float).ravel()
        out["p_ci95"] = float(np.mean((truth >= lower) & (truth <= upper)))
        out["l_ci95"] = float(np.mean(upper - lower))
    else:
        out["p_ci95"] = None
        out["l_ci95"] = None
    return out


class CalibrationProblem:
    """Field data, computer model and priors for one calibration run."""

    def __init__(
        self,
        design,
        y,
        model_fn=None,
        emulator=None,
        theta_bounds=None,
        spec=None,
        mean_basis="constant",
        prior=None,
        jr_params=None,
        jr_context=CALIBRATION,
        theta_log_prior=None,
    ):
        if not isinstance(design, DesignMatrix):
            design = DesignMatrix(np.asarray(design, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if y.size != design.n:
            raise DataError("field outputs and design size mismatch")
        if (model_fn is None) == (emulator is None):
            raise ConfigError("provide exactly one of model_fn or emulator")
        if theta_bounds is None:
            raise ConfigError("theta_bounds are required (box-uniform prior)")
        theta_bounds = np.atleast_2d(np.asarray(theta_bounds, dtype=float))
        if theta_bounds.shape[1] != 2 or np.any(
            theta_bounds[:, 1] <= theta_bounds[:, 0]
        ):
            raise ConfigError("theta_bounds must be (p_theta, 2) with lo < hi")
        self.design = design
        self.y = y
        self.model_fn = model_fn
        self.emulator = emulator
        self.theta_bounds = theta_bounds
        self.p_theta = theta_bounds.shape[0]
        self.theta_log_prior = theta_log_prior
        self.spec = spec or CorrelationSpec.uniform(matern25(), design.p)
        self.prior = prior or PriorSpec(kind=JR, nugget_included=True)
        # the discrepancy model always carries a nugget: field data are noisy
        self.model = GaSPModel(
            design, y, self.spec, mean_basis=mean_basis, nugget_enabled=True
        )
        self.H = self.model.H
        report = check_propriety_preconditions(self.H, y)
        if not report.passes:
            raise ConfigError(
                "posterior propriety preconditions fail: "
                f"rank(H, y)={report.rank} < {report.required_rank} or n < q+1"
            )
        if self.prior.kind == JR:
            self.jr_params = jr_params or jr_default_params(design, context=jr_context)
        else:
            self.jr_params = None
            ones = np.ones(design.n)
            coef, *_ = np.linalg.lstsq(self.H, ones, rcond=None)
            if np.max(np.abs(ones - self.H @ coef)) > 1e-8:
                raise ConfigError(
                    "reference prior in calibration requires the intercept in "
                    "the column space of the mean basis"
                )

    def model_output(self, X, theta, rng=None):
        """Evaluate the computer model, sampling the emulator if modular."""
        if self.model_fn is not None:
            return np.asarray(self.model_fn(X, theta), dtype=float).ravel()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        joint = np.column_stack([X, np.tile(theta, (X.shape[0], 1))])
        pred = self.emulator.predict(joint)
        if rng is None:
            return pred.mean
        return pred.sample(rng)

    def range_log_prior(self, xi, log_eta):
        """Log prior density over the sampling coordinates (xi, log eta)."""
        beta = np.exp(xi)
        eta = float(np.exp(log_eta))
        if self.prior.kind == JR:
            base = jr_log_density(self.jr_params, beta, eta)
            return base + float(np.sum(xi)) + log_eta
        params = RangeParams(xi, Parameterization.XI)
        return reference_log_density(
            self.model, params, eta=eta, eta_param="log"
        )

    def theta_in_bounds(self, theta):
        return bool(
            np.all(theta >= self.theta_bounds[:, 0])
            and np.all(theta <= self.theta_bounds[:, 1])
        )

    def theta_log_prior_value(self, theta):
        if not self.theta_in_bounds(theta):
            return -np.inf
        if self.theta_log_prior is not None:
            return float(self.theta_log_prior(theta))
        return 0.0


@dataclass
class PosteriorChain:
    """Raw MCMC output; post-burn-in samples via :meth:`retained`."""

    theta: np.ndarray
    theta_m: np.ndarray
    sigma2: np.ndarray
    xi: np.ndarray
    log_eta: np.ndarray
    n_burn: int
    acceptance: dict
    seed: int

    def __post_init__(self):
        if self.theta.shape[0] <= self.n_burn:
            raise ConfigError("need more samples than burn-in")
        if np.any(self.sigma2 <= 0):
            raise NumericError("non-positive variance sample in chain")

    @property
    def n_samples(self):
        return self.theta.shape[0]

    def retained(self, name):
        return getattr(self, name)[self.n_burn :]


class _CovCache:
    """Cholesky-level cache for the current (xi, log_eta) point."""

    def __init__(self, model, xi, log_eta):
        params = RangeParams(xi, Parameterization.XI)
        state = model.state(params, float(np.exp(log_eta)))
        self.state = state
        self.L = state.L
        self.LA = state.LA
        self.logdet_C = state.logdet_C

    def quad_form(self, resid):
        return float(resid @ linalg.cho_solve((self.L, True), resid))

    def gls(self, z, H):
        rhs = H.T @ linalg.cho_solve((self.L, True), z)
        return linalg.cho_solve((self.LA, True), rhs)


def run_mcmc(
    prob,
    n_samples,
    n_burn,
    seed=0,
    fix_theta=None,
    fix_range=None,
    init=None,
):
    """Sample the calibration posterior; deterministic under the seed.

    ``fix_theta`` and ``fix_range`` freeze those blocks (useful for
    conditional-distribution checks); ``fix_range`` is a (xi, eta) pair.
    """
    if n_samples <= n_burn:
        raise ConfigError("n_samples must exceed n_burn")
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0xCA11B)))
    n, q = prob.model.n, prob.model.q
    H = prob.H
    y = prob.y

    # --- initial state
    if init is None:
        init = {}
    theta = np.asarray(
        init.get(
            "theta",
            fix_theta if fix_theta is not None else prob.theta_bounds.mean(axis=1),
        ),
        dtype=float,
    ).ravel()
    if fix_range is not None:
        xi = np.asarray(fix_range[0], dtype=float).ravel()
        log_eta = float(np.log(fix_range[1]))
    else:
        # unit inverse range per coordinate: a neutral moderate correlation
        xi = np.asarray(init.get("xi", np.zeros(prob.design.p)), dtype=float).ravel()
        log_eta = float(init.get("log_eta", np.log(0.1)))
    theta_m = np.asarray(init.get("theta_m", np.zeros(q)), dtype=float).ravel()
    sigma2 = float(init.get("sigma2", max(np.var(y), 1e-12)))

    cache = _CovCache(prob.model, xi, log_eta)
    f_design = prob.model_output(prob.design.values, theta, rng=rng)
    range_lp = prob.range_log_prior(xi, log_eta)

    theta_step = 0.1
    range_step = 0.1
    theta_scales = prob.theta_bounds[:, 1] - prob.theta_bounds[:, 0]

    out_theta = np.empty((n_samples, theta.size))
    out_theta_m = np.empty((n_samples, q))
    out_sigma2 = np.empty(n_samples)
    out_xi = np.empty((n_samples, xi.size))
    out_log_eta = np.empty(n_samples)
    acc_theta = np.zeros(n_samples, dtype=bool)
    acc_range = np.zeros(n_samples, dtype=bool)
    consecutive_chol_failures = 0

    for i in range(n_samples):
        # --- theta block (random walk, covariance factor fixed)
        if fix_theta is None:
            prop = theta + theta_step * theta_scales * rng.standard_normal(theta.size)
            lp_prop = prob.theta_log_prior_value(prop)
            if np.isfinite(lp_prop):
                f_prop = prob.model_output(prob.design.values, prop, rng=rng)
                r_cur = (y - f_design) - H @ theta_m
                r_prop = (y - f_prop) - H @ theta_m
                log_ratio = (
                    -0.5 * cache.quad_form(r_prop) / sigma2
                    + lp_prop
                    + 0.5 * cache.quad_form(r_cur) / sigma2
                    - prob.theta_log_prior_value(theta)
                )
                if np.log(rng.uniform()) < log_ratio:
                    theta = prop
                    f_design = f_prop
                    acc_theta[i] = True
            if i < n_burn:
                gain = min(0.25, 4.0 / np.sqrt(i + 1.0))
                theta_step *= np.exp(gain * (float(acc_theta[i]) - _ADAPT_TARGET))

        # --- (xi, log eta) block
        if fix_range is None:
            prop_xi = xi + range_step * rng.standard_normal(xi.size)
            prop_log_eta = log_eta + range_step * rng.standard_normal()
            try:
                prop_cache = _CovCache(prob.model, prop_xi, prop_log_eta)
                consecutive_chol_failures = 0
                prop_lp = prob.range_log_prior(prop_xi, prop_log_eta)
                z = y - f_design
                r_cur = z - H @ theta_m
                log_ratio = (
                    -0.5 * prop_cache.logdet_C
                    - 0.5 * prop_cache.quad_form(r_cur) / sigma2
                    + prop_lp
                    + 0.5 * cache.logdet_C
                    + 0.5 * cache.quad_form(r_cur) / sigma2
                    - range_lp
                )
                if np.isfinite(log_ratio) and np.log(rng.uniform()) < log_ratio:
                    xi, log_eta = prop_xi, prop_log_eta
                    cache, range_lp = prop_cache, prop_lp
                    acc_range[i] = True
            except NumericError:
                consecutive_chol_failures += 1
                if consecutive_chol_failures > _MAX_CONSECUTIVE_CHOL_FAILURES:
                    raise NumericError(
                        "covariance factorization failed for "
                        f"{consecutive_chol_failures} consecutive proposals; "
                        f"state: xi={xi}, log_eta={log_eta}, sigma2={sigma2}, "
                        f"theta={theta}"
                    ) from None
            if i < n_burn:
                gain = min(0.25, 4.0 / np.sqrt(i + 1.0))
                range_step *= np.exp(gain * (float(acc_range[i]) - _ADAPT_TARGET))

        # --- conjugate Gibbs draws
        z = y - f_design
        theta_gls = cache.gls(z, H)
        chol_shift = linalg.solve_triangular(
            cache.LA, rng.standard_normal(q), lower=True, trans="T"
        )
        theta_m = theta_gls + np.sqrt(sigma2) * chol_shift
        resid = z - H @ theta_m
        s_r = cache.quad_form(resid)
        sigma2 = (s_r / 2.0) / rng.gamma(shape=n / 2.0, scale=1.0)

        out_theta[i] = theta
        out_theta_m[i] = theta_m
        out_sigma2[i] = sigma2
        out_xi[i] = xi
        out_log_eta[i] = log_eta

    kept = slice(n_burn, None)
    acceptance = {
        "theta": float(np.mean(acc_theta[kept])) if fix_theta is None else None,
        "range": float(np.mean(acc_range[kept])) if fix_range is None else None,
    }
    return PosteriorChain(
        theta=out_theta,
        theta_m=out_theta_m,
        sigma2=out_sigma2,
        xi=out_xi,
        log_eta=out_log_eta,
        n_burn=n_burn,
        acceptance=acceptance,
        seed=int(seed),
    )


def gibbs_conditionals(prob, theta, theta_m, sigma2, xi, eta):
    """Parameters of the two conjugate conditionals at the given state.

    Returns ((mean, cov) for theta_m | rest, (shape, scale) for the
    inverse-gamma sigma^2 | rest); used to validate the sampler against
    densities computed directly from the joint.
    """
    cache = _CovCache(prob.model, np.asarray(xi, dtype=float), float(np.log(eta)))
    z = prob.y - prob.model_output(prob.design.values, np.asarray(theta, dtype=float))
    H = prob.H
    mean = cache.gls(z, H)
    A_inv = linalg.cho_solve((cache.LA, True), np.eye(H.shape[1]))
    cov = sigma2 * A_inv
    resid = z - H @ np.asarray(theta_m, dtype=float).ravel()
    s_r = cache.quad_form(resid)
    return (mean, cov), (prob.model.n / 2.0, s_r / 2.0)


@dataclass
class CalibrationPrediction:
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    extrapolated: np.ndarray = None


MODEL_ONLY = "model_only"
MODEL_PLUS_DISCREPANCY = "model_plus_discrepancy"


def predict_calibrated(prob, chain, new_inputs, mode=MODEL_PLUS_DISCREPANCY, thin=1):
    """Posterior predictive of the noise-free reality at new inputs.

    Per retained sample the calibrated model plus mean-basis offset is
    computed; in the discrepancy mode the GaSP conditional mean is added
    and a reality value is drawn from its conditional normal.  Intervals
    are the empirical 2.5/97.5 percentiles.
    """
    if mode not in (MODEL_ONLY, MODEL_PLUS_DISCREPANCY):
        raise ConfigError(f"unknown prediction mode {mode!r}")
    Xs = np.atleast_2d(np.asarray(new_inputs, dtype=float))
    rng = np.random.default_rng(np.random.SeedSequence((chain.seed, 0x9125D)))
    theta_s = chain.retained("theta")[::thin]
    theta_m_s = chain.retained("theta_m")[::thin]
    sigma2_s = chain.retained("sigma2")[::thin]
    xi_s = chain.retained("xi")[::thin]
    log_eta_s = chain.retained("log_eta")[::thin]
    S = theta_s.shape[0]
    hstar = np.atleast_2d(prob.model.basis(Xs))
    means = np.empty((S, Xs.shape[0]))
    draws = np.empty((S, Xs.shape[0])) if mode == MODEL_PLUS_DISCREPANCY else None
    H, y = prob.H, prob.y
    from .gasp import cross_correlation

    for s in range(S):
        fstar = prob.model_output(Xs, theta_s[s], rng=rng if prob.emulator else None)
        base = fstar + hstar @ theta_m_s[s]
        if mode == MODEL_ONLY:
            means[s] = base
            continue
        cache = _CovCache(prob.model, xi_s[s], log_eta_s[s])
        f_design = prob.model_output(
            prob.design.values, theta_s[s], rng=rng if prob.emulator else None
        )
        resid = (y - f_design) - H @ theta_m_s[s]
        w = linalg.cho_solve((cache.L, True), resid)
        params = RangeParams(xi_s[s], Parameterization.XI)
        r = cross_correlation(prob.model, params, Xs)
        cond_mean = base + r @ w
        quad = np.sum(r.T * linalg.cho_solve((cache.L, True), r.T), axis=0)
        cond_var = np.maximum(sigma2_s[s] * (1.0 - quad), 0.0)
        means[s] = cond_mean
        draws[s] = cond_mean + np.sqrt(cond_var) * rng.standard_normal(Xs.shape[0])

    source = means if mode == MODEL_ONLY else draws
    lower, upper = np.percentile(source, [2.5, 97.5], axis=0)
    return CalibrationPrediction(
        mean=means.mean(axis=0),
        lower=lower,
        upper=upper,
        extrapolated=~prob.design.contains(Xs),
    )


def fit_emulator_modular(run_design, run_outputs, spec=None, cfg=None, nugget=False):
    """Fit a GaSP emulator to computer-model runs for use inside calibration.

    The emulator depends only on the model runs (modular approach); inside
    the sampler its predictive distribution is drawn from wherever a model
    evaluation is needed.
    """
    if not isinstance(run_design, DesignMatrix):
        run_design = DesignMatrix(np.asarray(run_design, dtype=float))
    run_outputs = np.asarray(run_outputs, dtype=float).ravel()
    spec = spec or CorrelationSpec.uniform(matern25(), run_design.p)
    return fit_emulator(
        run_design, run_outputs, spec, cfg=cfg, nugget=nugget
    )
