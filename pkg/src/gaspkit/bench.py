"""Benchmark functions, space-filling designs and experiment drivers.

The function library holds the standard emulation/screening test problems
(Branin-type surfaces, the borehole function, linear screens with inert
inputs, ...) keyed by short case ids, plus the exponential-decay
calibration problem.  Drivers reproduce the accuracy tables at desk scale:
fewer replicates and held-out points than the reference experiments, with
the full-scale settings available behind a flag.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist

from . import calibrate as _calibrate
from .calibrate import nrmse
from .design import DesignMatrix
from .errors import ConfigError, DataError
from .fit import FitConfig, FittedEmulator, fit_mode
from .gasp import GaSPModel
from .kernels import CorrelationSpec, Parameterization, matern25
from .priors import JR, REFERENCE, CALIBRATION, PriorSpec, jr_default_params

# Table sample sizes for the emulation cases (n grows with input dimension)
EMULATION_SIZES = {"ex1-i": 30, "ex1-ii": 40, "ex1-iii": 50, "ex1-iv": 60, "ex1-v": 80}
SCREENING_SIZES = {
    "ex2-i": 54,
    "ex2-ii": 54,
    "ex3-i": 20,
    "ex3-ii": 35,
    "ex3-iii": 35,
    "ex3-iv": 35,
}


@dataclass(frozen=True)
class TestFunction:
    """A benchmark function: evaluator, domain, noise level, signal set."""

    id: str
    dim: int
    bounds: np.ndarray
    noise_sd: float
    signal_dims: tuple
    fn: callable

    def noiseless(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise DataError(f"{self.id} expects {self.dim} columns, got {X.shape[1]}")
        return self.fn(X)

    def evaluate(self, X, rng=None):
        y = self.noiseless(X)
        if rng is not None and self.noise_sd > 0:
            y = y + rng.normal(0.0, self.noise_sd, size=y.shape)
        return y


def _unit_bounds(p):
    return np.tile([0.0, 1.0], (p, 1))


def _branin_like(X):
    x1, x2 = X[:, 0], X[:, 1]
    a = x2 - 5.1 * x1**2 / (4 * np.pi**2) + 5 * x1 / np.pi - 6
    return a**2 + 10 * (1 - 1 / (8 * np.pi)) * np.cos(x1) + 10


def _curved_ridge(X):
    x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
    return (
        4 * (x1 - 2 + 8 * x2 - 8 * x2**2) ** 2
        + (3 - 4 * x2) ** 2
        + 16 * np.sqrt(x3 + 1) * (2 * x3 - 1) ** 2
    )


def _sharp_sine(X):
    x1, x2, x3, x4 = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    return 2 * np.exp(np.sin((0.9 * (x1 + 0.48)) ** 8)) + x2 * x3 + x4


def _friedman(X):
    x1, x2, x3, x4, x5 = X[:, 0], X[:, 1], X[:, 2], X[:, 3], X[:, 4]
    return 10 * np.sin(np.pi * x1 * x2) + 20 * (x3 - 0.5) ** 2 + 10 * x4 + 5 * x5


_BOREHOLE_BOUNDS = np.array(
    [
        [0.05, 0.15],
        [100.0, 50000.0],
        [63070.0, 115600.0],
        [990.0, 1110.0],
        [63.1, 116.0],
        [700.0, 820.0],
        [1120.0, 1680.0],
        [9855.0, 12045.0],
    ]
)


def _borehole(X):
    rw, r, Tu, Hu, Tl, Hl, L, Kw = (X[:, i] for i in range(8))
    lnr = np.log(r / rw)
    return (
        2 * np.pi * Tu * (Hu - Hl)
        / (lnr * (1 + 2 * L * Tu / (lnr * rw**2 * Kw) + Tu / Tl))
    )


def _linear_screen(X):
    return 0.2 * (X[:, 0] + X[:, 1] + X[:, 2] + X[:, 3])


def _geometric_screen(X):
    coeff = 0.2 / 2.0 ** np.arange(8)
    return X[:, :8] @ coeff


def _product_screen(X):
    x1, x2 = X[:, 0], X[:, 1]
    return ((30 + 5 * x1 * np.sin(5 * x1)) * (4 + np.exp(-5 * x2)) - 100) / 6.0


def _exp_interaction(X):
    x1, x2, x3, x4 = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    return (2.0 / 3.0) * np.exp(x1 + x2) - x4 * np.sin(x3) + x3


FUNCTIONS = {
    "ex1-i": TestFunction("ex1-i", 2, _unit_bounds(2), 0.0, (0, 1), _branin_like),
    "ex1-ii": TestFunction("ex1-ii", 3, _unit_bounds(3), 0.0, (0, 1, 2), _curved_ridge),
    "ex1-iii": TestFunction("ex1-iii", 4, _unit_bounds(4), 0.0, (0, 1, 2, 3), _sharp_sine),
    "ex1-iv": TestFunction("ex1-iv", 5, _unit_bounds(5), 0.0, tuple(range(5)), _friedman),
    "ex1-v": TestFunction("ex1-v", 8, _BOREHOLE_BOUNDS, 0.0, tuple(range(8)), _borehole),
    "ex2-i": TestFunction("ex2-i", 10, _unit_bounds(10), 0.05, (0, 1, 2, 3), _linear_screen),
    "ex2-ii": TestFunction("ex2-ii", 10, _unit_bounds(10), 0.05, tuple(range(8)), _geometric_screen),
    "ex3-i": TestFunction("ex3-i", 7, _unit_bounds(7), 0.3, (0, 1), _product_screen),
    "ex3-ii": TestFunction("ex3-ii", 6, _unit_bounds(6), 0.05, (0, 1, 2), _curved_ridge),
    "ex3-iii": TestFunction("ex3-iii", 8, _unit_bounds(8), 0.15, (0, 1, 2, 3), _exp_interaction),
    "ex3-iv": TestFunction("ex3-iv", 10, _unit_bounds(10), 0.2, tuple(range(5)), _friedman),
}


def get_function(case):
    try:
        return FUNCTIONS[case]
    except KeyError:
        raise ConfigError(
            f"unknown case {case!r}; known: {sorted(FUNCTIONS)} and ex4"
        ) from None


def maximin_lhd(n, p, seed=0, n_candidates=20, bounds=None):
    """Best-of-candidates maximin Latin hypercube design.

    Each candidate stratifies every coordinate into n cells, permutes them
    and jitters uniformly within cells; the candidate with the largest
    minimum pairwise distance wins.  Deterministic for a fixed seed.
    """
    if n < 2:
        raise ConfigError("need at least two design points")
    rng = np.random.default_rng(seed)
    best, best_score = None, -np.inf
    for _ in range(max(1, n_candidates)):
        u = np.empty((n, p))
        for j in range(p):
            cells = rng.permutation(n)
            u[:, j] = (cells + rng.uniform(size=n)) / n
        score = pdist(u).min()
        if score > best_score:
            best, best_score = u, score
    if bounds is not None:
        bounds = np.asarray(bounds, dtype=float)
        lo, hi = bounds[:, 0], bounds[:, 1]
        return DesignMatrix(lo + best * (hi - lo), bounds=bounds)
    return DesignMatrix(best, bounds=_unit_bounds(p))


@dataclass
class ExperimentReport:
    """Per-replicate rows plus aggregates; fully determined by config+seed."""

    config: dict
    rows: list = field(default_factory=list)
    aggregates: list = field(default_factory=list)
    extras: dict = field(default_factory=dict)


def _fit_config_for(kind, seed):
    prior = PriorSpec(kind=kind)
    return FitConfig(parameterization=Parameterization.XI, prior=prior, seed=seed)


def _posterior_extreme_gap(model, result):
    """How far the log posterior falls at the two degenerate extremes.

    Evaluated in the fit's own parameterization at gamma = 1e-8 and 1e8
    (all coordinates); returns the smaller of the two drops from the mode.
    """
    from .fit import log_posterior
    from .kernels import RangeParams

    gaps = []
    for g in (1e-8, 1e8):
        params = RangeParams(np.full(model.p, g)).to(result.parameterization)
        eta = result.eta_hat if model.nugget_enabled else None
        try:
            value = log_posterior(
                model, result.prior, params, eta=eta, jr_params=result.jr_params
            )
        except Exception:
            value = -np.inf
        gaps.append(result.log_posterior - value)
    return float(min(gaps))


def emulation_benchmark(
    cases,
    n_replicates=20,
    prior_kinds=(JR,),
    seed=0,
    n_heldout=2000,
    n_per_case=None,
    record_extreme_gap=False,
):
    """Fit emulators on fresh maximin designs and record out-of-sample NRMSE.

    One row per (case, prior, replicate); aggregates hold the average NRMSE
    per (case, prior).  Robustness flags are recorded for every fit.
    """
    if isinstance(cases, str):
        cases = [cases]
    report = ExperimentReport(
        config={
            "cases": list(cases),
            "n_replicates": n_replicates,
            "prior_kinds": list(prior_kinds),
            "seed": seed,
            "n_heldout": n_heldout,
        }
    )
    root = np.random.SeedSequence(seed)
    for case in cases:
        f = get_function(case)
        n = (n_per_case or {}).get(case) if isinstance(n_per_case, dict) else n_per_case
        n = n or EMULATION_SIZES.get(case)
        if n is None:
            raise ConfigError(f"no default sample size for case {case}")
        spec = CorrelationSpec.uniform(matern25(), f.dim)
        for rep, child in enumerate(root.spawn(n_replicates)):
            rng = np.random.default_rng(child)
            design_seed = int(rng.integers(2**31))
            design = maximin_lhd(n, f.dim, seed=design_seed, bounds=f.bounds)
            y = f.evaluate(design.values, rng=rng)
            lo, hi = f.bounds[:, 0], f.bounds[:, 1]
            Xtest = lo + rng.uniform(size=(n_heldout, f.dim)) * (hi - lo)
            ytest = f.noiseless(Xtest)
            model = GaSPModel(design, y, spec, nugget_enabled=f.noise_sd > 0)
            for kind in prior_kinds:
                t0 = time.perf_counter()
                result = fit_mode(model, _fit_config_for(kind, seed=rep))
                fit_seconds = time.perf_counter() - t0
                emulator = FittedEmulator(model, result)
                pred = emulator.predict_mean(Xtest)
                train_resid = float(
                    np.max(np.abs(emulator.predict_mean(design.values) - y))
                    / max(float(np.std(y)), 1e-300)
                )
                row = {
                    "case": case,
                    "prior": kind,
                    "replicate": rep,
                    "nrmse": nrmse(ytest, pred, observed_mean=np.mean(y)),
                    "fit_seconds": fit_seconds,
                    "train_resid": train_resid,
                    "flag_near_identity": result.diagnostics.flag_near_identity,
                    "flag_near_ones": result.diagnostics.flag_near_ones,
                }
                if record_extreme_gap:
                    row["extreme_gap"] = _posterior_extreme_gap(model, result)
                report.rows.append(row)
    for case in cases:
        for kind in prior_kinds:
            vals = [
                r["nrmse"]
                for r in report.rows
                if r["case"] == case and r["prior"] == kind
            ]
            if vals:
                report.aggregates.append(
                    {"case": case, "prior": kind, "avg_nrmse": float(np.mean(vals))}
                )
    return report


# ---------------------------------------------------------------------------
# calibration benchmark (exponential-decay field data vs. biased model)

EX4_SITE_RANGE = (0.0, 3.0)
EX4_PREDICT_RANGE = (0.0, 5.0)
EX4_NOISE_SD = 0.3
EX4_THETA_BOUNDS = np.array([[0.0, 5.0]])


def ex4_reality(x):
    x = np.asarray(x, dtype=float)
    return 3.5 * np.exp(-1.7 * x) + 1.5


def ex4_model(X, theta):
    """Computer model 5 exp(-theta x); theta is a length-1 vector."""
    x = np.atleast_2d(np.asarray(X, dtype=float))[:, 0]
    return 5.0 * np.exp(-float(theta[0]) * x)


def make_ex4_data(seed=0, n_sites=10, n_reps=3):
    """Equispaced sites on (0, 3] with replicated noisy reality observations.

    Sites are k * 3/n_sites for k = 1..n_sites; x = 0 is excluded because
    the computer model is exact there, which would pin the discrepancy and
    change the character of the calibration problem.
    """
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x0E4)))
    hi = EX4_SITE_RANGE[1]
    sites = hi / n_sites * np.arange(1, n_sites + 1)
    x = np.repeat(sites, n_reps)
    y = ex4_reality(x) + rng.normal(0.0, EX4_NOISE_SD, size=x.size)
    return x[:, None], y


def _ex4_problem(x, y, prior_kind):
    design = DesignMatrix(x, bounds=np.array([list(EX4_SITE_RANGE)]))
    prior = PriorSpec(kind=prior_kind, nugget_included=True)
    return _calibrate.CalibrationProblem(
        design=design,
        y=y,
        model_fn=ex4_model,
        theta_bounds=EX4_THETA_BOUNDS,
        prior=prior,
        jr_context=CALIBRATION,
    )


def calibration_benchmark(
    seed=12,
    n_samples=20000,
    n_burn=4000,
    n_heldout=200,
    methods=(JR, REFERENCE, "mle"),
):
    """Calibrate the exponential-decay example and score held-out prediction.

    Produces one row per (method, predictor) with NRMSE, interval coverage
    and average interval length; plot data (x, mean, lower, upper) per
    method lands in ``extras``.
    """
    x, y = make_ex4_data(seed)
    xstar = np.linspace(*EX4_PREDICT_RANGE, n_heldout)[:, None]
    truth = ex4_reality(xstar[:, 0])
    ybar = float(np.mean(y))
    report = ExperimentReport(
        config={
            "seed": seed,
            "n_samples": n_samples,
            "n_burn": n_burn,
            "n_heldout": n_heldout,
        }
    )
    for method in methods:
        if method == "mle":
            out = _calibration_mle(x, y, xstar)
            median_xi = out["xi"]
            preds = out["predictions"]
        else:
            prob = _ex4_problem(x, y, method)
            chain = _calibrate.run_mcmc(
                prob, n_samples=n_samples, n_burn=n_burn, seed=seed
            )
            median_xi = float(np.median(chain.retained("xi")[:, 0]))
            preds = {
                mode: _calibrate.predict_calibrated(prob, chain, xstar, mode=mode)
                for mode in ("model_only", "model_plus_discrepancy")
            }
            report.extras[f"chain_{method}"] = chain
        for mode, pred in preds.items():
            metrics = _calibrate.calibration_metrics(
                pred.mean,
                truth,
                lower=pred.lower,
                upper=pred.upper,
                observed_mean=ybar,
            )
            report.rows.append(
                {
                    "method": method,
                    "predictor": mode,
                    "nrmse": metrics["nrmse"],
                    "p_ci95": metrics["p_ci95"],
                    "l_ci95": metrics["l_ci95"],
                    "median_xi": median_xi,
                }
            )
            report.extras[f"plot_{method}_{mode}"] = {
                "x": xstar[:, 0],
                "mean": pred.mean,
                "lower": pred.lower,
                "upper": pred.upper,
            }
    return report


def _calibration_mle(x, y, xstar):
    """Profile-likelihood calibration: closed-form (mean, variance), then
    numerical maximization over (theta, xi, log eta).  Comparison harness
    only; plug-in normal intervals."""
    from scipy import linalg, optimize, stats

    from .kernels import RangeParams

    design = DesignMatrix(x, bounds=np.array([list(EX4_SITE_RANGE)]))
    spec = CorrelationSpec.uniform(matern25(), 1)
    n = y.size
    H = np.ones((n, 1))

    def profile_neg_loglik(v):
        theta, xi, zeta = v[0], v[1:2], v[2]
        model_out = ex4_model(x, [theta])
        z = y - model_out
        from .gasp import GaSPModel as _M

        m = _M(design, z, spec, nugget_enabled=True)
        try:
            state = m.state(RangeParams(xi, Parameterization.XI), np.exp(zeta))
        except Exception:
            return 1e12
        resid = z - H @ state.theta_hat
        s2 = float(resid @ linalg.cho_solve((state.L, True), resid)) / n
        if s2 <= 0:
            return 1e12
        val = 0.5 * state.logdet_C + 0.5 * n * np.log(s2)
        return val if np.isfinite(val) else 1e12

    best = None
    for theta0 in (0.5, 1.5, 3.0):
        res = optimize.minimize(
            profile_neg_loglik,
            np.array([theta0, np.log(1.0 / 0.1), np.log(0.1)]),
            method="L-BFGS-B",
            bounds=[(EX4_THETA_BOUNDS[0, 0], EX4_THETA_BOUNDS[0, 1]), (None, None), (None, None)],
        )
        if best is None or res.fun < best.fun:
            best = res
    theta_hat, xi_hat, zeta_hat = best.x[0], best.x[1:2], best.x[2]
    z = y - ex4_model(x, [theta_hat])
    from .gasp import GaSPModel as _M, predict as _predict

    m = _M(design, z, spec, nugget_enabled=True)
    params = RangeParams(xi_hat, Parameterization.XI)
    eta_hat = float(np.exp(zeta_hat))
    state = m.state(params, eta_hat)
    pred = _predict(m, params, eta_hat, xstar, state=state)
    mean_disc = ex4_model(xstar, [theta_hat]) + pred.mean
    zq = stats.norm.ppf(0.975)
    lower = mean_disc - zq * pred.scale
    upper = mean_disc + zq * pred.scale
    mean_only = ex4_model(xstar, [theta_hat]) + float(state.theta_hat[0])

    class _P:
        def __init__(self, mean, lower, upper):
            self.mean, self.lower, self.upper = mean, lower, upper

    return {
        "theta": float(theta_hat),
        "xi": float(xi_hat[0]),
        "predictions": {
            "model_only": _P(mean_only, mean_only.copy(), mean_only.copy()),
            "model_plus_discrepancy": _P(mean_disc, lower, upper),
        },
    }
