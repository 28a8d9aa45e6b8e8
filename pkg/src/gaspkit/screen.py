"""Inert-input screening and Sobol sensitivity indices.

Screening reads the fitted inverse range parameters directly: the share
P_l = C_l beta_l / sum_i C_i beta_i of each input in the weighted total is
its importance, and an input is flagged inert when P_l falls below
p0 / p.  This costs nothing beyond the fit itself.

Sensitivity indices use the Saltelli pick-freeze scheme with two
independent sample matrices (Jansen's formula for total effects), either
on the function itself or on an emulator's predictive mean.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericError
from .kernels import Parameterization

MONTE_CARLO = "monte_carlo"
EMULATOR = "emulator"


@dataclass
class ScreenResult:
    """Normalized inverse range parameters and the induced selection."""

    P: np.ndarray
    selected: np.ndarray
    p0: float


def normalized_inverse_ranges(fit_result, jr_params=None, p0=1.0):
    """Importance shares P_l from a fitted model, selection at p0 / p.

    Meant for fits done with the JR prior under the beta parameterization
    (the combination whose mode can land on the inert boundary).
    """
    if not 0 < p0 <= 1:
        raise ConfigError(f"p0 must lie in (0, 1], got {p0}")
    jr = jr_params if jr_params is not None else fit_result.jr_params
    if jr is None:
        raise ConfigError("screening requires JR prior scale constants")
    beta = fit_result.beta()
    weighted = jr.C * beta
    total = float(weighted.sum())
    if total <= 0:
        raise NumericError("degenerate fit: all inverse range estimates are zero")
    P = weighted / total
    return ScreenResult(P=P, selected=P > p0 / P.size, p0=p0)


@dataclass
class SobolIndices:
    """Main and total effect indices with jackknife errors (Monte Carlo)."""

    S: np.ndarray
    S_T: np.ndarray
    estimator: str
    n_samples: int
    se_S: np.ndarray = None
    se_T: np.ndarray = None


def _uniform_samples(bounds, n, rng):
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    lo, hi = bounds[:, 0], bounds[:, 1]
    return lo + rng.uniform(size=(n, bounds.shape[0])) * (hi - lo)


def _evaluate(f, X):
    y = np.asarray(f(X), dtype=float).ravel()
    if y.size != X.shape[0]:
        raise DataError("function must return one value per input row")
    if not np.all(np.isfinite(y)):
        bad = X[~np.isfinite(y)][0]
        raise DataError(f"non-finite function output at input {bad}")
    return y


def sobol_mc(f, bounds, n_mc=10000, seed=0):
    """Pick-freeze Sobol indices of f over independent uniform inputs.

    Uses two base matrices A, B and the column-swapped hybrids: the main
    effect of input i is estimated by mean(f_B (f_ABi - f_A)) / V and the
    total effect by Jansen's mean((f_A - f_ABi)^2) / (2 V).  Standard
    errors are delete-one jackknife over sample rows.
    """
    if n_mc < 100:
        raise ConfigError("need n_mc >= 100")
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    p = bounds.shape[0]
    rng = np.random.default_rng(seed)
    A = _uniform_samples(bounds, n_mc, rng)
    B = _uniform_samples(bounds, n_mc, rng)
    fA = _evaluate(f, A)
    fB = _evaluate(f, B)
    n = n_mc
    # pooled variance over both base samples, and its delete-one pieces
    pooled_sum = fA.sum() + fB.sum()
    pooled_sq = (fA**2).sum() + (fB**2).sum()
    mu = pooled_sum / (2 * n)
    V = pooled_sq / (2 * n) - mu**2
    if V <= 0:
        raise DataError("function is constant over the sampled inputs")
    mu_loo = (pooled_sum - fA - fB) / (2 * (n - 1))
    V_loo = (pooled_sq - fA**2 - fB**2) / (2 * (n - 1)) - mu_loo**2

    S = np.empty(p)
    S_T = np.empty(p)
    se_S = np.empty(p)
    se_T = np.empty(p)
    for i in range(p):
        ABi = A.copy()
        ABi[:, i] = B[:, i]
        fABi = _evaluate(f, ABi)
        g_main = fB * (fABi - fA)
        g_tot = 0.5 * (fA - fABi) ** 2
        U = g_main.mean()
        T = g_tot.mean()
        S[i] = U / V
        S_T[i] = T / V
        U_loo = (g_main.sum() - g_main) / (n - 1)
        T_loo = (g_tot.sum() - g_tot) / (n - 1)
        se_S[i] = _jackknife_se(U_loo / V_loo)
        se_T[i] = _jackknife_se(T_loo / V_loo)
    return SobolIndices(
        S=S, S_T=S_T, estimator=MONTE_CARLO, n_samples=n_mc, se_S=se_S, se_T=se_T
    )


def _jackknife_se(loo_values):
    n = loo_values.size
    return float(np.sqrt((n - 1) / n * np.sum((loo_values - loo_values.mean()) ** 2)))


def sobol_emulator(emulator, bounds, n_mc=10000, seed=0):
    """Sobol indices of an emulator's predictive mean (surrogate-based)."""
    result = sobol_mc(emulator.predict_mean, bounds, n_mc=n_mc, seed=seed)
    return SobolIndices(
        S=result.S,
        S_T=result.S_T,
        estimator=EMULATOR,
        n_samples=n_mc,
        se_S=None,
        se_T=None,
    )


def _sobol_vij(f, bounds, i, j, n_mc=10000, seed=0):
    """Second-order closed index V_{i,j} = Var E[f | x_i, x_j]; test utility."""
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    rng = np.random.default_rng(seed)
    A = _uniform_samples(bounds, n_mc, rng)
    B = _uniform_samples(bounds, n_mc, rng)
    fA = _evaluate(f, A)
    fB = _evaluate(f, B)
    ABij = A.copy()
    ABij[:, [i, j]] = B[:, [i, j]]
    fABij = _evaluate(f, ABij)
    return float(np.mean(fB * (fABij - fA)))


# ---------------------------------------------------------------------------
# replicated screening studies over fresh designs

P_NORMALIZED = "pl"
SOBOL_GASP = "sobol_gasp"


@dataclass
class ScreeningReport:
    """Selection frequencies and signal/noise separation over replicates."""

    case: str
    method: str
    selection_freq: np.ndarray
    separation_fraction: float
    P_samples: np.ndarray
    n_replicates: int
    p0: float
    seed: int


def screening_benchmark(
    case,
    n_replicates=100,
    seed=0,
    method=P_NORMALIZED,
    p0=1.0,
    n=None,
    n_mc_emulator=3000,
    multistart=6,
):
    """Replicate the screening protocol: fresh design, fit, select, separate.

    Per replicate a fresh maximin LHD is drawn, outputs are evaluated with
    fresh noise, a nugget GaSP is fit by the JR-prior beta-mode posterior,
    and either the normalized inverse ranges or emulator-based Sobol
    indices score every input.  The separation event is "the smallest
    signal score exceeds the largest noise score".
    """
    from . import bench
    from .fit import FitConfig, FittedEmulator, fit_mode
    from .gasp import GaSPModel
    from .kernels import CorrelationSpec, gaussian, matern25
    from .priors import JR, PriorSpec

    if method not in (P_NORMALIZED, SOBOL_GASP):
        raise ConfigError(f"unknown screening method {method!r}")
    f = bench.get_function(case)
    n = n or bench.SCREENING_SIZES.get(case)
    if n is None:
        raise ConfigError(f"no default sample size for case {case}")
    # the linear screens traditionally use the gaussian correlation
    kernel = gaussian() if case.startswith("ex2") else matern25()
    spec = CorrelationSpec.uniform(kernel, f.dim)
    signals = np.asarray(f.signal_dims, dtype=int)
    noise_dims = np.setdiff1d(np.arange(f.dim), signals)

    P_samples = np.empty((n_replicates, f.dim))
    selections = np.zeros((n_replicates, f.dim), dtype=bool)
    separated = np.zeros(n_replicates, dtype=bool)
    root = np.random.SeedSequence((seed, 0x5C12EE))
    for rep, child in enumerate(root.spawn(max(n_replicates, 0))):
        rng = np.random.default_rng(child)
        design = bench.maximin_lhd(n, f.dim, seed=int(rng.integers(2**31)), bounds=f.bounds)
        y = f.evaluate(design.values, rng=rng)
        model = GaSPModel(design, y, spec, nugget_enabled=True)
        cfg = FitConfig(
            parameterization=Parameterization.BETA,
            prior=PriorSpec(kind=JR, nugget_included=True),
            seed=rep,
            multistart=multistart,
        )
        result = fit_mode(model, cfg)
        if method == P_NORMALIZED:
            scores = normalized_inverse_ranges(result, p0=p0)
            P_samples[rep] = scores.P
            selections[rep] = scores.selected
        else:
            emu = FittedEmulator(model, result)
            idx = sobol_emulator(
                emu, f.bounds, n_mc=n_mc_emulator, seed=int(rng.integers(2**31))
            )
            P_samples[rep] = idx.S
            selections[rep] = idx.S > p0 / f.dim
        if noise_dims.size and signals.size:
            separated[rep] = (
                P_samples[rep, signals].min() > P_samples[rep, noise_dims].max()
            )
        else:
            separated[rep] = True
    return ScreeningReport(
        case=case,
        method=method,
        selection_freq=selections.mean(axis=0) if n_replicates else np.zeros(f.dim),
        separation_fraction=float(separated.mean()) if n_replicates else 0.0,
        P_samples=P_samples,
        n_replicates=n_replicates,
        p0=p0,
        seed=seed,
    )
