import numpy as np
import pytest
from scipy import linalg, stats

from gaspkit import bench
from gaspkit.calibrate import (
    CalibrationProblem,
    MODEL_ONLY,
    MODEL_PLUS_DISCREPANCY,
    PosteriorChain,
    calibration_metrics,
    check_propriety_preconditions,
    fit_emulator_modular,
    gibbs_conditionals,
    predict_calibrated,
    run_mcmc,
)
from gaspkit.design import DesignMatrix
from gaspkit.errors import ConfigError, DataError
from gaspkit.kernels import CorrelationSpec, RangeParams, matern25
from gaspkit.priors import JR, REFERENCE, PriorSpec


def ex4_problem(seed=0, prior_kind=JR):
    x, y = bench.make_ex4_data(seed=seed)
    return bench._ex4_problem(x, y, prior_kind), x, y


class TestProprietyPreconditions:
    def test_intercept_with_varying_output_passes(self):
        H = np.ones((5, 1))
        y = np.array([1.0, 2.0, 1.5, 0.3, 0.9])
        assert check_propriety_preconditions(H, y).passes

    def test_constant_output_fails(self):
        H = np.ones((5, 1))
        y = np.full(5, 2.0)
        report = check_propriety_preconditions(H, y)
        assert not report.passes and report.rank == 1

    def test_boundary_n_equals_q_plus_one(self):
        H = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
        y = np.array([0.0, 1.0, 4.0])  # quadratic: independent of H columns
        report = check_propriety_preconditions(H, y)
        assert report.passes and report.n == report.required_rank

    def test_construction_enforces(self):
        x = np.linspace(0, 3, 6)[:, None]
        with pytest.raises(ConfigError):
            CalibrationProblem(
                design=DesignMatrix(x),
                y=np.full(6, 1.2),
                model_fn=bench.ex4_model,
                theta_bounds=[[0, 5]],
            )

    def test_reference_prior_requires_intercept(self):
        x, y = bench.make_ex4_data(seed=0)
        with pytest.raises(ConfigError, match="intercept"):
            CalibrationProblem(
                design=DesignMatrix(x),
                y=y,
                model_fn=bench.ex4_model,
                theta_bounds=[[0, 5]],
                mean_basis=lambda X: np.atleast_2d(X)[:, [0]],
                prior=PriorSpec(kind=REFERENCE, nugget_included=True),
            )


class TestCalibrationMetrics:
    def test_perfect_prediction(self):
        truth = np.array([1.0, 2.0, 3.0])
        res = calibration_metrics(truth, truth, lower=truth - 1, upper=truth + 1)
        assert res["nrmse"] == 0.0
        assert res["p_ci95"] == 1.0
        assert res["l_ci95"] == pytest.approx(2.0)

    def test_mean_prediction_normalizes_to_one(self):
        truth = np.array([1.0, 2.0, 3.0, 6.0])
        pred = np.full(4, truth.mean())
        assert calibration_metrics(pred, truth)["nrmse"] == pytest.approx(1.0)

    def test_constant_truth_errors(self):
        with pytest.raises(DataError):
            calibration_metrics(np.zeros(3), np.full(3, 5.0))

    def test_length_mismatch(self):
        with pytest.raises(DataError):
            calibration_metrics(np.zeros(3), np.zeros(4))


class TestGibbsConditionals:
    def test_sigma2_conditional_matches_brute_force_on_grid(self):
        prob, x, y = ex4_problem(seed=1)
        theta = np.array([1.5])
        theta_m = np.array([0.8])
        xi = np.array([0.3])
        eta = 0.15
        (_, _), (shape, scale) = gibbs_conditionals(prob, theta, theta_m, 2.0, xi, eta)
        # brute force: log N(z; H theta_m, s2 C) + log(1/s2) on a grid
        z = y - bench.ex4_model(x, theta)
        state = prob.model.state(RangeParams(xi, "xi"), eta)
        resid = z - prob.H @ theta_m
        s_r = float(resid @ linalg.cho_solve((state.L, True), resid))
        assert scale == pytest.approx(s_r / 2.0, rel=1e-12)
        n = prob.model.n
        grid = np.linspace(0.05, 3.0, 400)
        brute = (
            -0.5 * n * np.log(2 * np.pi * grid)
            - 0.5 * state.logdet_C
            - 0.5 * s_r / grid
            - np.log(grid)
        )
        analytic = stats.invgamma.logpdf(grid, a=shape, scale=scale)
        offset = brute - analytic
        assert offset.max() - offset.min() < 1e-8

    def test_theta_m_conditional_matches_brute_force_on_grid(self):
        prob, x, y = ex4_problem(seed=1)
        theta = np.array([1.5])
        sigma2 = 0.7
        xi = np.array([0.3])
        eta = 0.15
        (mean, cov), _ = gibbs_conditionals(prob, theta, np.array([0.0]), sigma2, xi, eta)
        z = y - bench.ex4_model(x, theta)
        state = prob.model.state(RangeParams(xi, "xi"), eta)
        grid = np.linspace(mean[0] - 3, mean[0] + 3, 300)
        brute = np.array(
            [
                -0.5
                * float(
                    (z - prob.H[:, 0] * t)
                    @ linalg.cho_solve((state.L, True), z - prob.H[:, 0] * t)
                )
                / sigma2
                for t in grid
            ]
        )
        analytic = stats.norm.logpdf(grid, loc=mean[0], scale=np.sqrt(cov[0, 0]))
        offset = brute - analytic
        assert offset.max() - offset.min() < 1e-8

    def test_fixed_range_gibbs_moments_match_analytic(self):
        prob, x, y = ex4_problem(seed=2)
        theta = np.array([1.6])
        xi = np.array([0.5])
        eta = 0.2
        chain = run_mcmc(
            prob,
            n_samples=20000,
            n_burn=1000,
            seed=5,
            fix_theta=theta,
            fix_range=(xi, eta),
        )
        z = y - bench.ex4_model(x, theta)
        state = prob.model.state(RangeParams(xi, "xi"), eta)
        H = prob.H
        Ci_z = linalg.cho_solve((state.L, True), z)
        Ci_H = linalg.cho_solve((state.L, True), H)
        A = float((H.T @ Ci_H)[0, 0])
        theta_gls = float((H.T @ Ci_z)[0]) / A
        r = z - H[:, 0] * theta_gls
        S2 = float(r @ linalg.cho_solve((state.L, True), r))
        n, q = prob.model.n, prob.model.q
        exp_sigma2 = S2 / (n - q - 2)
        var_theta_m = S2 / (n - q - 2) / A
        s2 = chain.retained("sigma2")
        tm = chain.retained("theta_m")[:, 0]

        def batch_se(v, nb=50):
            means = v[: v.size // nb * nb].reshape(nb, -1).mean(axis=1)
            return means.std(ddof=1) / np.sqrt(nb)

        assert abs(tm.mean() - theta_gls) < 3 * batch_se(tm)
        assert abs(s2.mean() - exp_sigma2) < 3 * batch_se(s2)
        assert abs(tm.var() - var_theta_m) < 3 * batch_se((tm - tm.mean()) ** 2)


class TestRunMcmc:
    def test_deterministic_under_seed(self):
        prob, _, _ = ex4_problem(seed=3)
        c1 = run_mcmc(prob, n_samples=500, n_burn=100, seed=11)
        c2 = run_mcmc(prob, n_samples=500, n_burn=100, seed=11)
        np.testing.assert_array_equal(c1.theta, c2.theta)
        np.testing.assert_array_equal(c1.sigma2, c2.sigma2)

    def test_acceptance_rates_in_window_after_adaptation(self):
        prob, _, _ = ex4_problem(seed=0)
        chain = run_mcmc(prob, n_samples=4000, n_burn=1500, seed=0)
        assert 0.1 <= chain.acceptance["theta"] <= 0.6
        assert 0.1 <= chain.acceptance["range"] <= 0.6

    def test_recovers_truth_without_discrepancy(self):
        # data generated from the computer model itself at a known theta
        rng = np.random.default_rng(21)
        theta_star = 1.7
        sites = np.linspace(0.2, 3.0, 12)
        x = np.repeat(sites, 2)[:, None]
        y = bench.ex4_model(x, [theta_star]) + rng.normal(0, 1e-3, x.shape[0])
        prob = CalibrationProblem(
            design=DesignMatrix(x, bounds=np.array([[0.0, 3.0]])),
            y=y,
            model_fn=bench.ex4_model,
            theta_bounds=[[0.0, 5.0]],
        )
        chain = run_mcmc(prob, n_samples=6000, n_burn=2000, seed=4)
        lo, hi = np.percentile(chain.retained("theta")[:, 0], [2.5, 97.5])
        assert lo <= theta_star <= hi
        assert hi - lo < 0.5  # tightly identified with near-zero noise

    def test_needs_more_samples_than_burn(self):
        prob, _, _ = ex4_problem(seed=0)
        with pytest.raises(ConfigError):
            run_mcmc(prob, n_samples=100, n_burn=100, seed=0)


class TestPredictCalibrated:
    def test_constant_chain_model_only_zero_width(self):
        prob, _, _ = ex4_problem(seed=0)
        S = 6
        chain = PosteriorChain(
            theta=np.full((S, 1), 1.7),
            theta_m=np.full((S, 1), 0.5),
            sigma2=np.full(S, 1e-300),
            xi=np.zeros((S, 1)),
            log_eta=np.full(S, np.log(0.1)),
            n_burn=1,
            acceptance={},
            seed=0,
        )
        xs = np.linspace(0, 5, 20)[:, None]
        pred = predict_calibrated(prob, chain, xs, mode=MODEL_ONLY)
        expected = bench.ex4_model(xs, [1.7]) + 0.5
        np.testing.assert_allclose(pred.mean, expected, rtol=1e-12)
        np.testing.assert_allclose(pred.upper - pred.lower, 0.0, atol=1e-12)
        pred2 = predict_calibrated(prob, chain, xs, mode=MODEL_PLUS_DISCREPANCY)
        assert np.max(pred2.upper - pred2.lower) < 1e-100
        # single unique sample: mean equals that sample's conditional mean
        np.testing.assert_allclose(
            pred2.mean, pred2.lower, atol=1e-100
        )

    def test_extrapolation_flagged(self):
        prob, _, _ = ex4_problem(seed=0)
        chain = run_mcmc(prob, n_samples=300, n_burn=100, seed=0)
        pred = predict_calibrated(prob, chain, np.array([[1.0], [4.9]]), mode=MODEL_ONLY)
        assert not pred.extrapolated[0]
        assert pred.extrapolated[1]

    def test_unknown_mode_rejected(self):
        prob, _, _ = ex4_problem(seed=0)
        chain = run_mcmc(prob, n_samples=300, n_burn=100, seed=0)
        with pytest.raises(ConfigError):
            predict_calibrated(prob, chain, np.array([[1.0]]), mode="both")


class TestModularEmulation:
    def test_direct_and_modular_agree(self):
        x, y = bench.make_ex4_data(seed=12)
        # emulate the computer model over the joint (x, theta) space
        runs = bench.maximin_lhd(60, 2, seed=31, bounds=np.array([[0.0, 3.0], [0.0, 5.0]]))
        run_out = 5.0 * np.exp(-runs.values[:, 1] * runs.values[:, 0])
        emu = fit_emulator_modular(runs, run_out)
        prob_direct = bench._ex4_problem(x, y, JR)
        prob_mod = CalibrationProblem(
            design=DesignMatrix(x, bounds=np.array([[0.0, 3.0]])),
            y=y,
            emulator=emu,
            theta_bounds=bench.EX4_THETA_BOUNDS,
            prior=PriorSpec(kind=JR, nugget_included=True),
        )
        c1 = run_mcmc(prob_direct, n_samples=6000, n_burn=2000, seed=7)
        c2 = run_mcmc(prob_mod, n_samples=6000, n_burn=2000, seed=7)
        m1 = np.median(c1.retained("theta"))
        m2 = np.median(c2.retained("theta"))
        assert abs(m1 - m2) < 0.2

    def test_emulator_interpolates_runs(self):
        runs = bench.maximin_lhd(30, 2, seed=33, bounds=np.array([[0.0, 3.0], [0.0, 5.0]]))
        run_out = 5.0 * np.exp(-runs.values[:, 1] * runs.values[:, 0])
        emu = fit_emulator_modular(runs, run_out)
        pred = emu.predict(runs.values)
        assert np.max(np.abs(pred.mean - run_out)) < 1e-6 * np.std(run_out)

    def test_too_few_runs_rejected(self):
        with pytest.raises(ConfigError):
            fit_emulator_modular(np.array([[0.5, 1.0]]), np.array([2.0]))
