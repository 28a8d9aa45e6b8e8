import numpy as np
import pytest
from scipy import integrate, optimize

from gaspkit.design import DesignMatrix
from gaspkit.errors import DataError, SingularCovarianceError
from gaspkit.gasp import (
    GaSPModel,
    fisher_info,
    log_marginal_lik,
    log_marginal_lik_grad,
    predict,
)
from gaspkit.kernels import (
    CorrelationSpec,
    Parameterization,
    RangeParams,
    corr_matrix,
    corr_matrix_deriv,
    matern25,
    power_exponential,
)

SPEC1 = CorrelationSpec.uniform(matern25(), 1)


def tiny_model():
    X = np.array([[0.0], [0.3], [0.6], [1.0]])
    y = np.array([0.3, 1.1, 0.6, -0.4])
    return GaSPModel(X, y, SPEC1)


def quadrature_log_evidence(model, gamma_val):
    """Brute-force oracle: integrate the Gaussian likelihood times the
    1/sigma^2 prior over (theta_m, sigma^2) by adaptive quadrature."""
    X, y = model.design, model.y
    R = corr_matrix(model.spec, X, RangeParams([gamma_val]))
    Rinv = np.linalg.inv(R)
    _, logdetR = np.linalg.slogdet(R)
    n = X.n
    one = np.ones(n)
    a = one @ Rinv @ one
    theta_gls = (one @ Rinv @ y) / a
    r0 = y - theta_gls
    s2_gls = (r0 @ Rinv @ r0) / n

    def integrand(theta, v):
        s2 = np.exp(v)
        r = y - theta
        quad = r @ Rinv @ r
        return np.exp(-0.5 * n * np.log(2 * np.pi * s2) - 0.5 * logdetR - 0.5 * quad / s2)

    val, _ = integrate.dblquad(
        integrand,
        np.log(s2_gls) - 18,
        np.log(s2_gls) + 18,
        lambda v: theta_gls - 40 * np.sqrt(np.exp(v) / a),
        lambda v: theta_gls + 40 * np.sqrt(np.exp(v) / a),
        epsabs=1e-14,
        epsrel=1e-11,
    )
    return np.log(val)


class TestMarginalLikelihood:
    def test_matches_quadrature_up_to_constant(self):
        model = tiny_model()
        gammas = [0.2, 0.5, 1.0]
        diffs = [
            quadrature_log_evidence(model, g) - log_marginal_lik(model, RangeParams([g]))
            for g in gammas
        ]
        assert max(diffs) - min(diffs) < 1e-4

    def test_location_invariance_with_intercept(self):
        model = tiny_model()
        shifted = GaSPModel(model.design, model.y + 7.3, SPEC1)
        params = RangeParams([0.4])
        assert log_marginal_lik(shifted, params) == pytest.approx(
            log_marginal_lik(model, params), abs=1e-8
        )

    def test_scaling_shifts_by_scale_factor(self):
        model = tiny_model()
        s = 3.7
        scaled = GaSPModel(model.design, model.y * s, SPEC1)
        params = RangeParams([0.4])
        delta = log_marginal_lik(scaled, params) - log_marginal_lik(model, params)
        assert delta == pytest.approx(-(model.n - model.q) * np.log(s), abs=1e-8)

    def test_invariance_to_column_space_shifts(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(size=(8, 2))
        y = rng.normal(size=8)
        spec = CorrelationSpec.uniform(matern25(), 2)
        model = GaSPModel(X, y, spec, mean_basis="linear")
        shift = model.H @ rng.normal(size=model.q)
        shifted = GaSPModel(X, y + shift, spec, mean_basis="linear")
        params = RangeParams([0.5, 0.8])
        assert log_marginal_lik(shifted, params) == pytest.approx(
            log_marginal_lik(model, params), abs=1e-8
        )


class TestLikelihoodState:
    def test_q_annihilates_mean_basis(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(size=(10, 2))
        y = rng.normal(size=10)
        spec = CorrelationSpec.uniform(matern25(), 2)
        model = GaSPModel(X, y, spec, mean_basis="linear")
        state = model.state(RangeParams([0.5, 0.5]))
        Q = state.Q
        tol = 1e-8 * np.linalg.norm(Q) * np.linalg.norm(model.H)
        assert np.max(np.abs(Q @ model.H)) < tol
        np.testing.assert_allclose(Q, Q.T, atol=1e-10)
        assert state.S2 >= 0
        eigs = np.linalg.eigvalsh(Q)
        assert eigs.min() > -1e-8 * max(eigs.max(), 1.0)

    def test_jitter_escalation_reports_levels(self):
        X = np.array([[0.1], [0.1], [0.1]])
        # identical rows with eta=0: R is exactly singular ones matrix
        model = GaSPModel(X, [1.0, 2.0, 0.5], SPEC1)
        try:
            state = model.state(RangeParams([1.0]))
            assert state.jitter > 0  # survives with jitter
        except SingularCovarianceError as err:
            assert len(err.jitters) > 0


class TestGradient:
    def test_finite_difference_agreement_50_draws(self):
        rng = np.random.default_rng(17)
        spec2 = CorrelationSpec((matern25(), power_exponential(1.9)))
        for trial in range(50):
            X = rng.uniform(size=(7, 2))
            y = rng.normal(size=7)
            model = GaSPModel(X, y, spec2, nugget_enabled=trial % 2 == 0)
            par = list(Parameterization)[trial % 3]
            vals = rng.uniform(0.2, 2.0, size=2)
            params = RangeParams(vals).to(par)
            eta = float(rng.uniform(0.01, 0.5)) if model.nugget_enabled else 0.0
            grad = log_marginal_lik_grad(model, params, eta)
            for l in range(2):
                h = 1e-6 * max(1.0, abs(params.values[l]))
                up, dn = params.values.copy(), params.values.copy()
                up[l] += h
                dn[l] -= h
                fd = (
                    log_marginal_lik(model, RangeParams(up, par), eta)
                    - log_marginal_lik(model, RangeParams(dn, par), eta)
                ) / (2 * h)
                assert grad[l] == pytest.approx(fd, rel=1e-5, abs=1e-7)
            if model.nugget_enabled:
                h = 1e-7
                fd = (
                    log_marginal_lik(model, params, eta + h)
                    - log_marginal_lik(model, params, eta - h)
                ) / (2 * h)
                assert grad[2] == pytest.approx(fd, rel=1e-5, abs=1e-6)

    def test_gradient_vanishes_at_stationary_point(self):
        X = np.linspace(0, 1, 7)[:, None]
        y = np.sin(5 * X[:, 0])
        model = GaSPModel(X, y, SPEC1)

        def fd_grad(g, h=1e-7):
            return (
                log_marginal_lik(model, RangeParams([g + h]))
                - log_marginal_lik(model, RangeParams([g - h]))
            ) / (2 * h)

        lo, hi = 0.05, 5.0
        assert fd_grad(lo) * fd_grad(hi) < 0
        root = optimize.brentq(fd_grad, lo, hi, xtol=1e-12)
        grad = log_marginal_lik_grad(model, RangeParams([root]))
        assert abs(grad[0]) < 1e-6


class TestPredict:
    def test_interpolates_design_points(self):
        rng = np.random.default_rng(23)
        X = rng.uniform(size=(10, 1))
        y = np.sin(6 * X[:, 0])
        model = GaSPModel(X, y, SPEC1)
        pred = predict(model, RangeParams([0.3]), 0.0, X)
        assert np.max(np.abs(pred.mean - y)) < 1e-6 * np.std(y)
        assert np.max(pred.scale) < 1e-6 * np.std(y)

    def test_far_field_reverts_to_gls_intercept(self):
        model = tiny_model()
        state = model.state(RangeParams([0.4]))
        pred = predict(model, RangeParams([0.4]), 0.0, np.array([[1e4]]))
        assert pred.mean[0] == pytest.approx(float(state.theta_hat[0]), abs=1e-6)
        assert pred.extrapolated[0]

    def test_loo_beats_sample_mean(self):
        # brute-force leave-one-out at fixed covariance parameters
        X = np.linspace(0, 1, 10)[:, None]
        y = np.sin(2 * np.pi * X[:, 0])
        params = RangeParams([0.3])
        preds = np.empty(10)
        for i in range(10):
            keep = np.arange(10) != i
            sub = GaSPModel(X[keep], y[keep], SPEC1)
            preds[i] = predict(sub, params, 0.0, X[[i]]).mean[0]
        nrmse = np.sqrt(np.sum((y - preds) ** 2) / np.sum((y - y.mean()) ** 2))
        assert nrmse < 1.0

    def test_student_t_dof_and_intervals(self):
        model = tiny_model()
        pred = predict(model, RangeParams([0.4]), 0.0, np.array([[0.5], [2.0]]))
        assert pred.dof == model.n - model.q
        lo, hi = pred.interval(0.95)
        assert np.all(lo <= pred.mean) and np.all(pred.mean <= hi)

    def test_nonfinite_inputs_rejected(self):
        model = tiny_model()
        with pytest.raises(DataError):
            predict(model, RangeParams([0.4]), 0.0, np.array([[np.nan]]))


class TestFisherInfo:
    def test_symmetric_psd_on_equispaced_design(self):
        X = np.linspace(0, 1, 5)[:, None]
        y = np.array([0.1, 0.5, 0.2, -0.3, 0.8])
        model = GaSPModel(X, y, SPEC1)
        info = fisher_info(model, RangeParams([0.5]))
        np.testing.assert_allclose(info, info.T, atol=1e-12)
        assert info[0, 0] == model.n - model.q
        eigs = np.linalg.eigvalsh(info)
        assert eigs.min() >= -1e-8 * np.abs(eigs).max()

    def test_trace_two_ways(self):
        rng = np.random.default_rng(31)
        X = rng.uniform(size=(8, 2))
        y = rng.normal(size=8)
        spec = CorrelationSpec.uniform(matern25(), 2)
        model = GaSPModel(X, y, spec)
        params = RangeParams([0.4, 0.9])
        state = model.state(params)
        info = fisher_info(model, params, state=state)
        for l in range(2):
            Rdot = corr_matrix_deriv(spec, model.design, params, l)
            explicit = float(np.trace(Rdot @ state.Q))
            hadamard = float(np.sum(Rdot * state.Q.T))
            assert explicit == pytest.approx(hadamard, abs=1e-10 * max(1, abs(explicit)))
            assert info[0, l + 1] == pytest.approx(explicit, rel=1e-10)

    def test_traces_vanish_in_identity_limit(self):
        X = np.linspace(0, 1, 6)[:, None]
        y = np.sin(X[:, 0])
        model = GaSPModel(X, y, SPEC1)
        info = fisher_info(model, RangeParams([1e-8]))
        assert abs(info[0, 1]) < 1e-8

    def test_nugget_coordinate_included(self):
        X = np.linspace(0, 1, 6)[:, None]
        y = np.sin(X[:, 0])
        model = GaSPModel(X, y, SPEC1, nugget_enabled=True)
        info = fisher_info(model, RangeParams([0.5]), eta=0.1)
        assert info.shape == (3, 3)
        state = model.state(RangeParams([0.5]), 0.1)
        assert info[2, 2] == pytest.approx(float(np.sum(state.Q * state.Q.T)), rel=1e-10)
