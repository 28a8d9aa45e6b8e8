import numpy as np
import pytest
from scipy import integrate

from gaspkit.bench import maximin_lhd
from gaspkit.design import DesignMatrix
from gaspkit.errors import ConfigError, NumericError
from gaspkit.gasp import GaSPModel
from gaspkit.kernels import (
    CorrelationSpec,
    Parameterization,
    RangeParams,
    matern25,
    power_exponential,
)
from gaspkit.priors import (
    CALIBRATION,
    EMULATION,
    JRPriorParams,
    jr_default_params,
    jr_log_density,
    jr_log_density_grad,
    jr_log_normalizing_constant,
    jr_moments,
    reference_log_density,
    _sample_jr,
)


class TestDefaults:
    def test_unit_square_calibration(self):
        design = DesignMatrix(
            np.random.default_rng(0).uniform(size=(100, 2)),
            bounds=np.array([[0.0, 1.0], [0.0, 1.0]]),
        )
        p = jr_default_params(design, context=CALIBRATION)
        np.testing.assert_allclose(p.C, [0.1, 0.1])
        assert p.b == 1.0
        assert p.a == -1.5

    def test_one_dim_emulation(self):
        design = DesignMatrix(
            np.linspace(0, 3, 30)[:, None], bounds=np.array([[0.0, 3.0]])
        )
        p = jr_default_params(design, context=EMULATION)
        assert p.C[0] == pytest.approx(0.1)
        assert p.a == pytest.approx(0.2)

    def test_single_point_scale_factor(self):
        design = DesignMatrix(np.array([[0.5, 0.5]]), bounds=np.array([[0, 1], [0, 1]]))
        p = jr_default_params(design)
        np.testing.assert_allclose(p.C, [1.0, 1.0])

    def test_degenerate_coordinate_names_culprit(self):
        design = DesignMatrix(np.column_stack([np.linspace(0, 1, 5), np.full(5, 0.3)]))
        with pytest.raises(ConfigError, match="coordinate 1"):
            jr_default_params(design)


class TestDensity:
    def test_integrates_to_one_1d_no_nugget(self):
        p = JRPriorParams(a=0.2, b=1.0, C=[0.1])
        val, err = integrate.quad(
            lambda b: np.exp(jr_log_density(p, [b])), 0, np.inf, limit=200
        )
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_truncated_box_mass_mc_vs_quadrature(self):
        p = JRPriorParams(a=-1.5, b=1.0, C=[0.1, 0.2])
        box = [(1.0, 15.0), (1.0, 8.0), (0.5, 3.0)]
        quad_val, _ = integrate.tplquad(
            lambda e, b2, b1: np.exp(jr_log_density(p, [b1, b2], e)),
            box[0][0], box[0][1],
            box[1][0], box[1][1],
            box[2][0], box[2][1],
            epsabs=1e-8, epsrel=1e-8,
        )
        rng = np.random.default_rng(7)
        n = 200000
        b1 = rng.uniform(*box[0], n)
        b2 = rng.uniform(*box[1], n)
        e = rng.uniform(*box[2], n)
        dens = np.exp([jr_log_normalizing_constant(p, True)]) * (
            (p.C[0] * b1 + p.C[1] * b2 + e) ** p.a
            * np.exp(-(p.C[0] * b1 + p.C[1] * b2 + e))
        )
        vol = np.prod([hi - lo for lo, hi in box])
        mc = dens.mean() * vol
        assert mc == pytest.approx(quad_val, rel=0.01)

    def test_log_linear_tail(self):
        # for large totals the log density decreases linearly at rate -b
        p = JRPriorParams(a=0.2, b=1.0, C=[0.5])
        ts = np.array([50.0, 60.0, 70.0])
        vals = np.array([jr_log_density(p, [t / 0.5]) for t in ts])
        slopes = np.diff(vals) / np.diff(ts)
        np.testing.assert_allclose(slopes, -1.0, atol=0.01)

    def test_zero_total_limits(self):
        pos = JRPriorParams(a=0.2, b=1.0, C=[1.0])
        neg = JRPriorParams(a=-0.5, b=1.0, C=[1.0])
        zero = JRPriorParams(a=0.0, b=1.0, C=[1.0])
        assert jr_log_density(pos, [0.0]) == -np.inf
        assert jr_log_density(neg, [0.0]) == np.inf
        assert np.isfinite(jr_log_density(zero, [0.0]))

    def test_partial_zero_is_finite_positive_density(self):
        # no-nugget form, a > 0, one of two coordinates at the boundary
        p = JRPriorParams(a=0.2, b=1.0, C=[0.3, 0.4])
        val = jr_log_density(p, [0.0, 1.0])
        assert np.isfinite(val)

    def test_propriety_bound_enforced(self):
        p = JRPriorParams(a=-1.5, b=1.0, C=[1.0])
        with pytest.raises(ConfigError):
            jr_log_density(p, [1.0])  # no-nugget form needs a > -1


class TestGradient:
    def test_zero_power_gives_constant_gradient(self):
        p = JRPriorParams(a=0.0, b=2.0, C=[0.3, 0.7])
        g = jr_log_density_grad(p, [1.0, 2.0])
        np.testing.assert_allclose(g, -2.0 * p.C)

    def test_stationary_at_mode_ridge(self):
        p = JRPriorParams(a=1.5, b=2.0, C=[0.5])
        beta = (p.a / p.b) / p.C[0]
        g = jr_log_density_grad(p, [beta])
        np.testing.assert_allclose(g, 0.0, atol=1e-14)

    def test_finite_difference(self):
        rng = np.random.default_rng(3)
        p = JRPriorParams(a=-0.5, b=1.3, C=[0.2, 0.9])
        for _ in range(20):
            beta = rng.uniform(0.5, 3.0, size=2)
            eta = float(rng.uniform(0.1, 1.0))
            g = jr_log_density_grad(p, beta, eta)
            h = 1e-6
            for i in range(2):
                up, dn = beta.copy(), beta.copy()
                up[i] += h
                dn[i] -= h
                fd = (jr_log_density(p, up, eta) - jr_log_density(p, dn, eta)) / (2 * h)
                assert g[i] == pytest.approx(fd, rel=1e-8, abs=1e-10)
            fd = (jr_log_density(p, beta, eta + h) - jr_log_density(p, beta, eta - h)) / (2 * h)
            assert g[2] == pytest.approx(fd, rel=1e-8, abs=1e-10)

    def test_singular_gradient_at_zero_total(self):
        p = JRPriorParams(a=0.5, b=1.0, C=[1.0])
        with pytest.raises(NumericError):
            jr_log_density_grad(p, [0.0], 0.0)


class TestMoments:
    def test_closed_form_example(self):
        p = JRPriorParams(a=-0.5, b=1.0, C=[1.0])
        mo = jr_moments(p)
        assert mo["mean_beta"][0] == pytest.approx(0.75)

    def test_monte_carlo_agreement(self):
        p = JRPriorParams(a=-0.5, b=1.2, C=[0.4, 1.5])
        rng = np.random.default_rng(19)
        n = 400000
        beta, eta = _sample_jr(p, n, rng)
        mo = jr_moments(p)
        for i in range(2):
            se = beta[:, i].std() / np.sqrt(n)
            assert abs(beta[:, i].mean() - mo["mean_beta"][i]) < 3 * se
            se_v = (beta[:, i] ** 2).std() / np.sqrt(n) * 2
            assert abs(beta[:, i].var() - mo["var_beta"][i]) < 3 * se_v
        se = eta.std() / np.sqrt(n)
        assert abs(eta.mean() - mo["mean_eta"]) < 3 * se

    def test_scale_halves_mean(self):
        p1 = JRPriorParams(a=0.2, b=1.0, C=[1.0])
        p2 = JRPriorParams(a=0.2, b=1.0, C=[2.0])
        assert jr_moments(p2)["mean_beta"][0] == pytest.approx(
            jr_moments(p1)["mean_beta"][0] / 2
        )


class TestLocationScaleInvariance:
    def test_jr_default_constants_absorb_rescaling(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(size=(20, 2))
        s = 4.0
        d1 = DesignMatrix(X, bounds=np.array([[0, 1], [0, 1]]))
        X2 = X.copy()
        X2[:, 0] *= s
        d2 = DesignMatrix(X2, bounds=np.array([[0, s], [0, 1]]))
        p1 = jr_default_params(d1)
        p2 = jr_default_params(d2)
        assert p2.C[0] == pytest.approx(s * p1.C[0])
        b = np.array([1.3, 0.6])
        b_scaled = b.copy()
        b_scaled[0] /= s
        pts = [b, 2.5 * b]
        diffs1 = jr_log_density(p1, pts[0]) - jr_log_density(p1, pts[1])
        scaled_pts = [v.copy() for v in pts]
        for v in scaled_pts:
            v[0] /= s
        diffs2 = jr_log_density(p2, scaled_pts[0]) - jr_log_density(p2, scaled_pts[1])
        assert diffs1 == pytest.approx(diffs2, abs=1e-10)


@pytest.fixture(scope="module")
def ref_model_factory():
    spec = CorrelationSpec.uniform(power_exponential(1.9), 1)

    def make(n, seed=0):
        design = maximin_lhd(n, 1, seed=seed)
        y = np.sin(3 * design.values[:, 0])
        return GaSPModel(design, y, spec)

    return make


class TestReferencePrior:
    def test_mass_moves_to_larger_xi_with_n(self, ref_model_factory):
        xis = np.linspace(-4, 6, 81)
        modes = {}
        for n in (20, 80):
            model = ref_model_factory(n)
            dens = np.array(
                [
                    reference_log_density(model, RangeParams([x], Parameterization.XI))
                    for x in xis
                ]
            )
            modes[n] = xis[int(np.argmax(dens))]
            # unimodal along the evaluated grid
            finite = np.isfinite(dens)
            d = dens[finite]
            k = int(np.argmax(d))
            assert np.all(np.diff(d[: k + 1]) >= -1e-9) or k == 0
        assert modes[80] > modes[20]

    def test_density_vanishes_in_identity_limit(self, ref_model_factory):
        model = ref_model_factory(20)
        val = reference_log_density(model, RangeParams([1e-8]))
        assert val == -np.inf or val < -40

    def test_deterministic(self, ref_model_factory):
        model = ref_model_factory(20)
        params = RangeParams([0.7])
        assert reference_log_density(model, params) == reference_log_density(
            model, params
        )

    def test_translation_invariance_with_intercept(self):
        spec = CorrelationSpec.uniform(matern25(), 1)
        rng = np.random.default_rng(11)
        X = rng.uniform(size=(12, 1))
        y = np.cos(4 * X[:, 0])
        m1 = GaSPModel(X, y, spec)
        m2 = GaSPModel(X + 10.0, y, spec)
        pts = [RangeParams([0.2]), RangeParams([0.4])]
        d1 = reference_log_density(m1, pts[0]) - reference_log_density(m1, pts[1])
        d2 = reference_log_density(m2, pts[0]) - reference_log_density(m2, pts[1])
        assert d1 == pytest.approx(d2, abs=1e-8)


class TestNormalizingConstants:
    @pytest.mark.parametrize("a", [-0.5, 0.2, 1.0])
    def test_lemma_constant_normalizes_1d_nugget_form(self, a):
        params = JRPriorParams(a=a, b=1.0, C=[0.2])
        val, _ = integrate.dblquad(
            lambda e, b1: np.exp(jr_log_density(params, [b1], e)),
            0, 120, 0, 120, epsabs=1e-7, epsrel=1e-7,
        )
        assert val == pytest.approx(1.0, abs=1e-4)

    @pytest.mark.parametrize("a", [-1.5, 0.2, 1.0])
    def test_lemma_constant_normalizes_2d_no_nugget_form(self, a):
        params = JRPriorParams(a=a, b=1.0, C=[0.2, 0.5])
        val, _ = integrate.dblquad(
            lambda b2, b1: np.exp(jr_log_density(params, [b1, b2])),
            0, 120, 0, 60, epsabs=1e-7, epsrel=1e-7,
        )
        assert val == pytest.approx(1.0, abs=1e-4)
