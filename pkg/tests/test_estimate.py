import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from modechoice.choice_data import Alternative, ChoiceObservation
from modechoice.estimate import (EstimationOptions, EstimationResult, bfgs_maximize,
                                 covariance_from_information, maximize, normal_cdf,
                                 numerical_hessian, p_value, pseudo_r2, stepwise_retain)
from modechoice.likelihood import CONSTANT, ModelSpecification, Term
from modechoice.simulate import (mnl_fixture, rpl_fixture, simulate_observations,
                                 zero_sd_fixture)

PV, PT, WALK, OTHER = (Alternative(i) for i in range(4))


class TestStatistics:
    @pytest.mark.parametrize("t,expected", [(-2.36, 0.018), (2.21, 0.027), (0.0, 1.0)])
    def test_p_value_examples(self, t, expected):
        assert p_value(t) == pytest.approx(expected, abs=1e-3)

    def test_p_value_small(self):
        assert p_value(9.43) < 1e-3

    def test_p_value_196(self):
        assert abs(p_value(1.96) - 0.05) < 5e-4

    @given(st.floats(0, 30), st.floats(0, 30))
    def test_p_value_monotone(self, a, b):
        if a < b:
            assert p_value(a) >= p_value(b)
        assert 0 <= p_value(a) <= 1

    def test_p_value_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            p_value(math.inf)

    def test_pseudo_r2(self):
        assert pseudo_r2(-10914.30, -2787.27) == pytest.approx(0.7446, abs=5e-5)
        assert round(pseudo_r2(-10914.30, -2787.27), 2) == 0.74
        assert pseudo_r2(-5.0, -5.0) == 0.0
        assert pseudo_r2(-5.0, 0.0) == 1.0
        with pytest.raises(ValueError):
            pseudo_r2(0.0, -1.0)

    def test_normal_cdf(self):
        assert normal_cdf(0.0) == 0.5
        assert normal_cdf(1.959963984540054) == pytest.approx(0.975, abs=1e-15)


class TestOptimizer:
    def test_quadratic(self):
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        b = np.array([1.0, -1.0])
        res = bfgs_maximize(lambda x: (-0.5 * x @ A @ x + b @ x, -A @ x + b), np.zeros(2), gtol=1e-10)
        assert res.converged
        np.testing.assert_allclose(res.x, np.linalg.solve(A, b), atol=1e-9)

    def test_rosenbrock(self):
        def fg(x):
            a, b = x
            f = -((1 - a) ** 2 + 100 * (b - a * a) ** 2)
            g = -np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
            return f, g
        res = bfgs_maximize(fg, np.array([-1.2, 1.0]), gtol=1e-8, max_iterations=1000)
        assert res.converged
        np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-6)

    def test_iteration_limit(self):
        res = bfgs_maximize(lambda x: (-(x @ x), -2 * x), np.full(3, 10.0), max_iterations=0)
        assert not res.converged and res.message == "iteration limit reached"

    def test_non_finite_start(self):
        with pytest.raises(ValueError):
            bfgs_maximize(lambda x: (math.nan, x), np.zeros(1))

    def test_numerical_hessian(self):
        # f = x0^2 x1 + exp(x1), gradient analytic
        grad = lambda x: np.array([2 * x[0] * x[1], x[0] ** 2 + math.exp(x[1])])
        x = np.array([1.5, -0.3])
        H = numerical_hessian(grad, x)
        np.testing.assert_allclose(H, [[2 * x[1], 2 * x[0]], [2 * x[0], math.exp(x[1])]], rtol=1e-7)

    def test_singular_information(self):
        cov, note = covariance_from_information(np.array([[1.0, 1.0], [1.0, 1.0]]))
        assert cov is None and "singular" in note


@pytest.fixture(scope="module")
def mnl_data():
    fx = mnl_fixture()
    return fx, simulate_observations(fx, 3000, seed=123)


class TestMaximize:
    def test_mnl_recovery(self, mnl_data):
        fx, obs = mnl_data
        res = maximize(fx.spec, obs)
        assert res.converged and res.gradient_norm < 1e-6
        assert np.all(np.abs(res.params - fx.truth) < 3 * res.se)
        assert res.ll_beta >= res.ll_start
        assert res.ll_beta >= res.ll_zero
        assert res.pseudo_r2 == pytest.approx(1 - res.ll_beta / res.ll_zero)

    def test_outer_product_close_to_hessian(self, mnl_data):
        fx, obs = mnl_data
        a = maximize(fx.spec, obs)
        b = maximize(fx.spec, obs, EstimationOptions(hessian_method="outer-product"))
        np.testing.assert_allclose(a.params, b.params, atol=1e-6)
        np.testing.assert_allclose(a.se, b.se, rtol=0.15)

    def test_bit_reproducible(self, mnl_data):
        fx, obs = mnl_data
        a, b = maximize(fx.spec, obs), maximize(fx.spec, obs)
        assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())

    def test_intercept_only_equal_shares(self):
        obs = [ChoiceObservation(f"o{i}", Alternative(i % 4)) for i in range(400)]
        spec = ModelSpecification(tuple(Term(f"asc_{a.label}", CONSTANT, a) for a in (PV, PT, WALK)))
        res = maximize(spec, obs)
        np.testing.assert_allclose(res.params, 0.0, atol=1e-8)
        assert res.ll_beta == pytest.approx(res.ll_zero, abs=1e-9)
        assert res.pseudo_r2 == pytest.approx(0.0, abs=1e-12)

    def test_constants_only_rho2_nonnegative(self, mnl_data):
        _, obs = mnl_data
        spec = ModelSpecification(tuple(Term(f"asc_{a.label}", CONSTANT, a) for a in (PV, PT, WALK)))
        assert maximize(spec, obs).pseudo_r2 >= 0

    def test_singular_hessian_gives_missing_se(self):
        # x is identically zero, so its coefficient is not identified
        rng = np.random.default_rng(0)
        obs = [ChoiceObservation(f"o{i}", Alternative(int(rng.integers(4))), covariates={"x": 0.0})
               for i in range(200)]
        spec = ModelSpecification((Term("asc_PV", CONSTANT, PV), Term("x_Walk", "x", WALK)))
        res = maximize(spec, obs)
        rows = {r.name: r for r in res.terms()}
        assert rows["x_Walk"].se is None and rows["x_Walk"].t is None
        assert res.covariance_note

    def test_empty_data(self):
        with pytest.raises(ValueError):
            maximize(mnl_fixture().spec, [])

    def test_start_vector_length(self, mnl_data):
        fx, obs = mnl_data
        with pytest.raises(ValueError):
            maximize(fx.spec, obs, EstimationOptions(start=[0.0]))

    def test_drops_incomplete_rows(self, mnl_data):
        fx, obs = mnl_data
        extra = [ChoiceObservation("bad", PV, covariates={"x1": 1.0})]
        res = maximize(fx.spec, list(obs) + extra)
        assert res.n_dropped == 1 and res.n_observations == len(obs)

    def test_result_json_round_trip(self, mnl_data):
        fx, obs = mnl_data
        res = maximize(fx.spec, obs[:500])
        back = EstimationResult.from_dict(json.loads(json.dumps(res.to_dict())))
        assert json.dumps(back.to_dict()) == json.dumps(res.to_dict())

    def test_schema_mismatch(self):
        with pytest.raises(ValueError, match="schema"):
            EstimationResult.from_dict({"schema_version": "other/9"})


class TestOptions:
    def test_defaults(self):
        o = EstimationOptions()
        assert (o.n_draws, o.skip, o.max_iterations, o.gradient_tolerance) == (200, 100, 500, 1e-6)

    @pytest.mark.parametrize("kw", [{"n_draws": 0}, {"gradient_tolerance": 0.0}, {"hessian_method": "bhhh2"},
                                    {"skip": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            EstimationOptions(**kw)

    def test_unknown_key(self):
        with pytest.raises(ValueError):
            EstimationOptions.from_dict({"draws": 5})


@pytest.fixture(scope="module")
def rpl_data():
    fx = rpl_fixture()
    return fx, simulate_observations(fx, 2000, seed=99)


@pytest.mark.slow
class TestRpl:
    def test_warm_start_reaches_same_optimum(self, rpl_data):
        fx, obs = rpl_data
        opts = EstimationOptions(n_draws=50)
        a = maximize(fx.spec, obs, opts)
        b = maximize(fx.spec, obs, EstimationOptions(n_draws=50, warm_start=True))
        assert a.converged and b.converged
        np.testing.assert_allclose(a.coefficients(), b.coefficients(), atol=1e-4)

    def test_draw_count_sanity(self, rpl_data):
        fx, obs = rpl_data
        a = maximize(fx.spec, obs, EstimationOptions(n_draws=200))
        b = maximize(fx.spec, obs, EstimationOptions(n_draws=400))
        assert np.all(np.abs(a.coefficients() - b.coefficients()) < 2 * a.se)

    def test_workers_do_not_change_result(self, rpl_data):
        fx, obs = rpl_data
        a = maximize(fx.spec, obs, EstimationOptions(n_draws=20))
        b = maximize(fx.spec, obs, EstimationOptions(n_draws=20, workers=3))
        np.testing.assert_array_equal(a.params, b.params)


@pytest.mark.slow
class TestStepwise:
    def test_fixed_point_when_all_significant(self, mnl_data):
        fx, obs = mnl_data
        spec, res, history = stepwise_retain(fx.spec, obs)
        assert history == [] and spec == fx.spec

    def test_zero_sd_term_demoted(self):
        # The sd test at a true value of zero still rejects in roughly one
        # sample out of twenty, so require demotion in a majority of samples.
        fx = zero_sd_fixture()
        demoted = 0
        for seed in (5, 6, 7):
            obs = simulate_observations(fx, 3000, seed=seed)
            spec, res, history = stepwise_retain(fx.spec, obs, EstimationOptions(n_draws=100))
            assert all(h.term == "z_OtherMode" for h in history)
            if history == [] or spec.n_random:
                continue
            demoted += 1
            assert [h.action for h in history] == ["demote"]
            assert abs(res.params[4] - (-1.0)) < 3 * res.se[4]
        assert demoted >= 2

    def test_constants_never_removed(self):
        rng = np.random.default_rng(1)
        obs = [ChoiceObservation(f"o{i}", Alternative(int(rng.integers(4))), covariates={"x": float(rng.normal())})
               for i in range(800)]
        spec = ModelSpecification(tuple(Term(f"asc_{a.label}", CONSTANT, a) for a in (PV, PT, WALK))
                                  + (Term("x_PV", "x", PV),))
        final, _, history = stepwise_retain(spec, obs)
        assert [h.term for h in history] == ["x_PV"]
        assert [t.name for t in final.terms] == ["asc_PersonalVehicle", "asc_PublicTransport", "asc_Walk"]
