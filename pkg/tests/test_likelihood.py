import math

import numpy as np
import pytest

from difflik.catalog import (
    OU_THETA_TRUE,
    brownian_model,
    exp_ou_model,
    reduced_ou_model,
    sv_irreducible_model,
)
from difflik.likelihood import LikelihoodError, LikelihoodEvaluator
from difflik.simulate import OUSpec, RngStream, ou_exact_logdensity, ou_exact_path, ou_stationary_draw

THETA = dict(OU_THETA_TRUE)


def y_spec(theta):
    return OUSpec(
        [theta["eta1"], theta["eta2"]],
        [[theta["k11"], theta["k12"]], [0.0, theta["k22"]]],
        np.eye(2),
    )


@pytest.fixture(scope="module")
def ou_eval():
    return LikelihoodEvaluator(reduced_ou_model(), K=2)


@pytest.fixture(scope="module")
def expou_eval():
    return LikelihoodEvaluator(exp_ou_model(), K=2)


@pytest.fixture(scope="module")
def expou_irr_eval():
    return LikelihoodEvaluator(exp_ou_model(), K=2, mode="irreducible")


class TestPathSelection:
    def test_ou_reducible(self, ou_eval):
        assert ou_eval.path == "reducible"

    def test_exp_ou_reducible(self, expou_eval):
        assert expou_eval.path == "reducible"

    def test_sv_model_irreducible(self):
        ev = LikelihoodEvaluator(sv_irreducible_model(), K=1)
        assert ev.path == "irreducible"

    def test_reducible_mode_rejected_for_sv(self):
        with pytest.raises(LikelihoodError):
            LikelihoodEvaluator(sv_irreducible_model(), K=1, mode="reducible")


class TestLogTransition:
    def test_brownian_peak(self):
        ev = LikelihoodEvaluator(brownian_model(1), K=2)
        got = ev.log_transition([0.0], [0.0], 1.0, {})
        assert got == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-14)

    def test_ou_close_to_exact(self, ou_eval):
        # transitions drawn from the exact law: typical (median) error is below
        # 1e-4 at weekly sampling; rare large steps see up to ~1e-3 because the
        # expansion is local in both the step and the start point
        spec = y_spec(THETA)
        delta = 1.0 / 52.0
        rng = RngStream(4, 0)
        errs = []
        for i in range(30):
            x0 = ou_stationary_draw(spec, rng)
            x = ou_exact_path(spec, x0, delta, 1, rng)[1]
            got = ou_eval.log_transition(x, x0, delta, THETA)
            want = ou_exact_logdensity(spec, x, x0, delta)
            errs.append(abs(got - want))
        assert np.median(errs) < 1e-4
        assert max(errs) < 1.5e-3

    def test_exp_ou_is_jacobian_lift(self, expou_eval, ou_eval):
        # l_X(x|x0) = -ln(x1 x2) + l_Y(ln x | ln x0)
        rng = np.random.default_rng(1)
        delta = 1.0 / 52.0
        for _ in range(10):
            x0 = np.exp(rng.uniform(-0.3, 0.3, 2))
            x = x0 * np.exp(rng.uniform(-0.1, 0.1, 2))
            got = expou_eval.log_transition(x, x0, delta, THETA)
            want = -math.log(x[0] * x[1]) + ou_eval.log_transition(
                np.log(x), np.log(x0), delta, THETA
            )
            assert got == pytest.approx(want, rel=1e-12)

    def test_paths_agree_on_reducible_model(self, expou_eval, expou_irr_eval):
        rng = np.random.default_rng(2)
        delta = 1.0 / 52.0
        for _ in range(5):
            x0 = np.exp(rng.uniform(-0.2, 0.2, 2))
            x = x0 + rng.uniform(-0.05, 0.05, 2)
            red = expou_eval.log_transition(x, x0, delta, THETA)
            irr = expou_irr_eval.log_transition(x, x0, delta, THETA)
            assert irr == pytest.approx(red, abs=1e-6)

    def test_positivity(self, ou_eval):
        val = ou_eval.log_transition([2.0, -3.0], [0.0, 0.0], 0.5, THETA)
        assert math.exp(val) > 0.0

    def test_rejects_nonpositive_delta(self, ou_eval):
        with pytest.raises(ValueError):
            ou_eval.log_transition([0.1, 0.1], [0.0, 0.0], 0.0, THETA)


class TestPathLoglik:
    def test_single_pair(self, ou_eval):
        x0, x = np.array([0.1, -0.2]), np.array([0.15, -0.1])
        path = np.vstack([x0, x])
        assert ou_eval.path_loglik(path, 0.02, THETA) == pytest.approx(
            ou_eval.log_transition(x, x0, 0.02, THETA)
        )

    def test_duplicated_pairs_double_exactly(self, ou_eval):
        rng = np.random.default_rng(3)
        x0 = rng.uniform(-0.3, 0.3, size=(20, 2))
        x = x0 + rng.uniform(-0.1, 0.1, size=(20, 2))
        once = ou_eval.path_loglik((x0, x), 0.02, THETA)
        twice = ou_eval.path_loglik(
            (np.vstack([x0, x0]), np.vstack([x, x])), 0.02, THETA
        )
        assert twice == 2.0 * once

    def test_against_exact_sum(self, ou_eval):
        spec = y_spec(THETA)
        delta = 1.0 / 52.0
        rng = RngStream(11, 0)
        start = ou_stationary_draw(spec, rng)
        path = ou_exact_path(spec, start, delta, 500, rng)
        exact = float(np.sum(ou_exact_logdensity(spec, path[1:], path[:-1], delta)))
        approx = ou_eval.path_loglik(path, delta, THETA)
        assert abs(approx - exact) / abs(exact) < 1e-3

    def test_failure_reports_index(self, expou_eval):
        path = np.array([[1.0, 1.0], [0.9, 1.1], [-0.5, 1.0]])
        with pytest.raises(LikelihoodError, match="transition 1"):
            expou_eval.path_loglik(path, 0.02, THETA)


class TestBoundObjective:
    def test_reducible_bound_matches_path_loglik(self, ou_eval):
        spec = y_spec(THETA)
        rng = RngStream(21, 0)
        path = ou_exact_path(spec, [0.1, -0.1], 1 / 52, 60, rng)
        fn = ou_eval.make_loglik(path, 1 / 52)
        for theta in (THETA, dict(THETA, k11=3.3, eta1=0.2)):
            assert fn(theta) == pytest.approx(
                ou_eval.path_loglik(path, 1 / 52, theta), rel=1e-12
            )

    def test_exp_ou_bound_matches(self, expou_eval):
        spec = y_spec(THETA)
        rng = RngStream(22, 0)
        y_path = ou_exact_path(spec, [0.0, 0.0], 1 / 52, 40, rng)
        path = np.exp(y_path)
        fn = expou_eval.make_loglik(path, 1 / 52)
        assert fn(THETA) == pytest.approx(
            expou_eval.path_loglik(path, 1 / 52, THETA), rel=1e-12
        )

    def test_irreducible_bound_matches(self, expou_irr_eval):
        spec = y_spec(THETA)
        rng = RngStream(23, 0)
        path = np.exp(ou_exact_path(spec, [0.0, 0.0], 1 / 52, 30, rng))
        fn = expou_irr_eval.make_loglik(path, 1 / 52)
        for theta in (THETA, dict(THETA, k22=8.5)):
            assert fn(theta) == pytest.approx(
                expou_irr_eval.path_loglik(path, 1 / 52, theta), rel=1e-10
            )


class TestDiagnostics:
    def test_normalization_scalar_ou(self):
        from difflik.catalog import scalar_ou_model

        ev = LikelihoodEvaluator(scalar_ou_model(), K=2)
        theta = {"eta1": 0.1, "k11": 5.0}
        delta = 1.0 / 52.0
        x0 = 0.25
        sd = math.sqrt(delta)  # unit diffusion conditional scale
        grid = np.linspace(x0 - 8 * sd, x0 + 8 * sd, 3001)
        vals = np.array(
            [math.exp(ev.log_transition([g], [x0], delta, theta)) for g in grid]
        )
        mass = np.trapezoid(vals, grid)
        assert 0.99 <= mass <= 1.01

    def test_small_delta_gaussian_limit_bounded(self, ou_eval):
        x0 = np.array([0.2, -0.1])
        x = x0 + np.array([0.03, 0.02])
        vals = []
        for delta in (1e-2, 1e-3, 1e-4, 1e-5):
            l = ou_eval.log_transition(x, x0, delta, THETA)
            d = x - x0
            lead = -np.dot(d, d) / (2 * delta) - math.log(2 * math.pi * delta)
            vals.append(l - lead)
        assert np.max(np.abs(vals)) < 10.0
        assert abs(vals[-1] - vals[-2]) < 0.05

    def test_pde_residual_brownian(self):
        ev = LikelihoodEvaluator(brownian_model(2), K=2)
        res = ev.pde_residual([0.4, 0.1], [0.0, 0.0], 0.05, {})
        assert abs(res) < 1e-12

    @pytest.mark.parametrize("K", [1, 2])
    def test_pde_residual_order_exp_ou(self, K):
        ev = LikelihoodEvaluator(exp_ou_model(), K=K, mode="irreducible")
        x0 = np.array([1.05, 0.9])
        x = x0 + np.array([0.03, -0.02])
        deltas = np.array([1e-1, 1e-2, 1e-3])
        res = [abs(ev.pde_residual(x, x0, d, THETA)) for d in deltas]
        slope = np.polyfit(np.log(deltas), np.log(res), 1)[0]
        assert slope >= K - 0.3
