import math

import numpy as np
import pytest

from difflik.catalog import OU_THETA_TRUE, brownian_model, exp_ou_model, reduced_ou_model
from difflik.expr import evaluate
from difflik.gridpoly import get_context
from difflik.irreducible import (
    BoundIngredients,
    IrreducibleBuildError,
    _Recursion,
    build_irreducible,
    build_irreducible_batch,
    leading_quadratic,
    order_schedule,
    x_forward_residual,
)
from difflik.model import derive_reduced_model, parse_model_file
from difflik.poly import multi_indices, poly_compose, poly_scale, taylor, tr
from difflik.reducible import build_reducible

THETA = dict(OU_THETA_TRUE)


def constant_sigma_ou():
    return parse_model_file(
        """
        dim = 2
        states = x1, x2
        params = eta1, eta2, k11, k12, k22
        mu.1 = k11*(eta1 - x1) + k12*(eta2 - x2)
        mu.2 = k22*(eta2 - x2)
        sigma.1.1 = 1
        sigma.2.2 = 1
        """
    )


class TestSchedule:
    def test_examples(self):
        assert order_schedule(2) == {-1: 8, 0: 6, 1: 4, 2: 2}
        assert order_schedule(0) == {-1: 4, 0: 2}
        assert order_schedule(1) == {-1: 6, 0: 4, 1: 2}

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            order_schedule(-1)


class TestLeadingQuadratic:
    def test_identity(self):
        out = leading_quadratic(np.eye(2))
        assert out[(2, 0)] == pytest.approx(-0.5)
        assert out[(0, 2)] == pytest.approx(-0.5)
        assert out[(1, 1)] == pytest.approx(0.0)

    def test_diagonal(self):
        out = leading_quadratic(np.diag([4.0, 1.0]))
        assert out[(2, 0)] == pytest.approx(-0.125)
        assert out[(0, 2)] == pytest.approx(-0.5)
        assert out[(1, 1)] == pytest.approx(0.0)

    def test_full(self):
        out = leading_quadratic(np.array([[2.0, 1.0], [1.0, 1.0]]))
        assert out[(2, 0)] == pytest.approx(-0.5)
        assert out[(1, 1)] == pytest.approx(1.0)
        assert out[(0, 2)] == pytest.approx(-1.0)

    def test_singular_rejected(self):
        with pytest.raises(IrreducibleBuildError):
            leading_quadratic(np.array([[1.0, 1.0], [1.0, 1.0]]))


class TestIngredients:
    def test_constant_sigma_v_constant(self):
        ing = BoundIngredients(constant_sigma_ou(), 2, np.array([[0.3, -0.2]]))
        v = ing.v_grids(THETA)
        grid = v[(0, 0)]
        assert grid[(0,) + (0, 0)] == pytest.approx(1.0)
        assert np.abs(grid).sum() == pytest.approx(1.0)  # only the constant slot
        assert ing.v_theta_free

    def test_exp_ou_v11_taylor(self):
        ing = BoundIngredients(exp_ou_model(), 2, np.array([[1.0, 1.0]]))
        grid = ing.v_grids(THETA)[(0, 0)]
        assert grid[0, 0, 0] == pytest.approx(1.0)
        assert grid[0, 1, 0] == pytest.approx(2.0)
        assert grid[0, 2, 0] == pytest.approx(1.0)
        assert grid[0, 3, 0] == pytest.approx(0.0)
        assert grid[0, 0, 1] == pytest.approx(0.0)

    def test_exp_ou_dv_taylor(self):
        ing = BoundIngredients(exp_ou_model(), 2, np.array([[1.0, 2.0]]))
        grid = ing.dv_grid(THETA)
        assert grid[0, 0, 0] == pytest.approx(math.log(2.0))
        assert grid[0, 1, 0] == pytest.approx(1.0)
        assert grid[0, 0, 1] == pytest.approx(0.5)


def make_recursion(model, K, x0_rows, theta):
    ing = BoundIngredients(model, K, np.asarray(x0_rows, float))
    rec = _Recursion(
        ing.ctx, K, ing.schedule, ing.mu_grids(theta), ing.v_grids(theta), ing.dv_grid(theta)
    )
    return ing, rec


class TestStructure:
    def test_brownian_exact(self):
        model = brownian_model(2)
        exp = build_irreducible(model, 2, [0.0, 0.0], {})
        cm1 = exp.coefficients[-1]
        assert cm1.coeff((2, 0)) == pytest.approx(-0.5)
        assert cm1.coeff((0, 2)) == pytest.approx(-0.5)
        assert sum(abs(v) for i, v in cm1.coeffs.items() if tr(i) != 2) == 0.0
        for k in range(0, 3):
            assert all(abs(c) < 1e-13 for c in exp.coefficients[k].coeffs.values())

    def test_structural_zeros(self):
        exp = build_irreducible(exp_ou_model(), 2, [1.2, 0.8], THETA)
        cm1 = exp.coefficients[-1]
        for idx in multi_indices(2, 1):
            assert cm1.coeff(idx) == 0.0
        assert exp.coefficients[0].coeff((0, 0)) == 0.0
        # k >= 1 constant terms are generally nonzero
        assert exp.coefficients[2].coeff((0, 0)) != 0.0

    def test_constant_v_keeps_quadratic_leading_term(self):
        exp = build_irreducible(constant_sigma_ou(), 2, [0.4, -0.3], THETA)
        cm1 = exp.coefficients[-1]
        assert all(tr(i) == 2 for i, c in cm1.coeffs.items() if abs(c) > 1e-13)

    def test_g0_constant_term_vanishes(self):
        for model, x0, theta in [
            (exp_ou_model(), [1.1, 0.7], THETA),
            (constant_sigma_ou(), [0.2, 0.1], THETA),
        ]:
            ing, rec = make_recursion(model, 2, [x0], theta)
            v0 = np.array([[ [float(evaluate(ing.v_exprs[i][j], x0, theta)) for j in range(2)] for i in range(2)]])
            rec.run(v0)
            g0 = rec.source_G(0, ing.schedule[0])
            assert abs(g0[0, 0, 0]) < 1e-12

    def test_residual_checks_recorded(self):
        exp = build_irreducible(exp_ou_model(), 2, [0.9, 1.3], THETA)
        assert set(exp.residuals) == {-1, 0, 1, 2}
        assert all(v < 1e-9 for v in exp.residuals.values())

    def test_nonpd_center_raises(self):
        model = parse_model_file(
            "dim = 1\nstates = x1\nparams =\nmu.1 = 0\nsigma.1.1 = x1\ndomain.1 = (0, inf)"
        )
        # v(x0) = x0^2 is PD for x0 > 0; build succeeds there
        build_irreducible(model, 1, [0.5], {})
        bad = parse_model_file(
            "dim = 2\nstates = x1, x2\nparams =\nmu.1 = 0\nmu.2 = 0\n"
            "sigma.1.1 = 1\nsigma.1.2 = 1\nsigma.2.1 = 1\nsigma.2.2 = 1"
        )
        with pytest.raises(IrreducibleBuildError):
            build_irreducible(bad, 1, [0.0, 0.0], {})


class TestProbeMatchesBruteForce:
    def test_columns(self):
        ing, rec = make_recursion(exp_ou_model(), 2, [[1.1, 0.8]], THETA)
        ctx = ing.ctx
        v0 = np.array(
            [
                [
                    [float(evaluate(ing.v_exprs[i][j], [1.1, 0.8], THETA)) for j in range(2)]
                    for i in range(2)
                ]
            ]
        )
        rec.run(v0)
        rng = np.random.default_rng(0)
        for k, r in [(-1, 3), (-1, 5), (0, 2), (1, 1), (2, 2)]:
            phi = rec.probe_matrix(k, r)
            idxs = ctx.level_indices[r]
            col = int(rng.integers(0, len(idxs)))
            idx = idxs[col]
            base = ctx.level_block(rec.assemble_f(k, trunc=r), r).copy()
            saved = rec.C[k].copy()
            rec.C[k][(slice(None),) + idx] += 1.0
            bumped = ctx.level_block(rec.assemble_f(k, trunc=r), r).copy()
            rec.C[k] = saved
            np.testing.assert_allclose(
                bumped[0] - base[0], phi[0, :, col], rtol=1e-9, atol=1e-9
            )


class TestProp2Equivalence:
    def reducible_taylor_oracle(self, x0, theta, K=2):
        """Taylor blocks of the closed-form coefficients through gamma = ln."""
        reduced = derive_reduced_model(exp_ou_model())
        sym = build_reducible(reduced, K)
        schedule = order_schedule(K)
        y0 = np.log(np.asarray(x0))
        coeffs = sym.at(y0, theta)
        out = {}
        from difflik.expr import parse_expression

        for k, j_k in schedule.items():
            parts = []
            for l in range(2):
                t = taylor(
                    parse_expression(f"ln(x{l+1})", ["x1", "x2"], []), x0, {}, j_k
                )
                t.coeffs.pop((0, 0), None)  # displacement of gamma about gamma(x0)
                parts.append(t)
            out[k] = poly_compose(coeffs[k].truncate(j_k), parts, j_k)
        return out

    def test_matches_at_random_points(self):
        rng = np.random.default_rng(3)
        model = exp_ou_model()
        for _ in range(6):
            x0 = rng.uniform(0.6, 1.6, size=2)
            theta = {
                "eta1": rng.uniform(-0.5, 0.5),
                "eta2": rng.uniform(-0.5, 0.5),
                "k11": rng.uniform(1.0, 7.0),
                "k12": rng.uniform(-1.5, 1.5),
                "k22": rng.uniform(2.0, 11.0),
            }
            exp = build_irreducible(model, 2, x0, theta)
            oracle = self.reducible_taylor_oracle(x0, theta)
            for k in (-1, 0, 1, 2):
                j_k = exp.schedule[k]
                for idx in multi_indices(2, j_k):
                    assert exp.coefficients[k].coeff(idx) == pytest.approx(
                        oracle[k].coeff(idx), abs=1e-8
                    ), (k, idx)

    def test_drift_does_not_move_leading_coefficient(self):
        model = exp_ou_model()
        x0 = [1.3, 0.9]
        exp_a = build_irreducible(model, 1, x0, THETA)
        other = dict(THETA, k11=2.2, k12=-0.7, eta1=0.4)
        exp_b = build_irreducible(model, 1, x0, other)
        for idx in multi_indices(2, exp_a.schedule[-1]):
            assert exp_a.coefficients[-1].coeff(idx) == pytest.approx(
                exp_b.coefficients[-1].coeff(idx), abs=1e-12
            )


class TestAgainstExactDensity:
    def test_ou_log_density_close_to_exact(self):
        from difflik.simulate import OUSpec, ou_exact_logdensity

        model = constant_sigma_ou()
        spec = OUSpec([0.0, 0.0], [[5.0, 1.0], [0.0, 10.0]], np.eye(2))
        x0 = np.array([0.15, -0.1])
        exp = build_irreducible(model, 2, x0, THETA)
        delta = 1.0 / 52.0
        for shift in ([0.05, 0.02], [-0.08, 0.06], [0.0, 0.0]):
            x = x0 + np.array(shift)
            got = exp.log_density(x, delta)
            want = ou_exact_logdensity(spec, x, x0, delta)
            assert got == pytest.approx(want, abs=2e-4)


class TestForwardResidual:
    def test_brownian_zero(self):
        exp = build_irreducible(brownian_model(2), 2, [0.1, -0.4], {})
        res = x_forward_residual(brownian_model(2), exp, [0.3, -0.2], 0.05)
        assert abs(res) < 1e-12

    @pytest.mark.parametrize("K", [1, 2])
    def test_order_exp_ou(self, K):
        model = exp_ou_model()
        x0 = np.array([1.1, 0.9])
        exp = build_irreducible(model, K, x0, THETA)
        x = x0 + np.array([0.03, -0.04])
        deltas = np.array([1e-1, 1e-2, 1e-3])
        res = [abs(x_forward_residual(model, exp, x, d)) for d in deltas]
        slope = np.polyfit(np.log(deltas), np.log(res), 1)[0]
        assert slope >= K - 0.3

    def test_coordinate_symmetry(self):
        # symmetric model: residual invariant under swapping the two coordinates
        model = parse_model_file(
            "dim = 2\nstates = x1, x2\nparams =\n"
            "mu.1 = 0 - x1\nmu.2 = 0 - x2\nsigma.1.1 = 1\nsigma.2.2 = 1"
        )
        exp_a = build_irreducible(model, 1, [0.2, -0.5], {})
        exp_b = build_irreducible(model, 1, [-0.5, 0.2], {})
        r_a = x_forward_residual(model, exp_a, [0.25, -0.4], 0.02)
        r_b = x_forward_residual(model, exp_b, [-0.4, 0.25], 0.02)
        assert r_a == pytest.approx(r_b, rel=1e-9, abs=1e-12)


class TestBatchedAgreement:
    def test_batch_equals_pointwise(self):
        model = exp_ou_model()
        rng = np.random.default_rng(8)
        x0s = rng.uniform(0.7, 1.5, size=(5, 2))
        ing = BoundIngredients(model, 2, x0s)
        batched = build_irreducible_batch(ing, THETA)
        for b in range(5):
            single = build_irreducible(model, 2, x0s[b], THETA)
            for k in (-1, 0, 1, 2):
                p = batched.poly(k, b)
                for idx in multi_indices(2, single.schedule[k]):
                    assert p.coeff(idx) == pytest.approx(
                        single.coefficients[k].coeff(idx), rel=1e-9, abs=1e-12
                    )

    def test_static_cache_reuse_consistent(self):
        model = exp_ou_model()
        x0s = np.array([[1.0, 1.2], [0.8, 0.9]])
        ing = BoundIngredients(model, 1, x0s)
        first = build_irreducible_batch(ing, THETA)
        other = dict(THETA, k11=3.3)
        second = build_irreducible_batch(ing, other)
        # leading coefficient shared (drift independent), later ones differ
        np.testing.assert_allclose(first.grids[-1], second.grids[-1])
        assert not np.allclose(first.grids[1], second.grids[1])
        fresh = build_irreducible(model, 1, x0s[1], other)
        for idx in multi_indices(2, fresh.schedule[1]):
            assert second.poly(1, 1).coeff(idx) == pytest.approx(
                fresh.coefficients[1].coeff(idx), rel=1e-9, abs=1e-12
            )
