import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from difflik.expr import parse_expression
from difflik.poly import (
    DisplacementPoly,
    multi_indices,
    multi_indices_at,
    poly_add,
    poly_compose,
    poly_mul_trunc,
    poly_partial,
    poly_scale,
    radial_integrate,
    taylor,
    taylor_symbolic,
    tr,
)


def random_poly(rng, m, J, scale=1.0):
    coeffs = {idx: scale * rng.standard_normal() for idx in multi_indices(m, J)}
    return DisplacementPoly(m, J, coeffs)


class TestMultiIndices:
    def test_counts(self):
        assert len(multi_indices_at(2, 3)) == 4
        assert len(multi_indices(2, 8)) == 45
        assert len(multi_indices_at(3, 2)) == 6

    def test_orders(self):
        assert all(tr(i) <= 4 for i in multi_indices(3, 4))
        assert multi_indices(1, 2) == [(0,), (1,), (2,)]


class TestTaylor:
    def test_exact_on_polynomials(self):
        e = parse_expression("x1^2", ["x1"], [])
        p = taylor(e, [3.0], {}, 2)
        assert p.coeff((0,)) == pytest.approx(9.0)
        assert p.coeff((1,)) == pytest.approx(6.0)
        assert p.coeff((2,)) == pytest.approx(1.0)

    def test_exponential(self):
        e = parse_expression("exp(x1)", ["x1"], [])
        p = taylor(e, [0.0], {}, 2)
        assert p.coeff((0,)) == pytest.approx(1.0)
        assert p.coeff((1,)) == pytest.approx(1.0)
        assert p.coeff((2,)) == pytest.approx(0.5)

    def test_log_product(self):
        # hand differentiation: ln(x1*x2) at (1,2) -> ln 2 + d1 + d2/2
        e = parse_expression("ln(x1*x2)", ["x1", "x2"], [])
        p = taylor(e, [1.0, 2.0], {}, 1)
        assert p.coeff((0, 0)) == pytest.approx(math.log(2.0))
        assert p.coeff((1, 0)) == pytest.approx(1.0)
        assert p.coeff((0, 1)) == pytest.approx(0.5)

    def test_machine_precision_on_degree_J_polys(self):
        rng = np.random.default_rng(0)
        e = parse_expression(
            "1 + 2*x1 - 3*x2^2 + 0.5*x1*x2 + x1^3 - x2^3 + x1^2*x2", ["x1", "x2"], []
        )
        x0 = [0.7, -1.3]
        p = taylor(e, x0, {}, 3)
        from difflik.expr import evaluate

        for _ in range(20):
            d = rng.uniform(-2, 2, size=2)
            x = [x0[0] + d[0], x0[1] + d[1]]
            assert p.evaluate(d) == pytest.approx(evaluate(e, x, {}), rel=1e-12, abs=1e-12)

    def test_symbolic_matches_numeric(self):
        e = parse_expression("k*(a - x1) + x1*x2", ["x1", "x2"], ["k", "a"])
        theta = {"k": 2.5, "a": -0.3}
        x0 = [0.4, 1.1]
        sym = taylor_symbolic(e, 2, 3)
        num = sym.eval_coeffs(x0, theta)
        direct = taylor(e, x0, theta, 3)
        for idx in multi_indices(2, 3):
            assert num.coeff(idx) == pytest.approx(direct.coeff(idx), abs=1e-13)


class TestRingOps:
    def test_difference_of_squares(self):
        one_plus = DisplacementPoly(1, 2, {(0,): 1.0, (1,): 1.0})
        one_minus = DisplacementPoly(1, 2, {(0,): 1.0, (1,): -1.0})
        prod = poly_mul_trunc(one_plus, one_minus, 2)
        assert prod.coeff((0,)) == 1.0
        assert prod.coeff((1,)) == 0.0
        assert prod.coeff((2,)) == -1.0

    def test_truncation_drops_cross_term(self):
        a = DisplacementPoly(2, 1, {(0, 0): 1.0, (1, 0): 1.0})
        b = DisplacementPoly(2, 1, {(0, 0): 1.0, (0, 1): 1.0})
        prod = poly_mul_trunc(a, b, 1)
        assert prod.coeffs == {(0, 0): 1.0, (1, 0): 1.0, (0, 1): 1.0}

    def test_mode_mismatch_rejected(self):
        # array-valued numeric coefficients cannot combine with symbolic ones;
        # plain scalars coerce to constants
        arr = DisplacementPoly(1, 1, {(1,): np.ones(3)})
        sym = taylor_symbolic(parse_expression("k*x1", ["x1"], ["k"]), 1, 1)
        with pytest.raises(ValueError, match="mode"):
            poly_add(arr, sym)
        mixed = poly_add(DisplacementPoly(1, 1, {(1,): 2.0}), sym)
        assert mixed.symbolic

    def test_center_mismatch_rejected(self):
        a = DisplacementPoly(1, 1, {(1,): 1.0}, center=[0.0])
        b = DisplacementPoly(1, 1, {(1,): 1.0}, center=[1.0])
        with pytest.raises(ValueError, match="center"):
            poly_mul_trunc(a, b, 1)

    @given(st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_product_matches_pointwise_evaluation(self, seed):
        rng = np.random.default_rng(seed)
        m = int(rng.integers(1, 4))
        Jp, Jq = int(rng.integers(0, 4)), int(rng.integers(0, 4))
        J = Jp + Jq
        p, q = random_poly(rng, m, Jp), random_poly(rng, m, Jq)
        prod = poly_mul_trunc(p, q, J)
        for _ in range(5):
            d = rng.uniform(-0.1, 0.1, size=m)
            # untruncated degree bound => exact product
            assert prod.evaluate(d) == pytest.approx(
                p.evaluate(d) * q.evaluate(d), rel=1e-10, abs=1e-12
            )

    @given(st.integers(0, 1000))
    @settings(max_examples=30, deadline=None)
    def test_truncated_product_remainder(self, seed):
        rng = np.random.default_rng(seed)
        m = 2
        p, q = random_poly(rng, m, 3), random_poly(rng, m, 3)
        J = 3
        prod = poly_mul_trunc(p, q, J)
        for scale in (0.1, 0.05, 0.025):
            d = rng.uniform(-1, 1, size=m) * scale
            err = abs(prod.evaluate(d) - p.evaluate(d) * q.evaluate(d))
            # remainder is O(||d||^{J+1})
            assert err <= 50.0 * np.linalg.norm(d) ** (J + 1)

    def test_bilinearity(self):
        rng = np.random.default_rng(42)
        p, q, r = (random_poly(rng, 2, 3) for _ in range(3))
        lhs = poly_mul_trunc(poly_add(p, q), r, 4)
        rhs = poly_add(poly_mul_trunc(p, r, 4), poly_mul_trunc(q, r, 4))
        for idx in multi_indices(2, 4):
            assert lhs.coeff(idx) == pytest.approx(rhs.coeff(idx), abs=1e-12)


class TestPartial:
    def test_monomial_rule(self):
        p = DisplacementPoly(2, 3, {(2, 1): 1.0})
        dp = poly_partial(p, 1)
        assert dp.coeffs == {(1, 1): 2.0}

    def test_independent_variable(self):
        p = DisplacementPoly(2, 2, {(2, 0): 1.0})
        assert poly_partial(p, 2).coeffs == {}

    def test_leading_quadratic_gradient(self):
        v11 = 4.0
        p = DisplacementPoly(1, 2, {(2,): -0.5 / v11})
        dp = poly_partial(p, 1)
        assert dp.coeff((1,)) == pytest.approx(-1.0 / v11)


class TestRadialIntegrate:
    def test_constant_k2(self):
        p = DisplacementPoly(1, 0, {(0,): 3.7})
        assert radial_integrate(p, 2).coeff((0,)) == pytest.approx(3.7)

    def test_square_k1(self):
        p = DisplacementPoly(1, 2, {(2,): 1.0})
        assert radial_integrate(p, 1).coeff((2,)) == pytest.approx(1.0 / 3.0)

    def test_mixed_k2(self):
        p = DisplacementPoly(2, 2, {(1, 0): 1.0, (1, 1): 1.0})
        out = radial_integrate(p, 2)
        assert out.coeff((1, 0)) == pytest.approx(2.0 / 3.0)
        assert out.coeff((1, 1)) == pytest.approx(0.5)

    def test_rejects_k0(self):
        with pytest.raises(ValueError):
            radial_integrate(DisplacementPoly(1, 0, {(0,): 1.0}), 0)

    def test_matches_quadrature(self):
        # line-integral oracle: k * int_0^1 P(u d) u^(k-1) du via adaptive quadrature
        rng = np.random.default_rng(99)
        for m in (1, 2, 3):
            for k in (1, 2, 3):
                p = random_poly(rng, m, 8 if m == 1 else 5)
                out = radial_integrate(p, k)
                for _ in range(4):
                    d = rng.uniform(-1.0, 1.0, size=m)
                    want, _ = quad(
                        lambda u: k * p.evaluate(u * d) * u ** (k - 1), 0.0, 1.0,
                        epsabs=1e-13, epsrel=1e-13,
                    )
                    assert out.evaluate(d) == pytest.approx(want, rel=1e-10, abs=1e-12)


def test_compose_against_direct_evaluation():
    rng = np.random.default_rng(11)
    p = random_poly(rng, 2, 3)
    # substitution maps with no constant term keep the truncation meaningful
    parts = []
    for _ in range(2):
        q = random_poly(rng, 2, 3)
        q.coeffs.pop((0, 0), None)
        parts.append(q)
    comp = poly_compose(p, parts, 9)
    for _ in range(10):
        d = rng.uniform(-0.05, 0.05, size=2)
        inner = np.array([parts[0].evaluate(d), parts[1].evaluate(d)])
        assert comp.evaluate(d) == pytest.approx(p.evaluate(inner), rel=1e-9, abs=1e-12)


def test_scale():
    p = DisplacementPoly(1, 1, {(1,): 2.0})
    assert poly_scale(p, -0.5).coeffs == {(1,): -1.0}
