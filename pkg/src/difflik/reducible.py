"""Closed-form log-density expansion for unit-diffusion (reducible) models.

For dY = mu_Y(Y) dt + dW the log transition density is approximated by

    l_Y(y | y0, D) ~ -(m/2) ln(2 pi D) + C(-1)(y|y0)/D
                     + sum_{k=0..K} C(k)(y|y0) D^k / k!

with coefficients obtained by matching the Kolmogorov forward/backward pair
order by order in D:

    C(-1) = -0.5 ||y - y0||^2                        (Gaussian leading term)
    C(0)  = sum_i (y_i - y0_i) * radial average of mu_Y,i along y0 -> y
    C(k)  = k * int_0^1 G(k)(y0 + u(y - y0) | y0) u^(k-1) du,   k >= 1

where G(1) collects the divergence, drift-gradient and squared-gradient terms
of C(0), and G(k) for k >= 2 adds the binomially weighted cross-gradient sum
over lower coefficients.  Integration constants vanish (boundary finiteness
across the axes plus the backward equation), so none are searched for at run
time.

Polynomial drift keeps every coefficient an exact polynomial and the radial
integral closes termwise (symbolic mode: coefficients are expressions in the
center and parameters).  Otherwise the drift is Taylor-expanded at the numeric
center first and coefficients are carried at the order schedule j_k =
2(K+1-k), which reproduces the irreducible-path answer on reducible inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    Const,
    EvaluationError,
    Expression,
    evaluate,
    format_expression,
)
from .model import ReducedModel
from .poly import (
    DisplacementPoly,
    poly_add,
    poly_mul_trunc,
    poly_partial,
    poly_scale,
    radial_integrate,
    taylor,
    taylor_symbolic,
    tr,
)

__all__ = [
    "ReducibleExpansion",
    "coeff_leading",
    "coeff_C0",
    "compute_G",
    "coeff_Ck",
    "build_reducible",
    "drift_polynomial_degree",
    "y_log_density",
    "y_forward_residual",
]

MAX_K = 12


def order_schedule(K: int) -> dict[int, int]:
    """j_k = 2(K + 1 - k) for k = -1..K."""
    return {k: 2 * (K + 1 - k) for k in range(-1, K + 1)}


def coeff_leading(m: int, center=None) -> DisplacementPoly:
    """C(-1) = -0.5 * sum_i d_i^2, independent of the drift."""
    coeffs = {}
    for i in range(m):
        idx = tuple(2 if j == i else 0 for j in range(m))
        coeffs[idx] = -0.5
    return DisplacementPoly(m, 2, coeffs, center=center)


def _shift_by_d(p: DisplacementPoly, i: int, J: int) -> DisplacementPoly:
    """Multiply by the monomial d_i (index shift), truncating at J."""
    out = {}
    for idx, c in p.coeffs.items():
        if tr(idx) + 1 > J:
            continue
        lifted = idx[:i] + (idx[i] + 1,) + idx[i + 1 :]
        out[lifted] = c
    return DisplacementPoly(p.m, J, out, p.center)


def coeff_C0(mu_polys: Sequence[DisplacementPoly], J: int) -> DisplacementPoly:
    """C(0): radial average of the drift contracted with the displacement."""
    m = mu_polys[0].m
    acc = DisplacementPoly(m, J, {}, mu_polys[0].center)
    for i in range(m):
        averaged = radial_integrate(mu_polys[i].truncate(max(J - 1, 0)), 1)
        acc = poly_add(acc, _shift_by_d(averaged, i, J), J)
    return acc


def compute_G(
    k: int,
    coeffs: Mapping[int, DisplacementPoly],
    mu_polys: Sequence[DisplacementPoly],
    J: int,
) -> DisplacementPoly:
    """The source term G(k) feeding the radial integral for C(k)."""
    if k < 1:
        raise ValueError("G is defined for k >= 1")
    for h in range(-1, k):
        if h not in coeffs:
            raise ValueError(f"missing lower coefficient C({h})")
    m = mu_polys[0].m
    center = mu_polys[0].center
    acc = DisplacementPoly(m, J, {}, center)
    prev = coeffs[k - 1]
    grads = {
        h: [poly_partial(coeffs[h], i + 1) for i in range(m)] for h in range(k)
    }
    if k == 1:
        for i in range(m):
            acc = poly_add(acc, poly_scale(poly_partial(mu_polys[i], i + 1), -1.0), J)
    for i in range(m):
        acc = poly_add(
            acc, poly_scale(poly_mul_trunc(mu_polys[i], grads[k - 1][i], J), -1.0), J
        )
        acc = poly_add(
            acc, poly_scale(poly_partial(poly_partial(prev, i + 1), i + 1), 0.5), J
        )
    for i in range(m):
        for h in range(k):
            weight = 0.5 * math.comb(k - 1, h)
            cross = poly_mul_trunc(grads[h][i], grads[k - 1 - h][i], J)
            acc = poly_add(acc, poly_scale(cross, weight), J)
    return acc


def coeff_Ck(k: int, g: DisplacementPoly) -> DisplacementPoly:
    """C(k) = k * int_0^1 G(k)(y0 + u d | y0) u^(k-1) du, termwise exact."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return radial_integrate(g, k)


@dataclass
class ReducibleExpansion:
    """Coefficient family C(-1..K) as displacement polynomials in d = y - y0.

    ``symbolic`` expansions carry expression coefficients in (center, theta);
    numeric ones are anchored at a specific (y0, theta).
    """

    K: int
    m: int
    coefficients: dict[int, DisplacementPoly]
    symbolic: bool
    reduced: ReducedModel | None = None
    center: tuple[float, ...] | None = None
    theta: dict[str, float] | None = None

    def at(self, y0, theta) -> dict[int, DisplacementPoly]:
        """Numeric coefficient polynomials at a concrete center and parameters."""
        if not self.symbolic:
            return self.coefficients
        return {k: p.eval_coeffs(y0, theta) for k, p in self.coefficients.items()}

    def to_json_dict(self) -> dict:
        tables = {}
        for k, p in sorted(self.coefficients.items()):
            table = {}
            for idx, c in sorted(p.coeffs.items()):
                key = ",".join(str(i) for i in idx)
                table[key] = format_expression(c) if isinstance(c, Expression) else float(c)
            tables[str(k)] = table
        out = {
            "kind": "reducible",
            "K": self.K,
            "m": self.m,
            "mode": "symbolic" if self.symbolic else "numeric",
            "coefficients": tables,
        }
        if self.center is not None:
            out["center"] = list(self.center)
        if self.theta is not None:
            out["theta"] = dict(self.theta)
        return out


def drift_polynomial_degree(
    reduced: ReducedModel, probe_degree: int, seed: int = 0, tol: float = 1e-9
) -> tuple[int, list[DisplacementPoly]] | None:
    """Detect semantically polynomial drift and return (degree, symbolic polys).

    The drift is Taylor-expanded symbolically to ``probe_degree`` and checked
    for exactness at randomized (center, theta, displacement) draws, so drifts
    that are polynomial in value but not in tree shape (e.g. after a change of
    variable leaving ln(exp(y)) residues) still qualify.  Returns None when
    any component fails the exactness check.
    """
    rng = np.random.default_rng(seed)
    m = reduced.m
    polys = []
    degree = 0
    for mu in reduced.mu_y:
        p = taylor_symbolic(mu, m, probe_degree)
        checked = 0
        tries = 0
        while checked < 8:
            tries += 1
            if tries > 60:
                return None
            center = rng.uniform(0.25, 1.75, size=m)
            d = rng.uniform(-0.5, 0.5, size=m)
            theta = {name: rng.uniform(0.5, 2.0) for name in reduced.param_names}
            try:
                direct = float(evaluate(mu, center + d, theta))
                via_poly = p.eval_coeffs(center, theta).evaluate(d)
            except EvaluationError:
                continue
            if abs(direct - via_poly) > tol * (1.0 + abs(direct)):
                return None
            checked += 1
        polys.append(p)
        degree = max(degree, p.degree())
    return degree, polys


def build_reducible(
    reduced: ReducedModel,
    K: int,
    mode: str = "auto",
    y0=None,
    theta: Mapping[str, float] | None = None,
    seed: int = 0,
) -> ReducibleExpansion:
    """Construct the full coefficient family C(-1..K).

    mode "symbolic" requires (semantically) polynomial drift; "taylor" expands
    the drift at the numeric center ``y0`` for parameters ``theta`` and runs
    the same recursion at the order schedule j_k; "auto" prefers symbolic.
    """
    if K < 0:
        raise ValueError("K must be >= 0")
    if K > MAX_K:
        raise ValueError(f"K capped at {MAX_K} (exact integer factorials)")
    m = reduced.m

    detected = None
    if mode in ("auto", "symbolic"):
        probe = max(2 * (K + 2), 8)
        detected = drift_polynomial_degree(reduced, probe, seed=seed)
        if detected is None and mode == "symbolic":
            raise ValueError("symbolic mode requires polynomial drift")

    if detected is not None:
        degree, mu_polys = detected
        j_work = max(degree * (K + 1), 2 * (K + 2))
        bounds = {k: j_work for k in range(-1, K + 1)}
        symbolic = True
        center = None
    else:
        if y0 is None or theta is None:
            raise ValueError("taylor mode needs a numeric center y0 and theta")
        j_max = 2 * (K + 2)
        mu_polys = [taylor(mu, y0, theta, j_max) for mu in reduced.mu_y]
        bounds = order_schedule(K)
        symbolic = False
        center = tuple(float(v) for v in y0)

    coeffs: dict[int, DisplacementPoly] = {}
    coeffs[-1] = coeff_leading(m, center=center)
    coeffs[0] = coeff_C0(mu_polys, bounds[0])
    for k in range(1, K + 1):
        g = compute_G(k, coeffs, mu_polys, bounds[k])
        coeffs[k] = coeff_Ck(k, g)

    return ReducibleExpansion(
        K=K,
        m=m,
        coefficients=coeffs,
        symbolic=symbolic,
        reduced=reduced,
        center=center,
        theta=None if theta is None or symbolic else dict(theta),
    )


# ---------------------------------------------------------------------------
# evaluation helpers


def _coeff_values(
    expansion: ReducibleExpansion, y0, theta
) -> dict[int, DisplacementPoly]:
    if expansion.symbolic:
        return expansion.at(y0, theta)
    if expansion.center is not None and tuple(np.atleast_1d(y0)) != expansion.center:
        raise ValueError("numeric expansion evaluated away from its center")
    return expansion.coefficients


def y_log_density(
    expansion: ReducibleExpansion, y, y0, delta: float, theta=None
) -> float:
    """l_Y^{(K)}(y | y0, delta) for a single pair of points."""
    y = np.asarray(y, float)
    y0 = np.asarray(y0, float)
    coeffs = _coeff_values(expansion, y0, theta)
    d = y - y0
    out = -0.5 * expansion.m * math.log(2.0 * math.pi * delta)
    out += coeffs[-1].evaluate(d) / delta
    for k in range(0, expansion.K + 1):
        out += coeffs[k].evaluate(d) * delta**k / math.factorial(k)
    return float(out)


def y_forward_residual(
    expansion: ReducibleExpansion, reduced: ReducedModel, y, y0, delta: float, theta=None
) -> float:
    """Forward-equation residual of the truncated expansion at (y, y0, delta).

    Both sides are evaluated analytically: the delta-derivative term by term in
    the series, spatial derivatives through the coefficient polynomials, and
    the drift through its exact expressions.  The residual shrinks like
    O(delta^K) as delta -> 0.
    """
    from .expr import differentiate

    y = np.asarray(y, float)
    y0 = np.asarray(y0, float)
    m = expansion.m
    K = expansion.K
    coeffs = _coeff_values(expansion, y0, theta)
    d = y - y0

    def series(vals, leading):
        out = leading / delta
        for k in range(0, K + 1):
            out += vals[k] * delta**k / math.factorial(k)
        return out

    c_vals = {k: coeffs[k].evaluate(d) for k in coeffs}
    dl_ddelta = (
        -0.5 * m / delta
        - c_vals[-1] / delta**2
        + sum(c_vals[k] * delta ** (k - 1) / math.factorial(k - 1) for k in range(1, K + 1))
    )
    lhs = dl_ddelta

    rhs = 0.0
    for i in range(1, m + 1):
        mu_i = float(evaluate(reduced.mu_y[i - 1], y, theta))
        dmu_i = float(evaluate(differentiate(reduced.mu_y[i - 1], i), y, theta))
        grad_vals = {k: poly_partial(coeffs[k], i).evaluate(d) for k in coeffs}
        hess_vals = {
            k: poly_partial(poly_partial(coeffs[k], i), i).evaluate(d) for k in coeffs
        }
        l_i = series({k: grad_vals[k] for k in range(0, K + 1)}, grad_vals[-1])
        l_ii = series({k: hess_vals[k] for k in range(0, K + 1)}, hess_vals[-1])
        rhs += -dmu_i - mu_i * l_i + 0.5 * (l_ii + l_i * l_i)
    return float(lhs - rhs)
