"""Truncated multivariate polynomials in the displacement d = x - x0.

A :class:`DisplacementPoly` maps multi-indices ``i = (i1, ..., im)`` to
coefficients of the monomial ``d1^i1 * ... * dm^im``, keeping only terms with
total degree ``tr[i] <= J``.  Coefficients are either numerics (floats, or
numpy arrays for batched evaluation over many centers at once) or
:class:`~difflik.expr.Expression` objects in the center point and parameters
(symbolic mode).  Both modes support the same ring operations.

The radial integration rule implemented here is exact: the term
``beta * d^i`` contributes ``k * int_0^1 u^(k-1+tr[i]) du * d^i``
along the segment from the center to ``x``, i.e. ``beta * k/(k+tr[i])``.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    Const,
    Expression,
    evaluate,
    partial_derivative,
    simplify,
)

__all__ = [
    "MultiIndex",
    "tr",
    "multi_indices",
    "multi_indices_at",
    "multi_index_factorial",
    "DisplacementPoly",
    "poly_add",
    "poly_sub",
    "poly_scale",
    "poly_mul_trunc",
    "poly_partial",
    "radial_integrate",
    "poly_compose",
    "taylor",
    "taylor_symbolic",
]

MultiIndex = tuple[int, ...]


def tr(idx: MultiIndex) -> int:
    """Total order of a multi-index."""
    return sum(idx)


def multi_indices(m: int, J: int) -> list[MultiIndex]:
    """All multi-indices of dimension m with total order <= J, graded order."""
    out: list[MultiIndex] = []
    for r in range(J + 1):
        out.extend(multi_indices_at(m, r))
    return out


def multi_indices_at(m: int, r: int) -> list[MultiIndex]:
    """Multi-indices of dimension m with total order exactly r (lex within level)."""
    if m == 1:
        return [(r,)]
    out = []
    for first in range(r, -1, -1):
        for rest in multi_indices_at(m - 1, r - first):
            out.append((first,) + rest)
    return out


def multi_index_factorial(idx: MultiIndex) -> int:
    out = 1
    for i in idx:
        out *= math.factorial(i)
    return out


def _is_zero_coeff(c) -> bool:
    if isinstance(c, Expression):
        return isinstance(c, Const) and c.value == 0.0
    if isinstance(c, np.ndarray):
        return False
    return c == 0.0


class DisplacementPoly:
    """Truncated polynomial in d = x - center.

    ``center=None`` marks a symbolic center: coefficients are Expressions
    whose state variables refer to the center coordinates.
    """

    __slots__ = ("m", "J", "center", "coeffs")

    def __init__(
        self,
        m: int,
        J: int,
        coeffs: Mapping[MultiIndex, object] | None = None,
        center: Sequence[float] | None = None,
    ):
        self.m = m
        self.J = J
        self.center = None if center is None else tuple(float(c) for c in center)
        store: dict[MultiIndex, object] = {}
        if coeffs:
            for idx, c in coeffs.items():
                idx = tuple(idx)
                if len(idx) != m or any(i < 0 for i in idx):
                    raise ValueError(f"bad multi-index {idx} for dimension {m}")
                if tr(idx) > J:
                    raise ValueError(f"multi-index {idx} exceeds degree bound {J}")
                if not _is_zero_coeff(c):
                    store[idx] = c
        self.coeffs = store

    # -- basic interrogation ------------------------------------------------

    @property
    def symbolic(self) -> bool:
        return any(isinstance(c, Expression) for c in self.coeffs.values())

    def degree(self) -> int:
        """Largest total order with a stored (nonzero) coefficient."""
        return max((tr(i) for i in self.coeffs), default=0)

    def coeff(self, idx: MultiIndex):
        return self.coeffs.get(tuple(idx), 0.0)

    def truncate(self, J: int) -> "DisplacementPoly":
        kept = {i: c for i, c in self.coeffs.items() if tr(i) <= J}
        return DisplacementPoly(self.m, J, kept, self.center)

    def __repr__(self):
        terms = ", ".join(f"{i}: {c}" for i, c in sorted(self.coeffs.items()))
        return f"DisplacementPoly(m={self.m}, J={self.J}, {{{terms}}})"

    # -- evaluation ----------------------------------------------------------

    def evaluate(self, d):
        """Evaluate at displacement(s) d: shape (m,) or (B, m).  Numeric mode."""
        if self.symbolic:
            raise ValueError("cannot numerically evaluate a symbolic-mode polynomial")
        d = np.asarray(d, dtype=float)
        squeeze = d.ndim == 1
        if squeeze:
            d = d[None, :]
        if d.shape[1] != self.m:
            raise ValueError(f"displacement has {d.shape[1]} coordinates, expected {self.m}")
        powers = [
            np.vander(d[:, j], N=self.J + 1, increasing=True) for j in range(self.m)
        ]
        out = np.zeros(d.shape[0])
        for idx, c in self.coeffs.items():
            mono = powers[0][:, idx[0]].copy()
            for j in range(1, self.m):
                if idx[j]:
                    mono *= powers[j][:, idx[j]]
            out += c * mono
        return float(out[0]) if squeeze else out

    def eval_coeffs(self, x0, theta) -> "DisplacementPoly":
        """Bind a symbolic-center polynomial to a numeric center and parameters."""
        out: dict[MultiIndex, object] = {}
        for idx, c in self.coeffs.items():
            out[idx] = float(evaluate(c, x0, theta)) if isinstance(c, Expression) else c
        return DisplacementPoly(self.m, self.J, out, center=x0)


def _has_arrays(p: DisplacementPoly) -> bool:
    return any(isinstance(c, np.ndarray) for c in p.coeffs.values())


def _check_compatible(p: DisplacementPoly, q: DisplacementPoly):
    if p.m != q.m:
        raise ValueError("dimension mismatch")
    if p.center != q.center:
        raise ValueError("center mismatch")
    if p.symbolic != q.symbolic:
        # scalar numerics coerce into symbolic constants; arrays do not
        numeric = q if p.symbolic else p
        if _has_arrays(numeric):
            raise ValueError("coefficient mode mismatch (array-valued vs symbolic)")


def _cadd(a, b):
    if isinstance(a, Expression) or isinstance(b, Expression):
        return simplify(_as_expr(a) + _as_expr(b))
    return a + b


def _cmul(a, b):
    if isinstance(a, Expression) or isinstance(b, Expression):
        return simplify(_as_expr(a) * _as_expr(b))
    return a * b


def _as_expr(c):
    return c if isinstance(c, Expression) else Const(c)


def poly_add(p: DisplacementPoly, q: DisplacementPoly, J: int | None = None) -> DisplacementPoly:
    _check_compatible(p, q)
    J = max(p.J, q.J) if J is None else J
    out = {i: c for i, c in p.coeffs.items() if tr(i) <= J}
    for idx, c in q.coeffs.items():
        if tr(idx) > J:
            continue
        out[idx] = _cadd(out[idx], c) if idx in out else c
    return DisplacementPoly(p.m, J, out, p.center)


def poly_sub(p: DisplacementPoly, q: DisplacementPoly, J: int | None = None) -> DisplacementPoly:
    return poly_add(p, poly_scale(q, -1.0), J)


def poly_scale(p: DisplacementPoly, c) -> DisplacementPoly:
    out = {i: _cmul(v, c) for i, v in p.coeffs.items()}
    return DisplacementPoly(p.m, p.J, out, p.center)


def poly_mul_trunc(p: DisplacementPoly, q: DisplacementPoly, J: int) -> DisplacementPoly:
    """Product with all terms of total order > J discarded."""
    _check_compatible(p, q)
    out: dict[MultiIndex, object] = {}
    q_items = list(q.coeffs.items())
    for ip, cp in p.coeffs.items():
        rp = tr(ip)
        if rp > J:
            continue
        for iq, cq in q_items:
            if rp + tr(iq) > J:
                continue
            idx = tuple(a + b for a, b in zip(ip, iq))
            prod = _cmul(cp, cq)
            out[idx] = _cadd(out[idx], prod) if idx in out else prod
    return DisplacementPoly(p.m, J, out, p.center)


def poly_partial(p: DisplacementPoly, j: int) -> DisplacementPoly:
    """Partial derivative in the j-th state (1-based); acts through d_j only."""
    if not 1 <= j <= p.m:
        raise ValueError(f"variable index {j} out of range 1..{p.m}")
    out: dict[MultiIndex, object] = {}
    for idx, c in p.coeffs.items():
        n = idx[j - 1]
        if n == 0:
            continue
        lowered = idx[: j - 1] + (n - 1,) + idx[j:]
        out[lowered] = _cmul(c, float(n))
    return DisplacementPoly(p.m, max(p.J - 1, 0), out, p.center)


def radial_integrate(p: DisplacementPoly, k: int) -> DisplacementPoly:
    """k * int_0^1 P(u*d) u^(k-1) du, computed exactly termwise."""
    if k < 1:
        raise ValueError("radial integration order k must be >= 1")
    out = {idx: _cmul(c, k / (k + tr(idx))) for idx, c in p.coeffs.items()}
    return DisplacementPoly(p.m, p.J, out, p.center)


def poly_compose(
    p: DisplacementPoly, parts: Sequence[DisplacementPoly], J: int
) -> DisplacementPoly:
    """Substitute displacement polynomials for the variables of ``p``.

    ``parts[j]`` replaces d_{j+1}; all parts share a center/dimension and the
    result is truncated at total order J.  Numeric mode only.
    """
    if len(parts) != p.m:
        raise ValueError("need one substitution polynomial per variable")
    base = parts[0]
    one = DisplacementPoly(base.m, J, {(0,) * base.m: 1.0}, base.center)
    cache: dict[MultiIndex, DisplacementPoly] = {(0,) * p.m: one}

    def monomial(idx: MultiIndex) -> DisplacementPoly:
        got = cache.get(idx)
        if got is not None:
            return got
        j = next(a for a, n in enumerate(idx) if n > 0)
        lowered = idx[:j] + (idx[j] - 1,) + idx[j + 1 :]
        out = poly_mul_trunc(monomial(lowered), parts[j], J)
        cache[idx] = out
        return out

    acc = DisplacementPoly(base.m, J, {}, base.center)
    for idx, c in sorted(p.coeffs.items(), key=lambda item: (tr(item[0]), item[0])):
        acc = poly_add(acc, poly_scale(monomial(idx), c), J)
    return acc


def taylor(e: Expression, x0, theta, J: int) -> DisplacementPoly:
    """Numeric Taylor polynomial of ``e`` at ``x0`` to total order J.

    Coefficients come from exact symbolic differentiation evaluated at the
    center (never finite differences); the derivative trees are cached per
    (expression, multi-index) across calls.
    """
    m = len(x0)
    coeffs: dict[MultiIndex, float] = {}
    for idx in multi_indices(m, J):
        de = partial_derivative(e, idx)
        if isinstance(de, Const) and de.value == 0.0:
            continue
        coeffs[idx] = float(evaluate(de, x0, theta)) / multi_index_factorial(idx)
    return DisplacementPoly(m, J, coeffs, center=x0)


def taylor_symbolic(e: Expression, m: int, J: int) -> DisplacementPoly:
    """Symbolic Taylor polynomial around an unspecified center.

    The coefficient of d^i is the mixed partial of ``e`` divided by i!; its
    state variables are to be read as the center coordinates.
    """
    coeffs: dict[MultiIndex, Expression] = {}
    for idx in multi_indices(m, J):
        de = partial_derivative(e, idx)
        if isinstance(de, Const) and de.value == 0.0:
            continue
        coeffs[idx] = simplify(_cmul(de, 1.0 / multi_index_factorial(idx)))
    return DisplacementPoly(m, J, coeffs, center=None)
