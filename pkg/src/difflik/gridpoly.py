"""Dense exponent-grid kernel for batched truncated polynomial algebra.

A batch of B polynomials in m displacement variables truncated at total order
J is a float array of shape (B, J+1, ..., J+1); entry [b, i1, ..., im] is the
coefficient of d1^i1 ... dm^im for batch element b.  Slots with i1+...+im > J
are kept identically zero.  The per-point coefficient recursion of the
irreducible expansion runs on these arrays so one pass serves every
observation of a data set at once.

This is an internal performance layer; semantics mirror (and are tested
against) the dict-based :mod:`difflik.poly` operations.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .poly import DisplacementPoly, multi_indices, multi_indices_at, tr

__all__ = ["GridContext"]


class GridContext:
    """Precomputed index machinery for a fixed (m, J)."""

    def __init__(self, m: int, J: int):
        self.m = m
        self.J = J
        shape = (J + 1,) * m
        grids = np.indices(shape)
        self.tr_grid = grids.sum(axis=0)
        self.mask = (self.tr_grid <= J).astype(float)
        self.indices = multi_indices(m, J)
        self.level_indices = {r: multi_indices_at(m, r) for r in range(J + 1)}
        # fancy-index tuples per level for gather/scatter of (B, n_r) blocks
        self._level_ix = {
            r: tuple(np.array([idx[a] for idx in idxs]) for a in range(m))
            for r, idxs in self.level_indices.items()
        }
        self._einsum = None

    # -- construction ---------------------------------------------------------

    def zeros(self, B: int) -> np.ndarray:
        return np.zeros((B,) + (self.J + 1,) * self.m)

    def from_poly(self, p: DisplacementPoly, B: int) -> np.ndarray:
        out = self.zeros(B)
        for idx, c in p.coeffs.items():
            if tr(idx) <= self.J:
                out[(slice(None),) + idx] = c
        return out

    def to_poly(self, a: np.ndarray, b: int, J: int | None = None, center=None) -> DisplacementPoly:
        J = self.J if J is None else J
        coeffs = {}
        for idx in self.indices:
            if tr(idx) > J:
                continue
            val = float(a[(b,) + idx])
            if val != 0.0:
                coeffs[idx] = val
        return DisplacementPoly(self.m, J, coeffs, center=center)

    # -- ring operations -------------------------------------------------------

    def mul(
        self,
        a: np.ndarray,
        b: np.ndarray,
        J: int | None = None,
        deg_b: int | None = None,
    ) -> np.ndarray:
        """Truncated product; terms of total order > J are dropped.

        ``deg_b`` caps the exponents of ``b`` that are visited (callers that
        know the degree of a factor skip its structurally zero slots).
        """
        J = self.J if J is None else J
        cap = J if deg_b is None else min(J, deg_b)
        out = np.zeros_like(a)
        n = self.J + 1
        for idx in self.indices:
            r = tr(idx)
            if r > cap:
                break
            coeff = b[(slice(None),) + idx]
            if not coeff.any():
                continue
            src = (slice(None),) + tuple(slice(0, n - i) for i in idx)
            dst = (slice(None),) + tuple(slice(i, n) for i in idx)
            out[dst] += a[src] * coeff[(slice(None),) + (None,) * self.m]
        if J < self.J:
            out *= self.tr_grid <= J
        else:
            out *= self.mask
        return out

    def partial(self, a: np.ndarray, var: int) -> np.ndarray:
        """d/d(d_var), 1-based variable index."""
        axis = var  # batch axis is 0
        n = self.J + 1
        out = np.zeros_like(a)
        weights = np.arange(1, n)
        shape = [1] * a.ndim
        shape[axis] = n - 1
        take_src = [slice(None)] * a.ndim
        take_src[axis] = slice(1, n)
        take_dst = [slice(None)] * a.ndim
        take_dst[axis] = slice(0, n - 1)
        out[tuple(take_dst)] = a[tuple(take_src)] * weights.reshape(shape)
        return out

    def scale_levels(self, a: np.ndarray, factors: np.ndarray) -> np.ndarray:
        """Multiply every level-r slot by factors[r] (radial integration etc.)."""
        return a * factors[self.tr_grid]

    # -- level gather/scatter ----------------------------------------------------

    def level_block(self, a: np.ndarray, r: int) -> np.ndarray:
        """Coefficients of total order r as a (B, n_r) array."""
        ix = self._level_ix[r]
        return a[(slice(None),) + ix]

    def set_level_block(self, a: np.ndarray, r: int, values: np.ndarray) -> None:
        ix = self._level_ix[r]
        a[(slice(None),) + ix] = values

    def max_abs_upto(self, a: np.ndarray, J: int) -> np.ndarray:
        """Per-batch max |coefficient| over slots of total order <= J."""
        keep = self.tr_grid <= J
        flat = np.abs(a.reshape(a.shape[0], -1))[:, keep.ravel()]
        return flat.max(axis=1)

    # -- evaluation ---------------------------------------------------------------

    def evaluate(self, a: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Evaluate each batch polynomial at its own displacement row."""
        B = a.shape[0]
        d = np.asarray(d, float).reshape(B, self.m)
        powers = [np.vander(d[:, j], N=self.J + 1, increasing=True) for j in range(self.m)]
        if self._einsum is None:
            letters = "ijklqr"[: self.m]
            self._einsum = (
                "b" + letters + "," + ",".join("b" + c for c in letters) + "->b"
            )
        return np.einsum(self._einsum, a, *powers)


@lru_cache(maxsize=32)
def get_context(m: int, J: int) -> GridContext:
    return GridContext(m, J)
