"""Log transition density evaluation and sample log-likelihood.

The evaluator selects between the closed-form unit-diffusion route (build the
coefficient family once, map points through gamma, add the Jacobian
correction -D_v(x)) and the per-center double expansion for models with no
available transform.  Selection is deterministic for a fixed model: "auto"
takes the reducible route exactly when the commutation test passes and a
gamma is available (supplied or constructible).

For likelihood sweeps, :meth:`LikelihoodEvaluator.make_loglik` binds a data
set once and returns a theta -> loglik callable; coefficient evaluation then
reuses the bound tapes and a single batched coefficient build per theta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .expr import EvaluationError, bind_states_many, evaluate, param_refs
from .irreducible import (
    BoundIngredients,
    IrreducibleExpansion,
    build_irreducible,
    build_irreducible_batch,
    x_forward_residual,
)
from .model import (
    DiffusionModel,
    ReducedModel,
    ReductionUnavailableError,
    check_reducibility,
    compute_Dv,
    derive_reduced_model,
)
from .reducible import ReducibleExpansion, build_reducible, y_forward_residual, y_log_density

__all__ = ["LikelihoodError", "LikelihoodEvaluator"]


class LikelihoodError(RuntimeError):
    pass


def _pairs(data):
    """Accept an (n+1, m) path or an (x0_rows, x_rows) pair tuple."""
    if isinstance(data, tuple):
        x0, x = (np.atleast_2d(np.asarray(a, float)) for a in data)
        if x0.shape != x.shape:
            raise ValueError("pair arrays must have matching shapes")
        return x0, x
    path = np.atleast_2d(np.asarray(data, float))
    if path.shape[0] < 2:
        raise ValueError("need at least two observations")
    return path[:-1], path[1:]


@dataclass
class PathSelection:
    path: str
    reason: str


class LikelihoodEvaluator:
    """Expansion-backed log transition density for one model and order K."""

    def __init__(
        self,
        model: DiffusionModel,
        K: int = 2,
        mode: str = "auto",
        theta_hint=None,
        probes: int = 32,
        seed: int = 0,
    ):
        if mode not in ("auto", "reducible", "irreducible"):
            raise ValueError("mode must be auto, reducible or irreducible")
        self.model = model
        self.K = K
        self.dv_expr = compute_Dv(model)
        self.reduced: ReducedModel | None = None
        self.expansion: ReducibleExpansion | None = None

        if mode in ("auto", "reducible"):
            report = check_reducibility(model, theta_hint, probes=probes, seed=seed)
            reduced = None
            if report.reducible:
                try:
                    reduced = derive_reduced_model(model)
                except ReductionUnavailableError:
                    reduced = None
            if reduced is not None:
                self.reduced = reduced
                self.selection = PathSelection(
                    "reducible",
                    f"commutation residual {report.max_residual:.2e}, gamma available",
                )
            elif mode == "reducible":
                raise LikelihoodError(
                    "reducible path requested but "
                    + (
                        "no gamma is constructible"
                        if report.reducible
                        else f"model classified irreducible (residual {report.max_residual:.2e})"
                    )
                )
            else:
                self.selection = PathSelection(
                    "irreducible",
                    "not reducible" if not report.reducible else "no gamma constructible",
                )
        else:
            self.selection = PathSelection("irreducible", "requested")

        if self.path == "reducible":
            self.expansion = build_reducible(self.reduced, K, mode="auto", seed=seed)
            if not self.expansion.symbolic:
                # no polynomial drift: numeric rebuild per center at call time
                self.expansion = None
            self._gamma_theta_free = all(
                not param_refs(g) for g in self.reduced.gamma
            )
        self._point_cache: dict = {}
        self._ingredient_cache: dict = {}

    @property
    def path(self) -> str:
        return self.selection.path

    # -- helpers ---------------------------------------------------------------

    def _gamma_of(self, rows: np.ndarray, theta) -> np.ndarray:
        cols = [rows[:, j] for j in range(self.model.m)]
        out = np.empty_like(rows)
        for i, g in enumerate(self.reduced.gamma):
            out[:, i] = evaluate(g, cols, theta)
        return out

    def _dv_of(self, rows: np.ndarray, theta) -> np.ndarray:
        cols = [rows[:, j] for j in range(self.model.m)]
        return np.broadcast_to(
            np.asarray(evaluate(self.dv_expr, cols, theta), float), (rows.shape[0],)
        )

    def _reducible_expansion_at(self, y0, theta) -> ReducibleExpansion:
        if self.expansion is not None:
            return self.expansion
        key = (np.asarray(y0, float).tobytes(), tuple(sorted(theta.items())))
        got = self._point_cache.get(key)
        if got is None:
            got = build_reducible(self.reduced, self.K, mode="taylor", y0=y0, theta=theta)
            self._point_cache[key] = got
        return got

    def _irreducible_at(self, x0, theta) -> IrreducibleExpansion:
        key = (np.asarray(x0, float).tobytes(), tuple(sorted(theta.items())))
        got = self._point_cache.get(key)
        if got is None:
            got = build_irreducible(self.model, self.K, x0, theta)
            self._point_cache[key] = got
        return got

    # -- public evaluation -------------------------------------------------------

    def log_transition(self, x, x0, delta: float, theta) -> float:
        """Expansion value of ln p(x | x0, delta; theta)."""
        if delta <= 0.0:
            raise ValueError("delta must be positive")
        x = np.asarray(x, float)
        x0 = np.asarray(x0, float)
        if self.path == "reducible":
            y = self._gamma_of(x[None, :], theta)[0]
            y0 = self._gamma_of(x0[None, :], theta)[0]
            exp = self._reducible_expansion_at(y0, theta)
            dv = float(evaluate(self.dv_expr, x, theta))
            return y_log_density(exp, y, y0, delta, theta) - dv
        exp = self._irreducible_at(x0, theta)
        return exp.log_density(x, delta)

    def path_loglik(self, data, delta: float, theta) -> float:
        """Sum of log transitions over successive pairs (initial density omitted)."""
        x0, x = _pairs(data)
        try:
            terms = self._transition_values(x0, x, delta, theta)
        except (EvaluationError, LikelihoodError, RuntimeError) as err:
            # locate the offending pair for the error report
            for i in range(x0.shape[0]):
                try:
                    self.log_transition(x[i], x0[i], delta, theta)
                except (EvaluationError, LikelihoodError, RuntimeError) as inner:
                    raise LikelihoodError(f"transition {i} failed: {inner}") from inner
            raise LikelihoodError(str(err)) from err
        return math.fsum(terms)

    def _transition_values(self, x0, x, delta, theta) -> np.ndarray:
        """Vector of log transition values, one batched coefficient pass."""
        n = x0.shape[0]
        if self.path == "reducible" and self.expansion is not None:
            y0 = self._gamma_of(x0, theta)
            y = self._gamma_of(x, theta)
            d = y - y0
            out = np.full(n, -0.5 * self.model.m * math.log(2.0 * math.pi * delta))
            out -= self._dv_of(x, theta)
            out += np.sum(d * d, axis=1) * (-0.5 / delta)
            y0_cols = [y0[:, j] for j in range(self.model.m)]
            for k in range(0, self.K + 1):
                weight = delta**k / math.factorial(k)
                for idx, c in self.expansion.coefficients[k].coeffs.items():
                    mono = np.ones(n)
                    for j, p in enumerate(idx):
                        if p:
                            mono = mono * d[:, j] ** p
                    out += weight * mono * np.asarray(evaluate(c, y0_cols, theta))
            return out
        if self.path == "irreducible":
            ingredients = BoundIngredients(self.model, self.K, x0)
            batched = build_irreducible_batch(ingredients, dict(theta))
            return batched.log_density_core(x, delta) - self._dv_of(x, theta)
        return np.array(
            [self.log_transition(x[i], x0[i], delta, theta) for i in range(n)]
        )

    def pde_residual(self, x, x0, delta: float, theta) -> float:
        """Forward-equation residual diagnostic at (x, x0, delta).

        The irreducible path checks the original-coordinate equation; the
        reducible path checks the unit-diffusion equation at (gamma x, gamma x0).
        """
        if self.path == "reducible":
            y = self._gamma_of(np.asarray(x, float)[None, :], theta)[0]
            y0 = self._gamma_of(np.asarray(x0, float)[None, :], theta)[0]
            exp = self._reducible_expansion_at(y0, theta)
            return y_forward_residual(exp, self.reduced, y, y0, delta, theta)
        exp = self._irreducible_at(x0, theta)
        return x_forward_residual(self.model, exp, x, delta)

    # -- bound objective for fits ---------------------------------------------------

    def make_loglik(self, data, delta: float):
        """Bind a data set; returns ``f(theta) -> float`` for likelihood sweeps."""
        x0, x = _pairs(data)
        if self.path == "irreducible":
            return _BoundIrreducible(self, x0, x, delta)
        if self.expansion is not None and self._gamma_theta_free:
            return _BoundReducibleSymbolic(self, x0, x, delta)

        def fallback(theta):
            return self.path_loglik((x0, x), delta, theta)

        return fallback


class _BoundReducibleSymbolic:
    """Symbolic reducible expansion bound to fixed transition pairs."""

    def __init__(self, ev: LikelihoodEvaluator, x0, x, delta):
        self.delta = delta
        self.m = ev.model.m
        self.K = ev.K
        n = x0.shape[0]
        # gamma is theta-free here; D_v may carry parameters
        self.y0 = ev._gamma_of(x0, {})
        self.y = ev._gamma_of(x, {})
        d = self.y - self.y0
        x_cols = [x[:, j] for j in range(self.m)]
        if param_refs(ev.dv_expr):
            dv_fn = bind_states_many([ev.dv_expr], x_cols)
            self._dv = lambda theta: np.broadcast_to(np.asarray(dv_fn(theta)[0]), (n,))
        else:
            dv = np.broadcast_to(
                np.asarray(evaluate(ev.dv_expr, x_cols, {}), float), (n,)
            ).copy()
            self._dv = lambda theta: dv
        base = -0.5 * self.m * math.log(2.0 * math.pi * delta)
        base += np.sum(d * d, axis=1) * (-0.5 / delta)  # leading coefficient
        self.base = base
        y0_cols = [self.y0[:, j] for j in range(self.m)]
        entries = []
        exprs = []
        for k in range(0, ev.K + 1):
            weight = delta**k / math.factorial(k)
            for idx, c in ev.expansion.coefficients[k].coeffs.items():
                mono = np.ones(n)
                for j, p in enumerate(idx):
                    if p:
                        mono = mono * d[:, j] ** p
                entries.append(weight * mono)
                exprs.append(c)
        self.monos = entries
        self._coeffs = bind_states_many(exprs, y0_cols)

    def __call__(self, theta) -> float:
        vals = self._coeffs(theta)
        acc = self.base - self._dv(theta)
        for mono, val in zip(self.monos, vals):
            acc = acc + mono * val
        return float(np.sum(acc))


class _BoundIrreducible:
    """Per-theta batched coefficient build over all transition centers."""

    def __init__(self, ev: LikelihoodEvaluator, x0, x, delta):
        self.delta = delta
        self.x = x
        self.ingredients = BoundIngredients(ev.model, ev.K, x0)
        n = x0.shape[0]
        x_cols = [x[:, j] for j in range(ev.model.m)]
        if param_refs(ev.dv_expr):
            dv_fn = bind_states_many([ev.dv_expr], x_cols)
            self._dv = lambda theta: np.broadcast_to(np.asarray(dv_fn(theta)[0]), (n,))
        else:
            dv = np.broadcast_to(
                np.asarray(evaluate(ev.dv_expr, x_cols, {}), float), (n,)
            ).copy()
            self._dv = lambda theta: dv

    def __call__(self, theta) -> float:
        batched = build_irreducible_batch(self.ingredients, theta)
        vals = batched.log_density_core(self.x, self.delta) - self._dv(theta)
        return float(np.sum(vals))
