"""Quasi-likelihood maximization and uncertainty reporting.

The optimizer is a deterministic two-phase search: Nelder-Mead localizes the
maximum (derivative-free, robust to the finite-difference noise of terms
scaled by 1/Delta), then BFGS with central-difference gradients polishes.
Box constraints enter through smooth monotone reparameterizations (exp for
one-sided, logistic for two-sided), so the search is unconstrained and never
evaluates outside the box.  Every objective evaluation is tracked and the
best point ever seen is returned, so the result can never be worse than the
starting point.  Objective failures (domain violations, non-finite values,
degenerate builds) count as -inf rather than aborting the search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .expr import EvaluationError
from .irreducible import IrreducibleBuildError
from .likelihood import LikelihoodError

__all__ = ["FitResult", "maximize", "fit", "fisher_info"]

_FAILURES = (
    EvaluationError,
    LikelihoodError,
    IrreducibleBuildError,
    FloatingPointError,
    np.linalg.LinAlgError,
    ZeroDivisionError,
    OverflowError,
)

DEFAULT_OPTIONS = {
    "nm_maxiter": 2000,
    "bfgs_maxiter": 500,
    "xtol_rel": 1e-8,
    "gtol": 1e-6,
    "fd_step": 1e-5,
}


@dataclass
class FitResult:
    theta: dict[str, float]
    loglik: float
    iterations: int
    converged: bool
    hessian: np.ndarray | None = None
    stderr: dict[str, float] | None = None
    message: str = ""
    n_evaluations: int = 0
    param_names: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "theta": self.theta,
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "stderr": self.stderr,
            "hessian": None if self.hessian is None else self.hessian.tolist(),
            "message": self.message,
            "n_evaluations": self.n_evaluations,
        }


class _Reparam:
    """Per-coordinate smooth monotone map between the box and all of R."""

    def __init__(self, bounds):
        self.bounds = bounds

    def encode(self, theta_vec):
        z = np.empty(len(theta_vec))
        for i, (value, bound) in enumerate(zip(theta_vec, self.bounds)):
            lo, hi = bound
            if lo is None and hi is None:
                z[i] = value
            elif hi is None:
                if not value > lo:
                    raise ValueError(f"start value {value} not above lower bound {lo}")
                z[i] = math.log(value - lo)
            elif lo is None:
                if not value < hi:
                    raise ValueError(f"start value {value} not below upper bound {hi}")
                z[i] = math.log(hi - value)
            else:
                if not lo < value < hi:
                    raise ValueError(f"start value {value} outside ({lo}, {hi})")
                u = (value - lo) / (hi - lo)
                z[i] = math.log(u / (1.0 - u))
        return z

    def decode(self, z):
        out = np.empty(len(z))
        for i, (zi, bound) in enumerate(zip(z, self.bounds)):
            lo, hi = bound
            if lo is None and hi is None:
                out[i] = zi
            elif hi is None:
                out[i] = lo + math.exp(min(zi, 700.0))
            elif lo is None:
                out[i] = hi - math.exp(min(zi, 700.0))
            else:
                out[i] = lo + (hi - lo) / (1.0 + math.exp(-zi))
        return out


class _Tracker:
    """Objective wrapper: failure-tolerant, best-ever bookkeeping."""

    def __init__(self, objective, names, reparam):
        self.objective = objective
        self.names = names
        self.reparam = reparam
        self.n_eval = 0
        self.best_value = -math.inf
        self.best_z = None

    def theta_of(self, z) -> dict:
        vec = self.reparam.decode(z)
        return {name: float(v) for name, v in zip(self.names, vec)}

    def __call__(self, z) -> float:
        self.n_eval += 1
        try:
            value = float(self.objective(self.theta_of(z)))
        except _FAILURES:
            value = -math.inf
        if not math.isfinite(value):
            value = -math.inf
        if value > self.best_value:
            self.best_value = value
            self.best_z = np.array(z, copy=True)
        return value


def _nelder_mead(tracker, z0, maxiter, xtol_rel):
    """Standard simplex search (reflection 1, expansion 2, contractions 0.5).

    Returns (iterations, converged-by-diameter).
    """
    n = len(z0)
    simplex = [np.array(z0, float)]
    for i in range(n):
        step = 0.05 * abs(z0[i]) if z0[i] != 0.0 else 0.00025
        point = np.array(z0, float)
        point[i] += step
        simplex.append(point)
    values = [tracker(p) for p in simplex]

    for iteration in range(maxiter):
        order = sorted(range(n + 1), key=lambda i: -values[i])
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        scale = 1.0 + np.abs(simplex[0]).max()
        diameter = max(np.abs(p - simplex[0]).max() for p in simplex[1:])
        if diameter <= xtol_rel * scale:
            return iteration, True
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        reflected = centroid + (centroid - worst)
        f_r = tracker(reflected)
        if f_r > values[0]:
            expanded = centroid + 2.0 * (centroid - worst)
            f_e = tracker(expanded)
            if f_e > f_r:
                simplex[-1], values[-1] = expanded, f_e
            else:
                simplex[-1], values[-1] = reflected, f_r
        elif f_r > values[-2]:
            simplex[-1], values[-1] = reflected, f_r
        else:
            if f_r > values[-1]:
                contracted = centroid + 0.5 * (reflected - centroid)
            else:
                contracted = centroid + 0.5 * (worst - centroid)
            f_c = tracker(contracted)
            if f_c > min(values[-1], f_r):
                simplex[-1], values[-1] = contracted, f_c
            else:
                best = simplex[0]
                for i in range(1, n + 1):
                    simplex[i] = best + 0.5 * (simplex[i] - best)
                    values[i] = tracker(simplex[i])
    return maxiter, False


def _gradient(tracker, z, f_z, step):
    n = len(z)
    g = np.empty(n)
    for i in range(n):
        h = step * (1.0 + abs(z[i]))
        zp, zm = np.array(z), np.array(z)
        zp[i] += h
        zm[i] -= h
        fp, fm = tracker(zp), tracker(zm)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            # one-sided fallback near infeasible regions
            if math.isfinite(fp):
                g[i] = (fp - f_z) / h
            elif math.isfinite(fm):
                g[i] = (f_z - fm) / h
            else:
                g[i] = 0.0
        else:
            g[i] = (fp - fm) / (2.0 * h)
    return g


def _bfgs(tracker, z0, maxiter, gtol, fd_step):
    """Quasi-Newton polish with central finite-difference gradients."""
    z = np.array(z0, float)
    f = tracker(z)
    if not math.isfinite(f):
        return 0, False
    n = len(z)
    h_inv = np.eye(n)
    g = -_gradient(tracker, z, f, fd_step)  # gradient of the negated objective
    for iteration in range(maxiter):
        if np.abs(g).max() < gtol:
            return iteration, True
        direction = -h_inv @ g
        slope = g @ direction
        if slope >= 0.0:
            h_inv = np.eye(n)
            direction = -g
            slope = g @ direction
        # backtracking Armijo on F = -objective
        alpha = 1.0
        f_neg = -f
        accepted = False
        for _ in range(40):
            z_new = z + alpha * direction
            f_new = tracker(z_new)
            if math.isfinite(f_new) and -f_new <= f_neg + 1e-4 * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            return iteration, np.abs(g).max() < gtol
        g_new = -_gradient(tracker, z_new, f_new, fd_step)
        s = z_new - z
        y = g_new - g
        sy = s @ y
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            rho = 1.0 / sy
            eye = np.eye(n)
            h_inv = (eye - rho * np.outer(s, y)) @ h_inv @ (
                eye - rho * np.outer(y, s)
            ) + rho * np.outer(s, s)
        z, f, g = z_new, f_new, g_new
    return maxiter, bool(np.abs(g).max() < gtol)


def maximize(objective, theta0, bounds=None, options=None) -> FitResult:
    """Two-phase maximization of ``objective(theta_dict)`` with box constraints.

    ``theta0`` is an ordered mapping of starting values; ``bounds`` maps names
    to (lo, hi) with None for an infinite side.  The returned point is the
    best ever evaluated; ``converged`` requires both the simplex-diameter and
    gradient-norm criteria.
    """
    opts = dict(DEFAULT_OPTIONS)
    if options:
        opts.update(options)
    names = list(theta0)
    bounds = bounds or {}
    bound_list = [bounds.get(name, (None, None)) for name in names]
    reparam = _Reparam(bound_list)
    tracker = _Tracker(objective, names, reparam)
    z0 = reparam.encode([float(theta0[name]) for name in names])

    f0 = tracker(z0)
    if not math.isfinite(f0):
        raise ValueError("objective is not finite at the starting point")

    nm_iters, nm_ok = _nelder_mead(tracker, z0, opts["nm_maxiter"], opts["xtol_rel"])
    bfgs_iters, grad_ok = _bfgs(
        tracker, tracker.best_z, opts["bfgs_maxiter"], opts["gtol"], opts["fd_step"]
    )

    theta_hat = tracker.theta_of(tracker.best_z)
    return FitResult(
        theta=theta_hat,
        loglik=tracker.best_value,
        iterations=nm_iters + bfgs_iters,
        converged=bool(nm_ok and grad_ok),
        message=f"nelder-mead {nm_iters} iters ({'ok' if nm_ok else 'cap'}), "
        f"bfgs {bfgs_iters} iters ({'ok' if grad_ok else 'cap'})",
        n_evaluations=tracker.n_eval,
        param_names=tuple(names),
    )


def _hessian(objective, theta, names, rel_step=1e-4):
    """Central-difference Hessian with per-coordinate steps (|theta_i| + 1)."""
    p = len(names)
    steps = np.array([rel_step * (abs(theta[name]) + 1.0) for name in names])

    def at(offsets):
        shifted = dict(theta)
        for name, off in zip(names, offsets):
            shifted[name] = theta[name] + off
        return float(objective(shifted))

    f0 = at(np.zeros(p))
    h = np.empty((p, p))
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = steps[i]
        h[i, i] = (at(ei) + at(-ei) - 2.0 * f0) / steps[i] ** 2
    for i in range(p):
        for j in range(i + 1, p):
            ei, ej = np.zeros(p), np.zeros(p)
            ei[i] = steps[i]
            ej[j] = steps[j]
            val = (at(ei + ej) - at(ei - ej) - at(-ei + ej) + at(-ei - ej)) / (
                4.0 * steps[i] * steps[j]
            )
            h[i, j] = h[j, i] = val
    return h


def _stderr_from_hessian(hessian, names):
    try:
        info = -hessian
        np.linalg.cholesky(info)
        cov = np.linalg.inv(info)
    except np.linalg.LinAlgError:
        return None
    return {name: float(math.sqrt(cov[i, i])) for i, name in enumerate(names)}


def fit(model, data, delta, K, theta0, bounds=None, options=None, evaluator=None) -> FitResult:
    """Maximize the expansion log-likelihood of a data set.

    ``model`` may be a DiffusionModel (an evaluator is built with order K) or
    a prebuilt LikelihoodEvaluator passed via ``evaluator``.  The Hessian of
    the log-likelihood at the estimate is computed by central differences on
    the original parameter scale; standard errors come from (-H)^{-1} when
    that matrix is positive definite.
    """
    from .likelihood import LikelihoodEvaluator

    if evaluator is None:
        evaluator = LikelihoodEvaluator(model, K=K, theta_hint=theta0)
    objective = evaluator.make_loglik(data, delta)

    def safe(theta):
        try:
            return objective(theta)
        except _FAILURES:
            return -math.inf

    result = maximize(safe, theta0, bounds=bounds, options=options)
    names = list(theta0)
    try:
        hess = _hessian(safe, result.theta, names)
        if np.all(np.isfinite(hess)):
            result.hessian = hess
            result.stderr = _stderr_from_hessian(hess, names)
        else:
            result.message += "; hessian not finite"
    except _FAILURES:
        result.message += "; hessian evaluation failed"
    return result


def fisher_info(logdensity, stationary_sampler, transition_sampler, theta, delta,
                draws=200, seed=0, rel_step=1e-4):
    """Monte Carlo Fisher information E[-d^2 l / dtheta dtheta^T].

    Draws stationary starting points and one transition each, then takes the
    Hessian (central differences, steps scaled to |theta_i| + 1) of the
    averaged log density over the fixed draws.  Requires a model family with
    a stationary sampler; ``logdensity(x, x0, delta, theta)`` must accept
    batched rows.
    """
    from .simulate import RngStream

    rng = RngStream(seed, 0)
    x0 = stationary_sampler(theta, rng, draws)
    x = transition_sampler(theta, x0, delta, rng)
    names = list(theta)

    def mean_logdensity(th):
        return float(np.mean(logdensity(x, x0, delta, th)))

    h = _hessian(mean_logdensity, dict(theta), names, rel_step=rel_step)
    info = -0.5 * (h + h.T)
    return info
