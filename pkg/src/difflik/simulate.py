"""Data generation and exact Ornstein-Uhlenbeck oracles.

For dX = beta (alpha - X) dt + sigma dW the transition law is Gaussian:

    X_{t+D} | X_t = x0  ~  N(m(D, x0), Omega(D)),
    m(D, x0) = alpha + exp(-beta D)(x0 - alpha),
    Omega(D) = lam - exp(-beta D) lam exp(-beta^T D),

where lam solves the Lyapunov equation beta lam + lam beta^T = sigma sigma^T.
The exact sampler and log-density below feed the estimator benchmarks; a
generic Euler-Maruyama scheme and the exponential-OU sampler (exact, since
ln X is itself OU) cover the nonlinear test models.

Randomness comes from counter-based Philox streams keyed by (seed, stream);
normal variates are produced by inverse-CDF transform of 53-bit uniforms, so
paths reproduce bit-for-bit across platforms and worker layouts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm
from scipy.special import ndtri

from .expr import EvaluationError, evaluate

__all__ = [
    "OUSpec",
    "RngStream",
    "SimulationError",
    "stationary_cov",
    "bivariate_stationary_cov",
    "matrix_exp",
    "transition_moments",
    "ou_exact_step",
    "ou_exact_path",
    "ou_exact_logdensity",
    "ou_stationary_draw",
    "euler_path",
    "exp_ou_path",
]


class SimulationError(RuntimeError):
    pass


class RngStream:
    """Deterministic stream of uniforms/normals from a Philox generator.

    (seed, stream) fully determines every variate; distinct stream indices
    give statistically independent streams by the counter-based construction.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def uniform(self, size=None) -> np.ndarray | float:
        """Uniforms in the open interval (0, 1)."""
        k = self._gen.integers(0, 1 << 53, size=size, dtype=np.int64)
        return (k + 0.5) * (2.0**-53)

    def normal(self, size=None) -> np.ndarray | float:
        """Standard normals via inverse-CDF transform (platform stable)."""
        return ndtri(self.uniform(size=size))


@dataclass(frozen=True)
class OUSpec:
    """Linear mean-reverting diffusion dX = beta (alpha - X) dt + sigma dW."""

    alpha: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.atleast_1d(np.asarray(self.alpha, float)))
        object.__setattr__(self, "beta", np.atleast_2d(np.asarray(self.beta, float)))
        object.__setattr__(self, "sigma", np.atleast_2d(np.asarray(self.sigma, float)))
        m = self.alpha.shape[0]
        if self.beta.shape != (m, m) or self.sigma.shape != (m, m):
            raise ValueError("alpha, beta, sigma dimensions do not agree")

    @property
    def m(self) -> int:
        return self.alpha.shape[0]

    @property
    def stationary(self) -> bool:
        return bool(np.all(np.linalg.eigvals(self.beta).real > 0.0))


def matrix_exp(a: np.ndarray, t: float = 1.0) -> np.ndarray:
    """exp(a*t) by scaling-and-squaring with a diagonal Pade core (scipy)."""
    return expm(np.asarray(a, float) * t)


def stationary_cov(spec: OUSpec) -> np.ndarray:
    """Solve beta lam + lam beta^T = sigma sigma^T over the symmetric unknowns."""
    m = spec.m
    q = spec.sigma @ spec.sigma.T
    pairs = [(i, j) for i in range(m) for j in range(i, m)]
    n = len(pairs)
    a = np.zeros((n, n))
    b = np.zeros(n)
    for row, (i, j) in enumerate(pairs):
        b[row] = q[i, j]
        for col, (k, l) in enumerate(pairs):
            # contribution of lam_{kl} (symmetric) to (beta lam + lam beta^T)_{ij}
            coeff = 0.0
            if l == j:
                coeff += spec.beta[i, k]
            if k == j and k != l:
                coeff += spec.beta[i, l]
            if l == i:
                coeff += spec.beta[j, k]
            if k == i and k != l:
                coeff += spec.beta[j, l]
            a[row, col] = coeff
    try:
        x = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as err:
        raise SimulationError("singular Lyapunov operator") from err
    lam = np.zeros((m, m))
    for col, (k, l) in enumerate(pairs):
        lam[k, l] = lam[l, k] = x[col]
    residual = np.abs(spec.beta @ lam + lam @ spec.beta.T - q).max()
    if residual > 1e-12 * max(1.0, np.abs(q).max()):
        raise SimulationError(f"Lyapunov residual {residual:.2e} too large")
    return lam


def bivariate_stationary_cov(spec: OUSpec) -> np.ndarray:
    """Closed-form m = 2 solution; kept as a cross-check of the general solve."""
    if spec.m != 2:
        raise ValueError("closed form applies to m = 2 only")
    beta = spec.beta
    q = spec.sigma @ spec.sigma.T
    trb = np.trace(beta)
    detb = np.linalg.det(beta)
    if trb == 0.0 or detb == 0.0:
        raise SimulationError("closed form requires tr(beta) != 0 and det(beta) != 0")
    shifted = beta - trb * np.eye(2)
    return (detb * q + shifted @ q @ shifted.T) / (2.0 * trb * detb)


def transition_moments(spec: OUSpec, x0: np.ndarray, delta: float):
    """Conditional mean(s) and covariance of X_{t+delta} given X_t = x0."""
    lam = stationary_cov(spec)
    decay = matrix_exp(-spec.beta, delta)
    omega = lam - decay @ lam @ decay.T
    omega = 0.5 * (omega + omega.T)
    x0 = np.asarray(x0, float)
    mean = spec.alpha + (x0 - spec.alpha) @ decay.T
    return mean, omega


def _chol(omega: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(omega)
    except np.linalg.LinAlgError as err:
        raise SimulationError("transition covariance is not positive definite") from err


def ou_exact_step(spec: OUSpec, x0, delta: float, rng: RngStream) -> np.ndarray:
    """One exact transition draw from N(m(delta, x0), Omega(delta))."""
    mean, omega = transition_moments(spec, x0, delta)
    z = rng.normal(size=spec.m)
    return mean + _chol(omega) @ z


def ou_exact_path(spec: OUSpec, x0, delta: float, n: int, rng: RngStream) -> np.ndarray:
    """n exact steps; returns the (n+1, m) path including the start point."""
    lam = stationary_cov(spec)
    decay = matrix_exp(-spec.beta, delta)
    omega = lam - decay @ lam @ decay.T
    chol = _chol(0.5 * (omega + omega.T))
    z = rng.normal(size=(n, spec.m))
    path = np.empty((n + 1, spec.m))
    path[0] = np.asarray(x0, float)
    for i in range(n):
        mean = spec.alpha + decay @ (path[i] - spec.alpha)
        path[i + 1] = mean + chol @ z[i]
    return path


def ou_exact_logdensity(spec: OUSpec, x, x0, delta: float):
    """Exact Gaussian log transition density, vectorized over rows of (x, x0)."""
    mean, omega = transition_moments(spec, x0, delta)
    chol = _chol(omega)
    x = np.asarray(x, float)
    resid = x - mean
    single = resid.ndim == 1
    if single:
        resid = resid[None, :]
    sol = np.linalg.solve(chol, resid.T)
    quad = np.sum(sol**2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    out = -0.5 * (spec.m * np.log(2.0 * np.pi) + logdet + quad)
    return float(out[0]) if single else out


def ou_stationary_draw(spec: OUSpec, rng: RngStream, size: int | None = None) -> np.ndarray:
    """Draw from the stationary law N(alpha, lam)."""
    if not spec.stationary:
        raise SimulationError("process is not stationary (beta eigenvalues)")
    lam = stationary_cov(spec)
    chol = _chol(lam)
    if size is None:
        return spec.alpha + chol @ rng.normal(size=spec.m)
    z = rng.normal(size=(size, spec.m))
    return spec.alpha + z @ chol.T


def euler_path(
    model,
    theta,
    x0,
    delta: float,
    substeps: int,
    n: int,
    rng: RngStream,
) -> np.ndarray:
    """Euler-Maruyama with step delta/substeps, recording every delta.

    Raises :class:`SimulationError` with the offending step index if the path
    leaves the model domain.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    m = model.m
    h = delta / substeps
    sqrt_h = np.sqrt(h)
    x = np.asarray(x0, float).copy()
    path = np.empty((n + 1, m))
    path[0] = x
    z = rng.normal(size=(n * substeps, m))
    row = 0
    for i in range(1, n + 1):
        for _ in range(substeps):
            try:
                mu = np.array([float(evaluate(e, x, theta)) for e in model.mu])
                sig = model.sigma_values(x, theta)
            except EvaluationError as err:
                raise SimulationError(f"coefficient evaluation failed at step {i}: {err}") from err
            x = x + mu * h + sqrt_h * (sig @ z[row])
            row += 1
            for j, (lo, hi) in enumerate(model.domain):
                if not lo < x[j] < hi:
                    raise SimulationError(f"path left the domain at step {i} (coordinate {j + 1})")
        path[i] = x
    return path


def exp_ou_path(spec: OUSpec, x0, delta: float, n: int, rng: RngStream) -> np.ndarray:
    """Exact sampler for the exponential transform X = exp(Y), Y the OU process."""
    x0 = np.asarray(x0, float)
    if np.any(x0 <= 0.0):
        raise SimulationError("exponential-OU states must be strictly positive")
    y = ou_exact_path(spec, np.log(x0), delta, n, rng)
    return np.exp(y)
