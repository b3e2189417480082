"""Ready-made models: benchmark processes and the reducibility examples.

The bivariate mean-reverting benchmark is parameterized directly at the unit-
diffusion level (eta1, eta2, k11, k12, k22 with the lower-left k21 fixed to
zero for identification), so the same five parameters drive both the unit-
diffusion process and its exponential transform.
"""

from __future__ import annotations

from .model import DiffusionModel, ReducedModel, parse_model_file

OU_PARAMS = ("eta1", "eta2", "k11", "k12", "k22")

#: Table-style true parameter values used by the desk benchmarks.
OU_THETA_TRUE = {"eta1": 0.0, "eta2": 0.0, "k11": 5.0, "k12": 1.0, "k22": 10.0}


def reduced_ou_model() -> DiffusionModel:
    """Bivariate unit-diffusion mean-reverting process dY = kappa(eta - Y)dt + dW."""
    return parse_model_file(
        """
        dim = 2
        states = y1, y2
        params = eta1, eta2, k11, k12, k22
        mu.1 = k11*(eta1 - y1) + k12*(eta2 - y2)
        mu.2 = k22*(eta2 - y2)
        sigma.1.1 = 1
        sigma.2.2 = 1
        """
    )


def exp_ou_model() -> DiffusionModel:
    """Exponential transform X = exp(Y) of the benchmark process.

    Ito's lemma gives state-proportional drift and diagonal sigma = diag(x1, x2);
    the process is reducible through gamma = ln(x).
    """
    return parse_model_file(
        """
        dim = 2
        states = x1, x2
        params = eta1, eta2, k11, k12, k22
        mu.1 = x1*(0.5 + k11*(eta1 - ln(x1)) + k12*(eta2 - ln(x2)))
        mu.2 = x2*(0.5 + k22*(eta2 - ln(x2)))
        sigma.1.1 = x1
        sigma.2.2 = x2
        domain.1 = (0, inf)
        domain.2 = (0, inf)
        """
    )


def brownian_model(m: int) -> DiffusionModel:
    lines = [f"dim = {m}", "states = " + ", ".join(f"x{i+1}" for i in range(m)), "params ="]
    lines += [f"mu.{i+1} = 0" for i in range(m)]
    lines += [f"sigma.{i+1}.{i+1} = 1" for i in range(m)]
    return parse_model_file("\n".join(lines))


def scalar_ou_model() -> DiffusionModel:
    return parse_model_file(
        """
        dim = 1
        states = y1
        params = eta1, k11
        mu.1 = k11*(eta1 - y1)
        sigma.1.1 = 1
        """
    )


def geometric_model() -> DiffusionModel:
    """Scalar state-proportional model dX = m0 X dt + s0 X dW on (0, inf)."""
    return parse_model_file(
        """
        dim = 1
        states = x1
        params = m0, s0
        mu.1 = m0*x1
        sigma.1.1 = s0*x1
        domain.1 = (0, inf)
        """
    )


def sv_irreducible_model() -> DiffusionModel:
    """Diagonal system where sigma_11 depends on x2: not reducible."""
    return parse_model_file(
        """
        dim = 2
        states = x1, x2
        params = a
        mu.1 = 0
        mu.2 = 0
        sigma.1.1 = exp(x2)
        sigma.2.2 = 1 + x2^2
        """
    )


def sv_reducible_model() -> DiffusionModel:
    """Triangular volatility system [[a(x1), a(x1) b(x2)], [0, c(x2)]]: reducible."""
    return parse_model_file(
        """
        dim = 2
        states = x1, x2
        params =
        mu.1 = 0
        mu.2 = 0
        sigma.1.1 = exp(x1)
        sigma.1.2 = exp(x1)*x2
        sigma.2.2 = 1 + x2^2
        """
    )
