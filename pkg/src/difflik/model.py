"""Diffusion model specification, validation, and reduction to unit diffusion.

A :class:`DiffusionModel` is dX = mu(X) dt + sigma(X) dW on a product-of-
intervals domain, with symbolic drift/diffusion entries over named states and
parameters.  This module computes v = sigma sigma^T and D_v = 0.5*ln det v,
classifies reducibility by randomized evaluation of the commutation residual

    sum_l d(sigma_ik)/dx_l sigma_lj - sum_l d(sigma_ij)/dx_l sigma_lk,

and, when possible, constructs the change of variable gamma that turns the
model into unit diffusion (constant sigma, or a diagonal Lamperti transform
from a small pattern table).  Classification is a semantic test at random
interior points, not a symbolic proof; a model that only satisfies the
condition on a measure-zero parameter set can be misclassified.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .expr import (
    Binary,
    Const,
    EvaluationError,
    Expression,
    Param,
    State,
    Unary,
    differentiate,
    evaluate,
    format_expression,
    param_refs,
    parse_expression,
    simplify,
    state_refs,
    substitute,
)

__all__ = [
    "DiffusionModel",
    "ReducedModel",
    "ValidationReport",
    "ReducibilityReport",
    "ModelFileError",
    "ReductionUnavailableError",
    "parse_model_file",
    "load_model",
    "validate_model",
    "compute_v",
    "compute_Dv",
    "check_reducibility",
    "derive_reduced_model",
    "sample_interior",
]


class ModelFileError(ValueError):
    pass


class ReductionUnavailableError(RuntimeError):
    """No unit-diffusion transform is constructible; use the irreducible path."""


@dataclass(frozen=True)
class DiffusionModel:
    m: int
    state_names: tuple[str, ...]
    param_names: tuple[str, ...]
    mu: tuple[Expression, ...]
    sigma: tuple[tuple[Expression, ...], ...]
    domain: tuple[tuple[float, float], ...]
    gamma: tuple[Expression, ...] | None = None
    gamma_inv: tuple[Expression, ...] | None = None

    def __post_init__(self):
        if len(self.state_names) != self.m or len(self.mu) != self.m:
            raise ValueError("state/drift sizes do not match dimension")
        if len(self.sigma) != self.m or any(len(row) != self.m for row in self.sigma):
            raise ValueError("sigma must be an m x m matrix")
        if len(self.domain) != self.m:
            raise ValueError("need one domain interval per coordinate")
        for lo, hi in self.domain:
            if not lo < hi:
                raise ValueError(f"empty domain interval ({lo}, {hi})")
        for e in self.all_entries():
            for idx in state_refs(e):
                if idx > self.m:
                    raise ValueError(f"state index {idx} out of range in '{format_expression(e)}'")

    def all_entries(self):
        yield from self.mu
        for row in self.sigma:
            yield from row
        if self.gamma:
            yield from self.gamma
        if self.gamma_inv:
            yield from self.gamma_inv

    def sigma_values(self, x, theta) -> np.ndarray:
        return np.array(
            [[float(evaluate(e, x, theta)) for e in row] for row in self.sigma]
        )


@dataclass(frozen=True)
class ReducedModel:
    """Unit-diffusion companion dY = mu_Y(Y) dt + dW of a reducible model.

    State indices inside ``mu_y`` refer to the Y coordinates.  The Y domain is
    not tracked; expansion construction only ever works at observed points
    y = gamma(x) of interior x.
    """

    m: int
    state_names: tuple[str, ...]
    param_names: tuple[str, ...]
    mu_y: tuple[Expression, ...]
    parent: DiffusionModel | None = None
    gamma: tuple[Expression, ...] | None = None
    gamma_inv: tuple[Expression, ...] | None = None


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)
    unchecked: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        """Hard validity: positive-definite v everywhere probed."""
        return all(c.passed for c in self.checks if c.name == "v_positive_definite")

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = [
            f"[{'ok' if c.passed else 'FAIL'}] {c.name}" + (f": {c.detail}" if c.detail else "")
            for c in self.checks
        ]
        lines += [f"[unchecked] {name}" for name in self.unchecked]
        return "\n".join(lines)


@dataclass
class ReducibilityReport:
    reducible: bool
    max_residual: float
    probes: int

    @property
    def classification(self) -> str:
        return "reducible" if self.reducible else "irreducible"


# ---------------------------------------------------------------------------
# sampling helpers


def sample_interior(domain, rng: np.random.Generator, scale: float = 1.0) -> list[float]:
    """A random interior point of a product-of-intervals domain."""
    out = []
    for lo, hi in domain:
        if math.isinf(lo) and math.isinf(hi):
            out.append(scale * rng.standard_normal())
        elif math.isinf(hi):
            out.append(lo + math.exp(0.5 * rng.standard_normal()) * scale)
        elif math.isinf(lo):
            out.append(hi - math.exp(0.5 * rng.standard_normal()) * scale)
        else:
            width = hi - lo
            out.append(rng.uniform(lo + 0.05 * width, hi - 0.05 * width))
    return out


def _theta_for_probe(model, theta, rng) -> dict[str, float]:
    if theta is not None:
        return dict(theta)
    return {name: rng.uniform(0.5, 2.0) for name in model.param_names}


# ---------------------------------------------------------------------------
# validation (Assumptions 1-4, where checkable)


def validate_model(
    model: DiffusionModel,
    theta: Mapping[str, float] | None = None,
    probes: int = 64,
    seed: int = 0,
) -> ValidationReport:
    """Probe the model at random interior points.

    Checks v(x) symmetric positive definite and finiteness of mu/sigma entries
    plus their first two derivatives.  Growth conditions are reported as
    unchecked.  With ``theta=None`` each probe draws random parameter values.
    """
    rng = np.random.default_rng(seed)
    report = ValidationReport(unchecked=["growth_conditions"])

    pd_ok, pd_detail = True, ""
    smooth_ok, smooth_detail = True, ""
    inverse_ok, inverse_detail = True, ""

    # structured probes catch coefficient zeros that random draws miss:
    # the domain center, and the center with each coordinate zeroed when 0
    # is interior to that coordinate's interval
    center = [_reference_point(iv) for iv in model.domain]
    structured = [list(center)]
    for i, (lo, hi) in enumerate(model.domain):
        if lo < 0.0 < hi:
            probe = list(center)
            probe[i] = 0.0
            structured.append(probe)

    derivative_entries = []
    for e in list(model.mu) + [s for row in model.sigma for s in row]:
        firsts = [differentiate(e, j) for j in range(1, model.m + 1)]
        seconds = [
            differentiate(firsts[j], k + 1)
            for j in range(model.m)
            for k in range(j, model.m)
        ]
        derivative_entries.append((e, firsts + seconds))

    for probe_index in range(probes + len(structured)):
        if probe_index < len(structured):
            x = structured[probe_index]
        else:
            x = sample_interior(model.domain, rng)
        th = _theta_for_probe(model, theta, rng)
        try:
            sig = model.sigma_values(x, th)
            v = sig @ sig.T
            np.linalg.cholesky(v)
            eigs = np.linalg.eigvalsh(v)
            if eigs[0] <= 1e-12 * (1.0 + eigs[-1]):
                raise np.linalg.LinAlgError("numerically singular")
        except (EvaluationError, np.linalg.LinAlgError):
            if pd_ok:
                pd_ok = False
                pd_detail = f"witness x = {np.round(x, 6).tolist()}"
        if smooth_ok:
            try:
                for e, derivs in derivative_entries:
                    evaluate(e, x, th)
                    for de in derivs:
                        evaluate(de, x, th)
            except EvaluationError as err:
                smooth_ok = False
                smooth_detail = f"{err} at x = {np.round(x, 6).tolist()}"
        if inverse_ok and model.gamma is not None and model.gamma_inv is not None:
            try:
                y = [float(evaluate(g, x, th)) for g in model.gamma]
                back = [float(evaluate(g, y, th)) for g in model.gamma_inv]
                rel = max(
                    abs(b - xi) / (1.0 + abs(xi)) for b, xi in zip(back, x)
                )
                if rel > 1e-8:
                    inverse_ok = False
                    inverse_detail = f"round-trip error {rel:.2e} at x = {np.round(x, 6).tolist()}"
            except EvaluationError as err:
                inverse_ok = False
                inverse_detail = str(err)

    report.checks.append(CheckResult("v_positive_definite", pd_ok, pd_detail))
    report.checks.append(CheckResult("coefficients_smooth", smooth_ok, smooth_detail))
    if model.gamma is not None and model.gamma_inv is not None:
        report.checks.append(CheckResult("gamma_inverse_roundtrip", inverse_ok, inverse_detail))
    return report


# ---------------------------------------------------------------------------
# v and D_v


def compute_v(model: DiffusionModel) -> tuple[tuple[Expression, ...], ...]:
    """Infinitesimal covariance v = sigma sigma^T, entrywise symbolic."""
    m = model.m
    rows = []
    for i in range(m):
        row = []
        for j in range(m):
            acc: Expression = Const(0.0)
            for l in range(m):
                acc = acc + model.sigma[i][l] * model.sigma[j][l]
            row.append(simplify(acc))
        rows.append(tuple(row))
    return tuple(rows)


def _symbolic_det(mat: Sequence[Sequence[Expression]]) -> Expression:
    n = len(mat)
    if n == 1:
        return mat[0][0]
    acc: Expression = Const(0.0)
    for j in range(n):
        minor = [
            [mat[r][c] for c in range(n) if c != j] for r in range(1, n)
        ]
        term = mat[0][j] * _symbolic_det(minor)
        acc = acc + term if j % 2 == 0 else acc - term
    return acc


def compute_Dv(model: DiffusionModel) -> Expression:
    """D_v = 0.5 * ln det v, with the determinant expanded symbolically (m <= 4)."""
    if model.m > 4:
        raise ValueError("symbolic determinant supported for m <= 4")
    det = simplify(_symbolic_det(compute_v(model)))
    return simplify(Const(0.5) * Unary("ln", det))


# ---------------------------------------------------------------------------
# reducibility


def check_reducibility(
    model: DiffusionModel,
    theta: Mapping[str, float] | None = None,
    probes: int = 64,
    seed: int = 0,
    tol: float = 1e-9,
) -> ReducibilityReport:
    """Classify by the commutation residual at random interior points.

    Reducible iff max residual < tol * (1 + max |sigma|) at every probe.
    Probe points where evaluation fails are resampled (bounded retries).
    """
    rng = np.random.default_rng(seed)
    m = model.m
    dsigma = [
        [[differentiate(model.sigma[i][k], l + 1) for l in range(m)] for k in range(m)]
        for i in range(m)
    ]
    max_rel = 0.0
    done = 0
    attempts = 0
    while done < probes:
        attempts += 1
        if attempts > 5 * probes + 20:
            raise EvaluationError("could not evaluate sigma at enough interior points")
        x = sample_interior(model.domain, rng)
        th = _theta_for_probe(model, theta, rng)
        try:
            sig = model.sigma_values(x, th)
            dsig = np.array(
                [
                    [
                        [float(evaluate(dsigma[i][k][l], x, th)) for l in range(m)]
                        for k in range(m)
                    ]
                    for i in range(m)
                ]
            )
        except EvaluationError:
            continue
        done += 1
        scale = 1.0 + np.abs(sig).max()
        # residual_{ijk} = sum_l dsigma_{ik}/dx_l sigma_{lj} - sum_l dsigma_{ij}/dx_l sigma_{lk}
        res = np.einsum("ikl,lj->ijk", dsig, sig) - np.einsum(
            "ijl,lk->ijk", dsig, sig
        )
        for j in range(m):
            for k in range(j + 1, m):
                max_rel = max(max_rel, float(np.abs(res[:, j, k]).max()) / scale)
    return ReducibilityReport(reducible=max_rel < tol, max_residual=max_rel, probes=done)


# ---------------------------------------------------------------------------
# reduction to unit diffusion


def _reference_point(interval: tuple[float, float]) -> float:
    lo, hi = interval
    if math.isinf(lo) and math.isinf(hi):
        return 0.0
    if math.isinf(hi):
        return lo + 1.0
    if math.isinf(lo):
        return hi - 1.0
    return 0.5 * (lo + hi)


def _mul_factors(e: Expression) -> list[Expression]:
    if isinstance(e, Binary) and e.op == "mul":
        return _mul_factors(e.lhs) + _mul_factors(e.rhs)
    return [e]


def _add_terms(e: Expression) -> list[tuple[float, Expression]]:
    if isinstance(e, Binary) and e.op == "add":
        return _add_terms(e.lhs) + _add_terms(e.rhs)
    if isinstance(e, Binary) and e.op == "sub":
        return _add_terms(e.lhs) + [(-s, t) for s, t in _add_terms(e.rhs)]
    if isinstance(e, Unary) and e.op == "neg":
        return [(-s, t) for s, t in _add_terms(e.arg)]
    return [(1.0, e)]


def _lamperti_1d(sigma_ii: Expression, var: int, x_ref: float):
    """gamma, gamma_inv for one diagonal coordinate, from the pattern table.

    Recognized shapes of sigma(x): c * x^p (numeric p, including constants),
    c * exp(a*x), and affine a + b*x, with state-free symbolic factors c, a, b.
    Returns None when the entry matches no pattern.
    """
    e = simplify(sigma_ii)
    x = State(var)

    # multiplicative split: state-free coefficient times a core in x
    coeff: Expression = Const(1.0)
    power = 0.0
    exp_rate: Expression | None = None
    recognized = True
    for factor in _mul_factors(e):
        if not state_refs(factor):
            coeff = simplify(coeff * factor)
        elif factor == x:
            power += 1.0
        elif (
            isinstance(factor, Binary)
            and factor.op == "pow"
            and factor.lhs == x
            and isinstance(factor.rhs, Const)
        ):
            power += factor.rhs.value
        elif isinstance(factor, Unary) and factor.op == "exp":
            terms = _mul_factors(factor.arg)
            rate: Expression = Const(1.0)
            seen_x = False
            for t in terms:
                if t == x:
                    seen_x = True
                elif not state_refs(t):
                    rate = simplify(rate * t)
                else:
                    recognized = False
            if seen_x and exp_rate is None and recognized:
                exp_rate = rate
            else:
                recognized = False
        else:
            recognized = False

    if recognized and exp_rate is None:
        p = power
        if p == 0.0:
            gamma = simplify((x - Const(x_ref)) / coeff)
            ginv = simplify(Const(x_ref) + coeff * x)
            return gamma, ginv
        if p == 1.0:
            if x_ref <= 0.0:
                return None
            gamma = simplify((Unary("ln", x) - Const(math.log(x_ref))) / coeff)
            ginv = simplify(Const(x_ref) * Unary("exp", coeff * x))
            return gamma, ginv
        q = 1.0 - p
        gamma = simplify((x ** Const(q) - Const(x_ref**q)) / (coeff * Const(q)))
        ginv = simplify((Const(x_ref**q) + coeff * Const(q) * x) ** Const(1.0 / q))
        return gamma, ginv

    if recognized and exp_rate is not None and power == 0.0:
        a = exp_rate
        ca = simplify(coeff * a)
        e_ref = simplify(Unary("exp", Unary("neg", a * Const(x_ref))))
        gamma = simplify((e_ref - Unary("exp", Unary("neg", a * x))) / ca)
        ginv = simplify(Unary("neg", Unary("ln", e_ref - ca * x)) / a)
        return gamma, ginv

    # affine a + b*x
    terms = _add_terms(e)
    a_expr: Expression = Const(0.0)
    b_expr: Expression = Const(0.0)
    for sign, t in terms:
        if not state_refs(t):
            a_expr = simplify(a_expr + Const(sign) * t)
            continue
        factors = _mul_factors(t)
        rest: Expression = Const(sign)
        seen_x = False
        for f in factors:
            if f == x and not seen_x:
                seen_x = True
            elif not state_refs(f):
                rest = simplify(rest * f)
            else:
                return None
        if not seen_x:
            return None
        b_expr = simplify(b_expr + rest)
    if b_expr == Const(0.0):
        return None
    ref_val = simplify(a_expr + b_expr * Const(x_ref))
    if isinstance(ref_val, Const) and ref_val.value <= 0.0:
        return None
    gamma = simplify((Unary("ln", a_expr + b_expr * x) - Unary("ln", ref_val)) / b_expr)
    ginv = simplify((ref_val * Unary("exp", b_expr * x) - a_expr) / b_expr)
    return gamma, ginv


def _symbolic_inverse(mat, m: int):
    """Adjugate inverse of a small symbolic matrix (m <= 3)."""
    det = simplify(_symbolic_det(mat))
    if m == 1:
        return ((simplify(Const(1.0) / det),),)
    cof = []
    for i in range(m):
        row = []
        for j in range(m):
            minor = [
                [mat[r][c] for c in range(m) if c != j]
                for r in range(m)
                if r != i
            ]
            sign = 1.0 if (i + j) % 2 == 0 else -1.0
            row.append(simplify(Const(sign) * _symbolic_det(minor)))
        cof.append(row)
    # inverse[i][j] = cof[j][i] / det
    return tuple(
        tuple(simplify(cof[j][i] / det) for j in range(m)) for i in range(m)
    )


def derive_reduced_model(model: DiffusionModel) -> ReducedModel:
    """Construct the unit-diffusion companion process.

    Uses the supplied (gamma, gamma_inv) when present; otherwise builds one for
    constant sigma (gamma = sigma^{-1} x) or for diagonal sigma whose entries
    depend only on their own coordinate and match the antiderivative pattern
    table.  The drift is the Ito image composed with gamma_inv:

        mu_Y,i(y) = [sum_j dgamma_i/dx_j mu_j
                     + 0.5 sum_{j,k} v_jk d2gamma_i/dx_j dx_k] (x = gamma_inv(y))
    """
    m = model.m
    if model.gamma is not None and model.gamma_inv is not None:
        gamma, gamma_inv = model.gamma, model.gamma_inv
    elif all(not state_refs(e) for row in model.sigma for e in row):
        if m > 3:
            raise ReductionUnavailableError(
                "constant-sigma construction implemented for m <= 3; supply gamma"
            )
        inv = _symbolic_inverse([list(row) for row in model.sigma], m)
        gamma = tuple(
            simplify(
                sum((inv[i][j] * State(j + 1) for j in range(m)), start=Const(0.0))
            )
            for i in range(m)
        )
        gamma_inv = tuple(
            simplify(
                sum(
                    (model.sigma[i][j] * State(j + 1) for j in range(m)),
                    start=Const(0.0),
                )
            )
            for i in range(m)
        )
    else:
        diagonal = all(
            simplify(model.sigma[i][j]) == Const(0.0)
            for i in range(m)
            for j in range(m)
            if i != j
        )
        own_var = diagonal and all(
            state_refs(model.sigma[i][i]) <= {i + 1} for i in range(m)
        )
        if not own_var:
            raise ReductionUnavailableError(
                "no gamma supplied and sigma matches no built-in pattern; "
                "use the irreducible path"
            )
        gamma_list, ginv_list = [], []
        for i in range(m):
            got = _lamperti_1d(model.sigma[i][i], i + 1, _reference_point(model.domain[i]))
            if got is None:
                raise ReductionUnavailableError(
                    f"sigma[{i + 1}][{i + 1}] = '{format_expression(model.sigma[i][i])}' "
                    "matches no antiderivative pattern; use the irreducible path"
                )
            gamma_list.append(got[0])
            ginv_list.append(got[1])
        gamma, gamma_inv = tuple(gamma_list), tuple(ginv_list)

    v = compute_v(model)
    mu_y = []
    ginv_map = {j + 1: gamma_inv[j] for j in range(m)}
    for i in range(m):
        acc: Expression = Const(0.0)
        for j in range(m):
            acc = acc + differentiate(gamma[i], j + 1) * model.mu[j]
        for j in range(m):
            for k in range(m):
                second = differentiate(differentiate(gamma[i], j + 1), k + 1)
                acc = acc + Const(0.5) * v[j][k] * second
        mu_y.append(simplify(substitute(simplify(acc), ginv_map)))

    return ReducedModel(
        m=m,
        state_names=tuple(f"y{i + 1}" for i in range(m)),
        param_names=model.param_names,
        mu_y=tuple(mu_y),
        parent=model,
        gamma=gamma,
        gamma_inv=gamma_inv,
    )


# ---------------------------------------------------------------------------
# model file format


_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


def parse_model_file(text: str) -> DiffusionModel:
    """Parse the line-oriented ``key = value`` model format.

    Lines hold one or more ``key = value`` entries separated by ';'; '#'
    starts a comment.  Unspecified sigma entries default to "0"; unspecified
    domains to (-inf, inf).
    """
    entries: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        for chunk in filter(None, (c.strip() for c in line.split(";"))):
            if "=" not in chunk:
                raise ModelFileError(f"line {lineno}: expected 'key = value', got {chunk!r}")
            key, value = (s.strip() for s in chunk.split("=", 1))
            if not _KEY_RE.match(key):
                raise ModelFileError(f"line {lineno}: bad key {key!r}")
            if key in entries:
                raise ModelFileError(f"line {lineno}: duplicate key {key!r}")
            entries[key] = (value, lineno)

    def take(key, default=None):
        if key in entries:
            return entries.pop(key)[0]
        return default

    dim_raw = take("dim")
    if dim_raw is None:
        raise ModelFileError("missing 'dim'")
    try:
        m = int(dim_raw)
    except ValueError as err:
        raise ModelFileError(f"bad dim value {dim_raw!r}") from err
    states_raw = take("states")
    if states_raw is None:
        raise ModelFileError("missing 'states'")
    states = tuple(s.strip() for s in states_raw.split(",") if s.strip())
    if len(states) != m:
        raise ModelFileError(f"expected {m} state names, got {len(states)}")
    params_raw = take("params", "")
    params = tuple(s.strip() for s in params_raw.split(",") if s.strip())

    def parse_entry(key, text_value, lineno):
        try:
            return parse_expression(text_value, states, params)
        except Exception as err:
            raise ModelFileError(f"line {lineno}: in {key}: {err}") from err

    mu = []
    for i in range(1, m + 1):
        if f"mu.{i}" not in entries:
            raise ModelFileError(f"missing 'mu.{i}'")
        value, lineno = entries.pop(f"mu.{i}")
        mu.append(parse_entry(f"mu.{i}", value, lineno))

    sigma = [[Const(0.0)] * m for _ in range(m)]
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            key = f"sigma.{i}.{j}"
            if key in entries:
                value, lineno = entries.pop(key)
                sigma[i - 1][j - 1] = parse_entry(key, value, lineno)

    domain = []
    for i in range(1, m + 1):
        raw = take(f"domain.{i}")
        if raw is None:
            domain.append((-math.inf, math.inf))
            continue
        mm = re.match(r"^\(\s*([^,]+)\s*,\s*([^)]+)\s*\)$", raw)
        if not mm:
            raise ModelFileError(f"bad domain.{i} value {raw!r}")
        domain.append((float(mm.group(1)), float(mm.group(2))))

    def optional_vector(prefix):
        keys = [k for k in entries if k.startswith(prefix + ".")]
        if not keys:
            return None
        out = []
        for i in range(1, m + 1):
            key = f"{prefix}.{i}"
            if key not in entries:
                raise ModelFileError(f"missing '{key}' (all {prefix} components required)")
            value, lineno = entries.pop(key)
            out.append(parse_entry(key, value, lineno))
        return tuple(out)

    gamma = optional_vector("gamma")
    gamma_inv = optional_vector("gamma_inv")

    if entries:
        key = next(iter(entries))
        raise ModelFileError(f"line {entries[key][1]}: unknown key {key!r}")

    return DiffusionModel(
        m=m,
        state_names=states,
        param_names=params,
        mu=tuple(mu),
        sigma=tuple(tuple(row) for row in sigma),
        domain=tuple(domain),
        gamma=gamma,
        gamma_inv=gamma_inv,
    )


def load_model(path) -> DiffusionModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model_file(fh.read())


def format_model_file(model: DiffusionModel) -> str:
    names = model.state_names
    lines = [
        f"dim = {model.m}",
        f"states = {', '.join(names)}",
        f"params = {', '.join(model.param_names)}",
    ]
    for i, e in enumerate(model.mu, start=1):
        lines.append(f"mu.{i} = {format_expression(e, names)}")
    for i in range(model.m):
        for j in range(model.m):
            e = model.sigma[i][j]
            if not (isinstance(e, Const) and e.value == 0.0):
                lines.append(f"sigma.{i + 1}.{j + 1} = {format_expression(e, names)}")
    for i, (lo, hi) in enumerate(model.domain, start=1):
        lines.append(f"domain.{i} = ({lo}, {hi})")
    if model.gamma:
        for i, e in enumerate(model.gamma, start=1):
            lines.append(f"gamma.{i} = {format_expression(e, names)}")
    if model.gamma_inv:
        for i, e in enumerate(model.gamma_inv, start=1):
            lines.append(f"gamma_inv.{i} = {format_expression(e, names)}")
    return "\n".join(lines) + "\n"
