"""Closed-form log-likelihood expansions for discretely sampled diffusions."""

from .expr import (
    Expression,
    EvaluationError,
    ParseError,
    parse_expression,
    format_expression,
    differentiate,
    evaluate,
    simplify,
)
from .poly import (
    DisplacementPoly,
    multi_indices,
    poly_add,
    poly_mul_trunc,
    poly_partial,
    poly_scale,
    radial_integrate,
    taylor,
    taylor_symbolic,
    tr,
)

__version__ = "0.1.0"
