import numpy as np
import pytest

from difflik.expr import parse_expression


@pytest.fixture(scope="session")
def expr_corpus():
    """Fixed expression corpus used by differentiation and evaluation checks.

    Each entry: (text, state names, param names, theta, a box of valid states).
    Boxes keep evaluation away from ln/sqrt domain edges.
    """
    return [
        ("x1^2 + ln(x2)", ["x1", "x2"], [], {}, [(0.2, 3.0), (0.2, 3.0)]),
        ("k11*(eta1 - x1)", ["x1", "x2"], ["eta1", "k11"], {"eta1": 0.3, "k11": 5.0}, [(-2.0, 2.0), (-2.0, 2.0)]),
        ("exp(-a*x1) + sqrt(x2)", ["x1", "x2"], ["a"], {"a": 1.7}, [(-1.0, 1.0), (0.3, 2.0)]),
        ("sin(x1)*cos(x2) - x1*x2", ["x1", "x2"], [], {}, [(-3.0, 3.0), (-3.0, 3.0)]),
        ("x1*ln(x1*x2)", ["x1", "x2"], [], {}, [(0.3, 2.0), (0.3, 2.0)]),
        ("(x1 + x2)^3/(1 + x1^2)", ["x1", "x2"], [], {}, [(-1.5, 1.5), (-1.5, 1.5)]),
        ("x1^1.5 + x2/x1", ["x1", "x2"], [], {}, [(0.4, 2.5), (0.4, 2.5)]),
        ("exp(x1*x2) - sin(x1^2)", ["x1", "x2"], [], {}, [(-1.0, 1.0), (-1.0, 1.0)]),
        ("ln(1 + exp(b*x1)) - x2^2", ["x1", "x2"], ["b"], {"b": 0.8}, [(-2.0, 2.0), (-2.0, 2.0)]),
        ("sqrt(1 + x1^2 + x2^2)", ["x1", "x2"], [], {}, [(-2.0, 2.0), (-2.0, 2.0)]),
    ]


def sample_box(rng: np.random.Generator, box):
    return [rng.uniform(lo, hi) for lo, hi in box]


def parse_entry(entry):
    text, states, params, theta, box = entry
    return parse_expression(text, states, params), theta, box
