"""Symbolic scalar expressions over state variables and named parameters.

This is a deliberately small expression language: real constants, state
variables ``x1..xm`` (stored by 1-based index), named parameters, the unary
functions {neg, ln, exp, sqrt, sin, cos} and the binary operations
{add, sub, mul, div, pow}.  It supports exact differentiation, numeric
evaluation (scalars or numpy arrays, broadcast elementwise), a conservative
simplification pass (constant folding and 0/1 identities, never ring
normalization) and parsing/formatting of an infix grammar.

Trees are immutable and hashable with structural equality, so derivative
results can be cached per (expression, variable).  Simplification is a
separate explicit pass; construction never rewrites operands, which keeps
cache keys stable.  The module-level caches are plain dicts: safe for
concurrent reads with GIL-serialized inserts, and cheap to leave per-process.
"""

from __future__ import annotations

import math
import re
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Expression",
    "Const",
    "State",
    "Param",
    "Unary",
    "Binary",
    "EvaluationError",
    "ParseError",
    "parse_expression",
    "format_expression",
    "differentiate",
    "partial_derivative",
    "evaluate",
    "simplify",
    "substitute",
    "state_refs",
    "param_refs",
    "bind_states",
    "bind_states_many",
]

UNARY_OPS = ("neg", "ln", "exp", "sqrt", "sin", "cos")
BINARY_OPS = ("add", "sub", "mul", "div", "pow")

Number = Union[int, float]


class EvaluationError(ArithmeticError):
    """Raised when evaluation produces a non-finite value or invalid math."""

    def __init__(self, message: str, expression: "Expression | None" = None):
        super().__init__(message)
        self.expression = expression


class ParseError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class Expression:
    """Base node.  Subclasses are immutable; do not mutate fields."""

    __slots__ = ("_hash",)

    def __add__(self, other):
        return Binary("add", self, _coerce(other))

    def __radd__(self, other):
        return Binary("add", _coerce(other), self)

    def __sub__(self, other):
        return Binary("sub", self, _coerce(other))

    def __rsub__(self, other):
        return Binary("sub", _coerce(other), self)

    def __mul__(self, other):
        return Binary("mul", self, _coerce(other))

    def __rmul__(self, other):
        return Binary("mul", _coerce(other), self)

    def __truediv__(self, other):
        return Binary("div", self, _coerce(other))

    def __rtruediv__(self, other):
        return Binary("div", _coerce(other), self)

    def __pow__(self, other):
        return Binary("pow", self, _coerce(other))

    def __neg__(self):
        return Unary("neg", self)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"<{format_expression(self)}>"


class Const(Expression):
    __slots__ = ("value",)

    def __init__(self, value: Number):
        object.__setattr__(self, "value", float(value))
        object.__setattr__(self, "_hash", hash(("c", self.value)))

    def __eq__(self, other):
        return type(other) is Const and other.value == self.value

    __hash__ = Expression.__hash__


class State(Expression):
    """State variable by 1-based index."""

    __slots__ = ("index",)

    def __init__(self, index: int):
        if index < 1:
            raise ValueError("state index is 1-based")
        object.__setattr__(self, "index", int(index))
        object.__setattr__(self, "_hash", hash(("x", self.index)))

    def __eq__(self, other):
        return type(other) is State and other.index == self.index

    __hash__ = Expression.__hash__


class Param(Expression):
    __slots__ = ("name",)

    def __init__(self, name: str):
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "_hash", hash(("p", name)))

    def __eq__(self, other):
        return type(other) is Param and other.name == self.name

    __hash__ = Expression.__hash__


class Unary(Expression):
    __slots__ = ("op", "arg")

    def __init__(self, op: str, arg: Expression):
        if op not in UNARY_OPS:
            raise ValueError(f"unknown unary op {op!r}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "arg", arg)
        object.__setattr__(self, "_hash", hash(("u", op, arg._hash)))

    def __eq__(self, other):
        if self is other:
            return True
        return (
            type(other) is Unary
            and other._hash == self._hash
            and other.op == self.op
            and other.arg == self.arg
        )

    __hash__ = Expression.__hash__


class Binary(Expression):
    __slots__ = ("op", "lhs", "rhs")

    def __init__(self, op: str, lhs: Expression, rhs: Expression):
        if op not in BINARY_OPS:
            raise ValueError(f"unknown binary op {op!r}")
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "lhs", lhs)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "_hash", hash(("b", op, lhs._hash, rhs._hash)))

    def __eq__(self, other):
        if self is other:
            return True
        return (
            type(other) is Binary
            and other._hash == self._hash
            and other.op == self.op
            and other.lhs == self.lhs
            and other.rhs == self.rhs
        )

    __hash__ = Expression.__hash__


ZERO = Const(0.0)
ONE = Const(1.0)


def _coerce(value) -> Expression:
    if isinstance(value, Expression):
        return value
    return Const(value)


# ---------------------------------------------------------------------------
# evaluation


_UNARY_FN = {
    "neg": lambda a: -a,
    "ln": np.log,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
}

_BINARY_FN = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
    "pow": lambda a, b: a**b,
}


def _is_finite(value) -> bool:
    if isinstance(value, np.ndarray):
        return bool(np.isfinite(value).all())
    return math.isfinite(value)


def evaluate(
    e: Expression,
    x: Sequence | np.ndarray | None = None,
    theta: Mapping[str, Number] | None = None,
):
    """Evaluate ``e`` at state vector ``x`` and parameter map ``theta``.

    Entries of ``x`` and values of ``theta`` may be scalars or numpy arrays
    (broadcast elementwise).  A non-finite intermediate result raises
    :class:`EvaluationError` naming the offending subexpression instead of
    propagating NaN/inf downstream.
    """
    with np.errstate(all="ignore"):
        return _eval(e, x, theta, {})


def _eval(e, x, theta, memo):
    got = memo.get(e)
    if got is not None:
        return got
    t = type(e)
    if t is Const:
        return e.value
    if t is State:
        if x is None or len(x) < e.index:
            raise EvaluationError(f"state x{e.index} not supplied", e)
        v = x[e.index - 1]
        return np.float64(v) if np.isscalar(v) else v
    if t is Param:
        if theta is None or e.name not in theta:
            raise EvaluationError(f"parameter {e.name!r} not supplied", e)
        v = theta[e.name]
        return np.float64(v) if np.isscalar(v) else v
    if t is Unary:
        a = _eval(e.arg, x, theta, memo)
        out = _UNARY_FN[e.op](a)
        if not _is_finite(out):
            raise EvaluationError(f"non-finite result in '{describe_expression(e)}'", e)
        memo[e] = out
        return out
    a = _eval(e.lhs, x, theta, memo)
    b = _eval(e.rhs, x, theta, memo)
    try:
        out = _BINARY_FN[e.op](a, b)
    except ZeroDivisionError:
        raise EvaluationError(f"division by zero in '{describe_expression(e)}'", e) from None
    if isinstance(out, complex) or not _is_finite(out):
        raise EvaluationError(f"non-finite result in '{describe_expression(e)}'", e)
    memo[e] = out
    return out


def state_refs(e: Expression) -> frozenset[int]:
    """Set of state indices referenced by ``e``."""
    out = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if type(node) is State:
            out.add(node.index)
        elif type(node) is Unary:
            stack.append(node.arg)
        elif type(node) is Binary:
            stack.append(node.lhs)
            stack.append(node.rhs)
    return frozenset(out)


def param_refs(e: Expression) -> frozenset[str]:
    out = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if type(node) is Param:
            out.add(node.name)
        elif type(node) is Unary:
            stack.append(node.arg)
        elif type(node) is Binary:
            stack.append(node.lhs)
            stack.append(node.rhs)
    return frozenset(out)


def substitute(e: Expression, states: Mapping[int, Expression]) -> Expression:
    """Replace state variables by expressions (used for change of variable)."""
    if type(e) is State:
        return states.get(e.index, e)
    if type(e) is Unary:
        return Unary(e.op, substitute(e.arg, states))
    if type(e) is Binary:
        return Binary(e.op, substitute(e.lhs, states), substitute(e.rhs, states))
    return e


# ---------------------------------------------------------------------------
# simplification

_SAFE_FOLD = {
    "neg": lambda a: -a,
    "ln": math.log,
    "exp": math.exp,
    "sqrt": math.sqrt,
    "sin": math.sin,
    "cos": math.cos,
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
    "pow": lambda a, b: a**b,
}


def _fold(op: str, *vals: float) -> Const | None:
    try:
        out = _SAFE_FOLD[op](*vals)
    except (ValueError, OverflowError, ZeroDivisionError):
        return None
    if isinstance(out, complex) or not math.isfinite(out):
        return None
    return Const(out)


def _is_const(e, value=None):
    return type(e) is Const and (value is None or e.value == value)


def _local(e: Expression) -> Expression:
    """One round of local rewrites; children assumed already simplified."""
    if type(e) is Unary:
        a = e.arg
        if type(a) is Const:
            folded = _fold(e.op, a.value)
            if folded is not None:
                return folded
        if e.op == "neg" and type(a) is Unary and a.op == "neg":
            return a.arg
        if e.op == "ln" and type(a) is Unary and a.op == "exp":
            return a.arg
        if e.op == "exp" and type(a) is Unary and a.op == "ln":
            return a.arg
        return e
    if type(e) is Binary:
        a, b = e.lhs, e.rhs
        if type(a) is Const and type(b) is Const:
            folded = _fold(e.op, a.value, b.value)
            if folded is not None:
                return folded
        op = e.op
        if op == "add":
            if _is_const(a, 0.0):
                return b
            if _is_const(b, 0.0):
                return a
        elif op == "sub":
            if _is_const(b, 0.0):
                return a
            if _is_const(a, 0.0):
                return Unary("neg", b)
            if a == b:
                return ZERO
        elif op == "mul":
            if _is_const(a, 0.0) or _is_const(b, 0.0):
                return ZERO
            if _is_const(a, 1.0):
                return b
            if _is_const(b, 1.0):
                return a
            if _is_const(a, -1.0):
                return Unary("neg", b)
            if _is_const(b, -1.0):
                return Unary("neg", a)
        elif op == "div":
            if _is_const(a, 0.0):
                return ZERO
            if _is_const(b, 1.0):
                return a
            if a == b:
                return ONE
        elif op == "pow":
            if _is_const(b, 1.0):
                return a
            if _is_const(b, 0.0):
                return ONE
            if _is_const(a, 1.0):
                return ONE
        return e
    return e


_SIMPLIFY_CACHE: dict[Expression, Expression] = {}


def simplify(e: Expression) -> Expression:
    """Constant folding and 0/1 identity elimination.  Idempotent."""
    cached = _SIMPLIFY_CACHE.get(e)
    if cached is not None:
        return cached
    if type(e) is Unary:
        out = Unary(e.op, simplify(e.arg))
    elif type(e) is Binary:
        out = Binary(e.op, simplify(e.lhs), simplify(e.rhs))
    else:
        out = e
    while True:
        rewritten = _local(out)
        if rewritten is out:
            break
        out = rewritten
    _SIMPLIFY_CACHE[e] = out
    _SIMPLIFY_CACHE.setdefault(out, out)
    return out


# ---------------------------------------------------------------------------
# differentiation

_DIFF_CACHE: dict[tuple[Expression, int], Expression] = {}


def differentiate(e: Expression, var: int) -> Expression:
    """Exact partial derivative with respect to state variable ``var``.

    Constant exponents use the power rule; a non-constant exponent is
    differentiated through the exp(b*ln a) form, which requires a > 0 at
    evaluation points (the caller's concern).  Results are simplified and
    cached per (expression, variable).
    """
    key = (e, var)
    cached = _DIFF_CACHE.get(key)
    if cached is not None:
        return cached
    out = simplify(_diff(e, var))
    _DIFF_CACHE[key] = out
    return out


def _diff(e: Expression, var: int) -> Expression:
    # recurse through the cached entry point so derivative results form a
    # shared DAG; repeated differentiation stays polynomial-size in memory
    t = type(e)
    if t is Const or t is Param:
        return ZERO
    if t is State:
        return ONE if e.index == var else ZERO
    if t is Unary:
        a = e.arg
        da = differentiate(a, var)
        if e.op == "neg":
            return Unary("neg", da)
        if e.op == "ln":
            return Binary("div", da, a)
        if e.op == "exp":
            return Binary("mul", e, da)
        if e.op == "sqrt":
            return Binary("div", da, Binary("mul", Const(2.0), e))
        if e.op == "sin":
            return Binary("mul", Unary("cos", a), da)
        # cos
        return Unary("neg", Binary("mul", Unary("sin", a), da))
    a, b = e.lhs, e.rhs
    da = differentiate(a, var)
    db = differentiate(b, var)
    if e.op == "add":
        return Binary("add", da, db)
    if e.op == "sub":
        return Binary("sub", da, db)
    if e.op == "mul":
        return Binary("add", Binary("mul", da, b), Binary("mul", a, db))
    if e.op == "div":
        num = Binary("sub", Binary("mul", da, b), Binary("mul", a, db))
        return Binary("div", num, Binary("pow", b, Const(2.0)))
    # pow
    if type(b) is Const:
        factor = Binary("mul", b, Binary("pow", a, Const(b.value - 1.0)))
        return Binary("mul", factor, da)
    inner = Binary(
        "add",
        Binary("mul", db, Unary("ln", a)),
        Binary("mul", b, Binary("div", da, a)),
    )
    return Binary("mul", e, inner)


_PARTIAL_CACHE: dict[tuple[Expression, tuple[int, ...]], Expression] = {}


def partial_derivative(e: Expression, orders: tuple[int, ...]) -> Expression:
    """Mixed partial of ``e``; ``orders[j]`` is the derivative order in x_{j+1}."""
    key = (e, tuple(orders))
    cached = _PARTIAL_CACHE.get(key)
    if cached is not None:
        return cached
    out = e
    for j, nj in enumerate(orders):
        for _ in range(nj):
            out = differentiate(out, j + 1)
    _PARTIAL_CACHE[key] = out
    return out


# ---------------------------------------------------------------------------
# partial evaluation


class _BoundProgram:
    """Shared evaluation tape for expressions bound to fixed state values.

    Structurally equal subexpressions are evaluated once: theta-free ones are
    folded to constants at compile time, the rest become tape instructions
    replayed per call.  High-order derivative families share almost all of
    their subtrees, so the tape is far smaller than the sum of tree sizes.
    """

    def __init__(self, exprs: Sequence[Expression], x: Sequence):
        self.exprs = list(exprs)
        self.instructions: list[tuple] = []
        self.n_slots = 0
        self._memo: dict[Expression, tuple] = {}
        with np.errstate(all="ignore"):
            self.outputs = [self._visit(e, x) for e in self.exprs]
        self._memo.clear()

    def _new_slot(self):
        slot = self.n_slots
        self.n_slots += 1
        return slot

    def _visit(self, e: Expression, x):
        got = self._memo.get(e)
        if got is not None:
            return got
        t = type(e)
        if t is Const:
            out = ("const", e.value)
        elif t is State:
            v = x[e.index - 1]
            out = ("const", np.float64(v) if np.isscalar(v) else v)
        elif t is Param:
            slot = self._new_slot()
            self.instructions.append(("param", slot, e.name))
            out = ("slot", slot)
        elif t is Unary:
            arg = self._visit(e.arg, x)
            if arg[0] == "const":
                out = ("const", _UNARY_FN[e.op](arg[1]))
            else:
                slot = self._new_slot()
                self.instructions.append(("u", slot, _UNARY_FN[e.op], arg[1]))
                out = ("slot", slot)
        else:
            a = self._visit(e.lhs, x)
            b = self._visit(e.rhs, x)
            if a[0] == "const" and b[0] == "const":
                out = ("const", _BINARY_FN[e.op](a[1], b[1]))
            else:
                slot = self._new_slot()
                self.instructions.append(
                    ("b", slot, _BINARY_FN[e.op], a[0] == "const", a[1], b[0] == "const", b[1])
                )
                out = ("slot", slot)
        self._memo[e] = out
        return out

    def __call__(self, theta) -> list:
        values = [None] * self.n_slots
        with np.errstate(all="ignore"):
            for ins in self.instructions:
                kind = ins[0]
                if kind == "param":
                    values[ins[1]] = theta[ins[2]]
                elif kind == "u":
                    values[ins[1]] = ins[2](values[ins[3]])
                else:
                    _, slot, fn, a_const, a, b_const, b = ins
                    values[slot] = fn(
                        a if a_const else values[a], b if b_const else values[b]
                    )
        out = [v if k == "const" else values[v] for k, v in self.outputs]
        for e, v in zip(self.exprs, out):
            if not _is_finite(v):
                raise EvaluationError(
                    f"non-finite result in '{describe_expression(e)}'", e
                )
        return out


def bind_states_many(
    exprs: Sequence[Expression], x: Sequence
) -> Callable[[Mapping[str, Number]], list]:
    """Bind state values into a family of expressions; returns f(theta) -> list.

    Theta-free subtrees are evaluated once at bind time against the supplied
    (possibly vector-valued) states; the returned callable replays only the
    theta-dependent instructions.  Finiteness is checked on the outputs.
    """
    program = _BoundProgram(exprs, x)
    if not program.instructions:
        fixed = [v for _, v in program.outputs]
        for e, v in zip(exprs, fixed):
            if not _is_finite(v):
                raise EvaluationError(f"non-finite result in '{describe_expression(e)}'", e)
        return lambda theta: list(fixed)
    return program


def bind_states(e: Expression, x: Sequence) -> Callable[[Mapping[str, Number]], object]:
    """Single-expression convenience wrapper around :func:`bind_states_many`."""
    many = bind_states_many([e], x)
    return lambda theta: many(theta)[0]


# ---------------------------------------------------------------------------
# parsing / formatting

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>[-+*/^()]))"
)

_FUNCTIONS = ("ln", "exp", "sqrt", "sin", "cos")


class _Parser:
    def __init__(self, text: str, states: Sequence[str], params: Sequence[str]):
        self.text = text
        self.state_index = {name: i + 1 for i, name in enumerate(states)}
        self.params = set(params)
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                stripped = text[pos:].lstrip()
                if not stripped:
                    break
                raise ParseError(f"unexpected character {stripped[0]!r}", pos)
            if m.lastgroup is not None:
                self.tokens.append((m.lastgroup, m.group(m.lastgroup), m.start(m.lastgroup)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, "", len(self.text))

    def next(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_op(self, symbol: str):
        kind, value, pos = self.next()
        if kind != "op" or value != symbol:
            raise ParseError(f"expected {symbol!r}", pos)

    def parse(self) -> Expression:
        e = self.expr()
        kind, value, pos = self.peek()
        if kind is not None:
            raise ParseError(f"unexpected trailing input {value!r}", pos)
        return e

    def expr(self) -> Expression:
        out = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.i += 1
                rhs = self.term()
                out = Binary("add" if value == "+" else "sub", out, rhs)
            else:
                return out

    def term(self) -> Expression:
        out = self.unary()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "*/":
                self.i += 1
                rhs = self.unary()
                out = Binary("mul" if value == "*" else "div", out, rhs)
            else:
                return out

    def unary(self) -> Expression:
        kind, value, _ = self.peek()
        if kind == "op" and value == "-":
            self.i += 1
            inner = self.unary()
            if type(inner) is Const:
                return Const(-inner.value)
            return Unary("neg", inner)
        return self.power()

    def power(self) -> Expression:
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.i += 1
            exponent = self.unary()
            return Binary("pow", base, exponent)
        return base

    def atom(self) -> Expression:
        kind, value, pos = self.next()
        if kind == "num":
            return Const(float(value))
        if kind == "op" and value == "(":
            e = self.expr()
            self.expect_op(")")
            return e
        if kind == "ident":
            if value in _FUNCTIONS:
                self.expect_op("(")
                arg = self.expr()
                self.expect_op(")")
                return Unary(value, arg)
            if value in self.state_index:
                return State(self.state_index[value])
            if value in self.params:
                return Param(value)
            raise ParseError(f"unknown identifier {value!r}", pos)
        raise ParseError(f"expected expression, found {value!r}" if value else "unexpected end of input", pos)


def parse_expression(
    text: str, states: Sequence[str], params: Iterable[str] = ()
) -> Expression:
    """Parse the infix grammar (precedence ^ > unary minus > *,/ > +,-)."""
    return _Parser(text, states, list(params)).parse()


# precedence levels used when printing
_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def format_expression(e: Expression, names: Sequence[str] | None = None) -> str:
    """Render ``e`` in the input grammar; reparsing yields an equal tree."""
    return _format(e, names)[0]


def _format(e: Expression, names) -> tuple[str, int]:
    t = type(e)
    if t is Const:
        v = e.value
        if v == int(v) and abs(v) < 1e16:
            s = str(int(v))
        else:
            s = repr(v)
        return (s, _PREC_ATOM if v >= 0 else _PREC_NEG)
    if t is State:
        if names is not None:
            return names[e.index - 1], _PREC_ATOM
        return f"x{e.index}", _PREC_ATOM
    if t is Param:
        return e.name, _PREC_ATOM
    if t is Unary:
        if e.op == "neg":
            s, prec = _format(e.arg, names)
            if prec <= _PREC_MUL:
                s = f"({s})"
            return f"-{s}", _PREC_NEG
        s, _ = _format(e.arg, names)
        return f"{e.op}({s})", _PREC_ATOM
    ls, lp = _format(e.lhs, names)
    rs, rp = _format(e.rhs, names)
    if e.op == "add":
        if rp <= _PREC_ADD:
            rs = f"({rs})"
        return f"{ls} + {rs}", _PREC_ADD
    if e.op == "sub":
        if lp < _PREC_ADD:
            ls = f"({ls})"
        if rp <= _PREC_ADD:
            rs = f"({rs})"
        return f"{ls} - {rs}", _PREC_ADD
    if e.op in ("mul", "div"):
        sym = "*" if e.op == "mul" else "/"
        if lp < _PREC_MUL:
            ls = f"({ls})"
        if rp <= _PREC_MUL:
            rs = f"({rs})"
        return f"{ls}{sym}{rs}", _PREC_MUL
    # pow: left operand must bind tighter than ^; exponent may be unary
    if lp < _PREC_ATOM:
        ls = f"({ls})"
    if rp < _PREC_NEG:
        rs = f"({rs})"
    return f"{ls}^{rs}", _PREC_POW


class _FormatBudgetExceeded(Exception):
    pass


def describe_expression(e: Expression, max_nodes: int = 200) -> str:
    """Short rendering for diagnostics; truncates very large trees."""
    budget = [max_nodes]

    def walk(node):
        if budget[0] <= 0:
            raise _FormatBudgetExceeded
        budget[0] -= 1
        t = type(node)
        if t is Unary:
            inner = walk(node.arg)
            return f"-({inner})" if node.op == "neg" else f"{node.op}({inner})"
        if t is Binary:
            sym = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}[node.op]
            return f"({walk(node.lhs)} {sym} {walk(node.rhs)})"
        return _format(node, None)[0]

    try:
        return walk(e)
    except _FormatBudgetExceeded:
        return "<large expression>"
