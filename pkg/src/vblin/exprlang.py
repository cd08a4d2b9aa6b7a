"""A small arithmetic expression language.

Grammar (precedence from loosest to tightest)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right associative, constant exponent
    atom   := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

Names match ``[a-z][a-z0-9]*``; functions are ``sin cos exp abs sqrt``.
There is no implicit multiplication.

Evaluation works on Python floats and on numpy arrays alike (elementwise),
which is how the rest of the package evaluates maps on whole grids at once.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "abs", "sqrt")

_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


class ExprError(ValueError):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownFunctionError(ExprSyntaxError):
    pass


class UnboundVariableError(ExprError):
    pass


class ExprDomainError(ExprError):
    pass


# --- AST -----------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: float

    @property
    def children(self):
        return ()


@dataclass(frozen=True)
class Var:
    name: str

    @property
    def children(self):
        return ()


@dataclass(frozen=True)
class _Binary:
    left: "Expr"
    right: "Expr"

    @property
    def children(self):
        return (self.left, self.right)


class Add(_Binary):
    pass


class Sub(_Binary):
    pass


class Mul(_Binary):
    pass


class Div(_Binary):
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Expr"

    @property
    def children(self):
        return (self.operand,)


@dataclass(frozen=True)
class Pow:
    base: "Expr"
    exponent: float

    @property
    def children(self):
        return (self.base,)


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Expr"

    @property
    def children(self):
        return (self.arg,)


Expr = Union[Const, Var, Add, Sub, Mul, Div, Neg, Pow, Call]

_BINARY_SYMBOL = {Add: "+", Sub: "-", Mul: "*", Div: "/"}


# --- tokenizer -----------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[a-z][a-z0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    if not text.isascii():
        bad = next(i for i, ch in enumerate(text) if not ch.isascii())
        raise ExprSyntaxError("non-ASCII character", bad)
    tokens = []
    pos = 0
    end = len(text.rstrip())
    while pos < end:
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", end))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, text, offset = self.take()
        if text != value or kind == "end":
            raise ExprSyntaxError(f"expected {value!r}", offset)

    def parse(self) -> Expr:
        node = self.expr()
        kind, text, offset = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {text!r}", offset)
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            node = Add(node, rhs) if op == "+" else Sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.unary()
            node = Mul(node, rhs) if op == "*" else Div(node, rhs)
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            offset = self.take()[2]
            exponent = self.unary()
            value = _fold_constant(exponent)
            if value is None:
                raise ExprSyntaxError("exponent must be a constant", offset)
            return Pow(base, value)
        return base

    def atom(self):
        kind, text, offset = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if text not in FUNCTIONS:
                    raise UnknownFunctionError(f"unknown function {text!r}", offset)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            return Var(text)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", offset)
        raise ExprSyntaxError(f"unexpected token {text!r}", offset)


def _fold_constant(node: Expr):
    """Value of a variable-free subtree, or None."""
    if free_vars(node):
        return None
    try:
        value = float(evaluate(node, {}))
    except ExprError:
        return None
    return value


def parse(text: str) -> Expr:
    """Parse ``text`` into an AST; raises ExprSyntaxError with a byte offset."""
    return _Parser(text).parse()


# --- printing ------------------------------------------------------------


def _prec(node: Expr) -> int:
    if isinstance(node, (Add, Sub)):
        return _PREC_ADD
    if isinstance(node, (Mul, Div)):
        return _PREC_MUL
    if isinstance(node, Neg):
        return _PREC_NEG
    if isinstance(node, Pow):
        return _PREC_POW
    if isinstance(node, Const) and node.value < 0:
        return _PREC_NEG
    return _PREC_ATOM


def _format_number(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(float(value))


def to_string(node: Expr) -> str:
    """Render with the minimum parentheses needed to reparse to the same tree."""
    if isinstance(node, Const):
        return _format_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({to_string(node.arg)})"
    if isinstance(node, Neg):
        inner = to_string(node.operand)
        if _prec(node.operand) < _PREC_NEG:
            inner = f"({inner})"
        return "-" + inner
    if isinstance(node, Pow):
        base = to_string(node.base)
        if _prec(node.base) < _PREC_ATOM:
            base = f"({base})"
        exp = _format_number(node.exponent)
        if node.exponent < 0:
            exp = f"({exp})"
        return f"{base}^{exp}"
    level = _prec(node)
    left = to_string(node.left)
    right = to_string(node.right)
    if _prec(node.left) < level:
        left = f"({left})"
    if _prec(node.right) <= level:
        right = f"({right})"
    return f"{left}{_BINARY_SYMBOL[type(node)]}{right}"


# --- evaluation ----------------------------------------------------------


def free_vars(node: Expr) -> set:
    if isinstance(node, Var):
        return {node.name}
    out = set()
    for child in node.children:
        out |= free_vars(child)
    return out


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise ExprDomainError(f"non-finite result in {what}")
    return value


def _eval(node, env):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return env[node.name]
        except KeyError:
            raise UnboundVariableError(f"unbound variable {node.name!r}") from None
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Add):
        return _eval(node.left, env) + _eval(node.right, env)
    if isinstance(node, Sub):
        return _eval(node.left, env) - _eval(node.right, env)
    if isinstance(node, Mul):
        return _eval(node.left, env) * _eval(node.right, env)
    if isinstance(node, Div):
        num = _eval(node.left, env)
        den = _eval(node.right, env)
        if np.any(np.asarray(den) == 0):
            raise ExprDomainError("division by zero")
        return num / den
    if isinstance(node, Pow):
        base = _eval(node.base, env)
        p = node.exponent
        arr = np.asarray(base)
        if p < 0 and np.any(arr == 0):
            raise ExprDomainError("zero raised to a negative power")
        if p == int(p):
            return _check_finite(base ** int(p), "power")
        is_abs = isinstance(node.base, Call) and node.base.fn == "abs"
        if not is_abs and np.any(arr < 0):
            raise ExprDomainError(
                f"negative base with non-integer exponent {p!r}; use abs(.)^p"
            )
        return _check_finite(np.power(base, p), "power")
    if isinstance(node, Call):
        arg = _eval(node.arg, env)
        if node.fn == "sqrt":
            if np.any(np.asarray(arg) < 0):
                raise ExprDomainError("sqrt of negative number")
            return np.sqrt(arg)
        if node.fn == "exp":
            with np.errstate(over="ignore"):
                return _check_finite(np.exp(arg), "exp")
        return getattr(np, node.fn)(arg)
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(node: Expr, env: Mapping[str, object]):
    """Evaluate ``node`` with variables bound by ``env``.

    Values in ``env`` may be floats or equally shaped numpy arrays. A scalar
    environment gives a Python float back.
    """
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        value = _eval(node, env)
    value = _check_finite(value, "expression")
    if np.ndim(value) == 0:
        return float(value)
    return value


def eval_text(text: str, env: Mapping[str, object]):
    return evaluate(parse(text), env)


class CompiledExpr:
    """An expression bound to an ordered list of variable names.

    Calling it with an array of shape (N, len(names)) evaluates all N points.
    """

    def __init__(self, source, names):
        self.ast = parse(source) if isinstance(source, str) else source
        self.names = tuple(names)
        unknown = free_vars(self.ast) - set(self.names)
        if unknown:
            raise UnboundVariableError(
                f"unbound variable(s) {sorted(unknown)}; expected a subset of {list(self.names)}"
            )

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        env = {name: pts[:, i] for i, name in enumerate(self.names)}
        value = evaluate(self.ast, env)
        return np.broadcast_to(np.asarray(value, dtype=float), (pts.shape[0],)).copy()

    def __repr__(self):
        return f"CompiledExpr({to_string(self.ast)!r}, names={list(self.names)})"


__all__ = [
    "Add", "Call", "CompiledExpr", "Const", "Div", "Expr", "ExprDomainError",
    "ExprError", "ExprSyntaxError", "Mul", "Neg", "Pow", "Sub",
    "UnboundVariableError", "UnknownFunctionError", "Var", "eval_text",
    "evaluate", "free_vars", "parse", "to_string",
]
