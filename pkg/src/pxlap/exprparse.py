"""Small arithmetic expression language for exponent fields and nonlinearities.

Grammar::

    expr   := term {("+"|"-") term}
    term   := factor {("*"|"/") factor}
    factor := ["-"] power
    power  := atom ["^" factor]
    atom   := number | ident | ident "(" expr {"," expr} ")" | "(" expr ")"

``^`` is right-associative and binds tighter than unary minus, so
``-x^2`` is ``-(x^2)`` and ``2^3^2`` is ``2^9``.

Evaluation is vectorized over numpy arrays and raises :class:`DomainError`
instead of producing NaN or inf.

>>> e = parse("2 + 0.5*x")
>>> evaluate(e, x=1.0)
2.5
>>> evaluate(parse("2^3^2"))
512.0
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import DomainError, ExprSyntaxError, UnknownIdentifier

__all__ = [
    "Expr", "Num", "Var", "BinOp", "Neg", "Call",
    "parse", "evaluate", "to_source", "free_variables", "FUNCTIONS",
]


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Union[Num, Var, BinOp, Neg, Call]

# name -> (min arity, max arity or None for variadic)
FUNCTIONS = {
    "sin": (1, 1),
    "cos": (1, 1),
    "exp": (1, 1),
    "log": (1, 1),
    "abs": (1, 1),
    "min": (1, None),
    "max": (1, None),
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


@dataclass
class _Token:
    kind: str  # "num" | "ident" | "op" | "eof"
    text: str
    pos: int   # character index


def _tokenize(src: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if m is None:
            raise ExprSyntaxError(_byte_offset(src, pos), "a number, identifier or operator", src)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(src)))
    return tokens


def _byte_offset(src: str, pos: int) -> int:
    return len(src[:pos].encode("utf-8"))


class _Parser:
    def __init__(self, src: str, variables: Sequence[str]):
        self.src = src
        self.variables = frozenset(variables)
        self.tokens = _tokenize(src)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _fail(self, expected: str):
        raise ExprSyntaxError(_byte_offset(self.src, self.tok.pos), expected, self.src)

    def _accept(self, text: str) -> bool:
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def _expect(self, text: str):
        if not self._accept(text):
            self._fail(repr(text))

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "eof":
            self._fail("end of input")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            e = BinOp(op, e, self.factor())
        return e

    def factor(self) -> Expr:
        if self._accept("-"):
            return Neg(self.power())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self._accept("^"):
            return BinOp("^", base, self.factor())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "ident":
            self.i += 1
            if self.tok.kind == "op" and self.tok.text == "(":
                if tok.text not in FUNCTIONS:
                    raise UnknownIdentifier(tok.text, _byte_offset(self.src, tok.pos))
                self.i += 1
                args = [self.expr()]
                while self._accept(","):
                    args.append(self.expr())
                self._expect(")")
                lo, hi = FUNCTIONS[tok.text]
                if len(args) < lo or (hi is not None and len(args) > hi):
                    raise ExprSyntaxError(
                        _byte_offset(self.src, tok.pos),
                        f"{tok.text}() with {lo}{'' if hi == lo else '+'} argument(s)",
                        self.src,
                    )
                return Call(tok.text, tuple(args))
            if tok.text not in self.variables:
                raise UnknownIdentifier(tok.text, _byte_offset(self.src, tok.pos))
            return Var(tok.text)
        if self._accept("("):
            e = self.expr()
            self._expect(")")
            return e
        self._fail("a number, variable, function call or '('")


def parse(src: str, variables: Sequence[str] = ("x", "y")) -> Expr:
    """Parse `src` into an expression tree.

    Parameters
    ----------
    src : str
        Expression text.
    variables : sequence of str
        Identifiers accepted as free variables. Exponent fields use
        ``("x", "y")``; nonlinearities use ``("t",)``.

    Raises
    ------
    ExprSyntaxError
        With the UTF-8 byte offset of the offending token.
    UnknownIdentifier
        For a variable or function name outside the allowed sets.
    """
    if isinstance(src, bytes):
        src = src.decode("utf-8")
    return _Parser(src, variables).parse()


def to_source(e: Expr) -> str:
    """Render a fully parenthesized source string that re-parses to an
    expression with bit-identical values."""
    if isinstance(e, Num):
        text = repr(float(e.value))
        return f"(-{text[1:]})" if text.startswith("-") else text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Call):
        return f"{e.name}({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(f"not an expression node: {e!r}")


def free_variables(e: Expr) -> frozenset:
    if isinstance(e, Var):
        return frozenset([e.name])
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    return frozenset().union(*(free_variables(a) for a in e.args))


def _check_finite(value, what):
    if not np.all(np.isfinite(value)):
        raise DomainError(f"{what} produced a non-finite value")
    return value


def _pow(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    neg = a < 0
    if np.any(neg & (b != np.round(b))):
        raise DomainError("negative base raised to a non-integer power")
    if np.any((a == 0) & (b < 0)):
        raise DomainError("division by zero (zero raised to a negative power)")
    with np.errstate(over="ignore", invalid="ignore"):
        return _check_finite(np.power(a, b), "power")


def _ev(e: Expr, env: Mapping[str, np.ndarray]):
    if isinstance(e, Num):
        return np.float64(e.value)
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise UnknownIdentifier(e.name) from None
    if isinstance(e, Neg):
        return -_ev(e.operand, env)
    if isinstance(e, BinOp):
        a = _ev(e.left, env)
        b = _ev(e.right, env)
        if e.op == "+":
            return _check_finite(a + b, "addition")
        if e.op == "-":
            return _check_finite(a - b, "subtraction")
        if e.op == "*":
            return _check_finite(a * b, "multiplication")
        if e.op == "/":
            if np.any(np.asarray(b) == 0):
                raise DomainError("division by zero")
            return _check_finite(a / b, "division")
        return _pow(a, b)
    args = [_ev(a, env) for a in e.args]
    name = e.name
    if name == "log":
        if np.any(np.asarray(args[0]) <= 0):
            raise DomainError("log of a non-positive value")
        return np.log(args[0])
    if name == "exp":
        with np.errstate(over="ignore"):
            return _check_finite(np.exp(args[0]), "exp")
    if name == "sin":
        return np.sin(args[0])
    if name == "cos":
        return np.cos(args[0])
    if name == "abs":
        return np.abs(args[0])
    out = args[0]
    fn = np.minimum if name == "min" else np.maximum
    for a in args[1:]:
        out = fn(out, a)
    return out


def evaluate(e: Expr, x=0.0, y=0.0, **env):
    """Evaluate `e` at ``(x, y)`` (plus any extra variables such as ``t``).

    Arguments may be scalars or broadcast-compatible numpy arrays. The
    result has the broadcast shape of the inputs; a Python float is
    returned when all inputs are scalars.
    """
    values = {"x": x, "y": y, **env}
    arrays = {k: np.asarray(v, dtype=float) for k, v in values.items()}
    out = _ev(e, arrays)
    shape = np.broadcast_shapes(*(a.shape for a in arrays.values()))
    if shape == ():
        return float(out)
    return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()
