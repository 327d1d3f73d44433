"""Small symbolic expression trees with exact differentiation.

Nodes: constants, named variables, + - * /, integer powers, sin, cos, exp,
log.  Construction folds constants and prunes neutral elements (x+0, 1*x,
x^1, ...), nothing more; note that folding 0*u drops u together with any
singularities it may have.  Everything is immutable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .errors import EvalDomain, ParseError

_FUNCTIONS = ("sin", "cos", "exp", "log")


@dataclass(frozen=True)
class Expr:
    op: str
    args: tuple["Expr", ...] = ()
    value: float = 0.0
    name: str = ""
    exponent: int = 0

    # -- construction ------------------------------------------------------

    @staticmethod
    def const(v: float) -> "Expr":
        return Expr("const", value=float(v))

    @staticmethod
    def var(name: str) -> "Expr":
        return Expr("var", name=name)

    def __add__(self, other):
        other = _as_expr(other)
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        if self.op == "const" and other.op == "const":
            return Expr.const(self.value + other.value)
        return Expr("+", (self, other))

    def __sub__(self, other):
        other = _as_expr(other)
        if other.is_zero:
            return self
        if self.op == "const" and other.op == "const":
            return Expr.const(self.value - other.value)
        if self.is_zero:
            return -other
        return Expr("-", (self, other))

    def __mul__(self, other):
        other = _as_expr(other)
        if self.is_zero or other.is_zero:
            return Expr.const(0.0)
        if self.is_one:
            return other
        if other.is_one:
            return self
        if self.op == "const" and other.op == "const":
            return Expr.const(self.value * other.value)
        return Expr("*", (self, other))

    def __truediv__(self, other):
        other = _as_expr(other)
        if other.is_one:
            return self
        if self.op == "const" and other.op == "const" and other.value != 0.0:
            return Expr.const(self.value / other.value)
        return Expr("/", (self, other))

    def __neg__(self):
        if self.op == "const":
            return Expr.const(-self.value)
        if self.op == "neg":
            return self.args[0]
        return Expr("neg", (self,))

    __radd__ = __add__
    __rmul__ = __mul__

    def __rsub__(self, other):
        return _as_expr(other) - self

    def __rtruediv__(self, other):
        return _as_expr(other) / self

    def pow(self, k: int) -> "Expr":
        if k != int(k):
            raise ValueError(f"exponent must be an integer, got {k}")
        k = int(k)
        if k == 0:
            return Expr.const(1.0)
        if k == 1:
            return self
        if self.op == "const" and not (self.value == 0.0 and k < 0):
            return Expr.const(self.value**k)
        return Expr("pow", (self,), exponent=k)

    # -- predicates --------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return self.op == "const" and self.value == 0.0

    @property
    def is_one(self) -> bool:
        return self.op == "const" and self.value == 1.0

    def free_vars(self) -> frozenset[str]:
        if self.op == "var":
            return frozenset((self.name,))
        out = frozenset()
        for a in self.args:
            out |= a.free_vars()
        return out

    # -- calculus ----------------------------------------------------------

    def diff(self, name: str) -> "Expr":
        """Exact partial derivative with respect to the named variable."""
        if self.op == "const":
            return Expr.const(0.0)
        if self.op == "var":
            return Expr.const(1.0 if self.name == name else 0.0)
        if self.op == "+":
            return self.args[0].diff(name) + self.args[1].diff(name)
        if self.op == "-":
            return self.args[0].diff(name) - self.args[1].diff(name)
        if self.op == "*":
            u, v = self.args
            return u.diff(name) * v + u * v.diff(name)
        if self.op == "/":
            u, v = self.args
            return (u.diff(name) * v - u * v.diff(name)) / v.pow(2)
        if self.op == "neg":
            return -self.args[0].diff(name)
        if self.op == "pow":
            (u,) = self.args
            return Expr.const(self.exponent) * u.pow(self.exponent - 1) * u.diff(name)
        if self.op == "sin":
            return Expr("cos", self.args) * self.args[0].diff(name)
        if self.op == "cos":
            return -(Expr("sin", self.args) * self.args[0].diff(name))
        if self.op == "exp":
            return self * self.args[0].diff(name)
        if self.op == "log":
            return self.args[0].diff(name) / self.args[0]
        raise ValueError(f"unknown op {self.op!r}")

    # -- evaluation --------------------------------------------------------

    def evaluate(self, env: dict[str, float]) -> float:
        if self.op == "const":
            return self.value
        if self.op == "var":
            try:
                return env[self.name]
            except KeyError:
                raise EvalDomain(f"no value bound to {self.name!r}") from None
        if self.op in ("+", "-", "*", "/"):
            a = self.args[0].evaluate(env)
            b = self.args[1].evaluate(env)
            if self.op == "+":
                return a + b
            if self.op == "-":
                return a - b
            if self.op == "*":
                return a * b
            if b == 0.0:
                raise EvalDomain("division by zero")
            return a / b
        u = self.args[0].evaluate(env)
        if self.op == "neg":
            return -u
        if self.op == "pow":
            if u == 0.0 and self.exponent < 0:
                raise EvalDomain("zero raised to a negative power")
            try:
                return u**self.exponent
            except OverflowError:
                raise EvalDomain("overflow in power") from None
        if self.op == "sin":
            return math.sin(u)
        if self.op == "cos":
            return math.cos(u)
        if self.op == "exp":
            try:
                return math.exp(u)
            except OverflowError:
                raise EvalDomain("overflow in exp") from None
        if self.op == "log":
            if u <= 0.0:
                raise EvalDomain(f"log of nonpositive value {u}")
            return math.log(u)
        raise ValueError(f"unknown op {self.op!r}")

    # -- code generation ---------------------------------------------------

    def to_source(self) -> str:
        """Python source for the expression, fully parenthesized."""
        if self.op == "const":
            return repr(self.value)
        if self.op == "var":
            return self.name
        if self.op in ("+", "-", "*", "/"):
            return f"({self.args[0].to_source()} {self.op} {self.args[1].to_source()})"
        if self.op == "neg":
            return f"(-{self.args[0].to_source()})"
        if self.op == "pow":
            return f"({self.args[0].to_source()} ** {self.exponent})"
        return f"_math.{self.op}({self.args[0].to_source()})"

    def __str__(self) -> str:
        return self.to_source().replace("_math.", "")


def _as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float)):
        return Expr.const(float(v))
    raise TypeError(f"cannot treat {v!r} as an expression")


ZERO = Expr.const(0.0)
ONE = Expr.const(1.0)


def compile_exprs(exprs, names):
    """Compile expressions to one fast callable: f(values) -> tuple of floats.

    ``values`` is indexed in the order of ``names``.  Domain errors raised by
    the generated code (division by zero, log of a nonpositive number) surface
    as EvalDomain.
    """
    names = tuple(names)
    used = set()
    for e in exprs:
        used |= e.free_vars()
    missing = used - set(names)
    if missing:
        raise EvalDomain(f"expressions use unbound variables {sorted(missing)}")
    lines = ["def _f(_v, _math=_math):"]
    for i, nm in enumerate(names):
        if nm in used:
            lines.append(f"    {nm} = _v[{i}]")
    body = ", ".join(e.to_source() for e in exprs)
    lines.append(f"    return ({body},)")
    namespace = {"_math": math}
    exec("\n".join(lines), namespace)  # noqa: S102 - generated from our own AST only
    raw = namespace["_f"]

    def call(values):
        try:
            return raw(values)
        except ZeroDivisionError:
            raise EvalDomain("division by zero") from None
        except ValueError as exc:
            raise EvalDomain(str(exc)) from None
        except OverflowError:
            raise EvalDomain("overflow") from None

    return call


# -- parsing ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass
class _Token:
    kind: str
    text: str
    col: int


def _tokenize(text: str, line: int):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            col = pos + (len(text[pos:]) - len(stripped)) + 1
            raise ParseError(f"unexpected character {stripped[0]!r}", line, col)
        pos = m.end()
        for kind in ("num", "ident", "op"):
            s = m.group(kind)
            if s is not None:
                tokens.append(_Token(kind, s, m.start(kind) + 1))
                break
    return tokens


def parse_expression(text: str, allowed_vars=None, line: int = 1) -> Expr:
    """Parse an infix expression.

    Precedence (low to high): additive, multiplicative, unary minus, integer
    power.  ``allowed_vars`` restricts which identifiers may appear as
    variables; function names sin/cos/exp/log are always recognized when
    followed by a parenthesis.
    """
    tokens = _tokenize(text, line)
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def fail(msg):
        col = tokens[pos].col if pos < len(tokens) else (tokens[-1].col + len(tokens[-1].text) if tokens else 1)
        raise ParseError(msg, line, col)

    def expect_op(ch):
        nonlocal pos
        t = peek()
        if t is None or t.kind != "op" or t.text != ch:
            fail(f"expected {ch!r}")
        pos += 1

    def parse_sum():
        nonlocal pos
        node = parse_term()
        while (t := peek()) is not None and t.kind == "op" and t.text in "+-":
            pos += 1
            rhs = parse_term()
            node = node + rhs if t.text == "+" else node - rhs
        return node

    def parse_term():
        nonlocal pos
        node = parse_unary()
        while (t := peek()) is not None and t.kind == "op" and t.text in "*/":
            pos += 1
            rhs = parse_unary()
            node = node * rhs if t.text == "*" else node / rhs
        return node

    def parse_unary():
        nonlocal pos
        t = peek()
        if t is not None and t.kind == "op" and t.text == "-":
            pos += 1
            return -parse_unary()
        return parse_power()

    def parse_power():
        nonlocal pos
        base = parse_atom()
        t = peek()
        if t is not None and t.kind == "op" and t.text == "^":
            pos += 1
            t = peek()
            sign = 1
            if t is not None and t.kind == "op" and t.text == "-":
                sign = -1
                pos += 1
                t = peek()
            if t is None or t.kind != "num" or not re.fullmatch(r"\d+", t.text):
                fail("exponent must be an integer literal")
            pos += 1
            return base.pow(sign * int(t.text))
        return base

    def parse_atom():
        nonlocal pos
        t = peek()
        if t is None:
            fail("unexpected end of expression")
        if t.kind == "num":
            pos += 1
            return Expr.const(float(t.text))
        if t.kind == "ident":
            pos += 1
            nxt = peek()
            if nxt is not None and nxt.kind == "op" and nxt.text == "(":
                if t.text not in _FUNCTIONS:
                    raise ParseError(f"unknown function {t.text!r}", line, t.col)
                pos += 1
                arg = parse_sum()
                expect_op(")")
                return Expr(t.text, (arg,))
            if allowed_vars is not None and t.text not in allowed_vars:
                raise ParseError(f"unknown symbol {t.text!r}", line, t.col)
            return Expr.var(t.text)
        if t.kind == "op" and t.text == "(":
            pos += 1
            node = parse_sum()
            expect_op(")")
            return node
        fail(f"unexpected token {t.text!r}")

    node = parse_sum()
    if pos != len(tokens):
        fail(f"trailing input {tokens[pos].text!r}")
    return node
