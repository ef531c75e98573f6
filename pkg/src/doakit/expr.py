"""Expression DSL for vector fields: parsing, evaluation, pretty-printing.

The grammar is deliberately small: semicolon-separated component
expressions over the state variables ``x1..xn`` and named parameters,
with ``+ - * /``, parentheses and ``^`` for integer powers.  Parameters
are substituted and constant-folded at parse time, so an evaluable tree
contains only constants, state variables and arithmetic nodes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Neg",
    "Bin",
    "Pow",
    "ExpressionError",
    "EvaluationError",
    "parse_components",
    "pretty",
]


class ExpressionError(ValueError):
    """Parse-time error, annotated with the offending source position."""

    def __init__(self, message: str, source: str, position: int):
        self.position = position
        self.source = source
        super().__init__(f"{message} (at position {position}: ...{source[position:position + 12]!r})")


class EvaluationError(ArithmeticError):
    """Raised when an expression cannot be evaluated (division by zero)."""

    def __init__(self, message: str, node: "Expr | None" = None):
        self.node = node
        super().__init__(message)


@dataclass(frozen=True)
class Expr:
    def evaluate(self, env: Sequence):
        raise NotImplementedError


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def evaluate(self, env):
        return self.value


@dataclass(frozen=True)
class Var(Expr):
    index: int  # 0-based; printed as x{index+1}

    def evaluate(self, env):
        return env[self.index]


@dataclass(frozen=True)
class Neg(Expr):
    child: Expr

    def evaluate(self, env):
        return -self.child.evaluate(env)


@dataclass(frozen=True)
class Bin(Expr):
    op: str  # one of "+-*/"
    left: Expr
    right: Expr

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        _check_denominator(b, self)
        return a / b


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int

    def evaluate(self, env):
        b = self.base.evaluate(env)
        if self.exponent < 0:
            _check_denominator(b, self)
        return b ** self.exponent


def _check_denominator(value, node: Expr) -> None:
    """Reject exact zeros in denominators; works for scalars, arrays and jets."""
    from . import jets  # local import to avoid a cycle

    if isinstance(value, jets.Jet):
        bad = value.coeffs[0] == 0.0
    else:
        import numpy as np

        bad = np.asarray(value) == 0.0
    import numpy as np

    if np.any(bad):
        raise EvaluationError(f"division by zero in {pretty(node)!r}", node)


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_]\w*)"
    r"|(?P<op>[-+*/^();]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            if source[pos:].strip() == "":
                break
            raise ExpressionError("unexpected character", source, pos)
        if m.group("num") is not None:
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.group("ident") is not None:
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    """Recursive-descent parser for a single component expression list."""

    def __init__(self, source: str, n: int, params: Mapping[str, float]):
        self.source = source
        self.n = n
        self.params = dict(params)
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, pos = self.peek()
        if kind != "op" or text != op:
            raise ExpressionError(f"expected {op!r}", self.source, pos)
        return self.advance()

    def parse_components(self) -> list[Expr]:
        comps = [self.parse_expr()]
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text == ";":
                self.advance()
                comps.append(self.parse_expr())
            elif kind == "end":
                return comps
            else:
                raise ExpressionError("expected ';' or end of input", self.source, pos)

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = _fold(Bin(text, node, self.parse_term()))
            else:
                return node

    def parse_term(self) -> Expr:
        node = self.parse_unary()
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                rhs = self.parse_unary()
                if text == "/" and isinstance(rhs, Const) and rhs.value == 0.0:
                    raise ExpressionError("division by constant zero", self.source, pos)
                node = _fold(Bin(text, node, rhs))
            else:
                return node

    def parse_unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return _fold(Neg(self.parse_unary()))
        if kind == "op" and text == "+":
            self.advance()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self) -> Expr:
        base = self.parse_atom()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            exponent = self.parse_exponent()
            node = _fold(Pow(base, exponent))
            kind, text, pos = self.peek()
            if kind == "op" and text == "^":
                raise ExpressionError("chained '^' needs parentheses", self.source, pos)
            return node
        return base

    def parse_exponent(self) -> int:
        sign = 1
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            sign = -1
            kind, text, pos = self.peek()
        if kind != "num":
            raise ExpressionError("exponent must be an integer literal", self.source, pos)
        self.advance()
        value = float(text)
        if value != int(value):
            raise ExpressionError("exponent must be an integer", self.source, pos)
        return sign * int(value)

    def parse_atom(self) -> Expr:
        kind, text, pos = self.advance()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            m = re.fullmatch(r"x(\d+)", text)
            if m is not None:
                idx = int(m.group(1))
                if 1 <= idx <= self.n:
                    return Var(idx - 1)
                raise ExpressionError(
                    f"unknown identifier {text!r} (state variables are x1..x{self.n})",
                    self.source,
                    pos,
                )
            if text in self.params:
                return Const(float(self.params[text]))
            raise ExpressionError(f"unknown identifier {text!r}", self.source, pos)
        if kind == "op" and text == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        raise ExpressionError("expected a number, identifier or '('", self.source, pos)


def _fold(node: Expr) -> Expr:
    """Collapse constant subtrees (parameters become constants at parse time)."""
    if isinstance(node, Neg):
        if isinstance(node.child, Const):
            return Const(-node.child.value)
        return node
    if isinstance(node, Bin):
        if isinstance(node.left, Const) and isinstance(node.right, Const):
            return Const(node.evaluate(()))
        return node
    if isinstance(node, Pow) and isinstance(node.base, Const):
        return Const(node.evaluate(()))
    return node


def parse_components(source: str, n: int, params: Mapping[str, float] | None = None) -> list[Expr]:
    """Parse ``;``-separated expressions into one tree per component.

    Raises ExpressionError on syntax problems or unknown identifiers;
    the caller is responsible for checking the component count.
    """
    return _Parser(source, n, params or {}).parse_components()


# Pretty-printing: additive operators spaced, multiplicative ones tight.
# Output is canonical: parse(pretty(tree)) reproduces the tree.

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 2, "^": 3, "atom": 4}


def _prec(node: Expr) -> int:
    if isinstance(node, Bin):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return _PREC["neg"]
    if isinstance(node, Pow):
        return _PREC["^"]
    if isinstance(node, Const) and node.value < 0:
        return _PREC["neg"]
    return _PREC["atom"]


def _const_str(value: float) -> str:
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def pretty(node: Expr) -> str:
    """Render a tree in canonical form."""
    if isinstance(node, Const):
        return _const_str(node.value)
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Neg):
        child = pretty(node.child)
        if _prec(node.child) < _PREC["neg"]:
            child = f"({child})"
        return f"-{child}"
    if isinstance(node, Pow):
        base = pretty(node.base)
        if _prec(node.base) <= _PREC["^"]:
            base = f"({base})"
        return f"{base}^{node.exponent}"
    if isinstance(node, Bin):
        lhs, rhs = pretty(node.left), pretty(node.right)
        if _prec(node.left) < _PREC[node.op]:
            lhs = f"({lhs})"
        # '-' and '/' do not associate on the right
        right_min = _PREC[node.op] + (1 if node.op in "-/" else 0)
        if _prec(node.right) < right_min:
            rhs = f"({rhs})"
        sep = f" {node.op} " if node.op in "+-" else node.op
        return f"{lhs}{sep}{rhs}"
    raise TypeError(f"not an expression node: {node!r}")
