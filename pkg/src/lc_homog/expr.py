"""Analytic field expressions in x, y, t.

Grammar (recursive descent)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | base ('^' factor)?
    base   := number | 'pi' | 'x' | 'y' | 't'
            | func '(' expr ')' | '(' expr ')'

``^`` is right-associative and unary minus applies to the whole power, so
``-x^2`` is ``-(x^2)`` and ``2^3^2`` is ``2^9``.  Evaluation is vectorised
over numpy arrays.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
VARIABLES = ("x", "y", "t")
MAX_DEPTH = 64


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        self.offset = offset
        self.expected = expected
        detail = f" (expected one of {', '.join(expected)})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownIdentifier(ParseError):
    pass


class EvalError(ExprError):
    pass


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # 'neg' or a function name
    arg: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


Node = Union[Const, Var, Unary, Binary]

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
                    r"|([A-Za-z_][A-Za-z_0-9]*)|(.))")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            mt = _TOKEN.match(text, pos)
            if mt is None or mt.end() == pos:
                break  # trailing whitespace
            if mt.group(1) is not None:
                self.tokens.append(("num", mt.group(1), mt.start(1)))
            elif mt.group(2) is not None:
                self.tokens.append(("name", mt.group(2), mt.start(2)))
            else:
                ch = mt.group(3)
                if ch not in "+-*/^()":
                    raise ParseError(f"unexpected character {ch!r}", mt.start(3))
                self.tokens.append(("op", ch, mt.start(3)))
            pos = mt.end()
        self.end = len(text.rstrip()) if text.strip() else len(text)
        self.i = 0
        self.depth = 0

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def offset(self) -> int:
        tok = self.peek()
        return tok[2] if tok else self.end

    def accept(self, value: str) -> bool:
        tok = self.peek()
        if tok and tok[0] == "op" and tok[1] == value:
            self.i += 1
            return True
        return False

    def expect(self, value: str) -> None:
        if not self.accept(value):
            raise ParseError("unexpected token" if self.peek() else "unexpected end of input",
                             self.offset(), (f"'{value}'",))

    def parse(self) -> Node:
        node = self.expr()
        if self.peek() is not None:
            raise ParseError("unexpected trailing input", self.offset(),
                             ("'+'", "'-'", "'*'", "'/'", "'^'", "end of input"))
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            if self.accept("+"):
                node = Binary("+", node, self.term())
            elif self.accept("-"):
                node = Binary("-", node, self.term())
            else:
                return node

    def term(self) -> Node:
        node = self.factor()
        while True:
            if self.accept("*"):
                node = Binary("*", node, self.factor())
            elif self.accept("/"):
                node = Binary("/", node, self.factor())
            else:
                return node

    def factor(self) -> Node:
        self.depth += 1
        if self.depth > MAX_DEPTH:
            raise ParseError("expression nested too deeply", self.offset())
        try:
            if self.accept("-"):
                return Unary("neg", self.factor())
            node = self.base()
            if self.accept("^"):
                node = Binary("^", node, self.factor())
            return node
        finally:
            self.depth -= 1

    def base(self) -> Node:
        tok = self.peek()
        expected = ("number", "'pi'", "'x'", "'y'", "'t'", "function", "'('", "'-'")
        if tok is None:
            raise ParseError("unexpected end of input", self.end, expected)
        kind, value, off = tok
        if kind == "num":
            self.i += 1
            return Const(float(value))
        if kind == "name":
            self.i += 1
            if value == "pi":
                return Const(math.pi)
            if value in VARIABLES:
                return Var(value)
            if value in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Unary(value, arg)
            raise UnknownIdentifier(f"unknown identifier {value!r}", off)
        if value == "(":
            self.i += 1
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError(f"unexpected token {value!r}", off, expected)


def parse(text: str) -> Node:
    """Parse ``text`` into an expression tree."""
    if not isinstance(text, str):
        raise ParseError("expression must be a string", 0)
    if not text.strip():
        raise ParseError("empty expression", 0, ("expression",))
    if not text.isascii():
        bad = next(i for i, ch in enumerate(text) if ord(ch) > 127)
        raise ParseError("non-ASCII character", len(text[:bad].encode()))
    return _Parser(text).parse()


def _eval(node: Node, env: dict[str, np.ndarray]) -> np.ndarray:
    if isinstance(node, Const):
        return np.float64(node.value)
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Unary):
        a = _eval(node.arg, env)
        return -a if node.op == "neg" else FUNCTIONS[node.op](a)
    a = _eval(node.left, env)
    b = _eval(node.right, env)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        return a / b
    return np.power(a, b)


def evaluate(ast: Node, x=0.0, y=0.0, t=0.0):
    """Evaluate at scalar or array coordinates; raises EvalError on NaN/Inf."""
    env = {"x": np.asarray(x, dtype=float), "y": np.asarray(y, dtype=float),
           "t": np.asarray(t, dtype=float)}
    with np.errstate(all="ignore"):
        out = _eval(ast, env)
    shape = np.broadcast_shapes(*(v.shape for v in env.values()))
    out = np.broadcast_to(np.asarray(out, dtype=float), shape)
    if not np.all(np.isfinite(out)):
        raise EvalError("expression produced NaN or Inf")
    if out.ndim == 0:
        return float(out)
    return np.array(out)


def to_string(node: Node) -> str:
    """Fully parenthesised text that reparses to an equivalent tree."""
    if isinstance(node, Const):
        r = repr(float(node.value))
        if "inf" in r or "nan" in r:
            raise ExprError("non-finite constant")
        return f"({r})" if node.value < 0 else r
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Unary):
        if node.op == "neg":
            return f"(-{to_string(node.arg)})"
        return f"{node.op}({to_string(node.arg)})"
    return f"({to_string(node.left)} {node.op} {to_string(node.right)})"


def uses_variable(node: Node, name: str) -> bool:
    if isinstance(node, Var):
        return node.name == name
    if isinstance(node, Unary):
        return uses_variable(node.arg, name)
    if isinstance(node, Binary):
        return uses_variable(node.left, name) or uses_variable(node.right, name)
    return False


@dataclass(frozen=True)
class VectorExpr:
    """Two-component field given as a pair of expression strings."""

    text1: str
    text2: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "_ast", (parse(self.text1), parse(self.text2)))

    @classmethod
    def of(cls, pair) -> VectorExpr:
        if isinstance(pair, VectorExpr):
            return pair
        a, b = pair
        return cls(str(a), str(b))

    @property
    def comp1(self) -> Node:
        return self._ast[0]

    @property
    def comp2(self) -> Node:
        return self._ast[1]

    @property
    def time_dependent(self) -> bool:
        return uses_variable(self.comp1, "t") or uses_variable(self.comp2, "t")

    def __call__(self, x, y, t=0.0) -> tuple[np.ndarray, np.ndarray]:
        shape = np.broadcast_shapes(np.shape(x), np.shape(y))
        return (np.broadcast_to(evaluate(self.comp1, x, y, t), shape).astype(float),
                np.broadcast_to(evaluate(self.comp2, x, y, t), shape).astype(float))

    def to_list(self) -> list[str]:
        return [self.text1, self.text2]


ZERO = VectorExpr("0", "0")
