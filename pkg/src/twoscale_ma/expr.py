"""Arithmetic expressions in x and y for boundary data, right-hand sides and
exact solutions.

Grammar, loosest binding first::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?          # right-associative
    atom   := number | name | name "(" expr ")" | "(" expr ")"
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import ExpressionError

FUNCTIONS = {"exp": math.exp, "log": math.log, "sin": math.sin, "cos": math.cos,
             "sqrt": math.sqrt, "abs": abs}
CONSTANTS = {"pi": math.pi, "e": math.e}
VARIABLES = ("x", "y")


class Node:
    __slots__ = ()


@dataclass(frozen=True)
class Const(Node):
    value: float


@dataclass(frozen=True)
class Var(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    arg: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    fn: str
    arg: Node


_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
""", re.VERBOSE)


def _tokenize(text):
    pos, out = 0, []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExpressionError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(("end", "", len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value or kind != "op":
            found = "end of input" if kind == "end" else repr(val)
            raise ExpressionError(f"expected {value!r}, found {found}", pos)

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            v = float(val)
            if not math.isfinite(v):
                raise ExpressionError(f"numeric literal {val!r} is not finite", pos)
            return Const(v)
        if kind == "name":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val in VARIABLES:
                return Var(val)
            if val in CONSTANTS:
                return Const(CONSTANTS[val])
            raise ExpressionError(f"unknown identifier {val!r}", pos)
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise ExpressionError(f"unexpected {found}", pos)


def parse_expression(text):
    """Parse ``text`` into an expression tree; errors carry the byte offset."""
    p = _Parser(text)
    node = p.expr()
    kind, val, pos = p.peek()
    if kind != "end":
        raise ExpressionError(f"unexpected {val!r} after expression", pos)
    return node


def evaluate_expression(node, x, y):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return x if node.name == "x" else y
    if isinstance(node, Neg):
        return -evaluate_expression(node.arg, x, y)
    if isinstance(node, Call):
        a = evaluate_expression(node.arg, x, y)
        if node.fn == "log" and a <= 0:
            raise ExpressionError(f"log of non-positive value {a!r}")
        if node.fn == "sqrt" and a < 0:
            raise ExpressionError(f"sqrt of negative value {a!r}")
        try:
            return FUNCTIONS[node.fn](a)
        except OverflowError:
            raise ExpressionError(f"{node.fn}({a!r}) overflows") from None
    a = evaluate_expression(node.left, x, y)
    b = evaluate_expression(node.right, x, y)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        if b == 0:
            raise ExpressionError("division by zero")
        return a / b
    try:
        out = a ** b
    except (OverflowError, ZeroDivisionError) as exc:
        raise ExpressionError(f"{a!r} ^ {b!r} failed: {exc}") from None
    if isinstance(out, complex):
        raise ExpressionError(f"{a!r} ^ {b!r} is not real")
    return out


def to_text(node):
    """Fully parenthesised source text that parses back to an equal tree."""
    if isinstance(node, Const):
        return repr(node.value) if node.value >= 0 else f"(-{repr(-node.value)})"
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{to_text(node.arg)})"
    if isinstance(node, Call):
        return f"{node.fn}({to_text(node.arg)})"
    return f"({to_text(node.left)} {node.op} {to_text(node.right)})"


class Expression:
    """A parsed expression usable as ``f(point)``."""

    def __init__(self, text):
        self.text = text
        self.tree = parse_expression(text)

    def __call__(self, p):
        return float(evaluate_expression(self.tree, float(p[0]), float(p[1])))

    def __repr__(self):
        return f"Expression({self.text!r})"
