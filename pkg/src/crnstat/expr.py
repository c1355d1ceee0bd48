"""Rate-factor expression language over one integer variable ``x``.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'x' | 'pi' | FUNC '(' expr ')'
            | 'ind' '(' expr CMP expr ')' | '(' expr ')'

FUNC is one of sin, cos, exp, log, sqrt, floor; CMP is one of
``> >= < <= == !=``. ``ind`` evaluates to 1.0 where the comparison holds
and 0.0 elsewhere. Expressions compile to numpy-vectorised callables.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

FUNCS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "floor": np.floor,
}
CMPS: dict[str, Callable] = {
    ">": np.greater,
    ">=": np.greater_equal,
    "<": np.less,
    "<=": np.less_equal,
    "==": np.equal,
    "!=": np.not_equal,
}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>>=|<=|==|!=|\*\*|[-+*/^()<>]))"
)


class ExpressionError(ValueError):
    def __init__(self, message: str, column: int):
        super().__init__(f"column {column}: {message}")
        self.message = message
        self.column = column


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    column: int  # 1-based


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            col = pos + len(text[pos:]) - len(text[pos:].lstrip()) + 1
            raise ExpressionError(f"unexpected character {text[col - 1]!r}", col)
        kind = m.lastgroup
        col = m.start(kind) + 1
        tok = m.group(kind)
        if tok == "**":
            tok = "^"
        tokens.append(Token(kind, tok, col))
        pos = m.end()
    tokens.append(Token("end", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def take(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if self.tok.text != text:
            found = self.tok.text or "end of input"
            raise ExpressionError(f"expected {text!r}, found {found!r}", self.tok.column)
        return self.take()

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            raise ExpressionError(f"unexpected {self.tok.text!r}", self.tok.column)
        return node

    def expr(self):
        node = self.term()
        while self.tok.text in ("+", "-"):
            op = self.take().text
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.text in ("*", "/"):
            op = self.take().text
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.tok.text in ("+", "-"):
            op = self.take().text
            operand = self.unary()
            return operand if op == "+" else ("neg", operand)
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.text == "^":
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.take()
            return ("num", float(t.text))
        if t.kind == "name":
            self.take()
            if t.text == "x":
                return ("x",)
            if t.text == "pi":
                return ("num", float(np.pi))
            if t.text == "ind":
                self.expect("(")
                lhs = self.expr()
                if self.tok.text not in CMPS:
                    raise ExpressionError("ind() needs a comparison", self.tok.column)
                op = self.take().text
                rhs = self.expr()
                self.expect(")")
                return ("ind", op, lhs, rhs)
            if t.text in FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return ("call", t.text, arg)
            raise ExpressionError(f"unknown identifier {t.text!r}", t.column)
        if t.text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        found = t.text or "end of input"
        raise ExpressionError(f"unexpected {found!r}", t.column)


def _compile(node) -> Callable[[np.ndarray], np.ndarray]:
    kind = node[0]
    if kind == "num":
        value = node[1]
        return lambda x: np.full(np.shape(x), value)
    if kind == "x":
        return lambda x: x
    if kind == "neg":
        f = _compile(node[1])
        return lambda x: -f(x)
    if kind == "call":
        fn, f = FUNCS[node[1]], _compile(node[2])
        return lambda x: fn(f(x))
    if kind == "ind":
        cmp, f, g = CMPS[node[1]], _compile(node[2]), _compile(node[3])
        return lambda x: cmp(f(x), g(x)).astype(float)
    f, g = _compile(node[1]), _compile(node[2])
    if kind == "+":
        return lambda x: f(x) + g(x)
    if kind == "-":
        return lambda x: f(x) - g(x)
    if kind == "*":
        return lambda x: f(x) * g(x)
    if kind == "/":
        return lambda x: f(x) / g(x)
    if kind == "^":
        return lambda x: np.power(f(x), g(x))
    raise AssertionError(kind)


class Expression:
    """A parsed rate-factor expression; call it with an int or array."""

    def __init__(self, text: str):
        self.text = text
        self.tree = _Parser(text).parse()
        self._fn = _compile(self.tree)

    def __call__(self, x):
        arr = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = self._fn(arr)
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self):
        return f"Expression({self.text!r})"

    def __getstate__(self):
        return {"text": self.text}

    def __setstate__(self, state):
        self.__init__(state["text"])

    def __eq__(self, other):
        return isinstance(other, Expression) and self.tree == other.tree

    def __hash__(self):
        return hash(self.tree)
