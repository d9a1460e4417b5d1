"""A small arithmetic expression language for problem data.

Grammar (``^`` binds tighter than unary minus and is right associative)::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := ("+" | "-") unary | power
    power   := atom ("^" unary)?
    atom    := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

``NAME`` is ``x``, ``y``, ``pi`` or a named constant supplied by the
configuration; ``FUNC`` is one of sin, cos, tan, exp, log, sqrt. Evaluation
uses numpy and works for real and complex arrays (the latter is used for
complex-step differentiation in the self-checks).
"""

import re

import numpy as np

from ..errors import ConfigError

FUNCTIONS = {
    "sin": np.sin, "cos": np.cos, "tan": np.tan,
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
}
_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\S))")


def _tokenize(text):
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ConfigError(f"cannot parse expression {text!r}")
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", float(num)))
        elif name is not None:
            out.append(("name", name))
        else:
            if op not in "+-*/^()":
                raise ConfigError(f"unexpected character {op!r} in {text!r}")
            out.append(("op", op))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text, names):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.names = names

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, op=None):
        tok = self.peek()
        if op is not None and tok != ("op", op):
            raise ConfigError(f"expected {op!r} in expression {self.text!r}")
        self.i += 1
        return tok

    def parse(self):
        if not self.toks:
            raise ConfigError("empty expression")
        node = self.expr()
        if self.i != len(self.toks):
            raise ConfigError(f"trailing input in expression {self.text!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            node = (op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            node = (op, node, self.unary())
        return node

    def unary(self):
        if self.peek() in (("op", "-"), ("op", "+")):
            op = self.take()[1]
            inner = self.unary()
            return ("neg", inner) if op == "-" else inner
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return ("^", base, self.unary())
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return ("num", val)
        if kind == "name":
            if val in FUNCTIONS:
                self.take("(")
                arg = self.expr()
                self.take(")")
                return ("call", val, arg)
            if val in ("x", "y"):
                return ("var", val)
            if val == "pi":
                return ("num", np.pi)
            if val in self.names:
                return ("num", float(self.names[val]))
            raise ConfigError(f"unknown name {val!r} in expression {self.text!r}")
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.take(")")
            return node
        raise ConfigError(f"unexpected token {val!r} in expression {self.text!r}")


def _eval(node, x, y):
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "var":
        return x if node[1] == "x" else y
    if kind == "neg":
        return -_eval(node[1], x, y)
    if kind == "call":
        return FUNCTIONS[node[1]](_eval(node[2], x, y))
    a, b = _eval(node[1], x, y), _eval(node[2], x, y)
    if kind == "+":
        return a + b
    if kind == "-":
        return a - b
    if kind == "*":
        return a * b
    if kind == "/":
        return a / b
    return a**b


class Expression:
    """Parsed expression; calling it evaluates at ``(x, y)`` with broadcasting."""

    def __init__(self, text, constants=None):
        self.text = str(text)
        self._tree = _Parser(self.text, constants or {}).parse()

    def __call__(self, x, y):
        x = np.asarray(x)
        y = np.asarray(y)
        val = _eval(self._tree, x, y)
        return np.broadcast_to(val, np.broadcast(x, y).shape) * 1

    def __repr__(self):
        return f"Expression({self.text!r})"
