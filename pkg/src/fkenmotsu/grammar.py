"""Parser for scalar expressions in configuration files.

Grammar::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'
    FUNC    := exp | ln | log | tanh

``NAME`` must be one of the chart's coordinate names. ``-t^2`` parses as
``-(t^2)``. Integer constant exponents are exact powers; any other
exponent is rewritten as ``exp(b ln(a))``.
"""

from __future__ import annotations

import re

from . import expr as ex
from .errors import ConfigError

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)|([A-Za-z_]\w*)|(.))")
_FUNCS = {"exp": ex.exp, "ln": ex.log, "log": ex.log, "tanh": ex.tanh}


def _tokens(text):
    out = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        num, name, op = mt.groups()
        if num is not None:
            out.append(("num", float(num)))
        elif name is not None:
            out.append(("name", name))
        elif op in "+-*/^()":
            out.append(("op", op))
        else:
            raise ConfigError(f"unexpected character {op!r} in {text!r}")
        pos = mt.end()
    out.append(("end", None))
    return out


class _Parser:
    def __init__(self, text, names):
        self.text = text
        self.toks = _tokens(text)
        self.i = 0
        self.names = {nm: k for k, nm in enumerate(names)}

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value and tok[1] != value):
            raise ConfigError(f"expected {value or kind} in {self.text!r}, got {tok[1]!r}")
        self.i += 1
        return tok

    def is_op(self, *ops):
        tok = self.peek()
        return tok[0] == "op" and tok[1] in ops

    def expr(self):
        node = self.term()
        while self.is_op("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = ex.add(node, rhs) if op == "+" else ex.add(node, ex.neg(rhs))
        return node

    def term(self):
        node = self.unary()
        while self.is_op("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = ex.mul(node, rhs) if op == "*" else ex.div(node, rhs)
        return node

    def unary(self):
        if self.is_op("-"):
            self.take()
            return ex.neg(self.unary())
        if self.is_op("+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.is_op("^"):
            self.take()
            return _pow(base, self.unary())
        return base

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return ex.const(val)
        if kind == "name":
            self.take()
            if val in _FUNCS:
                self.take("op", "(")
                arg = self.expr()
                self.take("op", ")")
                return _FUNCS[val](arg)
            if val not in self.names:
                raise ConfigError(f"unknown name {val!r} in {self.text!r}; "
                                  f"coordinates are {sorted(self.names)}")
            return ex.sym(self.names[val], val)
        if self.is_op("("):
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ConfigError(f"unexpected {what} in {self.text!r}")


def _pow(base, e):
    if e.is_const and float(e.value).is_integer():
        return ex.power(base, int(e.value))
    # non-integer exponents go through exp/ln, so the base must stay positive
    return ex.exp(ex.mul(e, ex.log(base)))


def parse(text, names=("t",)):
    """Parse ``text`` into an :class:`~fkenmotsu.expr.Expr` over coordinates ``names``."""
    if not isinstance(text, str) or not text.strip():
        raise ConfigError("empty expression")
    p = _Parser(text, names)
    node = p.expr()
    p.take("end")
    return node
