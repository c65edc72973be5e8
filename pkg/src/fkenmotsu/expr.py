"""Scalar expressions over chart coordinates and truncated-Taylor jets.

An :class:`Expr` is an immutable tree built from coordinate symbols,
constants, the four arithmetic operations, integer powers, ``exp``, ``log``
and ``tanh``.  :func:`eval_jet` pushes a point (or a batch of points)
through the tree carrying all partial derivatives up to order 3, so the
derivatives are exact up to rounding.  Finite differences appear only in
:func:`fd_check`, which is used as an independent oracle.

Points are arrays whose last axis indexes the coordinates; any leading axes
are treated as a batch and are carried through every jet component.
"""

from __future__ import annotations

import numbers

import numpy as np

from .errors import DomainError

MAX_ORDER = 3


class Jet:
    """Value and partial derivatives of a scalar up to ``order``.

    ``d1[..., i]``, ``d2[..., i, j]`` and ``d3[..., i, j, k]`` are the
    partials with respect to the jet directions (not necessarily all chart
    coordinates). Unused orders are ``None``.
    """

    __slots__ = ("order", "v", "d1", "d2", "d3", "const", "nvars")

    def __init__(self, order, v, d1=None, d2=None, d3=None, const=False, nvars=None):
        self.order = order
        self.v = v
        self.d1 = d1
        self.d2 = d2
        self.d3 = d3
        self.const = const
        self.nvars = d1.shape[-1] if nvars is None and d1 is not None else nvars

    def derivative(self, k):
        if k == 0:
            return self.v
        if k > self.order:
            return None
        d = (self.d1, self.d2, self.d3)[k - 1]
        if d is None:
            # constant jets keep their derivative arrays implicit
            return np.zeros(np.shape(self.v) + (self.nvars,) * k)
        return d

    def __repr__(self):
        return f"Jet(order={self.order}, v={self.v!r})"


def _constant_jet(c, shape, order, k):
    return Jet(order, np.full(shape, float(c)), const=True, nvars=k)


def _full_jet(v, order, k):
    shape = np.shape(v)
    d = [np.zeros(shape + (k,) * q) for q in range(1, order + 1)]
    d += [None] * (MAX_ORDER - order)
    return Jet(order, v, *d, nvars=k)


def _sym3(a, b):
    # a_ij b_k + a_ik b_j + a_jk b_i
    return (a[..., :, :, None] * b[..., None, None, :]
            + a[..., :, None, :] * b[..., None, :, None]
            + a[..., None, :, :] * b[..., :, None, None])


def _add(u, w, sign=1.0):
    if u.const and w.const:
        return Jet(u.order, u.v + sign * w.v, const=True, nvars=u.nvars)
    if w.const:
        return Jet(u.order, u.v + sign * w.v, u.d1, u.d2, u.d3, nvars=u.nvars)
    if u.const:
        out = _scale(w, sign) if sign != 1.0 else w
        return Jet(u.order, u.v + out.v, out.d1, out.d2, out.d3, nvars=u.nvars)
    out = [u.v + sign * w.v]
    for q in range(1, u.order + 1):
        out.append(u.derivative(q) + sign * w.derivative(q))
    out += [None] * (MAX_ORDER - u.order)
    return Jet(u.order, *out, const=u.const and w.const)


def _scale(u, c):
    if u.const:
        return Jet(u.order, c * u.v, const=True, nvars=u.nvars)
    out = [c * u.v]
    for q in range(1, u.order + 1):
        cq = np.reshape(c, np.shape(c) + (1,) * q) if np.ndim(c) else c
        out.append(cq * u.derivative(q))
    out += [None] * (MAX_ORDER - u.order)
    return Jet(u.order, *out, nvars=u.nvars)


def _mul(u, w):
    if u.const:
        return _scale(w, u.v)
    if w.const:
        return _scale(u, w.v)
    order = u.order
    uv, wv = u.v, w.v
    v = uv * wv
    d1 = d2 = d3 = None
    if order >= 1:
        u1, w1 = u.d1, w.d1
        d1 = u1 * wv[..., None] + uv[..., None] * w1
    if order >= 2:
        u2, w2 = u.d2, w.d2
        outer = u1[..., :, None] * w1[..., None, :]
        d2 = (u2 * wv[..., None, None] + outer + np.swapaxes(outer, -1, -2)
              + uv[..., None, None] * w2)
    if order >= 3:
        d3 = (u.d3 * wv[..., None, None, None] + _sym3(u2, w1) + _sym3(w2, u1)
              + uv[..., None, None, None] * w.d3)
    return Jet(order, v, d1, d2, d3, nvars=u.nvars)


def _compose(u, f0, f1, f2, f3):
    """Chain rule for a unary function with derivatives f0..f3 at u.v."""
    if u.const:
        return Jet(u.order, f0, const=True, nvars=u.nvars)
    order = u.order
    d1 = d2 = d3 = None
    if order >= 1:
        u1 = u.d1
        d1 = f1[..., None] * u1
    if order >= 2:
        u2 = u.d2
        d2 = (f2[..., None, None] * (u1[..., :, None] * u1[..., None, :])
              + f1[..., None, None] * u2)
    if order >= 3:
        u111 = u1[..., :, None, None] * u1[..., None, :, None] * u1[..., None, None, :]
        d3 = (f3[..., None, None, None] * u111 + f2[..., None, None, None] * _sym3(u2, u1)
              + f1[..., None, None, None] * u.d3)
    return Jet(order, f0, d1, d2, d3)


def _falling(n, k):
    c = 1
    for i in range(k):
        c *= n - i
    return c


class Expr:
    """Immutable expression node.

    Build expressions with the module-level constructors (:func:`const`,
    :func:`sym`, :func:`exp`, ...) and Python arithmetic operators. A light
    constant folding is applied on construction (``0*x -> 0``, ``x+0 -> x``,
    constant subtrees collapse) so metric arrays with many zero entries stay
    cheap.
    """

    __slots__ = ("op", "args", "value", "_hash")

    def __init__(self, op, args=(), value=None):
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "args", tuple(args))
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, name, value):
        raise AttributeError("Expr is immutable")

    # structural identity -------------------------------------------------
    def _key(self):
        return (self.op, self.value, tuple(a._key() for a in self.args))

    def __hash__(self):
        h = object.__getattribute__(self, "_hash")
        if h is None:
            h = hash(self._key())
            object.__setattr__(self, "_hash", h)
        return h

    def same_as(self, other):
        """Structural equality of two trees."""
        return isinstance(other, Expr) and self._key() == other._key()

    @property
    def is_const(self):
        return self.op == "const"

    def symbols(self):
        """Set of coordinate indices the expression depends on."""
        if self.op == "sym":
            return {self.value[0]}
        out = set()
        for a in self.args:
            out |= a.symbols()
        return out

    # arithmetic ------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        return power(self, n)

    def __repr__(self):
        return f"Expr({self})"

    def __str__(self):
        op, a = self.op, self.args
        if op == "const":
            return repr(self.value)
        if op == "sym":
            return self.value[1]
        if op == "add":
            return "(" + " + ".join(str(x) for x in a) + ")"
        if op == "mul":
            return "(" + "*".join(str(x) for x in a) + ")"
        if op == "div":
            return f"({a[0]}/{a[1]})"
        if op == "neg":
            return f"(-{a[0]})"
        if op == "pow":
            return f"({a[0]}^{self.value})"
        return f"{op}({a[0]})"


def _wrap(x):
    if isinstance(x, Expr):
        return x
    if isinstance(x, numbers.Real):
        return const(x)
    raise TypeError(f"cannot build an expression from {type(x).__name__}")


def const(c):
    return Expr("const", value=float(c))


ZERO = const(0.0)
ONE = const(1.0)


def sym(index, name=None):
    """Coordinate symbol number ``index`` (0 is ``t``)."""
    if name is None:
        name = "t" if index == 0 else f"x{index}"
    return Expr("sym", value=(int(index), str(name)))


def add(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.is_const and b.is_const:
        return const(a.value + b.value)
    if a.is_const and a.value == 0.0:
        return b
    if b.is_const and b.value == 0.0:
        return a
    return Expr("add", (a, b))


def neg(a):
    a = _wrap(a)
    if a.is_const:
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    return Expr("neg", (a,))


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    if a.is_const and b.is_const:
        return const(a.value * b.value)
    for x, y in ((a, b), (b, a)):
        if x.is_const:
            if x.value == 0.0:
                return ZERO
            if x.value == 1.0:
                return y
            if x.value == -1.0:
                return neg(y)
    return Expr("mul", (a, b))


def div(a, b):
    a, b = _wrap(a), _wrap(b)
    if b.is_const:
        if b.value == 0.0:
            raise DomainError("division by the constant 0")
        return mul(a, 1.0 / b.value)
    if a.is_const and a.value == 0.0:
        return ZERO
    return Expr("div", (a, b))


def power(a, n):
    if int(n) != n:
        raise TypeError("only integer powers are supported")
    n = int(n)
    a = _wrap(a)
    if n == 0:
        return ONE
    if n == 1:
        return a
    if a.is_const:
        if a.value == 0.0 and n < 0:
            raise DomainError("0 raised to a negative power")
        return const(a.value ** n)
    return Expr("pow", (a,), value=n)


def exp(a):
    a = _wrap(a)
    if a.is_const:
        return const(np.exp(a.value))
    return Expr("exp", (a,))


def log(a):
    a = _wrap(a)
    if a.is_const:
        if a.value <= 0:
            raise DomainError(f"log of non-positive constant {a.value}")
        return const(np.log(a.value))
    return Expr("log", (a,))


def tanh(a):
    a = _wrap(a)
    if a.is_const:
        return const(np.tanh(a.value))
    return Expr("tanh", (a,))


ln = log


# evaluation ------------------------------------------------------------------

def _as_points(p):
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        p = p[None]
    return p


def eval_jet(e, p, order=0, dirs=None):
    """Evaluate ``e`` and its partials up to ``order`` at ``p``.

    Parameters
    ----------
    e : Expr
    p : array_like, shape (..., m)
        Point coordinates; leading axes form a batch.
    order : int
        Highest derivative order, 0 to 3.
    dirs : sequence of int, optional
        Coordinates to differentiate with respect to; all by default.

    Returns
    -------
    Jet
    """
    return eval_jets([e], p, order, dirs)[0]


def eval_jets(exprs, p, order=0, dirs=None):
    """Evaluate several expressions at once, sharing common subtrees."""
    if not 0 <= order <= MAX_ORDER:
        raise ValueError(f"jet order must be in 0..{MAX_ORDER}, got {order}")
    p = _as_points(p)
    m = p.shape[-1]
    dirs = tuple(range(m)) if dirs is None else tuple(dirs)
    ev = _Evaluator(p, order, dirs)
    return [ev(e) for e in exprs]


def evaluate(e, p):
    """Value-only evaluation, shape ``p.shape[:-1]``."""
    return eval_jet(e, p, 0).v


class _Evaluator:
    def __init__(self, p, order, dirs):
        self.p = p
        self.order = order
        self.dirs = dirs
        self.k = len(dirs)
        self.shape = p.shape[:-1]
        self.memo = {}

    def __call__(self, e):
        key = id(e)
        hit = self.memo.get(key)
        if hit is not None:
            return hit[1]
        out = self._eval(e)
        # keep e alive so its id is not recycled
        self.memo[key] = (e, out)
        return out

    def _eval(self, e):
        op = e.op
        if op == "const":
            return _constant_jet(e.value, self.shape, self.order, self.k)
        if op == "sym":
            idx = e.value[0]
            if idx >= self.p.shape[-1]:
                raise IndexError(f"symbol {e.value[1]} outside a {self.p.shape[-1]}-dim chart")
            jet = _full_jet(self.p[..., idx].copy(), self.order, self.k)
            if self.order >= 1 and idx in self.dirs:
                jet.d1[..., self.dirs.index(idx)] = 1.0
            return jet
        args = [self(a) for a in e.args]
        if op == "add":
            return _add(args[0], args[1])
        if op == "neg":
            return _scale(args[0], -1.0)
        if op == "mul":
            return _mul(args[0], args[1])
        if op == "div":
            return _mul(args[0], self._power(args[1], -1))
        if op == "pow":
            return self._power(args[0], e.value)
        u = args[0]
        x = u.v
        if op == "exp":
            y = np.exp(x)
            if not np.all(np.isfinite(y)):
                raise DomainError("exp overflow")
            return _compose(u, y, y, y, y)
        if op == "log":
            if np.any(x <= 0):
                raise DomainError("log of a non-positive value")
            inv = 1.0 / x
            return _compose(u, np.log(x), inv, -inv ** 2, 2.0 * inv ** 3)
        if op == "tanh":
            y = np.tanh(x)
            s = 1.0 - y * y
            return _compose(u, y, s, -2.0 * y * s, -2.0 * s * (1.0 - 3.0 * y * y))
        raise ValueError(f"unknown expression node {op!r}")

    def _power(self, u, n):
        x = u.v
        if n < 0 and np.any(x == 0):
            raise DomainError("division by zero")
        fs = []
        for q in range(MAX_ORDER + 1):
            c = _falling(n, q)
            if c == 0:
                fs.append(np.zeros_like(x))
            else:
                fs.append(c * x ** float(n - q))
        out = _compose(u, *fs)
        if not np.all(np.isfinite(out.v)):
            raise DomainError("non-finite power")
        return out


def fd_check(e, p, h=1e-5, order=1):
    """Largest relative gap between jet partials and central differences.

    Order 1 differences the values directly. Order ``q > 1`` differences
    the exact order ``q-1`` jet partials, which keeps the oracle free of the
    ``eps/h**q`` rounding blow-up of nested value differences. The gap is
    measured relative to ``max(1, max|partial|)``.
    """
    if not 1 <= order <= MAX_ORDER:
        raise ValueError("fd_check order must be 1..3")
    p = _as_points(p)
    m = p.shape[-1]
    exact = eval_jet(e, p, order).derivative(order)
    fd = np.empty_like(exact)
    for i in range(m):
        step = np.zeros(m)
        step[i] = h
        plus = eval_jet(e, p + step, order - 1).derivative(order - 1)
        minus = eval_jet(e, p - step, order - 1).derivative(order - 1)
        fd[..., i] = (plus - minus) / (2.0 * h)
    scale = max(1.0, float(np.max(np.abs(exact))) if exact.size else 1.0)
    return float(np.max(np.abs(exact - fd)) / scale) if exact.size else 0.0
