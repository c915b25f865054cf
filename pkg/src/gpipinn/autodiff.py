"""Reverse-mode tape with second-order Taylor jets on top.

Tape values may be Python floats or numpy arrays; every primitive is
elementwise (with numpy broadcasting) or one of a handful of shape ops
(matmul, sum, reshape, getitem, concat).  A :class:`Jet2` whose components
are tape variables gives reverse-mode derivatives of second-order forward
derivatives, which is what the residual trainer needs for its third-order
gradient path.

The functions ``exp``, ``log``, ``tanh``, ... dispatch on argument type, so the
same model code runs on plain arrays, on tape variables, and on jets.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class NonFiniteError(FloatingPointError):
    """A recorded value or adjoint became inf/nan."""

    def __init__(self, index: int, op: str, phase: str = "forward"):
        self.index = index
        self.op = op
        self.phase = phase
        super().__init__(f"non-finite {phase} value at tape node {index} (op={op!r})")


class DomainError(ValueError):
    pass


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    g = np.asarray(g)
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _shape(v):
    return np.shape(v)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


# Each primitive: fwd(*values, **aux) -> value, vjp(g, out, *values, **aux) -> grads.
def _vjp_add(g, out, a, b):
    return _unbroadcast(g, _shape(a)), _unbroadcast(g, _shape(b))


def _vjp_sub(g, out, a, b):
    return _unbroadcast(g, _shape(a)), -_unbroadcast(g, _shape(b))


def _vjp_mul(g, out, a, b):
    return _unbroadcast(g * b, _shape(a)), _unbroadcast(g * a, _shape(b))


def _vjp_div(g, out, a, b):
    return _unbroadcast(g / b, _shape(a)), _unbroadcast(-g * out / b, _shape(b))


def _vjp_matmul(g, out, a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if b.ndim == 1:
        ga = np.multiply.outer(g, b) if a.ndim > 1 else g * b
        gb = a.T @ g if a.ndim > 1 else g * a
        return ga, gb
    ga = g @ b.T
    gb = a.T @ g if a.ndim > 1 else np.outer(a, g)
    return ga, gb


def _vjp_sum(g, out, a, axis=None, keepdims=False):
    shape = _shape(a)
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return (np.broadcast_to(g, shape).copy(),)


def _fwd_getitem(a, key):
    return np.asarray(a)[key]


def _vjp_getitem(g, out, a, key):
    ga = np.zeros(_shape(a))
    np.add.at(ga, key, g)
    return (ga,)


def _vjp_concat(g, out, *parts, axis=0):
    sizes = np.cumsum([np.shape(p)[axis] for p in parts])[:-1]
    return tuple(np.split(g, sizes, axis=axis))


_PRIMITIVES: dict[str, tuple[Callable, Callable]] = {
    "add": (np.add, _vjp_add),
    "sub": (np.subtract, _vjp_sub),
    "mul": (np.multiply, _vjp_mul),
    "div": (np.divide, _vjp_div),
    "neg": (np.negative, lambda g, out, a: (-g,)),
    "exp": (np.exp, lambda g, out, a: (g * out,)),
    "log": (np.log, lambda g, out, a: (g / a,)),
    "tanh": (np.tanh, lambda g, out, a: (g * (1.0 - out * out),)),
    "sigmoid": (_sigmoid, lambda g, out, a: (g * out * (1.0 - out),)),
    "softplus": (_softplus, lambda g, out, a: (g * _sigmoid(a),)),
    "sqrt": (np.sqrt, lambda g, out, a: (0.5 * g / out,)),
    "square": (np.square, lambda g, out, a: (2.0 * g * a,)),
    "pow": (
        lambda a, p: np.power(a, p),
        lambda g, out, a, p: (g * p * np.power(a, p - 1.0),),
    ),
    "maximum": (
        np.maximum,
        lambda g, out, a, b: (
            _unbroadcast(g * (np.asarray(a) >= b), _shape(a)),
            _unbroadcast(g * (np.asarray(a) < b), _shape(b)),
        ),
    ),
    "where": (
        lambda a, b, mask: np.where(mask, a, b),
        lambda g, out, a, b, mask: (
            _unbroadcast(np.where(mask, g, 0.0), _shape(a)),
            _unbroadcast(np.where(mask, 0.0, g), _shape(b)),
        ),
    ),
    "matmul": (np.matmul, _vjp_matmul),
    "sum": (lambda a, axis=None, keepdims=False: np.sum(a, axis=axis, keepdims=keepdims), _vjp_sum),
    "reshape": (
        lambda a, shape: np.reshape(a, shape),
        lambda g, out, a, shape: (np.reshape(g, _shape(a)),),
    ),
    "getitem": (_fwd_getitem, _vjp_getitem),
    "concat": (lambda *parts, axis=0: np.concatenate(parts, axis=axis), _vjp_concat),
}


class Var:
    """A value recorded on a :class:`Tape`."""

    __slots__ = ("tape", "index", "value", "op", "parents", "aux")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, tape, index, value, op, parents, aux):
        self.tape = tape
        self.index = index
        self.value = value
        self.op = op
        self.parents = parents
        self.aux = aux

    @property
    def shape(self):
        return _shape(self.value)

    @property
    def ndim(self):
        return np.ndim(self.value)

    def __repr__(self):
        return f"Var(#{self.index} {self.op}, shape={self.shape})"

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return self.tape.record("neg", (self,))

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, key):
        return self.tape.record("getitem", (self,), key=key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return self.tape.record("reshape", (self,), shape=shape)

    def sum(self, axis=None, keepdims=False):
        return self.tape.record("sum", (self,), axis=axis, keepdims=keepdims)


class Tape:
    """Append-only record of primitive operations.

    Node order is creation order, which is a valid topological order, so the
    backward sweep is a single reverse scan.
    """

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Var] = []
        self.check_finite = check_finite

    def __len__(self):
        return len(self.nodes)

    def _push(self, value, op, parents, aux) -> Var:
        node = Var(self, len(self.nodes), value, op, parents, aux)
        self.nodes.append(node)
        return node

    def leaf(self, value) -> Var:
        value = np.array(value, dtype=float) if np.ndim(value) else float(value)
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NonFiniteError(len(self.nodes), "leaf")
        return self._push(value, "leaf", (), {})

    def _lift(self, x) -> Var:
        if isinstance(x, Var):
            if x.tape is not self:
                raise ValueError("cannot mix variables from different tapes")
            return x
        return self._push(np.asarray(x, dtype=float) if np.ndim(x) else float(x), "const", (), {})

    def record(self, op: str, args: Sequence, **aux) -> Var:
        parents = tuple(self._lift(a) for a in args)
        fwd, _ = _PRIMITIVES[op]
        with np.errstate(all="ignore"):
            value = fwd(*(p.value for p in parents), **aux)
        if self.check_finite and not np.all(np.isfinite(value)):
            raise NonFiniteError(len(self.nodes), op)
        return self._push(value, op, parents, aux)

    def replay(self) -> list:
        """Recompute every node from the leaves; returns the values in tape order."""
        values: list = []
        for node in self.nodes:
            if node.op in ("leaf", "const"):
                values.append(node.value)
            else:
                fwd, _ = _PRIMITIVES[node.op]
                with np.errstate(all="ignore"):
                    values.append(fwd(*(values[p.index] for p in node.parents), **node.aux))
        return values

    def backward(self, out: Var, seed=None) -> list:
        """Adjoints of ``out`` w.r.t. every node (``None`` where unreachable)."""
        if out.tape is not self:
            raise ValueError("output was not recorded on this tape")
        adj: list = [None] * (out.index + 1)
        adj[out.index] = np.ones_like(np.asarray(out.value, dtype=float)) if seed is None else seed
        for i in range(out.index, -1, -1):
            g = adj[i]
            if g is None:
                continue
            node = self.nodes[i]
            if not node.parents:
                continue
            _, vjp = _PRIMITIVES[node.op]
            with np.errstate(all="ignore"):
                grads = vjp(g, node.value, *(p.value for p in node.parents), **node.aux)
            for p, gp in zip(node.parents, grads):
                if p.op == "const":
                    continue
                if self.check_finite and not np.all(np.isfinite(gp)):
                    raise NonFiniteError(i, node.op, phase="backward")
                j = p.index
                adj[j] = gp if adj[j] is None else adj[j] + gp
        return adj

    def gradient(self, out: Var, wrt: Sequence[Var]) -> list:
        if np.size(out.value) != 1:
            raise ValueError("gradient() needs a scalar output")
        adj = self.backward(out)
        res = []
        for v in wrt:
            g = adj[v.index] if v.index < len(adj) else None
            res.append(np.zeros_like(np.asarray(v.value, dtype=float)) if g is None else np.asarray(g, dtype=float).reshape(v.shape))
        return res


# ---------------------------------------------------------------------------
# Second-order jets


class Jet2:
    """Truncated Taylor coefficients ``(f, f', f'')`` along a scalar direction ``h``.

    Components can be floats, arrays or :class:`Var`; a literal ``0.0``
    component is kept symbolic so constant inputs cost nothing.
    """

    __slots__ = ("val", "d1", "d2")
    __array_ufunc__ = None

    def __init__(self, val, d1=0.0, d2=0.0):
        self.val = val
        self.d1 = d1
        self.d2 = d2

    @classmethod
    def seed(cls, val=0.0):
        return cls(val, 1.0, 0.0)

    @classmethod
    def constant(cls, val):
        return cls(val, 0.0, 0.0)

    def __iter__(self):
        return iter((self.val, self.d1, self.d2))

    def __repr__(self):
        return f"Jet2({self.val!r}, {self.d1!r}, {self.d2!r})"

    @property
    def shape(self):
        return _shape(self.val.value if isinstance(self.val, Var) else self.val)

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return Jet2(_neg(self.val), _neg(self.d1), _neg(self.d2))

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __getitem__(self, key):
        return Jet2(*(_index(c, key) for c in self))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return Jet2(*(_reshape(c, shape) for c in self))

    def sum(self, axis=None, keepdims=False):
        return Jet2(*(_sum(c, axis, keepdims) for c in self))


def _zero(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and x == 0.0


def _tape_of(*xs):
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    return None


def _binary(op, a, b, npfn):
    tape = _tape_of(a, b)
    if tape is not None:
        return tape.record(op, (a, b))
    return npfn(a, b)


def _add(a, b):
    if _zero(a):
        return b
    if _zero(b):
        return a
    return _binary("add", a, b, np.add)


def _sub(a, b):
    if _zero(b):
        return a
    if _zero(a):
        return _neg(b)
    return _binary("sub", a, b, np.subtract)


def _mul(a, b):
    if _zero(a) or _zero(b):
        return 0.0
    return _binary("mul", a, b, np.multiply)


def _div(a, b):
    if _zero(a):
        return 0.0
    return _binary("div", a, b, np.divide)


def _neg(a):
    if _zero(a):
        return 0.0
    if isinstance(a, Var):
        return a.tape.record("neg", (a,))
    return -a


def _matmul(a, b):
    if _zero(a) or _zero(b):
        return 0.0
    return _binary("matmul", a, b, np.matmul)


def _index(a, key):
    if _zero(a):
        return 0.0
    if isinstance(a, Var):
        return a.tape.record("getitem", (a,), key=key)
    return np.asarray(a)[key]


def _reshape(a, shape):
    if _zero(a):
        return 0.0
    if isinstance(a, Var):
        return a.tape.record("reshape", (a,), shape=shape)
    return np.reshape(a, shape)


def _sum(a, axis, keepdims):
    if _zero(a):
        return 0.0
    if isinstance(a, Var):
        return a.tape.record("sum", (a,), axis=axis, keepdims=keepdims)
    return np.sum(a, axis=axis, keepdims=keepdims)


def _unary(op, a, npfn, **aux):
    if isinstance(a, Var):
        return a.tape.record(op, (a,), **aux)
    return npfn(a, **aux) if aux else npfn(a)


def _value(x):
    return x.value if isinstance(x, Var) else x


def _as_jet(x):
    return x if isinstance(x, Jet2) else Jet2(x, 0.0, 0.0)


def _chain(a: Jet2, f, f1, f2) -> Jet2:
    """Jet of ``g(a)`` given ``g(a.val)``, ``g'(a.val)``, ``g''(a.val)``."""
    d1 = _mul(f1, a.d1)
    d2 = _add(_mul(f2, _mul(a.d1, a.d1)) if not _zero(a.d1) else 0.0, _mul(f1, a.d2))
    return Jet2(f, d1, d2)


# ---------------------------------------------------------------------------
# Public differentiable functions (floats/arrays, Var, Jet2)


def add(a, b):
    if isinstance(a, Jet2) or isinstance(b, Jet2):
        a, b = _as_jet(a), _as_jet(b)
        return Jet2(_add(a.val, b.val), _add(a.d1, b.d1), _add(a.d2, b.d2))
    return _add(a, b)


def sub(a, b):
    if isinstance(a, Jet2) or isinstance(b, Jet2):
        a, b = _as_jet(a), _as_jet(b)
        return Jet2(_sub(a.val, b.val), _sub(a.d1, b.d1), _sub(a.d2, b.d2))
    return _sub(a, b)


def mul(a, b):
    if isinstance(a, Jet2) and isinstance(b, Jet2):
        val = _mul(a.val, b.val)
        d1 = _add(_mul(a.d1, b.val), _mul(a.val, b.d1))
        cross = _mul(a.d1, b.d1)
        d2 = _add(_add(_mul(a.d2, b.val), _add(cross, cross)), _mul(a.val, b.d2))
        return Jet2(val, d1, d2)
    if isinstance(a, Jet2):
        return Jet2(_mul(a.val, b), _mul(a.d1, b), _mul(a.d2, b))
    if isinstance(b, Jet2):
        return Jet2(_mul(a, b.val), _mul(a, b.d1), _mul(a, b.d2))
    return _mul(a, b)


def reciprocal(a):
    if isinstance(a, Jet2):
        r = _div(1.0, a.val)
        r2 = _mul(r, r)
        return _chain(a, r, _neg(r2), _mul(2.0, _mul(r2, r)))
    return _div(1.0, a)


def div(a, b):
    if isinstance(b, Jet2):
        return mul(a, reciprocal(b))
    if isinstance(a, Jet2):
        return Jet2(_div(a.val, b), _div(a.d1, b), _div(a.d2, b))
    return _div(a, b)


def neg(a):
    return -a if isinstance(a, Jet2) else _neg(a)


def matmul(a, b):
    """Matrix product; at most one side may be a jet (weights are never jets)."""
    if isinstance(a, Jet2) and isinstance(b, Jet2):
        raise TypeError("jet @ jet is not supported")
    if isinstance(a, Jet2):
        return Jet2(_matmul(a.val, b), _matmul(a.d1, b), _matmul(a.d2, b))
    if isinstance(b, Jet2):
        return Jet2(_matmul(a, b.val), _matmul(a, b.d1), _matmul(a, b.d2))
    return _matmul(a, b)


def exp(a):
    if isinstance(a, Jet2):
        e = exp(a.val)
        return _chain(a, e, e, e)
    return _unary("exp", a, np.exp)


def log(a):
    if isinstance(a, Jet2):
        if np.any(np.asarray(_value(a.val)) <= 0):
            raise DomainError("log of a non-positive jet value")
        r = reciprocal(a.val)
        return _chain(a, log(a.val), r, _neg(_mul(r, r)))
    return _unary("log", a, np.log)


def tanh(a):
    if isinstance(a, Jet2):
        y = tanh(a.val)
        dy = _sub(1.0, _mul(y, y))
        return _chain(a, y, dy, _mul(-2.0, _mul(y, dy)))
    return _unary("tanh", a, np.tanh)


def sigmoid(a):
    if isinstance(a, Jet2):
        s = sigmoid(a.val)
        ds = _mul(s, _sub(1.0, s))
        return _chain(a, s, ds, _mul(ds, _sub(1.0, _mul(2.0, s))))
    return _unary("sigmoid", a, _sigmoid)


def softplus(a):
    if isinstance(a, Jet2):
        s = sigmoid(a.val)
        return _chain(a, softplus(a.val), s, _mul(s, _sub(1.0, s)))
    return _unary("softplus", a, _softplus)


def sqrt(a):
    if isinstance(a, Jet2):
        if np.any(np.asarray(_value(a.val)) <= 0):
            raise DomainError("sqrt of a non-positive jet value (derivative undefined)")
        r = sqrt(a.val)
        f1 = _div(0.5, r)
        return _chain(a, r, f1, _neg(_div(f1, _mul(2.0, a.val))))
    return _unary("sqrt", a, np.sqrt)


def square(a):
    if isinstance(a, Jet2):
        return mul(a, a)
    return _unary("square", a, np.square)


def power(a, p: float):
    """``a ** p`` for a constant real exponent ``p``."""
    p = float(p)
    if p == 2.0:
        return square(a)
    if isinstance(a, Jet2):
        if not p.is_integer() and np.any(np.asarray(_value(a.val)) <= 0):
            raise DomainError("fractional power of a non-positive jet value")
        f = power(a.val, p)
        f1 = _mul(p, power(a.val, p - 1.0))
        f2 = _mul(p * (p - 1.0), power(a.val, p - 2.0))
        return _chain(a, f, f1, f2)
    if p == 1.0:
        return a
    if p == 0.0:
        return np.ones_like(np.asarray(_value(a), dtype=float)) if np.ndim(_value(a)) else 1.0
    if isinstance(a, Var):
        return a.tape.record("pow", (a,), p=p)
    return np.power(a, p)


def maximum(a, b):
    if isinstance(a, Jet2) or isinstance(b, Jet2):
        a, b = _as_jet(a), _as_jet(b)
        mask = np.asarray(_value(a.val)) >= np.asarray(_value(b.val))
        return Jet2(*(where(mask, x, y) for x, y in zip(a, b)))
    tape = _tape_of(a, b)
    if tape is not None:
        return tape.record("maximum", (a, b))
    return np.maximum(a, b)


def where(mask, a, b):
    if isinstance(a, Jet2) or isinstance(b, Jet2):
        a, b = _as_jet(a), _as_jet(b)
        return Jet2(*(where(mask, x, y) for x, y in zip(a, b)))
    tape = _tape_of(a, b)
    if tape is not None:
        return tape.record("where", (a, b), mask=np.asarray(mask))
    return np.where(mask, a, b)


def concat(parts: Sequence, axis: int = 0):
    if any(isinstance(p, Jet2) for p in parts):
        jets = [_as_jet(p) for p in parts]
        comps = []
        for k in range(3):
            cs = [(j.val, j.d1, j.d2)[k] for j in jets]
            if all(_zero(c) for c in cs):
                comps.append(0.0)
                continue
            cs = [np.zeros(jets[i].shape) if _zero(c) else c for i, c in enumerate(cs)]
            comps.append(concat(cs, axis))
        return Jet2(*comps)
    tape = _tape_of(*parts)
    if tape is not None:
        return tape.record("concat", parts, axis=axis)
    return np.concatenate(parts, axis=axis)


def reshape(a, shape):
    if isinstance(a, Jet2):
        return a.reshape(shape)
    return _reshape(a, shape)


def asum(a, axis=None, keepdims=False):
    if isinstance(a, Jet2):
        return a.sum(axis=axis, keepdims=keepdims)
    return _sum(a, axis, keepdims)


def mean(a, axis=None, keepdims=False):
    n = np.size(_value(a.val if isinstance(a, Jet2) else a))
    if axis is not None:
        n = np.shape(_value(a.val if isinstance(a, Jet2) else a))[axis]
    return div(asum(a, axis=axis, keepdims=keepdims), float(n))


def value_of(x):
    """Strip tape wrappers: returns the numeric value of a float/array/Var/Jet2."""
    if isinstance(x, Jet2):
        return Jet2(value_of(x.val), value_of(x.d1), value_of(x.d2))
    return _value(x)


# ---------------------------------------------------------------------------
# Drivers


def grad(program: Callable, params, inputs=None) -> np.ndarray:
    """Gradient of the scalar ``program(params, inputs)`` w.r.t. ``params``.

    ``params`` is never mutated; ``program`` receives a tape variable in its
    place.
    """
    tape = Tape()
    p = tape.leaf(np.array(params, dtype=float, copy=True))
    out = program(p, inputs) if inputs is not None else program(p)
    if isinstance(out, Jet2):
        raise TypeError("program returned a jet; use grad_through_jet")
    if not isinstance(out, Var):
        return np.zeros_like(np.asarray(params, dtype=float))
    return tape.gradient(out, [p])[0]


def jet2_eval(curve: Callable, seed: Jet2 | None = None) -> Jet2:
    """Push ``seed`` (default ``(0, 1, 0)``) through ``curve``; returns numeric jet."""
    seed = Jet2.seed(0.0) if seed is None else seed
    out = curve(seed)
    out = _as_jet(out)
    return Jet2(*(float(np.asarray(value_of(c))) if np.ndim(value_of(c)) == 0 else np.asarray(value_of(c)) for c in out))


def grad_through_jet(program: Callable, params, inputs=None) -> np.ndarray:
    """Gradient w.r.t. ``params`` of the second jet coefficient returned by ``program``."""
    tape = Tape()
    p = tape.leaf(np.array(params, dtype=float, copy=True))
    out = program(p, inputs) if inputs is not None else program(p)
    d2 = _as_jet(out).d2
    if not isinstance(d2, Var):
        return np.zeros_like(np.asarray(params, dtype=float))
    return tape.gradient(asum(d2), [p])[0]
