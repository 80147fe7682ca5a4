"""Tape-based reverse-mode automatic differentiation.

A :class:`Tape` is an append-only list of nodes (a Wengert list). Each node
records its opcode, the indices of its operands, the evaluated value and the
local partial derivatives with respect to each operand. Node values may be
python scalars or numpy arrays; elementwise ops broadcast like numpy.

Reverse sweeps never mutate the tape, so :meth:`Tape.backward` can be called
any number of times on the same graph.

Forward-mode derivatives are available through :class:`Dual` numbers and
central finite differences through :func:`finite_diff_grad`. Both are used
as independent checks of the reverse sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

__all__ = [
    "AutodiffError",
    "InvalidInputError",
    "NumericDomainError",
    "TapeMismatchError",
    "Tape",
    "VarRef",
    "Dual",
    "GradResult",
    "tape_var",
    "apply",
    "backward",
    "value_and_grad",
    "forward_grad",
    "finite_diff_grad",
    "logistic_map_grad",
    "build_logistic_map",
    "nested_sigmoid_grad",
    "build_nested_sigmoid",
]


class AutodiffError(Exception):
    pass


class InvalidInputError(AutodiffError, ValueError):
    pass


class NumericDomainError(AutodiffError, ArithmeticError):
    """An operand fell outside the domain of an elementary op."""

    def __init__(self, message, node_index=None):
        super().__init__(message if node_index is None else f"{message} (node {node_index})")
        self.node_index = node_index


class TapeMismatchError(AutodiffError, ValueError):
    pass


class Node:
    __slots__ = ("op", "parents", "value", "partials", "vjp")

    def __init__(self, op, parents, value, partials=None, vjp=None):
        self.op = op
        self.parents = parents
        self.value = value
        # Elementwise ops store one local partial per parent; structural ops
        # (matmul, solve, reductions, indexing) store a vector-Jacobian map.
        self.partials = partials
        self.vjp = vjp

    def __repr__(self):
        return f"Node({self.op}, parents={self.parents})"


@dataclass
class GradResult:
    value: float
    grads: list


def _finite(x):
    if isinstance(x, float):
        return math.isfinite(x)
    return bool(np.all(np.isfinite(x)))


def _shape(x):
    return np.shape(x)


def _unbroadcast(g, shape):
    g = np.asarray(g)
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def _swap(x):
    return np.swapaxes(x, -1, -2)


class VarRef:
    """Handle to a node on a tape."""

    __slots__ = ("tape", "index")
    # make ndarray <op> VarRef dispatch to the reflected VarRef method
    __array_ufunc__ = None

    def __init__(self, tape, index):
        self.tape = tape
        self.index = index

    def __repr__(self):
        return f"VarRef({self.index})"

    @property
    def value(self):
        return self.tape.nodes[self.index].value

    @property
    def shape(self):
        return _shape(self.value)

    @property
    def ndim(self):
        return len(self.shape)

    @property
    def T(self):
        return self.tape.transpose(self)

    def __add__(self, other):
        return self.tape.apply("add", self, other)

    def __radd__(self, other):
        return self.tape.apply("add", other, self)

    def __sub__(self, other):
        return self.tape.apply("sub", self, other)

    def __rsub__(self, other):
        return self.tape.apply("sub", other, self)

    def __mul__(self, other):
        return self.tape.apply("mul", self, other)

    def __rmul__(self, other):
        return self.tape.apply("mul", other, self)

    def __truediv__(self, other):
        return self.tape.apply("div", self, other)

    def __rtruediv__(self, other):
        return self.tape.apply("div", other, self)

    def __neg__(self):
        return self.tape.apply("neg", self)

    def __pow__(self, other):
        return self.tape.apply("pow", self, other)

    def __rpow__(self, other):
        return self.tape.apply("pow", other, self)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __rmatmul__(self, other):
        return self.tape.matmul(other, self)

    def __getitem__(self, key):
        return self.tape.getitem(self, key)

    def sum(self, axis=None, keepdims=False):
        return self.tape.sum(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return self.tape.reshape(self, shape)


def _digamma(x):
    return special.digamma(x)


def _elementwise(op, a, b):
    """Value and local partials of an elementwise op."""
    if op == "add":
        return a + b, (1.0, 1.0)
    if op == "sub":
        return a - b, (1.0, -1.0)
    if op == "mul":
        return a * b, (b, a)
    if op == "div":
        inv = 1.0 / b
        return a * inv, (inv, -a * inv * inv)
    if op == "neg":
        return -a, (-1.0,)
    if op == "sin":
        return np.sin(a), (np.cos(a),)
    if op == "cos":
        return np.cos(a), (-np.sin(a),)
    if op == "exp":
        v = np.exp(a)
        return v, (v,)
    if op == "log":
        return np.log(a), (1.0 / a,)
    if op == "log1p":
        return np.log1p(a), (1.0 / (1.0 + a),)
    if op == "sqrt":
        v = np.sqrt(a)
        with np.errstate(divide="ignore"):
            return v, (0.5 / v,)
    if op == "abs":
        return np.abs(a), (np.sign(a),)
    if op == "lgamma":
        return special.gammaln(a), (_digamma(a),)
    if op == "pow":
        v = np.power(a, b)
        da = b * np.power(a, b - 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            db = np.where(np.asarray(a) > 0, v * np.log(np.where(np.asarray(a) > 0, a, 1.0)), 0.0)
        return v, (da, db)
    if op == "logsumexp_pair":
        v = np.logaddexp(a, b)
        return v, (np.exp(a - v), np.exp(b - v))
    raise InvalidInputError(f"unknown opcode {op!r}")


UNARY_OPS = frozenset({"neg", "sin", "cos", "exp", "log", "log1p", "sqrt", "abs", "lgamma"})
BINARY_OPS = frozenset({"add", "sub", "mul", "div", "pow", "logsumexp_pair"})


def _check_domain(op, a, b, index):
    if op == "log" and np.any(np.asarray(a) <= 0):
        raise NumericDomainError("log of non-positive value", index)
    if op == "div" and np.any(np.asarray(b) == 0):
        raise NumericDomainError("division by zero", index)
    if op == "sqrt" and np.any(np.asarray(a) < 0):
        raise NumericDomainError("sqrt of negative value", index)
    if op == "log1p" and np.any(np.asarray(a) <= -1):
        raise NumericDomainError("log1p of value <= -1", index)
    if op == "lgamma":
        arr = np.asarray(a)
        if np.any((arr <= 0) & (arr == np.round(arr))):
            raise NumericDomainError("lgamma at a pole", index)


class Tape:
    """Append-only evaluation trace."""

    def __init__(self):
        self.nodes: list[Node] = []

    def __len__(self):
        return len(self.nodes)

    def _push(self, op, parents, value, partials=None, vjp=None):
        index = len(self.nodes)
        if not _finite(value):
            raise NumericDomainError(f"non-finite value produced by {op}", index)
        self.nodes.append(Node(op, parents, value, partials, vjp))
        return VarRef(self, index)

    def _ref(self, x):
        if isinstance(x, VarRef):
            if x.tape is not self:
                raise TapeMismatchError("VarRef belongs to a different tape")
            return x
        return self.const(x)

    def var(self, value):
        """Register an independent input."""
        value = _as_value(value)
        if not _finite(value):
            raise InvalidInputError("input value must be finite")
        return self._push("var", (), value)

    def const(self, value):
        value = _as_value(value)
        if not _finite(value):
            raise InvalidInputError("constant must be finite")
        return self._push("const", (), value)

    def apply(self, op, a, b=None):
        if op in UNARY_OPS:
            if b is not None:
                raise InvalidInputError(f"{op} takes one operand")
            a = self._ref(a)
            av, bv = a.value, None
            parents = (a.index,)
        elif op in BINARY_OPS:
            if b is None:
                raise InvalidInputError(f"{op} takes two operands")
            a, b = self._ref(a), self._ref(b)
            av, bv = a.value, b.value
            parents = (a.index, b.index)
        else:
            raise InvalidInputError(f"unknown opcode {op!r}")
        index = len(self.nodes)
        _check_domain(op, av, bv, index)
        with np.errstate(all="ignore"):
            value, partials = _elementwise(op, av, bv)
        if isinstance(value, np.ndarray) and value.ndim == 0:
            value = float(value)
        return self._push(op, parents, value, partials=partials)

    # structural ops -------------------------------------------------------

    def sum(self, a, axis=None, keepdims=False):
        a = self._ref(a)
        shape = a.shape
        value = np.sum(a.value, axis=axis, keepdims=keepdims)

        def vjp(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return self._push("sum", (a.index,), _as_value(value), vjp=vjp)

    def reshape(self, a, shape):
        a = self._ref(a)
        old = a.shape
        return self._push(
            "reshape", (a.index,), np.reshape(a.value, shape),
            vjp=lambda g: (np.reshape(g, old),),
        )

    def transpose(self, a):
        """Swap the last two axes."""
        a = self._ref(a)
        return self._push("transpose", (a.index,), _swap(a.value), vjp=lambda g: (_swap(g),))

    def getitem(self, a, key):
        a = self._ref(a)
        shape = a.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, key, g)
            return (out,)

        return self._push("getitem", (a.index,), _as_value(np.asarray(a.value)[key]), vjp=vjp)

    def scatter(self, a, shape, key):
        """Place the entries of ``a`` at ``key`` inside a zero array of ``shape``.

        ``key`` must address each output position at most once.
        """
        a = self._ref(a)
        out = np.zeros(shape)
        out[key] = a.value
        return self._push("scatter", (a.index,), out, vjp=lambda g: (np.asarray(g)[key],))

    def diagonal(self, a):
        a = self._ref(a)
        shape = a.shape
        p = shape[-1]
        idx = np.arange(p)

        def vjp(g):
            out = np.zeros(shape)
            out[..., idx, idx] = g
            return (out,)

        return self._push("diagonal", (a.index,), np.array(a.value[..., idx, idx]), vjp=vjp)

    def matmul(self, a, b):
        a, b = self._ref(a), self._ref(b)
        av, bv = np.asarray(a.value), np.asarray(b.value)
        if av.ndim < 2 or bv.ndim < 2:
            raise InvalidInputError("matmul operands must be at least 2-D")

        def vjp(g):
            return (
                _unbroadcast(np.matmul(g, _swap(bv)), av.shape),
                _unbroadcast(np.matmul(_swap(av), g), bv.shape),
            )

        return self._push("matmul", (a.index, b.index), np.matmul(av, bv), vjp=vjp)

    def solve(self, a, b):
        """Solve ``a @ x = b`` for square (batched) ``a``."""
        a, b = self._ref(a), self._ref(b)
        av, bv = np.asarray(a.value), np.asarray(b.value)
        try:
            x = np.linalg.solve(av, bv)
        except np.linalg.LinAlgError as exc:
            raise NumericDomainError(f"singular system: {exc}", len(self.nodes)) from exc

        def vjp(g):
            gb = np.linalg.solve(_swap(av), g)
            ga = -np.matmul(gb, _swap(x))
            return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

        return self._push("solve", (a.index, b.index), x, vjp=vjp)

    def logabsdet(self, a):
        a = self._ref(a)
        av = np.asarray(a.value)
        sign, value = np.linalg.slogdet(av)
        if np.any(sign == 0):
            raise NumericDomainError("log-determinant of singular matrix", len(self.nodes))

        def vjp(g):
            inv_t = _swap(np.linalg.inv(av))
            return (np.asarray(g)[..., None, None] * inv_t,)

        return self._push("logabsdet", (a.index,), _as_value(value), vjp=vjp)

    def logsumexp(self, a, axis=None):
        a = self._ref(a)
        av = np.asarray(a.value)
        value = special.logsumexp(av, axis=axis)

        def vjp(g):
            v = value if axis is None else np.expand_dims(value, axis)
            gg = g if axis is None else np.expand_dims(g, axis)
            return (gg * np.exp(av - v),)

        return self._push("logsumexp", (a.index,), _as_value(value), vjp=vjp)

    def concatenate(self, items, axis=0):
        refs = [self._ref(x) for x in items]
        values = [np.asarray(r.value) for r in refs]
        sizes = np.cumsum([v.shape[axis] for v in values])[:-1]

        def vjp(g):
            return tuple(np.split(g, sizes, axis=axis))

        return self._push(
            "concatenate", tuple(r.index for r in refs),
            np.concatenate(values, axis=axis), vjp=vjp,
        )

    def stack(self, items, axis=0):
        refs = [self._ref(x) for x in items]
        values = [np.asarray(r.value) for r in refs]

        def vjp(g):
            return tuple(np.moveaxis(g, axis, 0))

        return self._push("stack", tuple(r.index for r in refs), np.stack(values, axis=axis), vjp=vjp)

    # reverse sweep --------------------------------------------------------

    def backward(self, output, inputs):
        output = self._ref_strict(output)
        inputs = [self._ref_strict(x) for x in inputs]
        out_value = output.value
        adj = [None] * (output.index + 1)
        adj[output.index] = np.ones_like(out_value, dtype=float)
        for i in range(output.index, -1, -1):
            g = adj[i]
            if g is None:
                continue
            node = self.nodes[i]
            if not node.parents:
                continue
            if node.vjp is not None:
                contribs = node.vjp(g)
            else:
                contribs = [g * part for part in node.partials]
            for j, c in zip(node.parents, contribs):
                c = _unbroadcast(c, _shape(self.nodes[j].value))
                adj[j] = c if adj[j] is None else adj[j] + c
        grads = []
        for x in inputs:
            g = adj[x.index] if x.index < len(adj) else None
            shape = x.shape
            if g is None:
                g = np.zeros(shape)
            g = np.asarray(g, dtype=float)
            grads.append(float(g) if shape == () else g.copy())
        value = float(out_value) if np.ndim(out_value) == 0 else out_value
        return GradResult(value, grads)

    def _ref_strict(self, x):
        if not isinstance(x, VarRef):
            raise InvalidInputError("expected a VarRef")
        if x.tape is not self:
            raise TapeMismatchError("VarRef belongs to a different tape")
        if x.index >= len(self.nodes):
            raise InvalidInputError("VarRef index out of range")
        return x


def _as_value(x):
    if isinstance(x, (int, float, np.floating, np.integer)):
        return float(x)
    arr = np.array(x, dtype=float)
    if arr.ndim == 0:
        return float(arr)
    return arr


def tape_var(tape, value):
    return tape.var(value)


def apply(tape, opcode, a, b=None):
    return tape.apply(opcode, a, b)


def backward(tape, output, inputs):
    return tape.backward(output, inputs)


# forward mode ---------------------------------------------------------------


class Dual:
    """Scalar dual number ``value + deriv * eps`` with ``eps**2 == 0``."""

    __slots__ = ("value", "deriv")

    def __init__(self, value, deriv=0.0):
        self.value = float(value)
        self.deriv = float(deriv)

    def __repr__(self):
        return f"Dual({self.value!r}, {self.deriv!r})"

    @staticmethod
    def _lift(x):
        return x if isinstance(x, Dual) else Dual(x, 0.0)

    def __add__(self, other):
        o = self._lift(other)
        return Dual(self.value + o.value, self.deriv + o.deriv)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return Dual(self.value - o.value, self.deriv - o.deriv)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        o = self._lift(other)
        return Dual(self.value * o.value, self.deriv * o.value + self.value * o.deriv)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._lift(other)
        if o.value == 0:
            raise NumericDomainError("division by zero")
        return Dual(self.value / o.value, (self.deriv * o.value - self.value * o.deriv) / o.value**2)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __neg__(self):
        return Dual(-self.value, -self.deriv)

    def __pow__(self, other):
        o = self._lift(other)
        v = self.value**o.value
        d = o.value * self.value ** (o.value - 1.0) * self.deriv
        if o.deriv != 0.0:
            d += v * math.log(self.value) * o.deriv
        return Dual(v, d)

    def __rpow__(self, other):
        return self._lift(other) ** self


def _dual_unary(op, x):
    v = x.value
    if op == "sin":
        return Dual(math.sin(v), math.cos(v) * x.deriv)
    if op == "cos":
        return Dual(math.cos(v), -math.sin(v) * x.deriv)
    if op == "exp":
        e = math.exp(v)
        return Dual(e, e * x.deriv)
    if op == "log":
        if v <= 0:
            raise NumericDomainError("log of non-positive value")
        return Dual(math.log(v), x.deriv / v)
    if op == "log1p":
        return Dual(math.log1p(v), x.deriv / (1.0 + v))
    if op == "sqrt":
        if v < 0:
            raise NumericDomainError("sqrt of negative value")
        s = math.sqrt(v)
        return Dual(s, 0.5 * x.deriv / s)
    if op == "abs":
        return Dual(abs(v), math.copysign(1.0, v) * x.deriv if v != 0 else 0.0)
    if op == "lgamma":
        return Dual(math.lgamma(v), float(_digamma(v)) * x.deriv)
    raise InvalidInputError(f"unknown opcode {op!r}")


_NUMPY_UNARY = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log, "log1p": np.log1p,
    "sqrt": np.sqrt, "abs": np.abs, "lgamma": special.gammaln,
}


def _unary(op):
    def f(x):
        if isinstance(x, VarRef):
            return x.tape.apply(op, x)
        if isinstance(x, Dual):
            return _dual_unary(op, x)
        return _NUMPY_UNARY[op](x)

    f.__name__ = op
    return f


sin = _unary("sin")
cos = _unary("cos")
exp = _unary("exp")
log = _unary("log")
log1p = _unary("log1p")
sqrt = _unary("sqrt")
absolute = _unary("abs")
lgamma = _unary("lgamma")


def logaddexp(a, b):
    if isinstance(a, VarRef):
        return a.tape.apply("logsumexp_pair", a, b)
    if isinstance(b, VarRef):
        return b.tape.apply("logsumexp_pair", a, b)
    if isinstance(a, Dual) or isinstance(b, Dual):
        a, b = Dual._lift(a), Dual._lift(b)
        v = float(np.logaddexp(a.value, b.value))
        return Dual(v, math.exp(a.value - v) * a.deriv + math.exp(b.value - v) * b.deriv)
    return np.logaddexp(a, b)


# drivers ---------------------------------------------------------------------


def value_and_grad(f: Callable, x):
    """Evaluate ``f`` on a fresh tape and return ``(value, gradient)``.

    ``x`` is either a sequence of scalars (``f`` receives a list of VarRefs)
    or a numpy array (``f`` receives a single array-valued VarRef).
    """
    tape = Tape()
    if isinstance(x, np.ndarray):
        xv = tape.var(x)
        res = tape.backward(f(xv), [xv])
        return res.value, res.grads[0]
    xs = [tape.var(v) for v in x]
    res = tape.backward(f(xs), xs)
    return res.value, np.array(res.grads, dtype=float)


def forward_grad(f: Callable, x: Sequence[float], direction: Sequence[float]) -> float:
    """Directional derivative of ``f`` at ``x`` along ``direction``."""
    if len(x) != len(direction):
        raise InvalidInputError("direction must have the same length as x")
    out = f([Dual(xi, di) for xi, di in zip(x, direction)])
    return out.deriv if isinstance(out, Dual) else 0.0


def finite_diff_grad(f: Callable, x, h: float = 1e-5) -> np.ndarray:
    """Central differences with per-coordinate step ``h * (1 + |x_i|)``."""
    if not h > 0:
        raise InvalidInputError("step must be positive")
    x = np.array(x, dtype=float)
    flat = x.reshape(-1)
    grad = np.empty_like(flat)
    for i in range(flat.size):
        step = h * (1.0 + abs(flat[i]))
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (float(f(xp.reshape(x.shape))) - float(f(xm.reshape(x.shape)))) / (2.0 * step)
    return grad.reshape(x.shape)


# demonstrations ---------------------------------------------------------------


def build_logistic_map(tape, x, n):
    """Record ``l_{k+1} = 4 l_k (1 - l_k)`` with ``l_1 = x``; return (input, l_n)."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    x = tape.var(x)
    l = x
    for _ in range(n - 1):
        l = 4.0 * l * (1.0 - l)
    return x, l


def logistic_map_grad(x: float, n: int):
    tape = Tape()
    xv, out = build_logistic_map(tape, x, n)
    res = tape.backward(out, [xv])
    return res.value, res.grads[0]


def build_nested_sigmoid(tape, x, n):
    """Record ``l_0 = 1/(1+e^x)`` and ``l_k = 1/(1+e^{l_{k-1}})``."""
    if n < 0:
        raise InvalidInputError("n must be >= 0")
    x = tape.var(x)
    l = 1.0 / (1.0 + exp(x))
    for _ in range(n):
        l = 1.0 / (1.0 + exp(l))
    return x, l


def nested_sigmoid_grad(x: float, n: int):
    tape = Tape()
    xv, out = build_nested_sigmoid(tape, x, n)
    res = tape.backward(out, [xv])
    return res.value, res.grads[0]
