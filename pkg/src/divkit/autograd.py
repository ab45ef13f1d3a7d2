"""Minimal reverse-mode automatic differentiation on numpy arrays.

A Tensor wraps an ndarray and records the operations that produced it; calling
backward() on a scalar loss walks the tape in reverse topological order and
accumulates gradients on every node.  The module also exposes dispatch helpers
(exp, matmul, concat, ...) that accept either Tensors or plain ndarrays so the
model code can be written once and run with or without gradient tracking.
"""

from __future__ import annotations

import numpy as np

from .activations import act_derivative, act_forward


class NonFiniteGradientError(RuntimeError):
    pass


_SCALAR_TYPES = (int, float, np.integer, np.floating)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad back down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    # leading broadcast axes
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, (g, s) in enumerate(zip(grad.shape, shape)):
        if s == 1 and g != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, value, requires_grad: bool = False, parents=(), backward=None, op="leaf"):
        self.value = value if isinstance(value, np.ndarray) else np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.op = op

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.value.shape})"

    # ---- graph construction helpers -------------------------------------

    @staticmethod
    def _wrap(x) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(np.asarray(x))

    def _cast_scalar(self, x):
        # keep python scalars from promoting f32 values to f64
        return self.value.dtype.type(x)

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad = self.grad + g

    # ---- arithmetic ------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, _SCALAR_TYPES):
            out_val = self.value + self._cast_scalar(other)

            def bw(g):
                return (g,)
            return Tensor(out_val, parents=(self,), backward=bw, op="add")
        other = Tensor._wrap(other)
        out_val = self.value + other.value

        def bw(g):
            return (_unbroadcast(g, self.value.shape), _unbroadcast(g, other.value.shape))
        return Tensor(out_val, parents=(self, other), backward=bw, op="add")

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, _SCALAR_TYPES):
            out_val = self.value - self._cast_scalar(other)

            def bw(g):
                return (g,)
            return Tensor(out_val, parents=(self,), backward=bw, op="sub")
        other = Tensor._wrap(other)
        out_val = self.value - other.value

        def bw(g):
            return (_unbroadcast(g, self.value.shape), _unbroadcast(-g, other.value.shape))
        return Tensor(out_val, parents=(self, other), backward=bw, op="sub")

    def __rsub__(self, other):
        if isinstance(other, _SCALAR_TYPES):
            out_val = self._cast_scalar(other) - self.value

            def bw(g):
                return (-g,)
            return Tensor(out_val, parents=(self,), backward=bw, op="rsub")
        return Tensor._wrap(other).__sub__(self)

    def __neg__(self):
        def bw(g):
            return (-g,)
        return Tensor(-self.value, parents=(self,), backward=bw, op="neg")

    def __mul__(self, other):
        if isinstance(other, _SCALAR_TYPES):
            c = self._cast_scalar(other)
            out_val = self.value * c

            def bw(g):
                return (g * c,)
            return Tensor(out_val, parents=(self,), backward=bw, op="mul")
        other = Tensor._wrap(other)
        out_val = self.value * other.value
        a, b = self, other

        def bw(g):
            return (_unbroadcast(g * b.value, a.value.shape),
                    _unbroadcast(g * a.value, b.value.shape))
        return Tensor(out_val, parents=(a, b), backward=bw, op="mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, _SCALAR_TYPES):
            return self.__mul__(1.0 / other)
        other = Tensor._wrap(other)
        out_val = self.value / other.value
        a, b = self, other

        def bw(g):
            return (_unbroadcast(g / b.value, a.value.shape),
                    _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape))
        return Tensor(out_val, parents=(a, b), backward=bw, op="div")

    def __rtruediv__(self, other):
        if isinstance(other, _SCALAR_TYPES):
            c = self._cast_scalar(other)
            a = self
            out_val = c / self.value

            def bw(g):
                return (-g * c / (a.value * a.value),)
            return Tensor(out_val, parents=(a,), backward=bw, op="rdiv")
        return Tensor._wrap(other).__truediv__(self)

    def __pow__(self, p):
        if not np.isscalar(p):
            raise TypeError("only scalar exponents supported")
        out_val = self.value ** p
        a = self

        def bw(g):
            return (g * p * a.value ** (p - 1),)
        return Tensor(out_val, parents=(a,), backward=bw, op="pow")

    def __matmul__(self, other):
        other = Tensor._wrap(other)
        out_val = self.value @ other.value
        a, b = self, other

        def bw(g):
            return (g @ b.value.T, a.value.T @ g)
        return Tensor(out_val, parents=(a, b), backward=bw, op="matmul")

    def __rmatmul__(self, other):
        return Tensor._wrap(other).__matmul__(self)

    # ---- elementwise functions ------------------------------------------

    def exp(self):
        out_val = np.exp(self.value)

        def bw(g):
            return (g * out_val,)
        return Tensor(out_val, parents=(self,), backward=bw, op="exp")

    def log(self):
        a = self

        def bw(g):
            return (g / a.value,)
        return Tensor(np.log(self.value), parents=(a,), backward=bw, op="log")

    def sqrt(self):
        out_val = np.sqrt(self.value)

        def bw(g):
            return (g * (0.5 / out_val),)
        return Tensor(out_val, parents=(self,), backward=bw, op="sqrt")

    def tanh(self):
        out_val = np.tanh(self.value)

        def bw(g):
            return (g * (1.0 - out_val * out_val),)
        return Tensor(out_val, parents=(self,), backward=bw, op="tanh")

    def activation(self, kind: str):
        a = self
        out_val = act_forward(kind, self.value)

        def bw(g):
            return (g * act_derivative(kind, a.value),)
        return Tensor(out_val, parents=(a,), backward=bw, op=f"act:{kind}")

    # ---- shape ops -------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self
        out_val = self.value.sum(axis=axis, keepdims=keepdims)

        def bw(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.value.shape).copy(),)
        return Tensor(out_val, parents=(a,), backward=bw, op="sum")

    def mean(self, axis=None, keepdims=False):
        n = self.value.size if axis is None else self.value.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    @property
    def T(self):
        a = self

        def bw(g):
            return (g.T,)
        return Tensor(self.value.T, parents=(a,), backward=bw, op="transpose")

    def reshape(self, *shape):
        a = self

        def bw(g):
            return (g.reshape(a.value.shape),)
        return Tensor(self.value.reshape(*shape), parents=(a,), backward=bw, op="reshape")

    # ---- backward pass ---------------------------------------------------

    def backward(self, check_finite: bool = True):
        if self.value.size != 1:
            raise ValueError("backward() expects a scalar loss")
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                topo.append(node)
                continue
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value)
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None:
                    continue
                if check_finite and not np.all(np.isfinite(g)):
                    raise NonFiniteGradientError(
                        f"non-finite gradient produced by op {node.op!r}")
                parent._accumulate(g)


# ---- composite / fused primitives ---------------------------------------


def _softmax_fwd(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    y = np.exp(z)
    return y / y.sum(axis=-1, keepdims=True)


def masked_softmax(x, additive_mask: np.ndarray | None = None):
    """Row softmax of x + mask; mask entries of -inf become exact zeros."""
    if isinstance(x, Tensor):
        z = x.value if additive_mask is None else x.value + additive_mask
        y = _softmax_fwd(z)

        def bw(g):
            dot = np.sum(g * y, axis=-1, keepdims=True)
            return (y * (g - dot),)
        return Tensor(y, parents=(x,), backward=bw, op="softmax")
    z = x if additive_mask is None else x + additive_mask
    return _softmax_fwd(z)


def take_rows(E, ids: np.ndarray):
    """Row gather (embedding lookup)."""
    ids = np.asarray(ids)
    if isinstance(E, Tensor):
        out_val = E.value[ids]

        def bw(g):
            gE = np.zeros_like(E.value)
            np.add.at(gE, ids, g)
            return (gE,)
        return Tensor(out_val, parents=(E,), backward=bw, op="take_rows")
    return E[ids]


def concat(parts, axis: int = 1):
    if any(isinstance(p, Tensor) for p in parts):
        parts = [Tensor._wrap(p) for p in parts]
        out_val = np.concatenate([p.value for p in parts], axis=axis)
        sizes = [p.value.shape[axis] for p in parts]
        splits = np.cumsum(sizes)[:-1]

        def bw(g):
            return tuple(np.split(g, splits, axis=axis))
        return Tensor(out_val, parents=tuple(parts), backward=bw, op="concat")
    return np.concatenate(parts, axis=axis)


def cross_entropy_logits(logits, targets: np.ndarray):
    """Mean negative log-likelihood over positions; fused stable log-softmax.

    logits: (N, V) Tensor or ndarray, targets: (N,) int ids.
    """
    targets = np.asarray(targets)
    val = logits.value if isinstance(logits, Tensor) else logits
    n = val.shape[0]
    m = np.max(val, axis=1, keepdims=True)
    z = val - m
    lse = np.log(np.sum(np.exp(z), axis=1)) + m[:, 0]
    picked = val[np.arange(n), targets]
    loss = float(np.mean(lse - picked))
    if not isinstance(logits, Tensor):
        return loss

    def bw(g):
        p = _softmax_fwd(val)
        p[np.arange(n), targets] -= 1.0
        return (p * (float(g) / n),)
    return Tensor(np.asarray(loss, dtype=val.dtype), parents=(logits,), backward=bw,
                  op="cross_entropy")


# ---- dispatch helpers (Tensor or ndarray) --------------------------------


def is_tensor(x) -> bool:
    return isinstance(x, Tensor)


def val(x) -> np.ndarray:
    return x.value if isinstance(x, Tensor) else np.asarray(x)


def exp(x):
    return x.exp() if isinstance(x, Tensor) else np.exp(x)


def sqrt(x):
    return x.sqrt() if isinstance(x, Tensor) else np.sqrt(x)


def tanh(x):
    return x.tanh() if isinstance(x, Tensor) else np.tanh(x)


def apply_activation(kind: str, x):
    return x.activation(kind) if isinstance(x, Tensor) else act_forward(kind, x)


def sum_(x, axis=None, keepdims=False):
    return x.sum(axis=axis, keepdims=keepdims) if isinstance(x, Tensor) \
        else np.sum(x, axis=axis, keepdims=keepdims)


def transpose(x):
    return x.T
