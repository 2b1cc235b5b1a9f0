"""Minimal reverse-mode automatic differentiation on numpy arrays.

A dynamic tape is rebuilt on every forward pass: each operation creates a
new :class:`Tensor` holding its forward value, references to its parents,
and a closure computing the adjoints. ``backward`` walks the tape in
reverse topological order and accumulates gradients (``+=``, never
overwrite), so a tensor feeding several consumers receives the sum of all
adjoint contributions. Broadcast dimensions are summed out when an adjoint
is propagated back to a smaller-shaped parent.

Only the operations needed by the speech encoder and the margin loss are
provided. No GPU, no fusion, no higher-order derivatives.
"""

from __future__ import annotations

import contextlib

import numpy as np


class ShapeMismatchError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation mode)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _check_finite(values, op):
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"non-finite values produced by op '{op}'")


class Tensor:
    """N-dimensional array participating in reverse-mode differentiation."""

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward", "_op")

    def __init__(self, values, requires_grad=False, dtype=None):
        self.values = np.asarray(values, dtype=dtype)
        _check_finite(self.values, "tensor")
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    # convenience operators
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)


def apply_op(op, values, parents, backward):
    """Record one operation on the tape.

    ``backward(grad)`` must return one adjoint array per parent (or None
    for parents that need no gradient). Exposed so that other modules can
    register fused operations (convolution, GRU, margin loss) with
    hand-derived adjoints.
    """
    _check_finite(values, op)
    out = Tensor.__new__(Tensor)
    out.values = values
    out.grad = None
    out._op = op
    track = _grad_enabled and any(
        p.requires_grad or p._parents for p in parents
    )
    if track:
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _unbroadcast(grad, shape):
    """Sum an adjoint over dimensions that were broadcast in the forward."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_check(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(
            f"{op}: incompatible shapes {a.shape} and {b.shape}"
        ) from None


def add(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    _broadcast_check(a, b, "add")

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return apply_op("add", a.values + b.values, (a, b), backward)


def mul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    _broadcast_check(a, b, "mul")

    def backward(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)

    return apply_op("mul", a.values * b.values, (a, b), backward)


def matmul(a, b):
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    av, bv = a.values, b.values
    if av.ndim > 2 or bv.ndim > 2 or av.ndim == 0 or bv.ndim == 0:
        raise ShapeMismatchError(f"matmul: unsupported ranks {av.shape} and {bv.shape}")
    if av.shape[-1] != bv.shape[0]:
        raise ShapeMismatchError(f"matmul: incompatible shapes {av.shape} and {bv.shape}")
    a2 = av.reshape(1, -1) if av.ndim == 1 else av
    b2 = bv.reshape(-1, 1) if bv.ndim == 1 else bv
    out = a2 @ b2
    if av.ndim == 1:
        out = out[0]
    if bv.ndim == 1:
        out = out[..., 0]

    def backward(g):
        g2 = np.atleast_2d(g)
        if av.ndim == 1 and bv.ndim == 1:
            g2 = g2.reshape(1, 1)
        elif av.ndim == 1:
            g2 = g2.reshape(1, -1)
        elif bv.ndim == 1:
            g2 = g2.reshape(-1, 1)
        ga = (g2 @ b2.T).reshape(av.shape)
        gb = (a2.T @ g2).reshape(bv.shape)
        return ga, gb

    return apply_op("matmul", out, (a, b), backward)


def sigmoid(x):
    x = _as_tensor(x)
    y = 1.0 / (1.0 + np.exp(-x.values))

    def backward(g):
        return (g * y * (1.0 - y),)

    return apply_op("sigmoid", y, (x,), backward)


def tanh(x):
    x = _as_tensor(x)
    y = np.tanh(x.values)

    def backward(g):
        return (g * (1.0 - y * y),)

    return apply_op("tanh", y, (x,), backward)


def relu(x):
    x = _as_tensor(x)
    y = np.maximum(x.values, 0)

    def backward(g):
        return (g * (x.values > 0),)

    return apply_op("relu", y, (x,), backward)


def softmax(x, axis=-1):
    x = _as_tensor(x)
    shifted = x.values - x.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=axis, keepdims=True)
        return (y * (g - dot),)

    return apply_op("softmax", y, (x,), backward)


def concat(tensors, axis=0):
    tensors = [_as_tensor(t) for t in tensors]
    sizes = [t.values.shape[axis] for t in tensors]
    out = np.concatenate([t.values for t in tensors], axis=axis)
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return apply_op("concat", out, tuple(tensors), backward)


def slice_(x, key):
    x = _as_tensor(x)
    out = x.values[key]

    basic = isinstance(key, (int, slice)) or (
        isinstance(key, tuple) and all(isinstance(k, (int, slice)) for k in key)
    )

    def backward(g):
        gx = np.zeros_like(x.values)
        if basic:
            gx[key] += g
        else:
            np.add.at(gx, key, g)
        return (gx,)

    return apply_op("slice", out, (x,), backward)


def transpose(x):
    x = _as_tensor(x)

    def backward(g):
        return (g.T,)

    return apply_op("transpose", x.values.T, (x,), backward)


def reshape(x, shape):
    x = _as_tensor(x)
    orig = x.values.shape

    def backward(g):
        return (g.reshape(orig),)

    return apply_op("reshape", x.values.reshape(shape), (x,), backward)


def sum_(x, axis=None):
    x = _as_tensor(x)
    out = x.values.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)
        return (
            np.broadcast_to(np.expand_dims(g, axis), x.shape).astype(x.dtype, copy=True),
        )

    return apply_op("sum", out, (x,), backward)


def mean(x, axis=None):
    x = _as_tensor(x)
    n = x.values.size if axis is None else x.values.shape[axis]
    out = x.values.mean(axis=axis)
    inv = 1.0 / n

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g * inv, x.shape).astype(x.dtype, copy=True),)
        return (
            np.broadcast_to(np.expand_dims(g * inv, axis), x.shape).astype(
                x.dtype, copy=True
            ),
        )

    return apply_op("mean", out, (x,), backward)


# eps sits inside the square root so zero vectors normalize to zero
# instead of NaN.
L2_EPS = 1e-12


def l2_normalize(x, axis=-1, eps=L2_EPS):
    x = _as_tensor(x)
    ss = (x.values * x.values).sum(axis=axis, keepdims=True)
    norm = np.sqrt(ss + eps)
    y = x.values / norm

    def backward(g):
        dot = (g * x.values).sum(axis=axis, keepdims=True)
        return (g / norm - x.values * (dot / (norm * ss + norm * eps)),)

    return apply_op("l2_normalize", y, (x,), backward)


def cosine_similarity(a, b, eps=L2_EPS):
    """Cosine similarity of two equally shaped vectors, as a scalar tensor."""
    a = _as_tensor(a)
    b = _as_tensor(b, like=a)
    if a.shape != b.shape or a.values.ndim != 1:
        raise ShapeMismatchError(
            f"cosine_similarity: need equal-shape vectors, got {a.shape} and {b.shape}"
        )
    av, bv = a.values, b.values
    na = np.sqrt(av @ av + eps)
    nb = np.sqrt(bv @ bv + eps)
    c = (av @ bv) / (na * nb)

    def backward(g):
        ga = g * (bv / (na * nb) - c * av / (na * na))
        gb = g * (av / (na * nb) - c * bv / (nb * nb))
        return ga, gb

    return apply_op("cosine_similarity", np.asarray(c), (a, b), backward)


def backward(loss):
    """Populate ``.grad`` on every reachable tensor; consumes the graph."""
    if loss.values.size != 1:
        raise ShapeMismatchError(
            f"backward: loss must be scalar, got shape {loss.shape}"
        )
    # iterative topological sort (deep GRU stacks overflow recursion limits)
    order = []
    visited = set()
    stack = [(loss, iter(loss._parents))]
    visited.add(id(loss))
    while stack:
        node, parents = stack[-1]
        advanced = False
        for p in parents:
            if id(p) not in visited:
                visited.add(id(p))
                stack.append((p, iter(p._parents)))
                advanced = True
                break
        if not advanced:
            order.append(node)
            stack.pop()

    loss.grad = np.ones_like(loss.values)
    for node in reversed(order):
        if node._backward is None:
            continue
        grads = node._backward(node.grad.reshape(node.values.shape))
        for parent, g in zip(node._parents, grads):
            if g is None:
                continue
            g = np.asarray(g, dtype=parent.dtype)
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.values)
            parent.grad += g
        # graph is single-use: drop the closure so memory is reclaimed
        node._backward = None
        node._parents = ()


def grad_check(f, x, eps=1e-6):
    """Max relative error between analytic and central-difference gradients.

    ``f`` must be a deterministic scalar-valued function of one tensor.
    """
    xt = Tensor(np.array(x.values, dtype=np.float64), requires_grad=True)
    loss = f(xt)
    backward(loss)
    analytic = (
        np.zeros_like(xt.values) if xt.grad is None else np.array(xt.grad)
    )

    flat = xt.values.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        for sign, out in ((+1, "hi"), (-1, "lo")):
            probe = np.array(xt.values)
            probe.reshape(-1)[i] = orig + sign * eps
            with no_grad():
                val = float(f(Tensor(probe)).values)
            if sign > 0:
                hi = val
            else:
                lo = val
        numeric[i] = (hi - lo) / (2 * eps)
    numeric = numeric.reshape(xt.values.shape)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))
