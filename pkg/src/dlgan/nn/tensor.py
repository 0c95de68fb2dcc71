"""Reverse-mode automatic differentiation over numpy arrays.

A tiny tape: every op builds a node holding its parents and a closure that
maps the node's output gradient to parent gradients. ``backward`` walks the
graph in reverse topological order. Only basic indexing (ints/slices) is
supported by ``__getitem__``; that covers every access pattern in this
package and keeps the scatter in its backward pass exact.
"""

import numpy as np

_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def zero_grad(self):
        self.grad = None

    # operator sugar -------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor_like(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, idx):
        return take(self, idx)

    def backward(self):
        backward(self)


def _as_tensor_like(value, ref):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=ref.data.dtype))


def _make(data, parents, backward_fn):
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
    return out


def _accum(tensor, grad):
    if tensor.grad is None:
        tensor.grad = grad.copy() if isinstance(grad, np.ndarray) else np.asarray(grad)
    else:
        tensor.grad = tensor.grad + grad


# elementwise binary -------------------------------------------------------

def add(a, b):
    b = _as_tensor_like(b, a)
    out_data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.shape))

    return _make(out_data, (a, b), bwd)


def sub(a, b):
    b = _as_tensor_like(b, a)
    out_data = a.data - b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.shape))

    return _make(out_data, (a, b), bwd)


def mul(a, b):
    b = _as_tensor_like(b, a)
    out_data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), bwd)


def div(a, b):
    b = _as_tensor_like(b, a)
    out_data = a.data / b.data

    def bwd(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _make(out_data, (a, b), bwd)


def matmul(a, b):
    out_data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            ga = g @ b.data.swapaxes(-1, -2)
            _accum(a, _unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = a.data.swapaxes(-1, -2) @ g
            _accum(b, _unbroadcast(gb, b.shape))

    return _make(out_data, (a, b), bwd)


# elementwise unary --------------------------------------------------------

def sigmoid(x):
    out_data = 1.0 / (1.0 + np.exp(-x.data))

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * out_data * (1.0 - out_data))

    return _make(out_data, (x,), bwd)


def tanh(x):
    out_data = np.tanh(x.data)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * (1.0 - out_data * out_data))

    return _make(out_data, (x,), bwd)


def exp(x):
    out_data = np.exp(x.data)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * out_data)

    return _make(out_data, (x,), bwd)


def log(x):
    out_data = np.log(x.data)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g / x.data)

    return _make(out_data, (x,), bwd)


def power(x, exponent):
    out_data = x.data ** exponent

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * exponent * x.data ** (exponent - 1))

    return _make(out_data, (x,), bwd)


def relu(x):
    mask = x.data > 0
    out_data = np.where(mask, x.data, 0.0).astype(x.data.dtype)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * mask)

    return _make(out_data, (x,), bwd)


def leaky_relu(x, alpha=0.2):
    mask = x.data >= 0
    out_data = np.where(mask, x.data, alpha * x.data).astype(x.data.dtype)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * np.where(mask, 1.0, alpha).astype(x.data.dtype))

    return _make(out_data, (x,), bwd)


def absolute(x):
    out_data = np.abs(x.data)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g * np.sign(x.data))

    return _make(out_data, (x,), bwd)


def softmax(x, axis=-1):
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        if x.requires_grad:
            inner = (g * out_data).sum(axis=axis, keepdims=True)
            _accum(x, out_data * (g - inner))

    return _make(out_data, (x,), bwd)


# reductions ---------------------------------------------------------------

def tsum(x, axis=None, keepdims=False):
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if x.requires_grad:
            gg = np.asarray(g)
            if axis is not None and not keepdims:
                axes = axis if isinstance(axis, tuple) else (axis,)
                for ax in sorted(a % x.ndim for a in axes):
                    gg = np.expand_dims(gg, ax)
            _accum(x, np.broadcast_to(gg, x.shape).astype(x.data.dtype))

    return _make(out_data, (x,), bwd)


def tmean(x, axis=None, keepdims=False):
    count = x.data.size if axis is None else np.prod(
        [x.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


# shape manipulation -------------------------------------------------------

def reshape(x, shape):
    out_data = x.data.reshape(shape)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g.reshape(x.shape))

    return _make(out_data, (x,), bwd)


def transpose(x, axes):
    out_data = x.data.transpose(axes)
    inverse = np.argsort(axes)

    def bwd(g):
        if x.requires_grad:
            _accum(x, g.transpose(inverse))

    return _make(out_data, (x,), bwd)


def take(x, idx):
    """Basic indexing only: ints and slices (no duplicate destinations)."""
    out_data = x.data[idx]

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[idx] += g
            _accum(x, full)

    return _make(out_data, (x,), bwd)


def concat(tensors, axis):
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accum(t, g[tuple(sl)])

    return _make(out_data, tuple(tensors), bwd)


def stack(tensors, axis):
    out_data = np.stack([t.data for t in tensors], axis=axis)

    def bwd(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                _accum(t, np.take(g, i, axis=axis))

    return _make(out_data, tuple(tensors), bwd)


# losses -------------------------------------------------------------------

def bce_with_logits(logits, targets):
    """Mean binary cross-entropy from logits; numerically stable.

    ``targets`` is a constant array of 0/1 labels broadcastable to the
    logits' shape.
    """
    t = np.broadcast_to(np.asarray(targets, dtype=logits.data.dtype), logits.shape)
    z = logits.data
    loss = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    out_data = np.asarray(loss.mean(), dtype=logits.data.dtype)
    n = float(z.size)

    def bwd(g):
        if logits.requires_grad:
            p = 1.0 / (1.0 + np.exp(-z))
            _accum(logits, (g * (p - t) / n).astype(logits.data.dtype))

    return _make(out_data, (logits,), bwd)


def mse(a, b):
    diff = sub(a, b)
    return tmean(mul(diff, diff))


def mae(a, b):
    return tmean(absolute(sub(a, b)))


# engine -------------------------------------------------------------------

def backward(loss):
    """Backpropagate from a scalar tensor through the recorded graph."""
    if loss.data.size != 1:
        raise ValueError("backward expects a scalar loss")
    topo = []
    visited = set()
    stack_ = [(loss, False)]
    while stack_:
        node, processed = stack_.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if id(p) not in visited and p.requires_grad:
                stack_.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        if node is not loss and node._parents:
            # intermediate grads are not needed once propagated
            node.grad = None
