"""Neural building blocks: linear maps, GRU stacks, attention, transformer."""

import numpy as np

from ..errors import HeadDivisibility, ShapeMismatch
from . import tensor as T
from .tensor import Tensor


class Module:
    """Minimal container: parameters are discovered by attribute reflection.

    Attribute insertion order is deterministic, which makes parameter
    ordering (and therefore checkpoints and optimizer behaviour) stable.
    """

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix=f"{key}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(prefix=f"{key}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_arrays(self):
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_arrays(self, arrays, prefix=""):
        for name, p in self.named_parameters(prefix=prefix):
            src = arrays[name]
            if src.shape != p.data.shape:
                raise ShapeMismatch(f"parameter {name}: {src.shape} != {p.data.shape}")
            p.data = np.ascontiguousarray(src, dtype=p.data.dtype)


def _param(rng, shape, scale, dtype):
    return Tensor(rng.uniform(-scale, scale, size=shape).astype(dtype), requires_grad=True)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, dtype=np.float32):
        k = 1.0 / np.sqrt(n_in)
        self.weight = _param(rng, (n_in, n_out), k, dtype)
        self.bias = Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        return T.add(T.matmul(x, self.weight), self.bias)


class GRUCell(Module):
    """Gated recurrent unit with standard reset/update gates.

    Gate layout in the fused weight matrices is [reset | update | candidate];
    the reset gate scales the hidden contribution inside the candidate tanh.
    """

    def __init__(self, n_in, n_hidden, rng, dtype=np.float32):
        k = 1.0 / np.sqrt(n_hidden)
        self.w_input = _param(rng, (n_in, 3 * n_hidden), k, dtype)
        self.w_hidden = _param(rng, (n_hidden, 3 * n_hidden), k, dtype)
        self.b_input = Tensor(np.zeros(3 * n_hidden, dtype=dtype), requires_grad=True)
        self.b_hidden = Tensor(np.zeros(3 * n_hidden, dtype=dtype), requires_grad=True)
        self.n_hidden = n_hidden

    def __call__(self, x, h):
        nh = self.n_hidden
        gx = T.add(T.matmul(x, self.w_input), self.b_input)
        gh = T.add(T.matmul(h, self.w_hidden), self.b_hidden)
        r = T.sigmoid(gx[:, 0:nh] + gh[:, 0:nh])
        z = T.sigmoid(gx[:, nh:2 * nh] + gh[:, nh:2 * nh])
        n = T.tanh(gx[:, 2 * nh:] + r * gh[:, 2 * nh:])
        return (1.0 - z) * n + z * h


class GRU(Module):
    """Stacked GRU over the time axis of a (B, T, n_in) tensor."""

    def __init__(self, n_in, n_hidden, num_layers, rng, dtype=np.float32):
        self.cells = [
            GRUCell(n_in if i == 0 else n_hidden, n_hidden, rng, dtype)
            for i in range(num_layers)
        ]
        self.n_hidden = n_hidden
        self.dtype = dtype

    def __call__(self, x, return_sequence=True):
        """Returns (outputs, last_state): outputs is (B, T, H) from the top
        layer when return_sequence is set, otherwise None; last_state is the
        final (B, H) state of the top layer. Hidden states start at zero."""
        batch, steps = x.shape[0], x.shape[1]
        inputs = [x[:, t, :] for t in range(steps)]
        h = None
        for cell in self.cells:
            h = Tensor(np.zeros((batch, self.n_hidden), dtype=x.data.dtype))
            outputs = []
            for t in range(steps):
                h = cell(inputs[t], h)
                outputs.append(h)
            inputs = outputs
        seq = T.stack(inputs, axis=1) if return_sequence else None
        return seq, h


class LayerNorm(Module):
    def __init__(self, width, dtype=np.float32, eps=1e-5):
        self.gain = Tensor(np.ones(width, dtype=dtype), requires_grad=True)
        self.shift = Tensor(np.zeros(width, dtype=dtype), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        mu = T.tmean(x, axis=-1, keepdims=True)
        centered = x - mu
        var = T.tmean(centered * centered, axis=-1, keepdims=True)
        inv = T.power(var + self.eps, -0.5)
        return centered * inv * self.gain + self.shift


class MultiHeadSelfAttention(Module):
    """Self-attention over the middle axis of a (B, P, e) tensor.

    ``scaled`` applies the usual 1/sqrt(head_width) factor to the logits.
    The most recent softmax weights are kept (data only) for inspection.
    """

    def __init__(self, width, heads, rng, dtype=np.float32, scaled=True):
        if width % heads != 0:
            raise HeadDivisibility(f"width {width} not divisible by heads {heads}")
        self.proj_q = Linear(width, width, rng, dtype)
        self.proj_k = Linear(width, width, rng, dtype)
        self.proj_v = Linear(width, width, rng, dtype)
        self.proj_out = Linear(width, width, rng, dtype)
        self.heads = heads
        self.head_width = width // heads
        self.scaled = scaled
        self.last_weights = None

    def _split(self, x, batch, positions):
        x = T.reshape(x, (batch, positions, self.heads, self.head_width))
        return T.transpose(x, (0, 2, 1, 3))

    def __call__(self, x):
        batch, positions, width = x.shape
        q = self._split(self.proj_q(x), batch, positions)
        k = self._split(self.proj_k(x), batch, positions)
        v = self._split(self.proj_v(x), batch, positions)
        logits = T.matmul(q, T.transpose(k, (0, 1, 3, 2)))
        if self.scaled:
            logits = logits * (1.0 / np.sqrt(self.head_width))
        weights = T.softmax(logits, axis=-1)
        self.last_weights = weights.data
        mixed = T.matmul(weights, v)
        mixed = T.transpose(mixed, (0, 2, 1, 3))
        mixed = T.reshape(mixed, (batch, positions, width))
        return self.proj_out(mixed)


class TransformerEncoderBlock(Module):
    """Vanilla encoder block: self-attention and feed-forward, each with a
    residual connection followed by layer normalization."""

    def __init__(self, width, heads, rng, dtype=np.float32, ff_mult=4, scaled=True):
        self.attention = MultiHeadSelfAttention(width, heads, rng, dtype, scaled=scaled)
        self.norm_attn = LayerNorm(width, dtype)
        self.ff_in = Linear(width, ff_mult * width, rng, dtype)
        self.ff_out = Linear(ff_mult * width, width, rng, dtype)
        self.norm_ff = LayerNorm(width, dtype)

    def __call__(self, x):
        a = self.norm_attn(x + self.attention(x))
        f = self.ff_out(T.relu(self.ff_in(a)))
        return self.norm_ff(a + f)


def cross_attention(query, key, value, scaled=False):
    """Softmax(Q Kᵀ) V over the last two axes; unscaled logits by default.

    Shapes: query (..., P_q, e), key/value (..., P_k, e). Returns (..., P_q, e)
    along with the softmax weights (data only).
    """
    if query.shape[-1] != key.shape[-1]:
        raise ShapeMismatch(f"query width {query.shape[-1]} != key width {key.shape[-1]}")
    if key.shape[-2] != value.shape[-2]:
        raise ShapeMismatch("key/value row counts differ")
    axes = tuple(range(key.ndim - 2)) + (key.ndim - 1, key.ndim - 2)
    logits = T.matmul(query, T.transpose(key, axes))
    if scaled:
        logits = logits * (1.0 / np.sqrt(query.shape[-1]))
    weights = T.softmax(logits, axis=-1)
    return T.matmul(weights, value), weights.data


def sinusoidal_positions(positions, width, dtype=np.float32):
    """Fixed sine/cosine positional table of shape (positions, width)."""
    table = np.zeros((positions, width), dtype=np.float64)
    pos = np.arange(positions)[:, None]
    div = np.exp(np.arange(0, width, 2) * (-np.log(10000.0) / width))
    table[:, 0::2] = np.sin(pos * div)
    table[:, 1::2] = np.cos(pos * div[: table[:, 1::2].shape[1]])
    return table.astype(dtype)
