"""Recurrent autoencoder between observation windows and hidden sequences.

The encoder maps a (B, T, M) window batch to a (B, T, N) hidden batch; the
decoder maps it back. Both are stacked GRUs with a per-step linear head and
a final sigmoid, so all outputs lie strictly in (0, 1) and each output step
depends only on inputs up to that step.
"""

import numpy as np

from .errors import NonFiniteActivation, ShapeMismatch
from .nn import GRU, Linear, Module
from .nn import tensor as T
from .nn.tensor import Tensor


def _as_tensor(batch, dtype):
    if isinstance(batch, Tensor):
        return batch
    return Tensor(np.asarray(batch, dtype=dtype))


def _check_finite(out, where):
    if not np.isfinite(out.data).all():
        raise NonFiniteActivation(f"non-finite activation in {where}")
    return out


class Encoder(Module):
    def __init__(self, n_features, n_hidden, rng, depth=3, dtype=np.float32):
        self.rnn = GRU(n_features, n_hidden, depth, rng, dtype)
        self.head = Linear(n_hidden, n_hidden, rng, dtype)
        self.n_features = n_features
        self.n_hidden = n_hidden
        self.dtype = dtype

    def __call__(self, batch):
        x = _as_tensor(batch, self.dtype)
        if x.ndim != 3 or x.shape[2] != self.n_features:
            raise ShapeMismatch(f"expected (B, T, {self.n_features}), got {x.shape}")
        seq, _ = self.rnn(x)
        out = T.sigmoid(self.head(seq))
        return _check_finite(out, "encoder")


class Decoder(Module):
    def __init__(self, n_hidden, n_features, rng, depth=3, dtype=np.float32):
        self.rnn = GRU(n_hidden, n_hidden, depth, rng, dtype)
        self.head = Linear(n_hidden, n_features, rng, dtype)
        self.n_hidden = n_hidden
        self.n_features = n_features
        self.dtype = dtype

    def __call__(self, hidden):
        h = _as_tensor(hidden, self.dtype)
        if h.ndim != 3 or h.shape[2] != self.n_hidden:
            raise ShapeMismatch(f"expected (B, T, {self.n_hidden}), got {h.shape}")
        seq, _ = self.rnn(h)
        out = T.sigmoid(self.head(seq))
        return _check_finite(out, "decoder")


def reconstruction_loss(x, x_hat):
    """Mean over batch, time, and features of squared differences."""
    if not isinstance(x, Tensor):
        x = Tensor(np.asarray(x, dtype=x_hat.data.dtype if isinstance(x_hat, Tensor) else None))
    if not isinstance(x_hat, Tensor):
        x_hat = Tensor(np.asarray(x_hat, dtype=x.data.dtype))
    if x.shape != x_hat.shape:
        raise ShapeMismatch(f"{x.shape} != {x_hat.shape}")
    return T.mse(x, x_hat)
