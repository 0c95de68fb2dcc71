"""First adversarial layer: noise-to-feature-vector generation.

The generator splits a standard-normal noise sequence into a smooth trend
(centered moving average, stride 1, edge replication) and the raw detail,
runs each branch through its own transformer encoder block, fuses them with
cross-attention (trend as query, detail as key/value, softmax(Q Kᵀ) V with
no scaling factor by default), and summarizes with a stacked GRU whose
final state is the synthetic feature vector. The discriminator is a plain
feed-forward classifier over feature vectors.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BadWindow, NonFiniteLogit, ShapeMismatch
from .nn import GRU, Linear, Module, TransformerEncoderBlock, cross_attention
from .nn import tensor as T
from .nn.tensor import Tensor


@dataclass
class NoiseSequence:
    """An (L, D) matrix of i.i.d. N(0,1) draws, regenerable from (seed, index)."""

    values: np.ndarray
    seed: int
    index: int

    @classmethod
    def from_seed(cls, seed, index, length, width):
        rng = np.random.default_rng([seed, index])
        return cls(rng.standard_normal((length, width)), seed, index)


def sample_noise(batch, length, width, seed, start_index=0):
    """Draw ``batch`` independent noise sequences.

    Sequence i is generated from the stream (seed, start_index + i), so any
    single sequence can be regenerated bit-identically from its provenance.
    """
    return [NoiseSequence.from_seed(seed, start_index + i, length, width)
            for i in range(batch)]


def noise_array(sequences, dtype=np.float32):
    return np.stack([s.values for s in sequences]).astype(dtype)


def moving_average(values, window):
    """Centered moving average per column, stride 1, edge replication.

    Accepts (L, D) or (B, L, D); output has the same shape.
    """
    arr = np.asarray(values)
    length = arr.shape[-2]
    if window % 2 == 0 or window < 1 or window > length:
        raise BadWindow(f"window {window} must be odd and within [1, {length}]")
    if window == 1:
        return arr.copy()
    half = window // 2
    pad_width = [(0, 0)] * arr.ndim
    pad_width[-2] = (half, half)
    padded = np.pad(arr, pad_width, mode="edge")
    kernel_sum = np.cumsum(padded, axis=-2)
    zero = np.zeros_like(kernel_sum[..., :1, :])
    kernel_sum = np.concatenate([zero, kernel_sum], axis=-2)
    out = (kernel_sum[..., window:, :] - kernel_sum[..., :-window, :]) / float(window)
    return out


class Generator1(Module):
    def __init__(self, noise_width, heads, feature_width, trend_window, rng,
                 depth=2, dtype=np.float32, scaled_cross_attention=False):
        self.trend_encoder = TransformerEncoderBlock(noise_width, heads, rng, dtype)
        self.detail_encoder = TransformerEncoderBlock(noise_width, heads, rng, dtype)
        self.rnn = GRU(noise_width, feature_width, depth, rng, dtype)
        self.noise_width = noise_width
        self.trend_window = trend_window
        self.scaled_cross_attention = scaled_cross_attention
        self.dtype = dtype

    def _fuse(self, z):
        if not isinstance(z, Tensor):
            z = Tensor(np.asarray(z, dtype=self.dtype))
        if z.ndim != 3 or z.shape[2] != self.noise_width:
            raise ShapeMismatch(f"expected (B, L, {self.noise_width}), got {z.shape}")
        trend_in = Tensor(moving_average(z.data, self.trend_window))
        trend = self.trend_encoder(trend_in)
        detail = self.detail_encoder(z)
        fused, _ = cross_attention(trend, detail, detail,
                                   scaled=self.scaled_cross_attention)
        return fused

    def __call__(self, z, return_sequence=False):
        """Map noise (B, L, D) to feature vectors (B, F).

        With ``return_sequence`` the summarizer's per-step states (B, L, F)
        are returned instead of just the final state.
        """
        fused = self._fuse(z)
        seq, last = self.rnn(fused, return_sequence=return_sequence)
        return seq if return_sequence else last


class Discriminator1(Module):
    """Feed-forward classifier over length-F feature vectors -> one logit."""

    def __init__(self, feature_width, rng, dtype=np.float32, leak=0.2):
        self.hidden1 = Linear(feature_width, 2 * feature_width, rng, dtype)
        self.hidden2 = Linear(2 * feature_width, feature_width, rng, dtype)
        self.head = Linear(feature_width, 1, rng, dtype)
        self.feature_width = feature_width
        self.leak = leak
        self.dtype = dtype

    def __call__(self, features):
        x = features if isinstance(features, Tensor) else Tensor(
            np.asarray(features, dtype=self.dtype))
        if x.ndim == 1:
            x = T.reshape(x, (1, -1))
        if x.shape[-1] != self.feature_width:
            raise ShapeMismatch(f"expected width {self.feature_width}, got {x.shape}")
        h = T.leaky_relu(self.hidden1(x), self.leak)
        h = T.leaky_relu(self.hidden2(h), self.leak)
        logit = self.head(h)
        if not np.isfinite(logit.data).all():
            raise NonFiniteLogit("feature discriminator produced a non-finite logit")
        return logit
