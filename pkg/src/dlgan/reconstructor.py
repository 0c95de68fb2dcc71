"""Second adversarial layer: feature vectors back to hidden sequences.

The reconstructor is a single recurrent cell whose initial state is a
learned projection of the input feature vector. The first step consumes a
zero vector; in autoregressive mode every emitted step feeds back as the
next input, while teacher-forced mode feeds the target's previous step.
Every output step passes a sigmoid. The sequence discriminator is a stacked
GRU with a linear head on its final state.

In sequence mode (bottleneck ablation) the cell consumes a full (B, T, F)
feature sequence instead of unrolling from a single vector.
"""

import numpy as np

from .errors import (
    MissingTarget,
    NonFiniteLogit,
    ShapeMismatch,
    UnexpectedTarget,
)
from .nn import GRU, GRUCell, Linear, Module
from .nn import tensor as T
from .nn.tensor import Tensor

AUTOREGRESSIVE = "autoregressive"
TEACHER_FORCED = "teacher_forced"


class Generator2(Module):
    def __init__(self, n_channels, feature_width, window_length, rng,
                 dtype=np.float32, sequence_mode=False):
        self.sequence_mode = sequence_mode
        self.n_channels = n_channels
        self.feature_width = feature_width
        self.window_length = window_length
        self.dtype = dtype
        if sequence_mode:
            self.cell = GRUCell(feature_width, feature_width, rng, dtype)
        else:
            self.cell = GRUCell(n_channels, feature_width, rng, dtype)
            self.init_state = Linear(feature_width, feature_width, rng, dtype)
        self.head = Linear(feature_width, n_channels, rng, dtype)

    def _emit(self, state):
        return T.sigmoid(self.head(state))

    def reconstruct(self, h_emb, mode=AUTOREGRESSIVE, target=None):
        """Unroll a (B, F) feature batch into a (B, T, N) hidden batch."""
        if self.sequence_mode:
            raise ShapeMismatch("bottleneck reconstruction disabled in sequence mode")
        if mode == TEACHER_FORCED and target is None:
            raise MissingTarget("teacher-forced reconstruction requires a target")
        if mode == AUTOREGRESSIVE and target is not None:
            raise UnexpectedTarget("autoregressive reconstruction forbids a target")
        if mode not in (AUTOREGRESSIVE, TEACHER_FORCED):
            raise ValueError(f"unknown mode {mode!r}")

        h = h_emb if isinstance(h_emb, Tensor) else Tensor(np.asarray(h_emb, dtype=self.dtype))
        if h.ndim == 1:
            h = T.reshape(h, (1, -1))
        if h.shape[-1] != self.feature_width:
            raise ShapeMismatch(f"expected feature width {self.feature_width}, got {h.shape}")
        batch = h.shape[0]

        if target is not None:
            target = target if isinstance(target, Tensor) else Tensor(
                np.asarray(target, dtype=self.dtype))
            if target.shape != (batch, self.window_length, self.n_channels):
                raise ShapeMismatch(
                    f"target must be ({batch}, {self.window_length}, {self.n_channels}),"
                    f" got {target.shape}"
                )

        state = self.init_state(h)
        step_input = Tensor(np.zeros((batch, self.n_channels), dtype=h.data.dtype))
        outputs = []
        for t in range(self.window_length):
            state = self.cell(step_input, state)
            out = self._emit(state)
            outputs.append(out)
            if t + 1 < self.window_length:
                step_input = target[:, t, :] if mode == TEACHER_FORCED else out
        return T.stack(outputs, axis=1)

    def map_sequence(self, features):
        """Sequence mode: map (B, T, F) feature sequences to (B, T, N)."""
        if not self.sequence_mode:
            raise ShapeMismatch("sequence mapping requires sequence mode")
        x = features if isinstance(features, Tensor) else Tensor(
            np.asarray(features, dtype=self.dtype))
        if x.ndim != 3 or x.shape[2] != self.feature_width:
            raise ShapeMismatch(f"expected (B, T, {self.feature_width}), got {x.shape}")
        batch, steps = x.shape[0], x.shape[1]
        state = Tensor(np.zeros((batch, self.feature_width), dtype=x.data.dtype))
        outputs = []
        for t in range(steps):
            state = self.cell(x[:, t, :], state)
            outputs.append(self._emit(state))
        return T.stack(outputs, axis=1)


class Discriminator2(Module):
    """Recurrent classifier over (B, T, N) hidden sequences -> one logit each."""

    def __init__(self, n_channels, feature_width, rng, depth=2, dtype=np.float32):
        self.rnn = GRU(n_channels, feature_width, depth, rng, dtype)
        self.head = Linear(feature_width, 1, rng, dtype)
        self.n_channels = n_channels
        self.dtype = dtype

    def __call__(self, sequences):
        x = sequences if isinstance(sequences, Tensor) else Tensor(
            np.asarray(sequences, dtype=self.dtype))
        if x.ndim == 2:
            x = T.reshape(x, (1,) + x.shape)
        if x.ndim != 3 or x.shape[2] != self.n_channels:
            raise ShapeMismatch(f"expected (B, T, {self.n_channels}), got {x.shape}")
        _, last = self.rnn(x, return_sequence=False)
        logit = self.head(last)
        if not np.isfinite(logit.data).all():
            raise NonFiniteLogit("sequence discriminator produced a non-finite logit")
        return logit
