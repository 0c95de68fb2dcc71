"""Compression of hidden sequences into fixed-length temporal feature vectors.

Pipeline: split each latent channel into non-overlapping patches, embed the
patches, run self-attention over patch positions (with a fixed sinusoidal
positional table), then self-attention across channels at each position
(no positional table), flatten the channels per position, and summarize the
position sequence with a stacked GRU whose final state is the feature
vector.

A "basic" mode drops the patch/attention stages and keeps only the GRU
summarizer over the raw hidden sequence.
"""

import numpy as np

from .errors import IndivisibleLength, ShapeMismatch
from .nn import GRU, Linear, Module, MultiHeadSelfAttention, sinusoidal_positions
from .nn import tensor as T
from .nn.tensor import Tensor


def patch(sequence, patch_length):
    """Partition a length-T vector into T/p contiguous rows of length p."""
    seq = np.asarray(sequence)
    if seq.ndim != 1:
        raise ShapeMismatch(f"expected a 1-D sequence, got shape {seq.shape}")
    if seq.shape[0] % patch_length != 0:
        raise IndivisibleLength(
            f"length {seq.shape[0]} not divisible by patch length {patch_length}"
        )
    return seq.reshape(-1, patch_length)


class TemporalFeatureExtractor(Module):
    def __init__(self, n_channels, window_length, patch_length, embed_width,
                 heads, feature_width, rng, depth=2, dtype=np.float32,
                 basic_mode=False):
        if window_length % patch_length != 0:
            raise IndivisibleLength(
                f"window length {window_length} not divisible by patch length {patch_length}"
            )
        self.n_channels = n_channels
        self.window_length = window_length
        self.patch_length = patch_length
        self.patch_count = window_length // patch_length
        self.embed_width = embed_width
        self.feature_width = feature_width
        self.basic_mode = basic_mode
        self.dtype = dtype
        if basic_mode:
            self.rnn = GRU(n_channels, feature_width, depth, rng, dtype)
        else:
            self.embed = Linear(patch_length, embed_width, rng, dtype)
            self.position_table = sinusoidal_positions(self.patch_count, embed_width, dtype)
            self.attn_time = MultiHeadSelfAttention(embed_width, heads, rng, dtype, scaled=True)
            self.attn_channel = MultiHeadSelfAttention(embed_width, heads, rng, dtype, scaled=True)
            self.rnn = GRU(n_channels * embed_width, feature_width, depth, rng, dtype)

    def temporal_attention(self, embedded):
        """Contextualize patch embeddings per channel: (..., N, P, e) -> same.

        The positional table must already be added by the caller (``extract``
        does this); attention runs over the P patch positions independently
        for every channel.
        """
        shape = embedded.shape
        flat = T.reshape(embedded, (-1, shape[-2], shape[-1]))
        out = self.attn_time(flat)
        return T.reshape(out, shape)

    def channel_attention(self, h_time):
        """Mix information across channels at each patch position.

        Input (..., N, P, e); tokens are the N channels at a fixed position,
        with no positional table (channel order carries no geometry).
        """
        shape = h_time.shape
        ndim = len(shape)
        perm = tuple(range(ndim - 3)) + (ndim - 2, ndim - 3, ndim - 1)
        by_position = T.transpose(h_time, perm)     # (..., P, N, e)
        flat = T.reshape(by_position, (-1, shape[-3], shape[-1]))
        out = self.attn_channel(flat)
        out = T.reshape(out, by_position.shape)
        return T.transpose(out, perm)               # back to (..., N, P, e)

    def __call__(self, hidden, return_sequence=False):
        """Extract feature vectors from (B, T, N) hidden sequences.

        Returns (B, F); with ``return_sequence`` returns the summarizer's
        per-step states aligned to the T timesteps, shape (B, T, F).
        """
        h = hidden if isinstance(hidden, Tensor) else Tensor(np.asarray(hidden, dtype=self.dtype))
        if h.ndim != 3 or h.shape[1] != self.window_length or h.shape[2] != self.n_channels:
            raise ShapeMismatch(
                f"expected (B, {self.window_length}, {self.n_channels}), got {h.shape}"
            )
        if self.basic_mode:
            seq, last = self.rnn(h, return_sequence=return_sequence)
            return seq if return_sequence else last

        batch = h.shape[0]
        channels_first = T.transpose(h, (0, 2, 1))                    # (B, N, T)
        patches = T.reshape(
            channels_first,
            (batch, self.n_channels, self.patch_count, self.patch_length),
        )
        embedded = self.embed(patches) + Tensor(self.position_table)  # (B, N, P, e)
        h_time = self.temporal_attention(embedded)
        h_dim = self.channel_attention(h_time)                        # (B, N, P, e)
        per_position = T.transpose(h_dim, (0, 2, 1, 3))               # (B, P, N, e)
        per_position = T.reshape(
            per_position, (batch, self.patch_count, self.n_channels * self.embed_width)
        )
        seq, last = self.rnn(per_position, return_sequence=return_sequence)
        if not return_sequence:
            return last
        # align the P positions back to T steps: each position covers its patch
        steps = []
        for k in range(self.patch_count):
            state = seq[:, k, :]
            steps.extend([state] * self.patch_length)
        return T.stack(steps, axis=1)
