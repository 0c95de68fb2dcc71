from . import tensor
from .layers import (
    GRU,
    GRUCell,
    LayerNorm,
    Linear,
    Module,
    MultiHeadSelfAttention,
    TransformerEncoderBlock,
    cross_attention,
    sinusoidal_positions,
)
from .optim import Adam
from .tensor import Tensor, no_grad

__all__ = [
    "tensor",
    "Tensor",
    "no_grad",
    "Module",
    "Linear",
    "GRUCell",
    "GRU",
    "LayerNorm",
    "MultiHeadSelfAttention",
    "TransformerEncoderBlock",
    "cross_attention",
    "sinusoidal_positions",
    "Adam",
]
