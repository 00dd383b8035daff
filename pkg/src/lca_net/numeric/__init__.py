"""Tensor engine: reverse-mode differentiation, attention, losses and Adam."""

from .functional import (
    attention_weights,
    concat,
    cross_entropy,
    dropout,
    embedding,
    matmul,
    pick,
    scaled_dot_attention,
    softmax,
    squared_sum,
)
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor, as_tensor, backward

__all__ = [
    "Adam",
    "AdamState",
    "Tensor",
    "adam_step",
    "as_tensor",
    "attention_weights",
    "backward",
    "concat",
    "cross_entropy",
    "dropout",
    "embedding",
    "matmul",
    "pick",
    "scaled_dot_attention",
    "softmax",
    "squared_sum",
]
