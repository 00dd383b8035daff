"""Differentiable building blocks composed from the tensor engine."""

import math
from typing import Optional, Sequence

import numpy as np

from ..errors import ContractError, ShapeError
from .tensor import Tensor, _record, _unbroadcast, as_tensor


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the two innermost axes, broadcasting leading axes."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul batch dimensions disagree: {a.shape} @ {b.shape}") from None
    a_data, b_data = a.data, b.data

    def backward(g: np.ndarray):
        grad_a = np.matmul(g, np.swapaxes(b_data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a_data, -1, -2), g)
        return _unbroadcast(grad_a, a_data.shape), _unbroadcast(grad_b, b_data.shape)

    return _record(out, (a, b), backward)


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Max-shifted softmax; entries where ``mask`` is False get probability 0."""
    if x.ndim == 0 or x.shape[axis] == 0:
        raise ShapeError(f"softmax over an empty axis of shape {x.shape}")
    if mask is not None and not np.broadcast_to(mask, x.shape).any(axis=axis).all():
        raise ContractError("softmax slice has every entry masked")
    logits = x.data if mask is None else np.where(mask, x.data, -np.inf)
    peak = logits.max(axis=axis, keepdims=True)
    exps = np.exp(logits - peak)
    out = exps / exps.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _record(out, (x,), backward)


def attention_weights(q: Tensor, k: Tensor, key_mask: Optional[np.ndarray] = None) -> Tensor:
    """softmax(q kᵀ / √d_k) over keys; ``key_mask`` marks keys that may be attended."""
    d_k = q.shape[-1]
    if d_k == 0:
        raise ShapeError("scaled dot attention needs d_k > 0")
    if k.shape[-1] != d_k:
        raise ShapeError(f"query and key widths differ: {q.shape} vs {k.shape}")
    scores = matmul(q, k.swap_last()) * (1.0 / math.sqrt(d_k))
    return softmax(scores, axis=-1, mask=key_mask)


def scaled_dot_attention(
    q: Tensor, k: Tensor, v: Tensor, key_mask: Optional[np.ndarray] = None
) -> Tensor:
    """Each output row is a convex combination of the rows of ``v``."""
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"keys and values have different row counts: {k.shape} vs {v.shape}")
    return matmul(attention_weights(q, k, key_mask), v)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"cannot concatenate shapes {[t.shape for t in tensors]}") from None
    cuts = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _record(out, tuple(tensors), lambda g: tuple(np.split(g, cuts, axis=axis)))


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``weight[ids]``; repeated ids accumulate their gradients."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise IndexError(
            f"embedding id out of range [0, {weight.shape[0]}): min={ids.min()}, max={ids.max()}"
        )
    return weight[ids]


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout: scaled by 1/(1-rate) in training, identity otherwise."""
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("training-mode dropout needs a random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * Tensor(keep)


def pick(x: Tensor, index: np.ndarray) -> Tensor:
    """Select ``x[..., index]`` along the last axis, one entry per leading position."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape != x.shape[:-1]:
        raise ShapeError(f"index shape {index.shape} does not match {x.shape[:-1]}")
    if index.size and (index.min() < 0 or index.max() >= x.shape[-1]):
        raise IndexError(f"class index out of range [0, {x.shape[-1]})")
    leading = np.indices(index.shape, sparse=True)
    return x[tuple(leading) + (index,)]


def cross_entropy(
    probabilities: Tensor,
    gold: Sequence[int],
    weight_mask: Optional[Sequence[float]] = None,
) -> Tensor:
    """Mean of -log p[gold] over rows whose weight is non-zero."""
    if probabilities.ndim != 2:
        raise ShapeError(f"cross_entropy expects a b×C matrix, got {probabilities.shape}")
    gold = np.asarray(gold, dtype=np.int64)
    nll = -pick(probabilities, gold).log()
    if weight_mask is None:
        return nll.mean()
    weights = np.asarray(weight_mask, dtype=np.float64)
    if weights.shape != gold.shape:
        raise ShapeError(f"weight mask shape {weights.shape} does not match {gold.shape}")
    total = weights.sum()
    if total <= 0:
        raise ContractError("cross_entropy weight mask selects no rows")
    return (nll * Tensor(weights)).sum() * (1.0 / total)


def squared_sum(tensors: Sequence[Tensor]) -> Tensor:
    """Σθ² over all given tensors."""
    total = as_tensor(0.0)
    for tensor in tensors:
        total = total + (tensor * tensor).sum()
    return total
