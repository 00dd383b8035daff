"""Semantic relative distance, local-context tags and dynamic feature masks."""

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import ContractError, ShapeError
from .numeric import Tensor

Span = Tuple[int, int]


@dataclass(frozen=True, eq=False)
class LcTagVector:
    """Binary local-context indicator per position (padding is always 0)."""

    tags: np.ndarray
    alpha: int

    def local_positions(self) -> list:
        return np.flatnonzero(self.tags).tolist()


def _check_span(span: Span) -> Tuple[int, int, int]:
    start, end = span
    if end <= start:
        raise ContractError(f"target span {span} is empty")
    return start, end, end - start


def srd(i: int, span: Span) -> float:
    """|i - p| - ⌊m/2⌋ where p is the mean target position and m its length."""
    start, end, length = _check_span(span)
    center = (start + end - 1) / 2.0
    return abs(i - center) - length // 2


def lc_tags(valid_len: int, span: Span, alpha: int, pad_len: int = 80) -> LcTagVector:
    """Tag 1 where srd ≤ alpha, for valid positions; padded positions are 0."""
    start, end, length = _check_span(span)
    if not 0 <= start < end <= valid_len <= pad_len:
        raise ContractError(
            f"span {span} must lie within valid_len={valid_len} <= pad_len={pad_len}"
        )
    center = (start + end - 1) / 2.0
    distances = np.abs(np.arange(valid_len) - center) - length // 2
    tags = np.zeros(pad_len, dtype=np.int64)
    tags[:valid_len] = distances <= alpha
    return LcTagVector(tags=tags, alpha=alpha)


def cdm_mask(tags: LcTagVector, d_h: int) -> np.ndarray:
    """Rows of ones for local positions, rows of zeros elsewhere."""
    return np.repeat(tags.tags[:, None].astype(np.float64), d_h, axis=1)


def apply_mask(global_features: Tensor, mask: np.ndarray) -> Tensor:
    """Element-wise product; masked rows become zero and pass no gradient."""
    mask = np.asarray(mask, dtype=np.float64)
    if global_features.shape != mask.shape:
        raise ShapeError(f"feature shape {global_features.shape} does not match mask {mask.shape}")
    return global_features * Tensor(mask)


def batch_tags(examples: Sequence, alpha: int, pad_len: int) -> np.ndarray:
    """b × pad_len tag matrix for encoded examples."""
    return np.stack(
        [lc_tags(example.valid_len, example.target_span, alpha, pad_len).tags for example in examples]
    )


def batch_masks(tags: np.ndarray, d_h: int) -> np.ndarray:
    """b × pad_len × d_h masks from a tag matrix."""
    return np.repeat(tags[:, :, None].astype(np.float64), d_h, axis=2)
