"""LCA-MHSA forward pass: embedding, global MHSA, LCE, CDM + post-local MHSA, heads."""

import math
from collections import OrderedDict
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .config import ModelConfig
from .corpus import POLARITIES, EncodedExample, Example, Vocabulary, encode, tokenize
from .errors import ContractError, ShapeError, TargetNotFoundError
from .local_context import LcTagVector, apply_mask, batch_masks, batch_tags
from .numeric import Tensor, attention_weights, concat, dropout, embedding, softmax

PROJECTIONS = ("w_q", "w_k", "w_v", "w_o")

Tags = Union[LcTagVector, np.ndarray]


class ModelParams:
    """Named learnable tensors of one network, in a fixed order."""

    def __init__(self, tensors: Mapping[str, Tensor]):
        self.tensors: "OrderedDict[str, Tensor]" = OrderedDict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def encoder(self, prefix: str) -> Dict[str, Tensor]:
        return {name: self.tensors[f"{prefix}.{name}"] for name in PROJECTIONS}

    def parameter_count(self) -> int:
        return sum(tensor.size for tensor in self.tensors.values())

    def active_names(self, config: ModelConfig) -> List[str]:
        """Trainable parameters the configuration's forward pass and loss reach."""
        names = []
        for name, tensor in self.tensors.items():
            if not tensor.requires_grad:
                continue
            if name == "lce" and config.lce_mode == "off":
                continue
            if name.startswith("local.") and not config.cdm_enabled:
                continue
            if name.startswith("tag_head.") and not config.lcp_enabled:
                continue
            names.append(name)
        return names

    def active(self, config: ModelConfig) -> "OrderedDict[str, Tensor]":
        return OrderedDict((name, self.tensors[name]) for name in self.active_names(config))

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: tensor.data for name, tensor in self.tensors.items()}

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray], frozen: Sequence[str] = ("embedding",)) -> "ModelParams":
        return cls(
            (name, Tensor(array, requires_grad=name not in frozen, name=name))
            for name, array in arrays.items()
        )

    @classmethod
    def initialize(
        cls, config: ModelConfig, embeddings: np.ndarray, seed: Union[int, np.random.SeedSequence]
    ) -> "ModelParams":
        """Xavier-uniform projections, zero biases, frozen word vectors."""
        if embeddings.shape[1] != config.embed_dim:
            raise ShapeError(
                f"embedding width {embeddings.shape[1]} does not match embed_dim={config.embed_dim}"
            )
        rng = np.random.default_rng(seed)
        d_v, d_h = config.embed_dim, config.d_h

        def xavier(fan_in: int, fan_out: int) -> np.ndarray:
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-limit, limit, size=(fan_in, fan_out))

        arrays: "OrderedDict[str, np.ndarray]" = OrderedDict()
        arrays["embedding"] = np.array(embeddings, dtype=np.float64)
        # Both LCE modes start as the identity
        if config.lce_mode == "additive":
            arrays["lce"] = np.zeros((2, d_v))
        else:
            arrays["lce"] = np.ones((2, d_h))
        for prefix, d_in in (("global", d_v), ("local", d_h)):
            arrays[f"{prefix}.w_q"] = xavier(d_in, d_h)
            arrays[f"{prefix}.w_k"] = xavier(d_in, d_h)
            arrays[f"{prefix}.w_v"] = xavier(d_in, d_h)
            arrays[f"{prefix}.w_o"] = xavier(d_h, d_h)
        arrays["fusion.weight"] = xavier(2 * d_h, d_h)
        arrays["fusion.bias"] = np.zeros(d_h)
        arrays["tag_head.weight"] = xavier(d_h, 2)
        arrays["tag_head.bias"] = np.zeros(2)
        arrays["polarity_head.weight"] = xavier(d_h, len(POLARITIES))
        arrays["polarity_head.bias"] = np.zeros(len(POLARITIES))
        return cls.from_arrays(arrays)


@dataclass
class Batch:
    """Stacked encoded examples with their gold local-context tags."""

    token_ids: np.ndarray
    valid_lens: np.ndarray
    polarities: np.ndarray
    tags: np.ndarray

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]

    @property
    def valid_mask(self) -> np.ndarray:
        return np.arange(self.token_ids.shape[1])[None, :] < self.valid_lens[:, None]

    @classmethod
    def from_examples(cls, examples: Sequence[EncodedExample], alpha: int) -> "Batch":
        if not examples:
            raise ContractError("cannot build an empty batch")
        token_ids = np.stack([example.token_ids for example in examples])
        return cls(
            token_ids=token_ids,
            valid_lens=np.array([example.valid_len for example in examples], dtype=np.int64),
            polarities=np.array([example.polarity for example in examples], dtype=np.int64),
            tags=batch_tags(examples, alpha, token_ids.shape[1]),
        )


@dataclass
class ForwardOutput:
    polarity_probs: Tensor
    tag_probs: Tensor
    attention_scores: np.ndarray


@contextmanager
def _stage(name: str):
    try:
        yield
    except ShapeError as exc:
        raise ShapeError(f"{name}: {exc}") from exc


def _tag_array(tags: Tags) -> np.ndarray:
    return tags.tags if isinstance(tags, LcTagVector) else np.asarray(tags, dtype=np.int64)


def embed(
    ids: np.ndarray,
    weight: Tensor,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
) -> Tensor:
    """Word-vector lookup followed by dropout in training mode."""
    return dropout(embedding(weight, ids), dropout_rate, rng, training)


def mhsa(
    x: Tensor,
    encoder: Mapping[str, Tensor],
    heads: int,
    key_mask: Optional[np.ndarray] = None,
    return_weights: bool = False,
):
    """tanh({H_1; …; H_h} W_o) over ``heads`` scaled dot attentions.

    ``x`` is n × d or b × n × d; ``key_mask`` (n or b × n) marks real tokens.
    """
    unbatched = x.ndim == 2
    if unbatched:
        x = x.reshape(1, *x.shape)
        key_mask = None if key_mask is None else np.asarray(key_mask)[None, :]
    if x.ndim != 3:
        raise ShapeError(f"mhsa expects n×d or b×n×d input, got {x.shape}")
    batch, length, _ = x.shape
    d_h = encoder["w_q"].shape[1]
    if d_h % heads != 0:
        raise ShapeError(f"width {d_h} does not split into {heads} heads")
    head_dim = d_h // heads

    def split(t: Tensor) -> Tensor:
        return t.reshape(batch, length, heads, head_dim).transpose(0, 2, 1, 3)

    q = split(x @ encoder["w_q"])
    k = split(x @ encoder["w_k"])
    v = split(x @ encoder["w_v"])
    mask = None if key_mask is None else np.asarray(key_mask, dtype=bool)[:, None, None, :]
    weights = attention_weights(q, k, mask)
    merged = (weights @ v).transpose(0, 2, 1, 3).reshape(batch, length, d_h)
    out = (merged @ encoder["w_o"]).tanh()
    if unbatched:
        out = out.reshape(length, d_h)
    return (out, weights) if return_weights else out


def lce_dot(tags: Tags, lce: Tensor, global_features: Tensor) -> Tensor:
    """Position-wise product of embedded tags with the global features."""
    embedded = embedding(lce, _tag_array(tags))
    if embedded.shape != global_features.shape:
        raise ShapeError(f"tag embedding {embedded.shape} does not match features {global_features.shape}")
    return embedded * global_features


def lce_additive(inputs: Tensor, tags: Tags, lce: Tensor) -> Tensor:
    """Token embeddings plus the embedding of each position's tag."""
    embedded = embedding(lce, _tag_array(tags))
    if embedded.shape != inputs.shape:
        raise ShapeError(f"tag embedding {embedded.shape} does not match inputs {inputs.shape}")
    return inputs + embedded


def local_branch(
    global_features: Tensor,
    masks: np.ndarray,
    params: ModelParams,
    config: ModelConfig,
    key_mask: Optional[np.ndarray] = None,
) -> Tensor:
    """Masked global features through the post-local MHSA."""
    return mhsa(apply_mask(global_features, masks), params.encoder("local"), config.heads, key_mask)


def forward(
    batch: Batch,
    params: ModelParams,
    config: ModelConfig,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
) -> ForwardOutput:
    """Polarity and LC-tag distributions plus head-averaged global attention."""
    if mode not in ("train", "eval"):
        raise ContractError(f"mode must be 'train' or 'eval', got {mode!r}")
    training = mode == "train"
    key_mask = batch.valid_mask

    with _stage("embedding"):
        x = embed(batch.token_ids, params["embedding"], config.dropout, rng, training)
    if config.lce_mode == "additive":
        with _stage("additive LCE"):
            x = lce_additive(x, batch.tags, params["lce"])

    with _stage("global MHSA"):
        global_features, weights = mhsa(
            x, params.encoder("global"), config.heads, key_mask, return_weights=True
        )

    with _stage("LCE"):
        if config.lce_mode == "dot":
            lce_features = lce_dot(batch.tags, params["lce"], global_features)
        else:
            lce_features = global_features

    with _stage("post-local MHSA"):
        if config.cdm_enabled:
            masks = batch_masks(batch.tags, config.d_h)
            local_features = local_branch(global_features, masks, params, config, key_mask)
        else:
            local_features = global_features

    with _stage("fusion"):
        fused = concat([lce_features, local_features], axis=-1) @ params["fusion.weight"]
        fused = fused + params["fusion.bias"]

    with _stage("tag head"):
        tag_probs = softmax(fused @ params["tag_head.weight"] + params["tag_head.bias"])

    with _stage("polarity head"):
        if config.pooling == "first":
            pooled = fused[:, 0, :]
        else:
            valid = Tensor(key_mask[:, :, None].astype(np.float64))
            pooled = (fused * valid).sum(axis=1) / Tensor(batch.valid_lens[:, None].astype(np.float64))
        polarity_probs = softmax(pooled @ params["polarity_head.weight"] + params["polarity_head.bias"])

    return ForwardOutput(
        polarity_probs=polarity_probs,
        tag_probs=tag_probs,
        attention_scores=weights.data.mean(axis=1),
    )


@dataclass
class Prediction:
    """Polarity and per-token LC-tags for one sentence/target pair."""

    label: str
    probabilities: np.ndarray
    tokens: Tuple[str, ...]
    target_span: Tuple[int, int]
    predicted_tags: np.ndarray
    gold_tags: np.ndarray
    attention: np.ndarray


def locate_target(tokens: Sequence[str], target_tokens: Sequence[str]) -> Tuple[int, int]:
    """First contiguous occurrence of ``target_tokens`` in ``tokens``."""
    width = len(target_tokens)
    if width:
        for start in range(len(tokens) - width + 1):
            if tuple(tokens[start : start + width]) == tuple(target_tokens):
                return start, start + width
    raise TargetNotFoundError(f"target {' '.join(target_tokens)!r} does not occur in the sentence")


def predict(
    params: ModelParams,
    config: ModelConfig,
    vocab: Vocabulary,
    sentence: str,
    target: str,
) -> Prediction:
    """Tokenize, encode and run one eval-mode forward pass."""
    tokens = tokenize(sentence)
    span = locate_target(tokens, tokenize(target))
    encoded = encode(Example(tuple(tokens), span, polarity=0), vocab, config.pad_len)
    batch = Batch.from_examples([encoded], config.alpha)
    output = forward(batch, params, config, mode="eval")

    valid = encoded.valid_len
    probabilities = output.polarity_probs.data[0]
    return Prediction(
        label=POLARITIES[int(np.argmax(probabilities))],
        probabilities=probabilities,
        tokens=encoded.tokens,
        target_span=encoded.target_span,
        predicted_tags=output.tag_probs.data[0, :valid].argmax(axis=-1),
        gold_tags=batch.tags[0, :valid],
        attention=output.attention_scores[0, :valid, :valid],
    )


@dataclass
class Inference:
    """Eval-mode outputs for a whole split, stacked in input order."""

    polarity_pred: np.ndarray
    polarity_probs: np.ndarray
    polarity_gold: np.ndarray
    tag_pred: np.ndarray
    tag_gold: np.ndarray
    valid_mask: np.ndarray


def infer(
    params: ModelParams,
    config: ModelConfig,
    examples: Sequence[EncodedExample],
    batch_size: Optional[int] = None,
) -> Inference:
    """Run eval-mode forward passes over ``examples`` in fixed-size chunks."""
    if not examples:
        raise ContractError("cannot run inference on an empty split")
    batch_size = batch_size or config.batch_size
    probs, tag_pred, tag_gold, valid, gold = [], [], [], [], []
    for start in range(0, len(examples), batch_size):
        batch = Batch.from_examples(examples[start : start + batch_size], config.alpha)
        output = forward(batch, params, config, mode="eval")
        probs.append(output.polarity_probs.data)
        tag_pred.append(output.tag_probs.data.argmax(axis=-1))
        tag_gold.append(batch.tags)
        valid.append(batch.valid_mask)
        gold.append(batch.polarities)
    polarity_probs = np.concatenate(probs)
    return Inference(
        polarity_pred=polarity_probs.argmax(axis=-1),
        polarity_probs=polarity_probs,
        polarity_gold=np.concatenate(gold),
        tag_pred=np.concatenate(tag_pred),
        tag_gold=np.concatenate(tag_gold),
        valid_mask=np.concatenate(valid),
    )
