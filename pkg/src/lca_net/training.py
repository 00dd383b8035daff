"""Joint polarity + local-context-prediction training."""

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .checkpoint import Checkpoint
from .config import ModelConfig
from .corpus import EmbeddingMatrix, EncodedExample, Vocabulary
from .errors import ConfigError, DivergenceError, ShapeError
from .metrics import accuracy, build_report, macro_f1
from .model import Batch, ModelParams, forward, infer
from .numeric import Adam, Tensor, backward, cross_entropy, squared_sum


def lcp_loss(tag_probs: Tensor, gold_tags: np.ndarray, valid_lens: Sequence[int]) -> Tensor:
    """Token-level cross-entropy over the two tag classes, padded tokens excluded."""
    if tag_probs.ndim != 3:
        raise ShapeError(f"tag probabilities must be b×n×2, got {tag_probs.shape}")
    batch, length, classes = tag_probs.shape
    gold_tags = np.asarray(gold_tags, dtype=np.int64)
    if gold_tags.shape != (batch, length):
        raise ShapeError(f"gold tags {gold_tags.shape} do not match probabilities {tag_probs.shape}")
    valid = np.arange(length)[None, :] < np.asarray(valid_lens)[:, None]
    return cross_entropy(
        tag_probs.reshape(batch * length, classes),
        gold_tags.reshape(-1),
        valid.reshape(-1).astype(np.float64),
    )


def l2_penalty(params: Mapping[str, Tensor], l2_lambda: float) -> Tensor:
    """λΣθ² over non-bias parameters."""
    weights = [tensor for name, tensor in params.items() if not name.endswith(".bias")]
    return squared_sum(weights) * l2_lambda


@dataclass
class LossTerms:
    total: Tensor
    polarity: float
    lcp: float


def joint_loss_terms(
    polarity_probs: Tensor,
    gold_polarity: Sequence[int],
    tag_probs: Optional[Tensor],
    gold_tags: Optional[np.ndarray],
    valid_lens: Optional[Sequence[int]],
    params: Mapping[str, Tensor],
    sigma: float,
    l2_lambda: float,
) -> LossTerms:
    if not 0.0 <= sigma <= 1.0:
        raise ConfigError(f"sigma must lie in [0, 1], got {sigma}")
    polarity = cross_entropy(polarity_probs, gold_polarity)
    total = polarity * (1.0 - sigma)
    lcp_value = 0.0
    if tag_probs is not None:
        lcp = lcp_loss(tag_probs, gold_tags, valid_lens)
        total = total + lcp * sigma
        lcp_value = lcp.item()
    if l2_lambda:
        total = total + l2_penalty(params, l2_lambda)
    return LossTerms(total=total, polarity=polarity.item(), lcp=lcp_value)


def joint_loss(
    polarity_probs: Tensor,
    gold_polarity: Sequence[int],
    tag_probs: Optional[Tensor],
    gold_tags: Optional[np.ndarray],
    valid_lens: Optional[Sequence[int]],
    params: Mapping[str, Tensor],
    sigma: float,
    l2_lambda: float,
) -> Tensor:
    """(1-σ)·CE_polarity + σ·L_lcp + λΣθ²; omitting ``tag_probs`` drops the LCP term."""
    return joint_loss_terms(
        polarity_probs, gold_polarity, tag_probs, gold_tags, valid_lens, params, sigma, l2_lambda
    ).total


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    polarity_loss: float
    lcp_loss: float
    train_accuracy: float
    train_macro_f1: float
    test_accuracy: float
    test_macro_f1: float
    seconds: float = 0.0


@dataclass
class TrainReport:
    """Per-epoch losses and metrics of one run."""

    seed: int
    reproduction: bool = True
    epochs: List[EpochRecord] = field(default_factory=list)

    @property
    def final(self) -> EpochRecord:
        return self.epochs[-1]

    @property
    def best(self) -> EpochRecord:
        return max(self.epochs, key=lambda record: record.test_accuracy)

    @property
    def loss_curve(self) -> List[float]:
        return [record.loss for record in self.epochs]

    def rows(self) -> List[dict]:
        """Epoch rows without wall-clock, so identical runs give identical files."""
        rows = []
        for record in self.epochs:
            row = asdict(record)
            row.pop("seconds")
            rows.append(row)
        return rows


class Trainer:
    """Owns the parameters, optimizer and random streams of one training run."""

    def __init__(self, config: ModelConfig, vocab: Vocabulary, embeddings: EmbeddingMatrix):
        self.config = config
        self.vocab = vocab
        self.embeddings = embeddings
        self._logger = logging.getLogger(__name__)

        init_seed, order_seed, dropout_seed = np.random.SeedSequence(config.seed).spawn(3)
        self.params = ModelParams.initialize(config, embeddings.matrix, init_seed)
        self.optimizer = Adam(
            config.learning_rate,
            beta1=config.adam_beta1,
            beta2=config.adam_beta2,
            eps=config.adam_eps,
        )
        self._order_rng = np.random.default_rng(order_seed)
        self._dropout_rng = np.random.default_rng(dropout_seed)
        self._active = self.params.active(config)

        self._logger.info(
            f"Model has {self.params.parameter_count():,} parameters "
            f"({sum(t.size for t in self._active.values()):,} trainable in this configuration)"
        )

    def train_step(self, examples: Sequence[EncodedExample]) -> Tuple[LossTerms, np.ndarray]:
        """One forward/backward/update on a mini-batch; returns losses and predictions."""
        batch = Batch.from_examples(examples, self.config.alpha)
        output = forward(batch, self.params, self.config, mode="train", rng=self._dropout_rng)
        with_lcp = self.config.lcp_enabled
        terms = joint_loss_terms(
            output.polarity_probs,
            batch.polarities,
            output.tag_probs if with_lcp else None,
            batch.tags if with_lcp else None,
            batch.valid_lens if with_lcp else None,
            self._active,
            self.config.sigma if with_lcp else 0.0,
            self.config.l2_lambda,
        )
        loss_value = terms.total.item()
        if not math.isfinite(loss_value):
            raise DivergenceError(f"loss is {loss_value}")
        backward(terms.total)
        self.optimizer.step(self._active)
        return terms, output.polarity_probs.data.argmax(axis=-1)

    def run_epoch(self, train_set: Sequence[EncodedExample], epoch: int) -> Tuple[float, float, float, list, list]:
        order = self._order_rng.permutation(len(train_set))
        size = self.config.batch_size
        totals = np.zeros(3)
        preds, gold = [], []
        for batch_no, start in enumerate(range(0, len(order), size)):
            examples = [train_set[i] for i in order[start : start + size]]
            try:
                terms, batch_preds = self.train_step(examples)
            except DivergenceError as exc:
                self._logger.error(f"Training diverged at epoch {epoch}, batch {batch_no}: {exc}")
                raise DivergenceError(f"epoch {epoch}, batch {batch_no}: {exc}") from exc
            totals += len(examples) * np.array([terms.total.item(), terms.polarity, terms.lcp])
            preds.extend(batch_preds.tolist())
            gold.extend(example.polarity for example in examples)
        loss, polarity_loss, lcp_loss_value = (totals / len(train_set)).tolist()
        return loss, polarity_loss, lcp_loss_value, preds, gold

    def fit(
        self, train_set: Sequence[EncodedExample], test_set: Sequence[EncodedExample]
    ) -> Tuple[Checkpoint, TrainReport]:
        report = TrainReport(seed=self.config.seed, reproduction=self.embeddings.pretrained)
        for epoch in range(1, self.config.epochs + 1):
            started = time.perf_counter()
            loss, polarity_loss, lcp_loss_value, preds, gold = self.run_epoch(train_set, epoch)
            test_report = evaluate_params(self.params, self.config, test_set)
            record = EpochRecord(
                epoch=epoch,
                loss=loss,
                polarity_loss=polarity_loss,
                lcp_loss=lcp_loss_value,
                train_accuracy=accuracy(preds, gold),
                train_macro_f1=macro_f1(preds, gold),
                test_accuracy=test_report.accuracy,
                test_macro_f1=test_report.macro_f1,
                seconds=time.perf_counter() - started,
            )
            report.epochs.append(record)
            self._logger.info(
                f"Epoch {epoch}/{self.config.epochs}: loss {loss:.4f} "
                f"(polarity {polarity_loss:.4f}, lcp {lcp_loss_value:.4f}), "
                f"train acc {record.train_accuracy:.4f}, test acc {record.test_accuracy:.4f}, "
                f"test F1 {record.test_macro_f1:.4f} [{record.seconds:.1f}s]"
            )
        return self.checkpoint(report), report

    def checkpoint(self, report: Optional[TrainReport] = None) -> Checkpoint:
        metrics = {}
        if report is not None and report.epochs:
            metrics = {"final": report.rows()[-1], "best_epoch": report.best.epoch}
        return Checkpoint(
            config=self.config,
            params={name: array.copy() for name, array in self.params.arrays().items()},
            vocab=self.vocab,
            metrics=metrics,
        )


def evaluate_params(params: ModelParams, config: ModelConfig, examples: Sequence[EncodedExample]):
    """Metrics report for in-memory parameters."""
    result = infer(params, config, examples)
    return build_report(
        result.polarity_pred, result.polarity_gold, result.tag_pred, result.tag_gold, result.valid_mask
    )


def train(
    config: ModelConfig,
    train_set: Sequence[EncodedExample],
    test_set: Sequence[EncodedExample],
    vocab: Vocabulary,
    embeddings: EmbeddingMatrix,
) -> Tuple[Checkpoint, TrainReport]:
    """Seeded mini-batch training; evaluates on ``test_set`` after every epoch."""
    if not embeddings.pretrained:
        logging.getLogger(__name__).warning("Training on random embeddings: non-reproduction run")
    return Trainer(config, vocab, embeddings).fit(train_set, test_set)
