"""Checkpoint evaluation, ablations, the sigma sweep and attention export."""

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from .checkpoint import Checkpoint
from .config import ModelConfig
from .corpus import EncodedExample, PreparedDataset
from .errors import ConfigError
from .metrics import MetricsReport, accuracy, build_report, macro_f1, majority_accuracy
from .model import Prediction, predict
from .training import TrainReport, evaluate_params, train

__all__ = [
    "ABLATION_VARIANTS",
    "AblationResult",
    "MetricsReport",
    "SweepPoint",
    "accuracy",
    "build_report",
    "evaluate",
    "export_attention",
    "macro_f1",
    "majority_accuracy",
    "predict_sentence",
    "run_ablation",
    "sigma_sweep",
    "variant_config",
]

# Each variant removes exactly one mechanism; "mhsa" removes all three
ABLATION_VARIANTS = {
    "full": {},
    "no_lce": {"lce_mode": "off"},
    "no_lcp": {"lcp_enabled": False},
    "no_cdm": {"cdm_enabled": False},
    "mhsa": {"lce_mode": "off", "lcp_enabled": False, "cdm_enabled": False},
}

ATTENTION_HEADER = ("token", "gold_tag", "pred_tag", "attention")

logger = logging.getLogger(__name__)


def variant_config(config: ModelConfig, variant: str) -> ModelConfig:
    if variant not in ABLATION_VARIANTS:
        raise ConfigError(f"Unknown ablation variant {variant!r}; expected one of {tuple(ABLATION_VARIANTS)}")
    return config.replace(**ABLATION_VARIANTS[variant])


def evaluate(
    checkpoint: Checkpoint, test_set: Sequence[EncodedExample], alpha: Optional[int] = None
) -> MetricsReport:
    """Eval-mode metrics of a checkpoint; gold tags always use the checkpoint's alpha."""
    if alpha is not None and alpha != checkpoint.config.alpha:
        logger.warning(
            f"Requested alpha={alpha} differs from the checkpoint's alpha={checkpoint.config.alpha}; "
            f"tags are computed with the checkpoint's value"
        )
    return evaluate_params(checkpoint.model_params(), checkpoint.config, test_set)


@dataclass
class AblationResult:
    variant: str
    report: TrainReport
    metrics: MetricsReport


def run_ablation(
    config: ModelConfig, dataset: PreparedDataset, variants: Iterable[str]
) -> List[AblationResult]:
    """Train every variant with the same seed, hence the same data order."""
    selected = [name for name in ABLATION_VARIANTS if name in set(variants)]
    unknown = set(variants) - set(ABLATION_VARIANTS)
    if unknown:
        raise ConfigError(f"Unknown ablation variant(s): {', '.join(sorted(unknown))}")

    results = []
    for variant in selected:
        logger.info(f"Ablation {dataset.name}: training variant {variant}")
        checkpoint, report = train(
            variant_config(config, variant), dataset.train, dataset.test, dataset.vocab, dataset.embeddings
        )
        results.append(AblationResult(variant, report, evaluate(checkpoint, dataset.test)))
    return results


@dataclass
class SweepPoint:
    sigma: float
    accuracy: float
    macro_f1: float
    best_accuracy: float
    best_macro_f1: float


def sigma_sweep(config: ModelConfig, dataset: PreparedDataset, sigmas: Sequence[float]) -> List[SweepPoint]:
    """One full training per sigma, all sharing the configuration's seed."""
    for sigma in sigmas:
        if not 0.0 <= sigma <= 1.0:
            raise ConfigError(f"sigma must lie in [0, 1], got {sigma}")

    points = []
    for sigma in sigmas:
        logger.info(f"Sigma sweep {dataset.name}: sigma={sigma}")
        _, report = train(config.replace(sigma=sigma), dataset.train, dataset.test, dataset.vocab, dataset.embeddings)
        points.append(
            SweepPoint(
                sigma=sigma,
                accuracy=report.final.test_accuracy,
                macro_f1=report.final.test_macro_f1,
                best_accuracy=report.best.test_accuracy,
                best_macro_f1=report.best.test_macro_f1,
            )
        )
    return points


def predict_sentence(checkpoint: Checkpoint, sentence: str, target: str) -> Prediction:
    return predict(checkpoint.model_params(), checkpoint.config, checkpoint.vocab, sentence, target)


def received_attention(prediction: Prediction) -> np.ndarray:
    """Head- and query-averaged attention each token receives; sums to 1."""
    return prediction.attention.mean(axis=0)


def export_attention(
    checkpoint: Checkpoint, sentence: str, target: str, path: Union[str, Path]
) -> Path:
    """Write one row per token: token, gold tag, predicted tag, received attention."""
    prediction = predict_sentence(checkpoint, sentence, target)
    received = received_attention(prediction)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(ATTENTION_HEADER)
        for token, gold, pred, weight in zip(
            prediction.tokens, prediction.gold_tags, prediction.predicted_tags, received
        ):
            writer.writerow((token, int(gold), int(pred), repr(float(weight))))
    logger.info(f"Wrote attention scores for {len(prediction.tokens)} tokens to {path}")
    return path
