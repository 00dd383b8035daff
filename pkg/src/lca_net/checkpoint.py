"""Versioned checkpoint container stored as a SQLite database."""

import json
import logging
import sqlite3
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Union

import numpy as np
from sqlalchemy import create_engine, select
from sqlalchemy.exc import DatabaseError
from sqlalchemy.orm import Session

from .config import ModelConfig
from .corpus import PAD_TOKEN, UNK_TOKEN, Vocabulary
from .database import Base
from .database.models import MetaEntry, ParameterRecord, VocabEntry
from .errors import CheckpointFormatError, CheckpointVersionError, ConfigError
from .model import ModelParams

FORMAT_VERSION = 1

logger = logging.getLogger(__name__)


@dataclass
class Checkpoint:
    """Config snapshot, parameters, vocabulary and the metrics they scored."""

    config: ModelConfig
    params: Dict[str, np.ndarray]
    vocab: Vocabulary
    metrics: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def model_params(self) -> ModelParams:
        """Fresh tensors, so evaluation never touches the stored arrays."""
        return ModelParams.from_arrays(self.params)


def _json(value) -> str:
    return json.dumps(value, sort_keys=True)


def _engine(database: str, uri: bool = False):
    return create_engine("sqlite://", creator=lambda: sqlite3.connect(database, uri=uri))


def save_checkpoint(checkpoint: Checkpoint, path: Union[str, Path]) -> Path:
    """Write ``checkpoint`` to a fresh file; identical content gives identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists():
        path.unlink()

    engine = _engine(str(path))
    try:
        Base.metadata.create_all(engine)
        with Session(engine) as session:
            session.add_all(
                [
                    MetaEntry(key="format_version", value=str(checkpoint.format_version)),
                    MetaEntry(key="config", value=_json(checkpoint.config.to_dict())),
                    MetaEntry(key="metrics", value=_json(checkpoint.metrics)),
                ]
            )
            session.add_all(
                ParameterRecord.from_array(position, name, array)
                for position, (name, array) in enumerate(checkpoint.params.items())
            )
            session.add_all(
                VocabEntry(index=index, token=token) for index, token in enumerate(checkpoint.vocab.tokens)
            )
            session.commit()
    finally:
        engine.dispose()
    logger.info(f"Saved checkpoint to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """Read a checkpoint, checking its format version."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    if path.stat().st_size == 0:
        raise CheckpointFormatError(f"Checkpoint {path} is empty")

    # as_uri() percent-encodes "#", "?" and "%"
    engine = _engine(f"{path.resolve().as_uri()}?mode=ro", uri=True)
    try:
        with Session(engine) as session:
            meta = {entry.key: entry.value for entry in session.scalars(select(MetaEntry))}
            records = list(session.scalars(select(ParameterRecord).order_by(ParameterRecord.position)))
            params = {record.name: record.to_array() for record in records}
            tokens = [entry.token for entry in session.scalars(select(VocabEntry).order_by(VocabEntry.index))]
    except DatabaseError as exc:
        raise CheckpointFormatError(f"Checkpoint {path} is not readable: {exc.orig}") from exc
    finally:
        engine.dispose()

    try:
        version = int(meta["format_version"])
        config_values = json.loads(meta["config"])
        metrics = json.loads(meta["metrics"])
    except (KeyError, ValueError) as exc:
        raise CheckpointFormatError(f"Checkpoint {path} has incomplete metadata: {exc}") from exc
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"Checkpoint {path} has format version {version}; this build reads version {FORMAT_VERSION}"
        )
    if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
        raise CheckpointFormatError(f"Checkpoint {path} has a malformed vocabulary")
    try:
        config = ModelConfig.from_dict(config_values)
    except ConfigError as exc:
        raise CheckpointFormatError(f"Checkpoint {path} holds an invalid config: {exc}") from exc

    return Checkpoint(
        config=config,
        params=params,
        vocab=Vocabulary(tokens[2:]),
        metrics=metrics,
        format_version=version,
    )
