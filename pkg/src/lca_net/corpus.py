"""Benchmark corpus ingestion, vocabulary, pretrained vectors and encoding."""

import logging
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from gensim.models import KeyedVectors
from nltk.tokenize import RegexpTokenizer

from .config import ModelConfig
from .errors import AlignmentError, ConfigError, CorpusFormatError, UnrepresentableExampleError

POLARITIES = ("negative", "neutral", "positive")
POLARITY_INDEX = {name: index for index, name in enumerate(POLARITIES)}
TWITTER_POLARITY = {-1: 0, 0: 1, 1: 2}
TWITTER_PLACEHOLDER = "$T$"

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

# Relative to the data directory
DATASET_FILES = {
    "laptop": ("laptop/Laptops_Train.xml", "laptop/Laptops_Test_Gold.xml"),
    "restaurant": ("restaurant/Restaurants_Train.xml", "restaurant/Restaurants_Test_Gold.xml"),
    "twitter": ("twitter/train.raw", "twitter/test.raw"),
}

logger = logging.getLogger(__name__)

# Words, or single punctuation characters
_TOKENIZER = RegexpTokenizer(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class Example:
    """One target-polarity instance before encoding."""

    tokens: Tuple[str, ...]
    target_span: Tuple[int, int]
    polarity: int

    @property
    def valid_len(self) -> int:
        return len(self.tokens)

    @property
    def target_tokens(self) -> Tuple[str, ...]:
        start, end = self.target_span
        return self.tokens[start:end]


@dataclass(frozen=True, eq=False)
class EncodedExample:
    """Fixed-length id sequence with the target span re-based onto the window."""

    token_ids: np.ndarray
    valid_len: int
    target_span: Tuple[int, int]
    polarity: int
    tokens: Tuple[str, ...] = ()


class Vocabulary:
    """Token to index table; 0 is padding, 1 is unknown."""

    PAD = 0
    UNK = 1

    def __init__(self, tokens: Iterable[str] = ()):
        self._tokens: List[str] = [PAD_TOKEN, UNK_TOKEN]
        self._index: Dict[str, int] = {PAD_TOKEN: self.PAD, UNK_TOKEN: self.UNK}
        for token in tokens:
            self.add(token)

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def add(self, token: str) -> int:
        if token not in self._index:
            self._index[token] = len(self._tokens)
            self._tokens.append(token)
        return self._index[token]

    def index(self, token: str) -> int:
        return self._index.get(token, self.UNK)

    def get(self, token: str) -> Optional[int]:
        return self._index.get(token)

    def token(self, index: int) -> str:
        return self._tokens[index]

    @property
    def tokens(self) -> List[str]:
        return list(self._tokens)


@dataclass
class EmbeddingMatrix:
    """|V| × d_v word vectors; row 0 is always zero."""

    matrix: np.ndarray
    coverage: float = 0.0
    pretrained: bool = False


@dataclass
class PreparedDataset:
    """Both encoded splits of one benchmark with their shared vocabulary."""

    name: str
    vocab: Vocabulary
    embeddings: EmbeddingMatrix
    train: List[EncodedExample] = field(default_factory=list)
    test: List[EncodedExample] = field(default_factory=list)


def tokenize_with_spans(text: str) -> Tuple[List[str], List[Tuple[int, int]]]:
    spans = list(_TOKENIZER.span_tokenize(text))
    return [text[start:end].lower() for start, end in spans], spans


def tokenize(text: str) -> List[str]:
    """Lowercased words with every punctuation character as its own token."""
    return tokenize_with_spans(text)[0]


def parse_semeval_xml(data: bytes) -> List[Example]:
    """One Example per non-conflict aspect term of a SemEval-2014 XML file."""
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line, column = exc.position
        raise CorpusFormatError(f"Malformed XML at line {line}, column {column}: {exc}") from exc

    examples: List[Example] = []
    dropped = 0
    for sentence in root.iter("sentence"):
        sentence_id = sentence.get("id", "?")
        text_element = sentence.find("text")
        if text_element is None or text_element.text is None:
            raise CorpusFormatError(f"Sentence {sentence_id} has no text element")
        text = text_element.text
        tokens, spans = tokenize_with_spans(text)

        terms = sentence.find("aspectTerms")
        if terms is None:
            continue
        for term in terms.findall("aspectTerm"):
            polarity = term.get("polarity")
            if polarity == "conflict":
                dropped += 1
                continue
            if polarity not in POLARITY_INDEX:
                raise CorpusFormatError(f"Sentence {sentence_id}: unknown polarity {polarity!r}")
            try:
                char_from, char_to = int(term.get("from")), int(term.get("to"))
            except (TypeError, ValueError):
                raise CorpusFormatError(
                    f"Sentence {sentence_id}: aspect term without integer from/to offsets"
                ) from None

            # Smallest token range covering [from, to)
            covering = [i for i, (start, end) in enumerate(spans) if start < char_to and end > char_from]
            if not covering:
                raise AlignmentError(
                    f"Sentence {sentence_id}: term {term.get('term')!r} at [{char_from}, {char_to}) covers no token"
                )
            if text[char_from:char_to] != term.get("term"):
                logger.warning(
                    f"Sentence {sentence_id}: offsets select {text[char_from:char_to]!r}, term is {term.get('term')!r}"
                )
            examples.append(
                Example(tuple(tokens), (covering[0], covering[-1] + 1), POLARITY_INDEX[polarity])
            )

    logger.debug(f"Parsed {len(examples)} aspect terms, dropped {dropped} conflict terms")
    return examples


def parse_twitter(data: bytes) -> List[Example]:
    """Parse the three-line Twitter format: sentence with $T$, target, polarity."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusFormatError(f"invalid UTF-8 at byte offset {exc.start}") from None
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) % 3 != 0:
        raise CorpusFormatError(
            f"{len(lines)} lines do not form groups of three; dangling lines after example {len(lines) // 3}"
        )

    examples: List[Example] = []
    for index in range(len(lines) // 3):
        sentence, target, label = lines[3 * index : 3 * index + 3]
        if TWITTER_PLACEHOLDER not in sentence:
            raise CorpusFormatError(f"Example {index}: sentence lacks the {TWITTER_PLACEHOLDER} placeholder")
        target_tokens = tokenize(target)
        if not target_tokens:
            raise CorpusFormatError(f"Example {index}: empty target")
        try:
            polarity = TWITTER_POLARITY[int(label.strip())]
        except (ValueError, KeyError):
            raise CorpusFormatError(f"Example {index}: polarity {label!r} is not -1, 0 or 1") from None

        left, _, right = sentence.partition(TWITTER_PLACEHOLDER)
        left_tokens = tokenize(left)
        tokens = left_tokens + target_tokens + tokenize(right)
        start = len(left_tokens)
        examples.append(Example(tuple(tokens), (start, start + len(target_tokens)), polarity))
    return examples


def class_counts(examples: Iterable[Example]) -> Dict[str, int]:
    """Examples per polarity, keyed by polarity name."""
    counts = Counter(example.polarity for example in examples)
    return {name: counts.get(index, 0) for index, name in enumerate(POLARITIES)}


def build_vocabulary(*splits: Iterable[Example]) -> Vocabulary:
    vocab = Vocabulary()
    for split in splits:
        for example in split:
            for token in example.tokens:
                vocab.add(token)
    return vocab


def _has_word2vec_header(path: Path) -> bool:
    with Path(path).open(encoding="utf-8", errors="replace") as handle:
        parts = handle.readline().split()
    return len(parts) == 2 and all(part.isdigit() for part in parts)


def load_pretrained_vectors(
    path: Optional[Path], vocab: Vocabulary, dim: int = 300, seed: int = 1
) -> EmbeddingMatrix:
    """Copy file rows for vocabulary tokens; other rows are uniform(-0.25, 0.25).

    The file is GloVe text (``token v1 … vd`` per line) or word2vec text with a
    ``count dim`` header line.
    """
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-0.25, 0.25, size=(len(vocab), dim))
    matrix[Vocabulary.PAD] = 0.0

    if path is None or not Path(path).is_file():
        logger.warning(
            f"Pretrained vectors {path} not found; embeddings are random and results are not a reproduction run"
        )
        return EmbeddingMatrix(matrix, coverage=0.0, pretrained=False)

    try:
        vectors = KeyedVectors.load_word2vec_format(
            str(path),
            binary=False,
            no_header=not _has_word2vec_header(path),
            datatype=np.float64,
            unicode_errors="replace",
        )
    except (ValueError, EOFError) as exc:
        raise CorpusFormatError(f"{path}: not a {dim}-dimensional text vector file ({exc})") from None
    if vectors.vector_size != dim:
        raise CorpusFormatError(f"{path}: expected {dim} values per token, found {vectors.vector_size}")

    found = 0
    for index, token in enumerate(vocab.tokens):
        if index > Vocabulary.UNK and token in vectors.key_to_index:
            matrix[index] = vectors[token]
            found += 1

    coverage = found / max(1, len(vocab) - 2)
    logger.info(f"Loaded {found} pretrained vectors from {path} (coverage {coverage:.1%})")
    return EmbeddingMatrix(matrix, coverage=coverage, pretrained=True)


def encode(example: Example, vocab: Vocabulary, pad_len: int = 80) -> EncodedExample:
    """Pad with id 0 or cut a window around the target down to ``pad_len`` tokens."""
    start, end = example.target_span
    if end - start > pad_len:
        raise UnrepresentableExampleError(
            f"Target of {end - start} tokens does not fit padding length {pad_len}"
        )
    length = len(example.tokens)
    offset = 0
    if length > pad_len:
        # Window centred on the target
        offset = min(max((start + end - pad_len) // 2, 0), length - pad_len)
    window = example.tokens[offset : offset + pad_len]

    ids = np.zeros(pad_len, dtype=np.int64)
    ids[: len(window)] = [vocab.index(token) for token in window]
    return EncodedExample(
        token_ids=ids,
        valid_len=len(window),
        target_span=(start - offset, end - offset),
        polarity=example.polarity,
        tokens=tuple(window),
    )


def encode_all(examples: Sequence[Example], vocab: Vocabulary, pad_len: int) -> List[EncodedExample]:
    return [encode(example, vocab, pad_len) for example in examples]


def load_split(dataset: str, split: str, data_dir: Path) -> List[Example]:
    """Parse the train or test file of a named dataset."""
    if dataset not in DATASET_FILES:
        raise ConfigError(f"Unknown dataset {dataset!r}; expected one of {tuple(DATASET_FILES)}")
    relative = DATASET_FILES[dataset][0 if split == "train" else 1]
    path = Path(data_dir) / relative
    data = path.read_bytes()
    parser = parse_twitter if dataset == "twitter" else parse_semeval_xml
    try:
        return parser(data)
    except CorpusFormatError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def prepare_dataset(
    config: ModelConfig, dataset: str, data_dir: Path, vectors_path: Optional[Path]
) -> PreparedDataset:
    """Parse, build the train+test vocabulary, load vectors and encode both splits."""
    train_examples = load_split(dataset, "train", data_dir)
    test_examples = load_split(dataset, "test", data_dir)
    vocab = build_vocabulary(train_examples, test_examples)
    embeddings = load_pretrained_vectors(vectors_path, vocab, dim=config.embed_dim, seed=config.seed)
    logger.info(
        f"Prepared {dataset}: {len(train_examples)} train / {len(test_examples)} test examples, |V|={len(vocab)}"
    )
    return PreparedDataset(
        name=dataset,
        vocab=vocab,
        embeddings=embeddings,
        train=encode_all(train_examples, vocab, config.pad_len),
        test=encode_all(test_examples, vocab, config.pad_len),
    )
