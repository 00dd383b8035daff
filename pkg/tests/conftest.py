"""Shared fixtures: miniature configurations, synthetic corpora and file fixtures."""

import os
from pathlib import Path

import numpy as np
import pytest

from lca_net.config import ModelConfig
from lca_net.corpus import EmbeddingMatrix, Example, PreparedDataset, Vocabulary, build_vocabulary, encode
from lca_net.model import Batch, ModelParams

SENTIMENT_WORDS = {"awful": 0, "okay": 1, "great": 2}
FILLERS = ["the", "a", "was", "and", "it", "really", "quite", "so", "very", "then"]

LAPTOP_XML = b"""<?xml version="1.0" encoding="UTF-8"?>
<sentences>
  <sentence id="1">
    <text>The battery is awful.</text>
    <aspectTerms>
      <aspectTerm term="battery" polarity="negative" from="4" to="11"/>
    </aspectTerms>
  </sentence>
  <sentence id="2">
    <text>Great screen, but the keyboard feels cheap.</text>
    <aspectTerms>
      <aspectTerm term="screen" polarity="positive" from="6" to="12"/>
      <aspectTerm term="keyboard" polarity="negative" from="22" to="30"/>
    </aspectTerms>
  </sentence>
  <sentence id="3">
    <text>The price was fair and the fan is loud.</text>
    <aspectTerms>
      <aspectTerm term="price" polarity="neutral" from="4" to="9"/>
      <aspectTerm term="fan" polarity="conflict" from="27" to="30"/>
    </aspectTerms>
  </sentence>
  <sentence id="4">
    <text>No aspects here.</text>
  </sentence>
</sentences>
"""

TWITTER_RAW = b"""i love $T$ !
apple
1
$T$ is so boring today
the game
-1
watching $T$ tonight
news
0
"""


def grad_check(loss_fn, tensors, eps=1e-5, tolerance=1e-4, floor=1e-4):
    """Compare analytic gradients with central differences on every coordinate.

    The relative error uses max(|analytic|, |numeric|, floor) as denominator.
    """
    from lca_net.numeric import backward

    for tensor in tensors:
        tensor.grad = None
    backward(loss_fn())
    analytic = {id(tensor): np.array(tensor.grad) for tensor in tensors}

    for tensor in tensors:
        numeric = np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + eps
            plus = loss_fn().item()
            flat[index] = original - eps
            minus = loss_fn().item()
            flat[index] = original
            numeric.reshape(-1)[index] = (plus - minus) / (2 * eps)
        grad = analytic[id(tensor)]
        scale = np.maximum(np.maximum(np.abs(grad), np.abs(numeric)), floor)
        error = np.abs(grad - numeric) / scale
        assert error.max() < tolerance, f"{tensor.name or tensor.shape}: max relative error {error.max():.3e}"


def synthetic_examples(count, seed=0, max_fillers=3):
    """Sentences whose polarity is carried by a sentiment word next to the target."""
    rng = np.random.default_rng(seed)
    words = list(SENTIMENT_WORDS)
    examples = []
    for index in range(count):
        word = words[index % len(words)]
        left = list(rng.choice(FILLERS, size=rng.integers(0, max_fillers + 1)))
        right = list(rng.choice(FILLERS, size=rng.integers(0, max_fillers + 1)))
        tokens = tuple(left + [f"item{index}", "is", word] + right)
        start = len(left)
        examples.append(Example(tokens, (start, start + 1), SENTIMENT_WORDS[word]))
    return examples


def random_embeddings(vocab, dim, seed=0):
    matrix = np.random.default_rng(seed).uniform(-0.5, 0.5, size=(len(vocab), dim))
    matrix[Vocabulary.PAD] = 0.0
    return EmbeddingMatrix(matrix, coverage=0.0, pretrained=False)


@pytest.fixture
def mini_config():
    return ModelConfig(
        d_h=8, heads=2, embed_dim=8, pad_len=6, dropout=0.0, alpha=1,
        batch_size=4, epochs=1, l2_lambda=1e-3, sigma=0.5, seed=3,
    )


@pytest.fixture
def mini_vocab():
    vocab = Vocabulary(f"w{i}" for i in range(18))
    assert len(vocab) == 20
    return vocab


@pytest.fixture
def mini_examples(mini_vocab, mini_config):
    raw = [
        Example(("w0", "w1", "w2", "w3", "w4"), (2, 3), 2),
        Example(("w5", "w6", "w7"), (0, 2), 0),
        Example(("w8", "w9", "w10", "w11", "w12", "w13", "w14"), (3, 4), 1),
    ]
    return [encode(example, mini_vocab, mini_config.pad_len) for example in raw]


@pytest.fixture
def mini_params(mini_config, mini_vocab):
    embeddings = random_embeddings(mini_vocab, mini_config.embed_dim, seed=1)
    return ModelParams.initialize(mini_config, embeddings.matrix, seed=7)


@pytest.fixture
def mini_batch(mini_examples, mini_config):
    return Batch.from_examples(mini_examples, mini_config.alpha)


@pytest.fixture
def small_config():
    return ModelConfig(
        d_h=16, heads=2, embed_dim=16, pad_len=12, dropout=0.0, alpha=2,
        batch_size=8, epochs=2, learning_rate=1e-2, l2_lambda=0.0, seed=5,
    )


@pytest.fixture
def synthetic_dataset(small_config):
    train = synthetic_examples(32, seed=1)
    test = synthetic_examples(12, seed=2)
    vocab = build_vocabulary(train, test)
    return PreparedDataset(
        name="synthetic",
        vocab=vocab,
        embeddings=random_embeddings(vocab, small_config.embed_dim),
        train=[encode(e, vocab, small_config.pad_len) for e in train],
        test=[encode(e, vocab, small_config.pad_len) for e in test],
    )


@pytest.fixture
def fixture_data_dir(tmp_path):
    """A data directory laid out like the real one, holding tiny fixtures."""
    for name, (train_file, test_file) in {
        "laptop": ("laptop/Laptops_Train.xml", "laptop/Laptops_Test_Gold.xml"),
        "restaurant": ("restaurant/Restaurants_Train.xml", "restaurant/Restaurants_Test_Gold.xml"),
    }.items():
        for relative in (train_file, test_file):
            path = tmp_path / relative
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(LAPTOP_XML)
    (tmp_path / "twitter").mkdir()
    (tmp_path / "twitter" / "train.raw").write_bytes(TWITTER_RAW * 4)
    (tmp_path / "twitter" / "test.raw").write_bytes(TWITTER_RAW)
    return tmp_path


@pytest.fixture
def real_data_dir():
    data_dir = os.environ.get("LCA_DATA_DIR")
    if not data_dir or not Path(data_dir).is_dir():
        pytest.skip("LCA_DATA_DIR does not point at the benchmark datasets")
    return Path(data_dir)
