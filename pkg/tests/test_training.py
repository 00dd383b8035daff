import math

import numpy as np
import pytest

from conftest import random_embeddings
from lca_net.errors import ConfigError, DivergenceError
from lca_net.metrics import majority_accuracy
from lca_net.model import Batch, ModelParams, forward
from lca_net.numeric import Tensor, cross_entropy
from lca_net.training import (
    Trainer,
    evaluate_params,
    joint_loss,
    joint_loss_terms,
    l2_penalty,
    lcp_loss,
    train,
)


def batch_loss(params, config, batch):
    output = forward(batch, params, config)
    return joint_loss(
        output.polarity_probs, batch.polarities, output.tag_probs, batch.tags, batch.valid_lens,
        params.active(config), config.sigma, config.l2_lambda,
    ).item()


class TestLcpLoss:
    def test_perfect(self):
        probs = Tensor([[[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]])
        assert lcp_loss(probs, np.array([[0, 1, 0]]), [2]).item() == 0.0

    def test_uniform(self):
        probs = Tensor(np.full((2, 4, 2), 0.5))
        assert lcp_loss(probs, np.zeros((2, 4)), [4, 1]).item() == pytest.approx(math.log(2), abs=1e-12)

    def test_two_tokens(self):
        probs = Tensor([[[0.9, 0.1], [0.5, 0.5], [0.01, 0.99]]])
        loss = lcp_loss(probs, np.array([[0, 0, 0]]), [2]).item()
        assert loss == pytest.approx(-(math.log(0.9) + math.log(0.5)) / 2, abs=1e-12)
        assert loss == pytest.approx(0.3993, abs=1e-4)


class TestJointLoss:
    @pytest.fixture
    def outputs(self, mini_batch, mini_params, mini_config):
        output = forward(mini_batch, mini_params, mini_config)
        active = mini_params.active(mini_config)
        polarity = cross_entropy(output.polarity_probs, mini_batch.polarities).item()
        lcp = lcp_loss(output.tag_probs, mini_batch.tags, mini_batch.valid_lens).item()
        penalty = l2_penalty(active, 1e-3).item()

        def loss(sigma, l2_lambda=1e-3):
            return joint_loss(
                output.polarity_probs, mini_batch.polarities, output.tag_probs, mini_batch.tags,
                mini_batch.valid_lens, active, sigma, l2_lambda,
            ).item()

        return loss, polarity, lcp, penalty

    def test_sigma_endpoints(self, outputs):
        loss, polarity, lcp, penalty = outputs
        assert loss(0.0) == pytest.approx(polarity + penalty, abs=1e-12)
        assert loss(1.0) == pytest.approx(lcp + penalty, abs=1e-12)

    def test_half_sigma_without_l2_is_mean(self, outputs):
        loss, polarity, lcp, _ = outputs
        assert loss(0.5, l2_lambda=0.0) == pytest.approx((polarity + lcp) / 2, abs=1e-12)

    def test_linear_in_sigma(self, outputs):
        loss = outputs[0]
        low, high = loss(0.0), loss(1.0)
        for sigma in (0.25, 0.5, 0.75):
            assert loss(sigma) == pytest.approx((1 - sigma) * low + sigma * high, abs=1e-12)

    def test_sigma_out_of_range(self, mini_batch, mini_params, mini_config):
        output = forward(mini_batch, mini_params, mini_config)
        with pytest.raises(ConfigError):
            joint_loss(output.polarity_probs, mini_batch.polarities, None, None, None, {}, 1.5, 0.0)

    def test_penalty_skips_biases(self, mini_params, mini_config):
        active = mini_params.active(mini_config)
        expected = sum(float((t.data ** 2).sum()) for name, t in active.items() if not name.endswith(".bias"))
        assert l2_penalty(active, 0.5).item() == pytest.approx(0.5 * expected, rel=1e-12)

    def test_terms_without_tag_head(self, mini_batch, mini_params, mini_config):
        output = forward(mini_batch, mini_params, mini_config)
        terms = joint_loss_terms(output.polarity_probs, mini_batch.polarities, None, None, None, {}, 0.3, 0.0)
        assert terms.lcp == 0.0
        assert terms.total.item() == pytest.approx(0.7 * terms.polarity, abs=1e-12)


class TestTrainer:
    def test_one_small_step_lowers_the_loss(self, mini_config, mini_vocab, mini_examples):
        config = mini_config.replace(learning_rate=1e-4)
        trainer = Trainer(config, mini_vocab, random_embeddings(mini_vocab, config.embed_dim, seed=1))
        batch = Batch.from_examples(mini_examples, config.alpha)
        before = batch_loss(trainer.params, config, batch)
        trainer.train_step(mini_examples)
        assert batch_loss(trainer.params, config, batch) < before

    def test_disabled_lcp_leaves_tag_head_untouched(self, mini_config, mini_vocab, mini_examples):
        config = mini_config.replace(lcp_enabled=False)
        trainer = Trainer(config, mini_vocab, random_embeddings(mini_vocab, config.embed_dim, seed=1))
        tag_head = trainer.params["tag_head.weight"].data.copy()
        fusion = trainer.params["fusion.weight"].data.copy()
        for _ in range(3):
            trainer.train_step(mini_examples)
        assert trainer.params["tag_head.weight"].grad is None
        np.testing.assert_array_equal(trainer.params["tag_head.weight"].data, tag_head)
        assert not np.array_equal(trainer.params["fusion.weight"].data, fusion)

    def test_frozen_embeddings(self, mini_config, mini_vocab, mini_examples):
        trainer = Trainer(mini_config, mini_vocab, random_embeddings(mini_vocab, mini_config.embed_dim))
        before = trainer.params["embedding"].data.copy()
        trainer.train_step(mini_examples)
        np.testing.assert_array_equal(trainer.params["embedding"].data, before)

    def test_divergence_reports_coordinates(self, mini_config, mini_vocab, mini_examples):
        trainer = Trainer(mini_config, mini_vocab, random_embeddings(mini_vocab, mini_config.embed_dim))
        trainer.params["fusion.weight"].data[:] = np.nan
        with pytest.raises(DivergenceError, match="epoch 4, batch 0"):
            trainer.run_epoch(mini_examples, epoch=4)


class TestTrain:
    def test_same_seed_is_bit_identical(self, small_config, synthetic_dataset):
        data = synthetic_dataset
        _, first = train(small_config, data.train, data.test, data.vocab, data.embeddings)
        ckpt, second = train(small_config, data.train, data.test, data.vocab, data.embeddings)
        assert first.loss_curve == second.loss_curve
        assert first.rows() == second.rows()
        assert len(second.epochs) == small_config.epochs
        assert ckpt.metrics["final"] == second.rows()[-1]

    def test_report_values(self, small_config, synthetic_dataset):
        data = synthetic_dataset
        _, report = train(small_config, data.train, data.test, data.vocab, data.embeddings)
        assert not report.reproduction
        for record in report.epochs:
            assert math.isfinite(record.loss) and record.loss >= 0
            assert 0.0 <= record.test_accuracy <= 1.0
        assert report.best.test_accuracy >= report.final.test_accuracy
        assert "seconds" not in report.rows()[0]

    def test_random_embeddings_warn(self, small_config, synthetic_dataset, caplog):
        data = synthetic_dataset
        train(small_config.replace(epochs=1), data.train, data.test, data.vocab, data.embeddings)
        assert "non-reproduction run" in caplog.text

    def test_overfits_small_subset(self, small_config, synthetic_dataset):
        data = synthetic_dataset
        config = small_config.replace(epochs=200)
        checkpoint, report = train(config, data.train, data.test, data.vocab, data.embeddings)
        assert evaluate_params(checkpoint.model_params(), config, data.train).accuracy == 1.0
        curve = report.loss_curve
        assert np.mean(curve[-10:]) < np.mean(curve[:10])
        windows = np.asarray(curve).reshape(-1, 10).mean(axis=1)
        assert np.all(np.diff(windows) <= 0.05), windows

    def test_untrained_model_scores_near_majority_rate(self, small_config, synthetic_dataset):
        data = synthetic_dataset
        reports = [
            evaluate_params(ModelParams.initialize(small_config, data.embeddings.matrix, seed), small_config, data.test)
            for seed in range(1, 11)
        ]
        majority = majority_accuracy(reports[0].confusion)
        assert majority == pytest.approx(1 / 3)
        assert abs(np.mean([report.accuracy for report in reports]) - majority) <= 0.2
