import numpy as np
import pytest

from conftest import grad_check, random_embeddings
from lca_net.corpus import POLARITIES, Vocabulary
from lca_net.errors import ShapeError, TargetNotFoundError
from lca_net.local_context import LcTagVector, batch_masks
from lca_net.model import (
    Batch,
    ModelParams,
    embed,
    forward,
    lce_additive,
    lce_dot,
    local_branch,
    mhsa,
    predict,
)
from lca_net.numeric import Tensor, backward, scaled_dot_attention
from lca_net.training import joint_loss


def random_encoder(rng, d_in, d_h):
    encoder = {name: Tensor(rng.normal(scale=0.5, size=(d_in, d_h))) for name in ("w_q", "w_k", "w_v")}
    encoder["w_o"] = Tensor(rng.normal(scale=0.5, size=(d_h, d_h)))
    return encoder


def numpy_softmax(logits):
    shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def plain_mhsa_classifier(batch, arrays, heads):
    """Reference MHSA classifier written directly against numpy."""
    d_h = arrays["global.w_q"].shape[1]
    head_dim = d_h // heads
    fusion = arrays["fusion.weight"][:d_h] + arrays["fusion.weight"][d_h:]
    rows = []
    for ids, valid_len in zip(batch.token_ids, batch.valid_lens):
        x = arrays["embedding"][ids]
        merged = []
        for h in range(heads):
            cols = slice(h * head_dim, (h + 1) * head_dim)
            q, k, v = (x @ arrays[f"global.{w}"][:, cols] for w in ("w_q", "w_k", "w_v"))
            scores = q @ k.T / np.sqrt(head_dim)
            scores[:, valid_len:] = -np.inf
            merged.append(numpy_softmax(scores) @ v)
        features = np.tanh(np.concatenate(merged, axis=1) @ arrays["global.w_o"])
        fused = features @ fusion + arrays["fusion.bias"]
        pooled = fused[:valid_len].mean(axis=0)
        rows.append(numpy_softmax(pooled @ arrays["polarity_head.weight"] + arrays["polarity_head.bias"]))
    return np.stack(rows)


class TestParams:
    def test_shapes_and_identity_lce(self, mini_params, mini_config, mini_vocab):
        assert mini_params["embedding"].shape == (len(mini_vocab), 8)
        assert not mini_params["embedding"].requires_grad
        assert mini_params["fusion.weight"].shape == (16, 8)
        assert mini_params["tag_head.bias"].shape == (2,)
        assert mini_params["polarity_head.bias"].shape == (3,)
        np.testing.assert_array_equal(mini_params["lce"].data, np.ones((2, 8)))

    def test_additive_lce_starts_at_zero(self, mini_config, mini_vocab):
        params = ModelParams.initialize(
            mini_config.replace(lce_mode="additive"), random_embeddings(mini_vocab, 8).matrix, seed=0
        )
        assert not params["lce"].data.any()

    def test_active_names_follow_ablation_flags(self, mini_params, mini_config):
        full = mini_params.active_names(mini_config)
        assert "embedding" not in full
        assert {"lce", "local.w_q", "tag_head.weight"} <= set(full)
        bare = mini_params.active_names(
            mini_config.replace(lce_mode="off", lcp_enabled=False, cdm_enabled=False)
        )
        assert not any(name == "lce" or name.startswith(("local.", "tag_head.")) for name in bare)

    def test_seeded(self, mini_config, mini_vocab):
        embeddings = random_embeddings(mini_vocab, 8).matrix
        first = ModelParams.initialize(mini_config, embeddings, seed=11).arrays()
        second = ModelParams.initialize(mini_config, embeddings, seed=11).arrays()
        for name in first:
            np.testing.assert_array_equal(first[name], second[name])


class TestEmbed:
    def test_padding_rows_are_zero(self, mini_params):
        assert not embed(np.zeros(6, dtype=np.int64), mini_params["embedding"]).data.any()

    def test_lookup(self, mini_params):
        np.testing.assert_array_equal(
            embed(np.array([5]), mini_params["embedding"]).data[0], mini_params["embedding"].data[5]
        )

    def test_zero_rate_dropout_is_identity(self, mini_params):
        ids = np.array([2, 3, 4, 0])
        plain = embed(ids, mini_params["embedding"])
        trained = embed(ids, mini_params["embedding"], 0.0, np.random.default_rng(0), training=True)
        np.testing.assert_array_equal(plain.data, trained.data)

    def test_out_of_range(self, mini_params):
        with pytest.raises(IndexError):
            embed(np.array([99]), mini_params["embedding"])


class TestMhsa:
    def test_output_range(self):
        rng = np.random.default_rng(0)
        out = mhsa(Tensor(rng.normal(scale=3.0, size=(6, 8))), random_encoder(rng, 8, 8), heads=2).data
        assert np.all(np.abs(out) < 1.0)

    def test_single_head_matches_primitives(self):
        rng = np.random.default_rng(1)
        x = Tensor(rng.normal(size=(5, 6)))
        encoder = random_encoder(rng, 6, 4)
        expected = (
            scaled_dot_attention(x @ encoder["w_q"], x @ encoder["w_k"], x @ encoder["w_v"]) @ encoder["w_o"]
        ).tanh()
        np.testing.assert_allclose(mhsa(x, encoder, heads=1).data, expected.data, rtol=0, atol=1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(6, 8))
        encoder = random_encoder(rng, 8, 8)
        swapped = x.copy()
        swapped[[1, 4]] = swapped[[4, 1]]
        out = mhsa(Tensor(x), encoder, heads=2).data
        out_swapped = mhsa(Tensor(swapped), encoder, heads=2).data
        expected = out.copy()
        expected[[1, 4]] = expected[[4, 1]]
        np.testing.assert_allclose(out_swapped, expected, rtol=0, atol=1e-12)

    def test_padded_keys_do_not_change_valid_rows(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(6, 8))
        encoder = random_encoder(rng, 8, 8)
        key_mask = np.array([True, True, True, False, False, False])
        noisy = x.copy()
        noisy[3:] = rng.normal(size=(3, 8))
        first = mhsa(Tensor(x), encoder, 2, key_mask).data
        second = mhsa(Tensor(noisy), encoder, 2, key_mask).data
        np.testing.assert_allclose(first[:3], second[:3], rtol=0, atol=1e-12)

    def test_heads_must_divide_width(self):
        rng = np.random.default_rng(4)
        with pytest.raises(ShapeError):
            mhsa(Tensor(rng.normal(size=(4, 6))), random_encoder(rng, 6, 6), heads=4)


class TestLce:
    def test_dot_with_ones_is_identity(self):
        features = Tensor(np.random.default_rng(5).normal(size=(4, 3)))
        out = lce_dot(np.array([1, 0, 1, 0]), Tensor(np.ones((2, 3))), features)
        np.testing.assert_array_equal(out.data, features.data)

    def test_dot_zero_row_annihilates_non_local(self):
        features = Tensor(np.random.default_rng(6).normal(size=(3, 2)))
        table = Tensor([[0.0, 0.0], [1.0, 1.0]])
        out = lce_dot(LcTagVector(np.array([0, 1, 0]), 1), table, features).data
        assert not out[[0, 2]].any()
        np.testing.assert_array_equal(out[1], features.data[1])

    def test_dot_rowwise_oracle(self):
        rng = np.random.default_rng(7)
        features, table = rng.normal(size=(5, 4)), rng.normal(size=(2, 4))
        tags = np.array([1, 0, 0, 1, 1])
        out = lce_dot(tags, Tensor(table), Tensor(features)).data
        for i, tag in enumerate(tags):
            np.testing.assert_array_equal(out[i], features[i] * table[tag])

    def test_dot_shape_mismatch(self):
        with pytest.raises(ShapeError):
            lce_dot(np.array([1, 0]), Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))))

    def test_additive_zero_is_identity(self):
        inputs = Tensor(np.random.default_rng(8).normal(size=(3, 4)))
        out = lce_additive(inputs, np.array([1, 1, 0]), Tensor(np.zeros((2, 4))))
        np.testing.assert_array_equal(out.data, inputs.data)

    def test_additive_uniform_tags_shift_rows(self):
        rng = np.random.default_rng(9)
        inputs, table = rng.normal(size=(3, 4)), rng.normal(size=(2, 4))
        out = lce_additive(Tensor(inputs), np.ones(3, dtype=np.int64), Tensor(table)).data
        np.testing.assert_allclose(out - inputs, np.tile(table[1], (3, 1)), rtol=0, atol=1e-12)

    def test_additive_rowwise_oracle(self):
        rng = np.random.default_rng(10)
        inputs, table = rng.normal(size=(4, 3)), rng.normal(size=(2, 3))
        tags = np.array([0, 1, 1, 0])
        out = lce_additive(Tensor(inputs), tags, Tensor(table)).data
        np.testing.assert_array_equal(out, inputs + table[tags])


class TestForward:
    def test_normalized_outputs(self, mini_batch, mini_params, mini_config):
        output = forward(mini_batch, mini_params, mini_config)
        assert output.polarity_probs.shape == (3, 3)
        assert output.tag_probs.shape == (3, 6, 2)
        np.testing.assert_allclose(output.polarity_probs.data.sum(axis=-1), 1.0, atol=1e-12)
        np.testing.assert_allclose(output.tag_probs.data.sum(axis=-1), 1.0, atol=1e-12)
        assert output.attention_scores.shape == (3, 6, 6)

    def test_eval_is_pure(self, mini_batch, mini_params, mini_config):
        first = forward(mini_batch, mini_params, mini_config).polarity_probs.data
        second = forward(mini_batch, mini_params, mini_config).polarity_probs.data
        np.testing.assert_array_equal(first, second)

    def test_identical_examples_give_identical_rows(self, mini_examples, mini_params, mini_config):
        batch = Batch.from_examples([mini_examples[0]] * 3, mini_config.alpha)
        probs = forward(batch, mini_params, mini_config).polarity_probs.data
        np.testing.assert_array_equal(probs[0], probs[1])
        np.testing.assert_array_equal(probs[0], probs[2])

    def test_all_ablations_reduce_to_plain_mhsa(self, mini_batch, mini_params, mini_config):
        config = mini_config.replace(lce_mode="off", lcp_enabled=False, cdm_enabled=False)
        probs = forward(mini_batch, mini_params, config).polarity_probs.data
        expected = plain_mhsa_classifier(mini_batch, mini_params.arrays(), config.heads)
        np.testing.assert_allclose(probs, expected, rtol=0, atol=1e-12)

    def test_ones_lce_matches_disabled_lce(self, mini_batch, mini_params, mini_config):
        with_lce = forward(mini_batch, mini_params, mini_config)
        without = forward(mini_batch, mini_params, mini_config.replace(lce_mode="off"))
        np.testing.assert_array_equal(with_lce.polarity_probs.data, without.polarity_probs.data)

    def test_first_position_pooling(self, mini_batch, mini_params, mini_config):
        probs = forward(mini_batch, mini_params, mini_config.replace(pooling="first")).polarity_probs.data
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-12)

    def test_shape_error_names_stage(self, mini_batch, mini_params, mini_config):
        arrays = dict(mini_params.arrays())
        arrays["fusion.weight"] = np.zeros((3, mini_config.d_h))
        with pytest.raises(ShapeError, match="^fusion"):
            forward(mini_batch, ModelParams.from_arrays(arrays), mini_config)

    def test_masked_positions_pass_no_gradient(self, mini_batch, mini_params, mini_config):
        rng = np.random.default_rng(11)
        features = Tensor(rng.normal(size=(3, 6, 8)), requires_grad=True)
        masks = batch_masks(mini_batch.tags, mini_config.d_h)
        out = local_branch(features, masks, mini_params, mini_config, mini_batch.valid_mask)
        backward((out * out).sum())
        assert (masks == 0).any()
        assert np.all(features.grad[masks == 0] == 0.0)
        assert features.grad[masks == 1].any()

    def test_gradients_match_finite_differences(self, mini_batch, mini_params, mini_config):
        active = mini_params.active(mini_config)

        def loss():
            output = forward(mini_batch, mini_params, mini_config)
            return joint_loss(
                output.polarity_probs, mini_batch.polarities, output.tag_probs, mini_batch.tags,
                mini_batch.valid_lens, active, mini_config.sigma, mini_config.l2_lambda,
            )

        grad_check(loss, list(active.values()))


class TestPredict:
    def test_label_and_tags(self, mini_params, mini_config, mini_vocab):
        prediction = predict(mini_params, mini_config, mini_vocab, "w0 w1 w2 w3", "w2")
        assert prediction.label in POLARITIES
        assert prediction.target_span == (2, 3)
        assert len(prediction.predicted_tags) == 4
        assert prediction.gold_tags.tolist() == [0, 1, 1, 1]
        assert prediction.attention.shape == (4, 4)

    def test_deterministic(self, mini_params, mini_config, mini_vocab):
        first = predict(mini_params, mini_config, mini_vocab, "w4 w5 unseen", "w5")
        second = predict(mini_params, mini_config, mini_vocab, "w4 w5 unseen", "w5")
        np.testing.assert_array_equal(first.probabilities, second.probabilities)

    def test_missing_target(self, mini_params, mini_config):
        with pytest.raises(TargetNotFoundError):
            predict(mini_params, mini_config, Vocabulary(), "w0 w1", "w9")
