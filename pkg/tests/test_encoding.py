import numpy as np
import pytest

from fndetect.encoding import (
    END_ID,
    HASH_VOCAB_SIZE,
    PAD_ID,
    START_ID,
    EncodedBatch,
    EncoderSpec,
    TestEncoder,
    build_encoder,
    hash_token_id,
    tokenize_batch,
)
from fndetect.errors import ConfigError, DataError, ShapeError, SpecError


@pytest.fixture
def spec():
    return EncoderSpec("test", hidden_width=16, seed=5)


@pytest.fixture
def encoder(spec):
    return build_encoder(spec)


def test_spec_validation():
    with pytest.raises(SpecError):
        EncoderSpec("gpt", hidden_width=16, seed=1)
    with pytest.raises(SpecError):
        EncoderSpec("test", hidden_width=16)  # no seed
    with pytest.raises(SpecError):
        EncoderSpec("bert", hidden_width=768)  # no weights_ref
    with pytest.raises(SpecError):
        EncoderSpec("test", hidden_width=0, seed=1)


def test_spec_round_trip(spec):
    assert EncoderSpec.from_json_dict(spec.to_json_dict()) == spec


def test_hash_ids_are_stable_and_in_range():
    assert hash_token_id("virus") == 2985
    assert hash_token_id("masks") == 2459
    for token in ("", "a", "Zebra", "😷"):
        assert 3 <= hash_token_id(token) < HASH_VOCAB_SIZE


def test_tokenize_shapes(spec):
    batch = tokenize_batch(["one two", "three", "four five six"], spec, 56)
    assert batch.token_ids.shape == (3, 56)
    assert batch.attention_mask.shape == (3, 56)


def test_tokenize_empty_text_has_two_specials(spec):
    batch = tokenize_batch([""], spec, 56)
    assert batch.attention_mask[0].sum() == 2
    assert batch.token_ids[0, 0] == START_ID
    assert batch.token_ids[0, 1] == END_ID
    assert (batch.token_ids[0, 2:] == PAD_ID).all()


def test_tokenize_truncates_to_first_content_tokens(spec):
    words = [f"w{i}" for i in range(200)]
    batch = tokenize_batch([" ".join(words)], spec, 56)
    assert batch.attention_mask[0].sum() == 56
    expected = [START_ID] + [hash_token_id(w) for w in words[:54]] + [END_ID]
    assert batch.token_ids[0].tolist() == expected


def test_tokenize_deterministic(spec):
    a = tokenize_batch(["alpha beta", "gamma"], spec, 12)
    b = tokenize_batch(["alpha beta", "gamma"], spec, 12)
    assert (a.token_ids == b.token_ids).all()
    assert (a.attention_mask == b.attention_mask).all()


def test_tokenize_min_length(spec):
    with pytest.raises(ConfigError):
        tokenize_batch(["x"], spec, 2)


def test_batch_validation_rejects_bad_masks():
    ids = np.zeros((2, 4), dtype=np.int64)
    with pytest.raises(DataError):
        EncodedBatch(ids, np.array([[1, 0, 1, 0], [1, 0, 0, 0]]))
    with pytest.raises(DataError):
        EncodedBatch(ids, np.zeros((2, 4), dtype=np.int64))
    with pytest.raises(DataError):
        EncodedBatch(ids, np.full((2, 4), 2, dtype=np.int64))
    with pytest.raises(ShapeError):
        EncodedBatch(ids, np.ones((2, 3), dtype=np.int64))


def test_batch_serialization_round_trip(spec):
    batch = tokenize_batch(["serialize me", ""], spec, 8)
    restored = EncodedBatch.from_json_dict(batch.to_json_dict())
    assert (restored.token_ids == batch.token_ids).all()
    assert (restored.attention_mask == batch.attention_mask).all()


def test_encode_deterministic(encoder):
    batch = encoder.tokenize(["alpha beta gamma", "delta"], 10)
    one = encoder.encode(batch)
    two = encoder.encode(batch)
    assert (one.token_features == two.token_features).all()
    assert (one.pooled == two.pooled).all()


def test_encode_same_seed_same_encoder(spec):
    batch = tokenize_batch(["hello world"], spec, 8)
    a = TestEncoder(spec).encode(batch)
    b = TestEncoder(EncoderSpec("test", 16, seed=5)).encode(batch)
    assert (a.pooled == b.pooled).all()
    c = TestEncoder(EncoderSpec("test", 16, seed=6)).encode(batch)
    assert not np.allclose(a.pooled, c.pooled)


def test_pooled_is_masked_mean_of_specials_for_empty_text(encoder):
    batch = encoder.tokenize(["content words here", ""], 10)
    out = encoder.encode(batch)
    expected = out.token_features[1, :2].mean(axis=0)
    np.testing.assert_array_equal(out.pooled[1], expected)


def test_masked_positions_cannot_influence_pooled(encoder):
    batch = encoder.tokenize(["two words", "one"], 12)
    base = encoder.encode(batch)
    ids = batch.token_ids.copy()
    ids[batch.attention_mask == 0] = 777  # arbitrary junk in padding
    tampered = EncodedBatch(ids, batch.attention_mask)
    out = encoder.encode(tampered)
    np.testing.assert_array_equal(out.pooled, base.pooled)


def test_row_permutation_equivariance(encoder, rng):
    batch = encoder.tokenize(["a b c", "d e", "f g h i", ""], 9)
    out = encoder.encode(batch)
    perm = rng.permutation(4)
    permuted = encoder.encode(batch.rows(perm))
    np.testing.assert_array_equal(permuted.token_features, out.token_features[perm])
    np.testing.assert_array_equal(permuted.pooled, out.pooled[perm])


def test_batch_size_invariance_exact(encoder):
    batch = encoder.tokenize(["first text", "second piece here", "third"], 11)
    full = encoder.encode(batch)
    for row in range(3):
        alone = encoder.encode(batch.rows([row]))
        np.testing.assert_array_equal(alone.token_features[0], full.token_features[row])
        np.testing.assert_array_equal(alone.pooled[0], full.pooled[row])


def test_encode_outputs_finite(encoder):
    batch = encoder.tokenize(["x " * 100, "", "y"], 30)
    out = encoder.encode(batch)
    assert np.isfinite(out.token_features).all()
    assert np.isfinite(out.pooled).all()


def test_longer_sequences_share_position_prefix(spec):
    enc = TestEncoder(spec)
    short = enc.encode(tokenize_batch(["a b"], spec, 6))
    long = enc.encode(tokenize_batch(["a b"], spec, 20))
    np.testing.assert_array_equal(short.token_features[0], long.token_features[0, :6])


def test_encode_rejects_foreign_token_ids(encoder):
    batch = EncodedBatch(
        np.array([[START_ID, HASH_VOCAB_SIZE + 5, END_ID]]),
        np.array([[1, 1, 1]]),
    )
    with pytest.raises(DataError):
        encoder.encode(batch)


def test_test_encoder_has_no_trainable_parameters(encoder):
    assert encoder.trainable_parameters() == {}
    out, hook = encoder.encode_for_training(encoder.tokenize(["x"], 5))
    assert hook is None
    assert np.isfinite(out.pooled).all()
