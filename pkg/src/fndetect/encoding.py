"""Fixed-length token/mask batches and the pluggable sequence encoders.

Two encoder kinds share one interface: the pretrained transformer families
(bert, albert, roberta; see pretrained.py) and a tiny deterministic "test"
family that needs no weights, so the whole pipeline runs at desk scale.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ShapeError, SpecError

PRETRAINED_FAMILIES = ("bert", "albert", "roberta")
FAMILIES = PRETRAINED_FAMILIES + ("test",)

# Hash tokenizer constants (test family): fixed prime vocabulary, three
# reserved ids, content ids hashed into the remaining range.
HASH_VOCAB_SIZE = 4099
PAD_ID, START_ID, END_ID = 0, 1, 2
_N_RESERVED = 3


@dataclass(frozen=True)
class EncoderSpec:
    """Which encoder to use and how to resolve it.

    The test family is fully determined by (hidden_width, seed); pretrained
    families resolve weights_ref (a local path or registry name) through the
    adapter in pretrained.py. fine_tune only affects pretrained families.
    """

    family: str
    hidden_width: int
    seed: int | None = None
    weights_ref: str | None = None
    fine_tune: bool = True

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise SpecError(f"unknown encoder family {self.family!r}; expected one of {FAMILIES}")
        if self.hidden_width < 1:
            raise SpecError(f"hidden_width must be positive, got {self.hidden_width}")
        if self.family == "test":
            if self.seed is None:
                raise SpecError("test encoder requires a seed")
        elif not self.weights_ref:
            raise SpecError(f"{self.family} encoder requires weights_ref")

    def tokenizer_fingerprint(self) -> tuple:
        """Two specs with equal fingerprints produce identical tokenizations."""
        if self.family == "test":
            return ("hash", HASH_VOCAB_SIZE)
        return ("hf", self.weights_ref)

    def to_json_dict(self) -> dict:
        return {
            "family": self.family,
            "hidden_width": self.hidden_width,
            "seed": self.seed,
            "weights_ref": self.weights_ref,
            "fine_tune": self.fine_tune,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "EncoderSpec":
        return cls(
            family=data["family"],
            hidden_width=data["hidden_width"],
            seed=data.get("seed"),
            weights_ref=data.get("weights_ref"),
            fine_tune=data.get("fine_tune", True),
        )


@dataclass(frozen=True)
class EncodedBatch:
    """Token ids plus 0/1 attention mask, both [B, T] with right padding."""

    token_ids: np.ndarray
    attention_mask: np.ndarray

    def __post_init__(self) -> None:
        ids, mask = self.token_ids, self.attention_mask
        if ids.ndim != 2 or mask.shape != ids.shape:
            raise ShapeError(f"token_ids {ids.shape} and attention_mask {mask.shape} must be equal 2-d shapes")
        if not np.isin(mask, (0, 1)).all():
            raise DataError("attention mask must contain only 0 and 1")
        lengths = mask.sum(axis=1)
        if (lengths < 1).any():
            raise DataError("every row needs at least one unmasked position")
        # prefix-contiguity: all 1s must precede all 0s in each row
        first_zero = np.argmax(mask == 0, axis=1)
        full = mask.all(axis=1)
        if (~full & (first_zero != lengths)).any():
            raise DataError("attention mask rows must be contiguous prefixes of 1s")

    @property
    def size(self) -> int:
        return self.token_ids.shape[0]

    @property
    def max_len(self) -> int:
        return self.token_ids.shape[1]

    def rows(self, indices) -> "EncodedBatch":
        """Sub-batch with the given rows (used by the training loop)."""
        return EncodedBatch(self.token_ids[indices], self.attention_mask[indices])

    def to_json_dict(self) -> dict:
        return {
            "token_ids": self.token_ids.tolist(),
            "attention_mask": self.attention_mask.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "EncodedBatch":
        return cls(
            token_ids=np.asarray(data["token_ids"], dtype=np.int64),
            attention_mask=np.asarray(data["attention_mask"], dtype=np.int64),
        )


@dataclass(frozen=True)
class EncoderOutput:
    """Per-token features [B, T, d] and a pooled sentence vector [B, d]."""

    token_features: np.ndarray
    pooled: np.ndarray

    def __post_init__(self) -> None:
        if self.token_features.ndim != 3 or self.pooled.ndim != 2:
            raise ShapeError(
                f"expected [B,T,d] features and [B,d] pooled, got "
                f"{self.token_features.shape} / {self.pooled.shape}"
            )
        if self.token_features.shape[::2] != self.pooled.shape:
            raise ShapeError("token_features and pooled disagree on batch size or width")
        if not (np.isfinite(self.token_features).all() and np.isfinite(self.pooled).all()):
            raise DataError("encoder produced non-finite values")


def hash_token_id(token: str) -> int:
    """Stable content id in [3, HASH_VOCAB_SIZE) from the token's bytes."""
    digest = hashlib.blake2s(token.encode("utf-8"), digest_size=8).digest()
    return _N_RESERVED + int.from_bytes(digest, "little") % (HASH_VOCAB_SIZE - _N_RESERVED)


def _hash_tokenize(texts: list[str], max_len: int) -> EncodedBatch:
    ids = np.full((len(texts), max_len), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(texts), max_len), dtype=np.int64)
    for b, text in enumerate(texts):
        content = [hash_token_id(tok) for tok in text.split()[: max_len - 2]]
        row = [START_ID] + content + [END_ID]
        ids[b, : len(row)] = row
        mask[b, : len(row)] = 1
    return EncodedBatch(ids, mask)


def tokenize_batch(texts: list[str], spec: EncoderSpec, max_len: int) -> EncodedBatch:
    """Tokenize, truncate to max_len - 2 content tokens, add specials, pad.

    max_len counts the two special tokens, so a max_len of 56 leaves room
    for 54 content tokens.
    """
    if max_len < 3:
        raise ConfigError(f"max_len must be >= 3 (two specials + one content token), got {max_len}")
    if spec.family == "test":
        return _hash_tokenize(list(texts), max_len)
    from .pretrained import pretrained_tokenize

    return pretrained_tokenize(list(texts), spec, max_len)


class TestEncoder:
    """Deterministic pseudo-random feature encoder, seeded by its spec.

    Each (token id, position) pair maps to a fixed vector: a seeded random
    embedding row plus a seeded positional row. The pooled vector is the
    attention-mask-weighted mean of the token features, so it depends only
    on unmasked positions.
    """

    __test__ = False  # not a pytest class, despite the name

    def __init__(self, spec: EncoderSpec):
        if spec.family != "test":
            raise SpecError(f"TestEncoder requires family 'test', got {spec.family!r}")
        self.spec = spec
        self._embed = np.random.default_rng([spec.seed, 0]).standard_normal(
            (HASH_VOCAB_SIZE, spec.hidden_width)
        )

    def tokenize(self, texts: list[str], max_len: int) -> EncodedBatch:
        return tokenize_batch(texts, self.spec, max_len)

    def _positions(self, length: int) -> np.ndarray:
        # regenerated per call: a longer draw from the same stream shares
        # its prefix, so any T sees identical rows
        return np.random.default_rng([self.spec.seed, 1]).standard_normal(
            (length, self.spec.hidden_width)
        )

    def encode(self, batch: EncodedBatch) -> EncoderOutput:
        ids = batch.token_ids
        if ids.min() < 0 or ids.max() >= HASH_VOCAB_SIZE:
            raise DataError(f"token id outside [0, {HASH_VOCAB_SIZE}) for test encoder")
        pos = self._positions(batch.max_len)
        features = (self._embed[ids] + pos[None, :, :]) / np.sqrt(2.0)
        mask = batch.attention_mask.astype(np.float64)
        pooled = (features * mask[:, :, None]).sum(axis=1) / mask.sum(axis=1)[:, None]
        return EncoderOutput(token_features=features, pooled=pooled)

    def encode_for_training(self, batch: EncodedBatch):
        """Test features carry no trainable weight, so there is no backward."""
        return self.encode(batch), None

    def trainable_parameters(self) -> dict[str, np.ndarray]:
        return {}

    def apply_updates(self, values: dict[str, np.ndarray]) -> None:
        if values:
            raise SpecError("test encoder has no trainable parameters")


def build_encoder(spec: EncoderSpec):
    """Instantiate the encoder for a spec (test here, pretrained via adapter)."""
    if spec.family == "test":
        return TestEncoder(spec)
    from .pretrained import PretrainedEncoder

    return PretrainedEncoder(spec)
