"""The five classifier architectures, declaratively specced over any encoder.

Three head wirings cover the five models:

* enc_lstm  — token features -> LSTM(128), final hidden state -> dropout 0.2
              -> dense(1) + sigmoid. Used by bert_lstm, albert and roberta.
* enc_dense — pooled vector -> dense(128) -> dropout 0.3 -> dense(64)
              -> dropout 0.2 -> dense(1) + sigmoid. Used by bert_dense.
* hybrid    — pooled vectors of two encoders concatenated, then the
              enc_dense stack. Used by hybrid (bert + albert).

All head math is float64 numpy with hand-written backward passes, so the
models stay bit-deterministic and finite-difference checkable.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoding import EncodedBatch, EncoderOutput, EncoderSpec, build_encoder
from .errors import ConfigError, LoadError, NumericsError, ShapeError, SpecError

VARIANT_KINDS = ("enc_lstm", "enc_dense", "hybrid")

# The five standard configurations: public name -> (head kind, encoder families).
MODEL_VARIANTS: dict[str, tuple[str, tuple[str, ...]]] = {
    "bert_lstm": ("enc_lstm", ("bert",)),
    "bert_dense": ("enc_dense", ("bert",)),
    "albert": ("enc_lstm", ("albert",)),
    "roberta": ("enc_lstm", ("roberta",)),
    "hybrid": ("hybrid", ("bert", "albert")),
}

_CHECKPOINT_MAGIC = b"FNDPARAM\x01"
CHECKPOINT_SCHEMA_VERSION = 1


def default_dropout(variant: str) -> float:
    """First dropout rate per head kind: 0.2 after the LSTM, 0.3 after dense."""
    return 0.2 if variant == "enc_lstm" else 0.3


@dataclass(frozen=True)
class ModelSpec:
    """Declarative description of one classifier architecture."""

    variant: str
    encoders: tuple[EncoderSpec, ...]
    name: str = ""
    lstm_units: int = 128
    dense1_units: int = 128
    dense2_units: int = 64
    dropout_a: float | None = None
    dropout_b: float = 0.2

    def __post_init__(self) -> None:
        if self.variant not in VARIANT_KINDS:
            raise SpecError(f"unknown variant {self.variant!r}; expected one of {VARIANT_KINDS}")
        expected = 2 if self.variant == "hybrid" else 1
        if len(self.encoders) != expected:
            raise SpecError(
                f"variant {self.variant!r} needs exactly {expected} encoder(s), got {len(self.encoders)}"
            )
        if self.dropout_a is None:
            object.__setattr__(self, "dropout_a", default_dropout(self.variant))
        for rate in (self.dropout_a, self.dropout_b):
            if not (0.0 <= rate < 1.0):
                raise SpecError(f"dropout rates must lie in [0, 1), got {rate}")
        for units in (self.lstm_units, self.dense1_units, self.dense2_units):
            if units < 1:
                raise SpecError(f"unit counts must be positive, got {units}")

    @classmethod
    def for_variant(cls, name: str, encoders: Sequence[EncoderSpec]) -> "ModelSpec":
        """Spec for one of the five standard variants by public name."""
        if name not in MODEL_VARIANTS:
            raise ConfigError(f"unknown model variant {name!r}; valid: {sorted(MODEL_VARIANTS)}")
        kind, families = MODEL_VARIANTS[name]
        encoders = tuple(encoders)
        if len(encoders) != len(families):
            raise SpecError(f"variant {name!r} needs {len(families)} encoder spec(s)")
        return cls(variant=kind, encoders=encoders, name=name)

    @property
    def head_input_width(self) -> int:
        widths = [e.hidden_width for e in self.encoders]
        return widths[0] if self.variant == "enc_lstm" else sum(widths)

    def to_json_dict(self) -> dict:
        return {
            "variant": self.variant,
            "encoders": [e.to_json_dict() for e in self.encoders],
            "name": self.name,
            "lstm_units": self.lstm_units,
            "dense1_units": self.dense1_units,
            "dense2_units": self.dense2_units,
            "dropout_a": self.dropout_a,
            "dropout_b": self.dropout_b,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ModelSpec":
        return cls(
            variant=data["variant"],
            encoders=tuple(EncoderSpec.from_json_dict(e) for e in data["encoders"]),
            name=data.get("name", ""),
            lstm_units=data["lstm_units"],
            dense1_units=data["dense1_units"],
            dense2_units=data["dense2_units"],
            dropout_a=data["dropout_a"],
            dropout_b=data["dropout_b"],
        )

    def canonical_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    def spec_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_parameters(spec: ModelSpec, seed: int) -> dict[str, np.ndarray]:
    """Seed-deterministic fan-in-scaled uniform initialization of the head.

    Weights are U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases start at zero
    except the LSTM forget gate, which starts at one.
    """
    rng = np.random.default_rng([seed, 3])

    def uniform(fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    params: dict[str, np.ndarray] = {}
    d_in = spec.head_input_width
    if spec.variant == "enc_lstm":
        h = spec.lstm_units
        params["lstm.W"] = uniform(d_in, (d_in, 4 * h))
        params["lstm.U"] = uniform(h, (h, 4 * h))
        bias = np.zeros(4 * h)
        bias[h : 2 * h] = 1.0
        params["lstm.b"] = bias
        params["out.W"] = uniform(h, (h, 1))
        params["out.b"] = np.zeros(1)
    else:
        d1, d2 = spec.dense1_units, spec.dense2_units
        params["dense1.W"] = uniform(d_in, (d_in, d1))
        params["dense1.b"] = np.zeros(d1)
        params["dense2.W"] = uniform(d1, (d1, d2))
        params["dense2.b"] = np.zeros(d2)
        params["out.W"] = uniform(d2, (d2, 1))
        params["out.b"] = np.zeros(1)
    return params


def _dropout_mask(rng: np.random.Generator, shape: tuple[int, ...], rate: float) -> np.ndarray:
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _lstm_forward(x: np.ndarray, W: np.ndarray, U: np.ndarray, b: np.ndarray):
    """Run the LSTM over x [B,T,D]; returns final state plus backprop tape."""
    B, T, _ = x.shape
    H = U.shape[0]
    hs = np.zeros((T + 1, B, H))
    cs = np.zeros((T + 1, B, H))
    gates = np.empty((T, B, 4 * H))
    xW = x @ W
    for t in range(T):
        z = xW[:, t] + hs[t] @ U + b
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        g = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H :])
        cs[t + 1] = f * cs[t] + i * g
        hs[t + 1] = o * np.tanh(cs[t + 1])
        gates[t, :, :H] = i
        gates[t, :, H : 2 * H] = f
        gates[t, :, 2 * H : 3 * H] = g
        gates[t, :, 3 * H :] = o
    return hs, cs, gates


def _lstm_backward(x, W, U, hs, cs, gates, d_final):
    """Backprop through the LSTM given the gradient at the final hidden state."""
    B, T, _ = x.shape
    H = U.shape[0]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H)
    dx = np.empty_like(x)
    dh = d_final
    dc = np.zeros((B, H))
    for t in reversed(range(T)):
        i = gates[t, :, :H]
        f = gates[t, :, H : 2 * H]
        g = gates[t, :, 2 * H : 3 * H]
        o = gates[t, :, 3 * H :]
        tc = np.tanh(cs[t + 1])
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        da = np.empty((B, 4 * H))
        da[:, :H] = dc * g * i * (1.0 - i)
        da[:, H : 2 * H] = dc * cs[t] * f * (1.0 - f)
        da[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
        da[:, 3 * H :] = do * o * (1.0 - o)
        dW += x[:, t].T @ da
        dU += hs[t].T @ da
        db += da.sum(axis=0)
        dx[:, t] = da @ W.T
        dh = da @ U.T
        dc = dc * f
    return dW, dU, db, dx


def head_forward(
    spec: ModelSpec,
    params: dict[str, np.ndarray],
    outputs: Sequence[EncoderOutput],
    rng: np.random.Generator | None = None,
    train: bool = False,
) -> tuple[np.ndarray, dict]:
    """Run the classification head on encoder outputs.

    Returns probabilities in (0, 1) and the tape needed by head_backward.
    Train mode applies inverted dropout and requires an rng.
    """
    if train and rng is None:
        raise ConfigError("train-mode forward requires an rng for dropout")
    cache: dict = {"outputs": list(outputs), "train": train}
    if spec.variant == "enc_lstm":
        x = outputs[0].token_features
        hs, cs, gates = _lstm_forward(x, params["lstm.W"], params["lstm.U"], params["lstm.b"])
        feat = hs[-1]
        mask_a = _dropout_mask(rng, feat.shape, spec.dropout_a) if train else 1.0
        dropped = feat * mask_a
        logits = dropped @ params["out.W"] + params["out.b"]
        cache.update(x=x, hs=hs, cs=cs, gates=gates, mask_a=mask_a, dropped=dropped)
    else:
        x = np.concatenate([out.pooled for out in outputs], axis=1)
        a1 = x @ params["dense1.W"] + params["dense1.b"]
        mask_a = _dropout_mask(rng, a1.shape, spec.dropout_a) if train else 1.0
        h1 = a1 * mask_a
        a2 = h1 @ params["dense2.W"] + params["dense2.b"]
        mask_b = _dropout_mask(rng, a2.shape, spec.dropout_b) if train else 1.0
        h2 = a2 * mask_b
        logits = h2 @ params["out.W"] + params["out.b"]
        cache.update(x=x, h1=h1, h2=h2, mask_a=mask_a, mask_b=mask_b)

    z = logits[:, 0]
    if not np.isfinite(z).all():
        raise NumericsError("non-finite pre-activation in final layer")
    # keep probabilities in the open interval (0, 1) at float precision
    probs = np.clip(_sigmoid(z), 1e-300, 1.0 - 1e-16)
    cache["probs"] = probs
    return probs, cache


def head_backward(
    spec: ModelSpec,
    params: dict[str, np.ndarray],
    cache: dict,
    dprobs: np.ndarray,
):
    """Head parameter gradients and per-encoder feature gradients from dL/dp.

    The feature gradients come back as one (d_token_features, d_pooled) pair
    per encoder; the unused member of each pair is None.
    """
    probs = cache["probs"]
    dz = dprobs * probs * (1.0 - probs)
    grads: dict[str, np.ndarray] = {}
    if spec.variant == "enc_lstm":
        dropped = cache["dropped"]
        grads["out.W"] = dropped.T @ dz[:, None]
        grads["out.b"] = np.array([dz.sum()])
        d_dropped = dz[:, None] @ params["out.W"].T
        d_final = d_dropped * cache["mask_a"]
        dW, dU, db, dx = _lstm_backward(
            cache["x"], params["lstm.W"], params["lstm.U"],
            cache["hs"], cache["cs"], cache["gates"], d_final,
        )
        grads["lstm.W"], grads["lstm.U"], grads["lstm.b"] = dW, dU, db
        d_features = [(dx, None)]
    else:
        h2, h1, x = cache["h2"], cache["h1"], cache["x"]
        grads["out.W"] = h2.T @ dz[:, None]
        grads["out.b"] = np.array([dz.sum()])
        dh2 = dz[:, None] @ params["out.W"].T
        da2 = dh2 * cache["mask_b"]
        grads["dense2.W"] = h1.T @ da2
        grads["dense2.b"] = da2.sum(axis=0)
        dh1 = da2 @ params["dense2.W"].T
        da1 = dh1 * cache["mask_a"]
        grads["dense1.W"] = x.T @ da1
        grads["dense1.b"] = da1.sum(axis=0)
        dx = da1 @ params["dense1.W"].T
        d_features = []
        start = 0
        for out in cache["outputs"]:
            width = out.pooled.shape[1]
            d_features.append((None, dx[:, start : start + width]))
            start += width
    return grads, d_features


class Classifier:
    """A model spec bound to parameters, encoders and a train/eval mode.

    Eval-mode forward is a pure function of (parameters, batch); train mode
    additionally needs an RNG for the dropout masks.
    """

    def __init__(self, spec: ModelSpec, params: dict[str, np.ndarray], encoders=None, mode: str = "eval"):
        self.spec = spec
        self.params = params
        self.encoders = list(encoders) if encoders is not None else [build_encoder(e) for e in spec.encoders]
        self.mode = mode
        self._check_shapes()

    def _check_shapes(self) -> None:
        expected = init_parameters(self.spec, seed=0)
        if set(expected) != set(self.params):
            raise SpecError(
                f"parameter names {sorted(self.params)} do not match spec (want {sorted(expected)})"
            )
        for name, ref in expected.items():
            if self.params[name].shape != ref.shape:
                raise SpecError(
                    f"parameter {name} has shape {self.params[name].shape}, spec wants {ref.shape}"
                )

    def train_mode(self) -> "Classifier":
        self.mode = "train"
        return self

    def eval_mode(self) -> "Classifier":
        self.mode = "eval"
        return self

    # ---- tokenization -----------------------------------------------------

    def tokenize(self, texts: list[str], max_len: int) -> list[EncodedBatch]:
        """One batch per encoder (hybrid tokenizes once per backbone)."""
        return [enc.tokenize(texts, max_len) for enc in self.encoders]

    def _normalize_batches(self, batches) -> list[EncodedBatch]:
        if isinstance(batches, EncodedBatch):
            batches = [batches]
        batches = list(batches)
        if len(batches) == 1 and len(self.encoders) > 1:
            prints = {e.spec.tokenizer_fingerprint() for e in self.encoders}
            if len(prints) != 1:
                raise ShapeError(
                    "hybrid encoders use different tokenizers; pass one batch per encoder"
                )
            batches = batches * len(self.encoders)
        if len(batches) != len(self.encoders):
            raise ShapeError(f"got {len(batches)} batches for {len(self.encoders)} encoder(s)")
        sizes = {b.size for b in batches}
        if len(sizes) != 1:
            raise ShapeError(f"batch sizes differ across encoders: {sorted(sizes)}")
        return batches

    # ---- forward / backward ----------------------------------------------

    def forward_with_cache(self, batches, rng: np.random.Generator | None = None, keep_tapes: bool = False):
        """Probabilities plus the tape needed for backward.

        In train mode an rng is required (dropout); in eval mode the pass is
        deterministic. With keep_tapes the encoder backward hooks are kept
        so encoder fine-tuning gradients can be propagated.
        """
        batches = self._normalize_batches(batches)
        train = self.mode == "train"

        outputs: list[EncoderOutput] = []
        hooks = []
        for enc, batch in zip(self.encoders, batches):
            if keep_tapes and hasattr(enc, "encode_for_training"):
                out, hook = enc.encode_for_training(batch)
            else:
                out, hook = enc.encode(batch), None
            outputs.append(out)
            hooks.append(hook)

        probs, cache = head_forward(self.spec, self.params, outputs, rng=rng, train=train)
        cache["batches"] = batches
        cache["hooks"] = hooks
        return probs, cache

    def forward(self, batches, rng: np.random.Generator | None = None) -> np.ndarray:
        """Probabilities in (0, 1), one per row."""
        probs, _ = self.forward_with_cache(batches, rng)
        return probs

    def predict(self, batches, threshold: float = 0.5) -> np.ndarray:
        """1 (fake) where probability >= threshold, else 0 (real)."""
        if not (0.0 < threshold < 1.0):
            raise ConfigError(f"threshold must be in (0, 1), got {threshold}")
        probs = self.forward(batches)
        return (probs >= threshold).astype(np.int64)

    def backward(self, cache: dict, dprobs: np.ndarray):
        """Head gradients and per-encoder feature gradients from dL/dp."""
        return head_backward(self.spec, self.params, cache, dprobs)

    # ---- persistence -------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        save_checkpoint(self, directory)

    @classmethod
    def load(cls, directory: str | Path) -> "Classifier":
        return load_checkpoint(directory)


def build_model(spec: ModelSpec, seed: int, encoders=None) -> Classifier:
    """Classifier with freshly initialized head parameters."""
    return Classifier(spec, init_parameters(spec, seed), encoders=encoders)


# ---- checkpoint container ---------------------------------------------------


def _pack_parameters(params: dict[str, np.ndarray]) -> bytes:
    header: dict[str, dict] = {}
    payload = bytearray()
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name], dtype="<f8")
        header[name] = {"dtype": "<f8", "shape": list(arr.shape), "offset": len(payload)}
        payload += arr.tobytes()
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return (
        _CHECKPOINT_MAGIC
        + len(header_bytes).to_bytes(8, "little")
        + header_bytes
        + bytes(payload)
    )


def _unpack_parameters(blob: bytes) -> dict[str, np.ndarray]:
    if blob[: len(_CHECKPOINT_MAGIC)] != _CHECKPOINT_MAGIC:
        raise LoadError("not a parameter container (bad magic)")
    n = len(_CHECKPOINT_MAGIC)
    header_len = int.from_bytes(blob[n : n + 8], "little")
    header = json.loads(blob[n + 8 : n + 8 + header_len].decode("utf-8"))
    base = n + 8 + header_len
    params = {}
    for name, meta in header.items():
        shape = tuple(meta["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = base + meta["offset"]
        arr = np.frombuffer(blob, dtype=meta["dtype"], count=count, offset=start)
        params[name] = arr.reshape(shape).copy()
    return params


def save_checkpoint(model: Classifier, directory: str | Path) -> None:
    """Write spec.json, params.bin and manifest.json (all byte-deterministic)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    spec_json = model.spec.canonical_json()
    (directory / "spec.json").write_text(spec_json, encoding="utf-8")
    (directory / "params.bin").write_bytes(_pack_parameters(model.params))
    manifest = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "spec_hash": model.spec.spec_hash(),
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_checkpoint(directory: str | Path) -> Classifier:
    """Load a checkpoint; refuses to load when the spec hash mismatches."""
    directory = Path(directory)
    try:
        spec_text = (directory / "spec.json").read_text(encoding="utf-8")
        manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
        blob = (directory / "params.bin").read_bytes()
    except FileNotFoundError as exc:
        raise LoadError(f"incomplete checkpoint at {directory}: {exc}") from exc
    actual = hashlib.sha256(spec_text.encode("utf-8")).hexdigest()
    if actual != manifest.get("spec_hash"):
        raise LoadError(f"spec hash mismatch in {directory}: refusing to load")
    spec = ModelSpec.from_json_dict(json.loads(spec_text))
    params = _unpack_parameters(blob)
    return Classifier(spec, params)
