"""Fine-tuning loop: Adam on 32-sized batches of binary cross-entropy.

The loop is deterministic for a fixed (seed, config, data): shuffling and
dropout draw from generators derived from the seed, batches are visited in
shuffle order, and the last partial batch is used rather than dropped.
Parameters from the epoch with the best validation loss are returned.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import CorpusSplit
from .errors import ConfigError, NumericsError, PreconditionError, ShapeError, TrainingError
from .models import Classifier

BCE_EPS = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    """Optimization protocol. Defaults follow the experiment setup."""

    learning_rate: float = 2e-5
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 3
    seed: int = 0
    shuffle: bool = True
    hparam_train_fraction: float = 0.4
    hparam_val_fraction: float = 0.3
    max_len: int = 56

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        for name in ("hparam_train_fraction", "hparam_val_fraction"):
            value = getattr(self, name)
            if not (0.0 < value <= 1.0):
                raise ConfigError(f"{name} must lie in (0, 1], got {value}")

    def to_json_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "epochs": self.epochs,
            "seed": self.seed,
            "shuffle": self.shuffle,
            "hparam_train_fraction": self.hparam_train_fraction,
            "hparam_val_fraction": self.hparam_val_fraction,
            "max_len": self.max_len,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TrainConfig":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        """Read a flat key/value JSON object (unknown keys are ignored)."""
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float

    def to_json_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "train_loss": self.train_loss,
            "train_accuracy": self.train_accuracy,
            "val_loss": self.val_loss,
            "val_accuracy": self.val_accuracy,
        }


@dataclass(frozen=True)
class TrainHistory:
    """Per-epoch metrics; wall times are kept out of the comparable records
    (and out of the history file) so reruns stay byte-identical."""

    records: tuple[EpochRecord, ...]
    best_epoch: int
    wall_times: tuple[float, ...] = field(compare=False, default=())

    def write_jsonl(self, path: str | Path) -> None:
        lines = [json.dumps(r.to_json_dict(), sort_keys=True) for r in self.records]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def bce_loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clamped to [eps, 1-eps]."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ShapeError(f"probs shape {probs.shape} != labels shape {labels.shape}")
    p = np.clip(probs, BCE_EPS, 1.0 - BCE_EPS)
    return float(np.mean(-(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p))))


def bce_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """dL/dp of bce_loss; zero where the clamp is active."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ShapeError(f"probs shape {probs.shape} != labels shape {labels.shape}")
    inside = (probs > BCE_EPS) & (probs < 1.0 - BCE_EPS)
    p = np.clip(probs, BCE_EPS, 1.0 - BCE_EPS)
    grad = (p - labels) / (p * (1.0 - p)) / probs.size
    return np.where(inside, grad, 0.0)


class Adam:
    """Standard Adam with bias correction; state keyed by parameter name."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for name in sorted(grads):
            g = grads[name]
            if name not in self._m:
                self._m[name] = np.zeros_like(g)
                self._v[name] = np.zeros_like(g)
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1 ** self.t)
            v_hat = v / (1.0 - self.beta2 ** self.t)
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


def _labels_of(posts) -> np.ndarray:
    return np.array([p.label for p in posts], dtype=np.int64)


def _evaluate(model: Classifier, big_batches, labels: np.ndarray, batch_size: int) -> tuple[float, float]:
    """Mean loss and accuracy over a dataset in eval mode."""
    model.eval_mode()
    n = labels.size
    loss_sum = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        batches = [big.rows(idx) for big in big_batches]
        probs = model.forward(batches)
        loss_sum += bce_loss(probs, labels[idx]) * idx.size
        correct += int(((probs >= 0.5).astype(np.int64) == labels[idx]).sum())
    return loss_sum / n, correct / n


def train(model: Classifier, split: CorpusSplit, config: TrainConfig) -> tuple[Classifier, TrainHistory]:
    """Fine-tune the model on split.train, selecting the best epoch by
    validation loss.

    Post texts are expected to be already cleaned; tokenization happens here
    (once per dataset) via the model's encoders. Gradients flow into encoder
    weights when an encoder exposes trainable parameters.
    """
    rng_shuffle = np.random.default_rng([config.seed, 11])
    rng_dropout = np.random.default_rng([config.seed, 13])

    train_texts = [p.text for p in split.train]
    val_texts = [p.text for p in split.validation]
    y_train = _labels_of(split.train)
    y_val = _labels_of(split.validation)

    train_big = model.tokenize(train_texts, config.max_len)
    val_big = model.tokenize(val_texts, config.max_len)

    # encoder fine-tuning seam: master copies of any trainable encoder weights
    masters: dict[str, np.ndarray] = {}
    for e, enc in enumerate(model.encoders):
        for name, value in enc.trainable_parameters().items():
            masters[f"enc{e}.{name}"] = np.asarray(value, dtype=np.float64)
    fine_tuning = bool(masters)

    adam = Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon)
    n = y_train.size
    records: list[EpochRecord] = []
    wall_times: list[float] = []
    best_val = np.inf
    best_epoch = 0
    best_params: dict[str, np.ndarray] = {k: v.copy() for k, v in model.params.items()}
    best_masters: dict[str, np.ndarray] = {k: v.copy() for k, v in masters.items()}

    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng_shuffle.permutation(n) if config.shuffle else np.arange(n)
        model.train_mode()
        loss_sum = 0.0
        correct = 0
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            batches = [big.rows(idx) for big in train_big]
            labels = y_train[idx]
            try:
                probs, cache = model.forward_with_cache(batches, rng_dropout, keep_tapes=fine_tuning)
            except NumericsError as exc:
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}: {exc}") from exc
            loss = bce_loss(probs, labels)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            loss_sum += loss * idx.size
            correct += int(((probs >= 0.5).astype(np.int64) == labels).sum())

            grads, d_features = model.backward(cache, bce_grad(probs, labels))
            if fine_tuning:
                for e, hook in enumerate(cache["hooks"]):
                    if hook is None:
                        continue
                    d_tok, d_pool = d_features[e]
                    for name, g in hook(d_tok, d_pool).items():
                        grads[f"enc{e}.{name}"] = g
            all_params = {**model.params, **masters}
            adam.step(all_params, grads)
            if fine_tuning:
                for e, enc in enumerate(model.encoders):
                    prefix = f"enc{e}."
                    updates = {
                        name[len(prefix):]: masters[name]
                        for name in masters
                        if name.startswith(prefix)
                    }
                    if updates:
                        enc.apply_updates(updates)

        val_loss, val_acc = _evaluate(model, val_big, y_val, config.batch_size)
        wall_times.append(time.perf_counter() - started)
        records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=loss_sum / n,
                train_accuracy=correct / n,
                val_loss=val_loss,
                val_accuracy=val_acc,
            )
        )
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params.items()}
            best_masters = {k: v.copy() for k, v in masters.items()}

    # restore the best-epoch parameters
    for name, value in best_params.items():
        model.params[name][...] = value
    if fine_tuning:
        for e, enc in enumerate(model.encoders):
            prefix = f"enc{e}."
            updates = {
                name[len(prefix):]: best_masters[name]
                for name in best_masters
                if name.startswith(prefix)
            }
            if updates:
                enc.apply_updates(updates)
    model.eval_mode()
    return model, TrainHistory(tuple(records), best_epoch, tuple(wall_times))


def hparam_subset(
    split: CorpusSplit,
    seed: int,
    train_fraction: float = 0.4,
    val_fraction: float = 0.3,
) -> CorpusSplit:
    """Seeded uniform subsample of train/validation for hyperparameter search.

    The test set is passed through untouched. Sizes are floor(fraction * n);
    sampled indices are kept in their original order, so fraction 1.0 is the
    identity.
    """
    for name, value in (("train_fraction", train_fraction), ("val_fraction", val_fraction)):
        if not (0.0 < value <= 1.0):
            raise ConfigError(f"{name} must lie in (0, 1], got {value}")
    rng = np.random.default_rng([seed, 17])

    def take(posts, fraction):
        k = int(fraction * len(posts) + 1e-9)
        if k < 1:
            raise PreconditionError(f"subset of {len(posts)} posts at fraction {fraction} is empty")
        idx = np.sort(rng.choice(len(posts), size=k, replace=False))
        return [posts[i] for i in idx]

    return CorpusSplit(
        train=take(split.train, train_fraction),
        validation=take(split.validation, val_fraction),
        test=list(split.test),
    )
