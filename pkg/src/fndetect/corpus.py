"""Loading, validation, splitting and summary statistics for labeled claim corpora.

A corpus is a CSV or TSV file with a header row containing ``id``, ``text``
and ``label`` columns (any column order). Labels are normalized to integers:
0 = real, 1 = fake.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, DataError, PreconditionError, SchemaError

REAL, FAKE = 0, 1

# Accepted spellings on input; everything else is a hard error so that split
# sizes stay exactly reconstructable (silent row drops would corrupt them).
_LABEL_ALIASES = {"real": REAL, "0": REAL, "fake": FAKE, "1": FAKE}

_DELIMITERS = {"csv": ",", "tsv": "\t"}


@dataclass(frozen=True)
class LabeledPost:
    """One corpus item: opaque id, raw UTF-8 text, binary label."""

    id: str
    text: str
    label: int

    def __post_init__(self) -> None:
        if self.label not in (REAL, FAKE):
            raise DataError(f"label must be 0 or 1, got {self.label!r} (id={self.id!r})")


@dataclass(frozen=True)
class CorpusSplit:
    """Train/validation/test partition, pairwise disjoint by id."""

    train: list[LabeledPost]
    validation: list[LabeledPost]
    test: list[LabeledPost]

    def __post_init__(self) -> None:
        for name, part in self.parts().items():
            if not part:
                raise PreconditionError(f"{name} split is empty")
        ids = [p.id for part in self.parts().values() for p in part]
        if len(ids) != len(set(ids)):
            raise DataError("splits overlap: duplicate id across train/validation/test")

    def parts(self) -> dict[str, list[LabeledPost]]:
        return {"train": self.train, "validation": self.validation, "test": self.test}


@dataclass(frozen=True)
class CorpusStats:
    """Corpus-level counts and vocabulary overlap."""

    total: int
    per_class_counts: dict[int, int]
    per_class_fraction: dict[int, float]
    distinct_words: int
    shared_words: int

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "per_class_counts": {str(k): v for k, v in sorted(self.per_class_counts.items())},
            "per_class_fraction": {str(k): v for k, v in sorted(self.per_class_fraction.items())},
            "distinct_words": self.distinct_words,
            "shared_words": self.shared_words,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def normalize_label(value, row_id: str) -> int:
    """Map a raw label (string or numeric) to 0/1, or raise DataError."""
    if isinstance(value, bool):
        raise DataError(f"unknown label {value!r} in row id={row_id!r}")
    if isinstance(value, int):
        key = str(value)
    else:
        key = str(value).strip().lower()
    if key not in _LABEL_ALIASES:
        raise DataError(f"unknown label {value!r} in row id={row_id!r}")
    return _LABEL_ALIASES[key]


def load_corpus(path: str | Path, format: str = "csv") -> list[LabeledPost]:
    """Load a corpus file into a list of LabeledPost, preserving row order.

    Args:
        path: CSV/TSV file with header columns id, text, label.
        format: "csv" or "tsv".

    Raises:
        SchemaError: a required column is missing.
        DataError: unknown label value or duplicate id.
    """
    if format not in _DELIMITERS:
        raise ConfigError(f"unknown corpus format {format!r}; expected one of {sorted(_DELIMITERS)}")
    path = Path(path)
    posts: list[LabeledPost] = []
    seen: set[str] = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=_DELIMITERS[format])
        header = reader.fieldnames or []
        for column in ("id", "text", "label"):
            if column not in header:
                raise SchemaError(f"missing column {column!r} in {path}")
        for row in reader:
            row_id = row["id"]
            if row_id in seen:
                raise DataError(f"duplicate id {row_id!r} in {path}")
            seen.add(row_id)
            posts.append(
                LabeledPost(id=row_id, text=row["text"] or "", label=normalize_label(row["label"], row_id))
            )
    return posts


def write_corpus(posts: list[LabeledPost], path: str | Path, format: str = "csv") -> None:
    """Write posts to CSV/TSV with integer labels; inverse of load_corpus."""
    if format not in _DELIMITERS:
        raise ConfigError(f"unknown corpus format {format!r}; expected one of {sorted(_DELIMITERS)}")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=_DELIMITERS[format])
        writer.writerow(["id", "text", "label"])
        for post in posts:
            writer.writerow([post.id, post.text, post.label])


def split_corpus(
    posts: list[LabeledPost],
    fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> CorpusSplit:
    """Shuffle and partition posts into train/validation/test.

    Validation and test sizes are floor(fraction * n); the remainder goes to
    train. Deterministic for a fixed seed.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ConfigError(f"fractions must be three positive numbers, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {fractions} (sum {sum(fractions)!r})")
    n = len(posts)
    if n < 5:
        raise PreconditionError(f"need at least 5 posts to split, got {n}")

    shuffled = list(posts)
    random.Random(seed).shuffle(shuffled)
    # +1e-9 absorbs float dust when fraction * n is mathematically integral
    n_val = int(fractions[1] * n + 1e-9)
    n_test = int(fractions[2] * n + 1e-9)
    n_train = n - n_val - n_test
    return CorpusSplit(
        train=shuffled[:n_train],
        validation=shuffled[n_train : n_train + n_val],
        test=shuffled[n_train + n_val :],
    )


def load_presplit(
    train_path: str | Path,
    validation_path: str | Path,
    test_path: str | Path,
    format: str = "csv",
) -> CorpusSplit:
    """Build a CorpusSplit from three already-split corpus files."""
    return CorpusSplit(
        train=load_corpus(train_path, format),
        validation=load_corpus(validation_path, format),
        test=load_corpus(test_path, format),
    )


def _vocabulary(posts: list[LabeledPost]) -> set[str]:
    words: set[str] = set()
    for post in posts:
        words.update(post.text.lower().split())
    return words


def corpus_stats(posts: list[LabeledPost]) -> CorpusStats:
    """Compute counts, class fractions and vocabulary overlap.

    Word counting uses whitespace tokenization on lowercased raw text;
    shared_words is the size of the intersection of the two class
    vocabularies.
    """
    if not posts:
        raise PreconditionError("corpus_stats requires a non-empty corpus")
    counts = {REAL: 0, FAKE: 0}
    for post in posts:
        counts[post.label] += 1
    total = len(posts)
    fractions = {label: count / total for label, count in counts.items()}
    vocab_real = _vocabulary([p for p in posts if p.label == REAL])
    vocab_fake = _vocabulary([p for p in posts if p.label == FAKE])
    return CorpusStats(
        total=total,
        per_class_counts=counts,
        per_class_fraction=fractions,
        distinct_words=len(vocab_real | vocab_fake),
        shared_words=len(vocab_real & vocab_fake),
    )
