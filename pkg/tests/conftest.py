import csv
import random
from pathlib import Path

import numpy as np
import pytest

from fndetect.corpus import CorpusSplit, LabeledPost
from fndetect.encoding import EncoderSpec
from fndetect.models import MODEL_VARIANTS, ModelSpec, build_model

# two disjoint word pools make the synthetic corpus linearly separable in
# any reasonable feature space
_REAL_WORDS = [f"verified{i}" for i in range(12)]
_FAKE_WORDS = [f"rumor{i}" for i in range(12)]


def make_separable_corpus(n: int = 64, seed: int = 0) -> list[LabeledPost]:
    rng = random.Random(seed)
    posts = []
    for i in range(n):
        label = i % 2
        pool = _FAKE_WORDS if label else _REAL_WORDS
        words = [rng.choice(pool) for _ in range(rng.randint(3, 8))]
        posts.append(LabeledPost(id=f"s{i}", text=" ".join(words), label=label))
    return posts


def make_split(n: int = 64, seed: int = 0) -> CorpusSplit:
    posts = make_separable_corpus(n, seed)
    k = max(1, n // 8)
    return CorpusSplit(train=posts[: n - 2 * k], validation=posts[n - 2 * k : n - k], test=posts[n - k :])


def write_corpus_csv(path: Path, rows, delimiter: str = ",") -> Path:
    """rows: iterable of (id, text, label) tuples written under the standard header."""
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(["id", "text", "label"])
        writer.writerows(rows)
    return path


def make_test_model(variant: str, d: int = 16, enc_seed: int = 3, head_seed: int = 11):
    """One of the five variants over desk-scale test encoders."""
    _, families = MODEL_VARIANTS[variant]
    specs = [EncoderSpec("test", hidden_width=d, seed=enc_seed + k) for k in range(len(families))]
    return build_model(ModelSpec.for_variant(variant, specs), seed=head_seed)


@pytest.fixture
def separable_corpus():
    return make_separable_corpus()


@pytest.fixture
def small_split():
    return make_split()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
