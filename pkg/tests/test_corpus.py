import random

import pytest

from fndetect.corpus import (
    LabeledPost,
    corpus_stats,
    load_corpus,
    load_presplit,
    split_corpus,
    write_corpus,
)
from fndetect.errors import ConfigError, DataError, PreconditionError, SchemaError

from conftest import write_corpus_csv


def test_load_normalizes_string_labels(tmp_path):
    path = write_corpus_csv(
        tmp_path / "c.csv",
        [
            ("t1", "Masks reduce transmission", "real"),
            ("t2", "Alcohol kills the virus", "fake"),
        ],
    )
    posts = load_corpus(path)
    assert posts == [
        LabeledPost("t1", "Masks reduce transmission", 0),
        LabeledPost("t2", "Alcohol kills the virus", 1),
    ]


def test_load_accepts_numeric_and_mixed_case_labels(tmp_path):
    path = write_corpus_csv(
        tmp_path / "c.csv",
        [("a", "x", "0"), ("b", "y", "1"), ("c", "z", "REAL"), ("d", "w", " Fake ")],
    )
    assert [p.label for p in load_corpus(path)] == [0, 1, 0, 1]


def test_load_tsv(tmp_path):
    path = write_corpus_csv(tmp_path / "c.tsv", [("a", "tab\ttext? no, quoted", "real")], delimiter="\t")
    posts = load_corpus(path, format="tsv")
    assert posts[0].text == "tab\ttext? no, quoted"


def test_load_missing_column_names_it(tmp_path):
    path = tmp_path / "c.csv"
    path.write_text("id,text\nx,hello\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="label"):
        load_corpus(path)


def test_load_unknown_label_names_row(tmp_path):
    path = write_corpus_csv(tmp_path / "c.csv", [("ok", "x", "real"), ("bad7", "y", "maybe")])
    with pytest.raises(DataError, match="bad7"):
        load_corpus(path)


def test_load_duplicate_id_is_an_error(tmp_path):
    rows = [("a", "w", "real"), ("b", "x", "fake"), ("a", "y", "real"), ("c", "z", "fake")]
    path = write_corpus_csv(tmp_path / "c.csv", rows)
    with pytest.raises(DataError, match="'a'"):
        load_corpus(path)


def test_round_trip_preserves_everything(tmp_path):
    posts = [
        LabeledPost("p1", 'quote " and, comma', 0),
        LabeledPost("p2", "newline\ninside", 1),
        LabeledPost("p3", "naïve café 😷", 0),
    ]
    path = tmp_path / "out.csv"
    write_corpus(posts, path)
    assert load_corpus(path) == posts


def test_split_paper_sizes():
    posts = [LabeledPost(str(i), "t", i % 2) for i in range(10_700)]
    split = split_corpus(posts, (0.6, 0.2, 0.2), seed=1)
    assert (len(split.train), len(split.validation), len(split.test)) == (6420, 2140, 2140)


@pytest.mark.parametrize("n,expected", [(10, (6, 2, 2)), (11, (7, 2, 2))])
def test_split_floor_allocation_remainder_to_train(n, expected):
    posts = [LabeledPost(str(i), "t", 0) for i in range(n)]
    split = split_corpus(posts, (0.6, 0.2, 0.2), seed=0)
    assert (len(split.train), len(split.validation), len(split.test)) == expected


def test_split_deterministic_and_covering():
    posts = [LabeledPost(str(i), "t", i % 2) for i in range(157)]
    a = split_corpus(posts, seed=42)
    b = split_corpus(posts, seed=42)
    assert [p.id for p in a.train] == [p.id for p in b.train]
    assert [p.id for p in a.test] == [p.id for p in b.test]
    for seed in (0, 1, 99):
        s = split_corpus(posts, seed=seed)
        ids = [p.id for part in s.parts().values() for p in part]
        assert sorted(ids) == sorted(p.id for p in posts)


def test_split_bad_fractions_rejected():
    posts = [LabeledPost(str(i), "t", 0) for i in range(10)]
    with pytest.raises(ConfigError):
        split_corpus(posts, (0.5, 0.2, 0.2))
    with pytest.raises(ConfigError):
        split_corpus(posts, (0.8, 0.3, -0.1))


def test_split_needs_five_posts():
    with pytest.raises(PreconditionError):
        split_corpus([LabeledPost("a", "t", 0)] * 4)


def test_presplit_rejects_overlapping_ids(tmp_path):
    t = write_corpus_csv(tmp_path / "t.csv", [("a", "x", "real")])
    v = write_corpus_csv(tmp_path / "v.csv", [("a", "y", "fake")])
    s = write_corpus_csv(tmp_path / "s.csv", [("c", "z", "real")])
    with pytest.raises(DataError):
        load_presplit(t, v, s)


def test_stats_hand_enumerated_vocabulary():
    posts = [LabeledPost("1", "a b", 0), LabeledPost("2", "b c", 1)]
    stats = corpus_stats(posts)
    assert stats.distinct_words == 3
    assert stats.shared_words == 1
    assert stats.per_class_counts == {0: 1, 1: 1}


def test_stats_single_class_shares_nothing():
    posts = [LabeledPost("1", "a b", 0), LabeledPost("2", "c d", 0)]
    assert corpus_stats(posts).shared_words == 0


def test_stats_class_fractions():
    posts = [LabeledPost(f"r{i}", "x", 0) for i in range(5234)]
    posts += [LabeledPost(f"f{i}", "x", 1) for i in range(4766)]
    stats = corpus_stats(posts)
    assert stats.per_class_fraction[0] == pytest.approx(0.5234)
    assert stats.per_class_fraction[1] == pytest.approx(0.4766)


def test_stats_fractions_sum_to_one_property():
    rng = random.Random(7)
    for _ in range(50):
        n = rng.randint(1, 200)
        posts = [
            LabeledPost(str(i), " ".join(rng.choice("abcdef") for _ in range(3)), rng.randint(0, 1))
            for i in range(n)
        ]
        stats = corpus_stats(posts)
        assert abs(sum(stats.per_class_fraction.values()) - 1.0) < 1e-9
        assert sum(stats.per_class_counts.values()) == stats.total
        assert stats.shared_words <= stats.distinct_words


def test_stats_empty_corpus_rejected():
    with pytest.raises(PreconditionError):
        corpus_stats([])


def test_stats_json_shape():
    stats = corpus_stats([LabeledPost("1", "a", 0)])
    data = stats.to_json_dict()
    assert set(data) == {"total", "per_class_counts", "per_class_fraction", "distinct_words", "shared_words"}
