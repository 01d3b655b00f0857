import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fndetect.corpus import LabeledPost
from fndetect.errors import ConfigError, PreconditionError
from fndetect.textprep import (
    EMPTY_SENTINEL,
    CleaningConfig,
    CleanPost,
    CleanStep,
    audit_no_loss,
    clean_posts,
    clean_text,
    load_contractions,
    load_stopwords,
    nearest_rank,
    word_count_quantile,
)


def only(*steps):
    return CleaningConfig(steps=tuple(steps))


def test_default_pipeline_hand_derived_example():
    raw = "Drinking ALCOHOL can't kill the virus! https://x.co/a"
    assert clean_text(raw) == "drinking alcohol cannot kill virus"


def test_empty_string_is_a_fixed_point():
    assert clean_text("") == ""


def test_link_removal_patterns():
    cfg = only(CleanStep.REMOVE_LINKS, CleanStep.COLLAPSE_WHITESPACE)
    assert clean_text("see https://x.co/a ok", cfg) == "see ok"
    assert clean_text("at www.example.org now", cfg) == "at now"
    assert clean_text("read example.com/page1 today", cfg) == "read today"
    # unknown TLD is not a link
    assert clean_text("version 1.2.banana stays", cfg) == "version 1.2.banana stays"


def test_contraction_expansion():
    cfg = only(CleanStep.EXPAND_CONTRACTIONS)
    assert clean_text("can't", cfg) == "cannot"
    assert clean_text("Y'ALL'D'VE known", cfg) == "you all would have known"
    # no match inside a larger word
    assert clean_text("scan't", cfg) == "scan't"


def test_special_chars_removed_at_character_level():
    cfg = only(CleanStep.REMOVE_SPECIAL_CHARS)
    assert clean_text("a!b@c #1,2.3", cfg) == "abc 123"
    # non-ASCII survives; that is the strip step's job
    assert clean_text("café!", cfg) == "café"


def test_strip_non_ascii():
    cfg = only(CleanStep.STRIP_NON_ASCII)
    assert clean_text("café 😷 naïve", cfg) == "caf  nave"


def test_stopword_removal_uses_list():
    cfg = only(CleanStep.REMOVE_STOPWORDS)
    assert clean_text("the virus is not a hoax", cfg) == "virus hoax"


def test_lowercase_is_ascii_only():
    cfg = only(CleanStep.LOWERCASE)
    assert clean_text("MiXeD CaSe", cfg) == "mixed case"
    # non-ASCII letters are left for strip_non_ascii
    assert clean_text("É", cfg) == "É"


@settings(max_examples=200)
@given(st.text())
def test_clean_text_idempotent_default_config(s):
    once = clean_text(s)
    assert clean_text(once) == once


@settings(max_examples=150)
@given(
    st.text(),
    st.lists(st.sampled_from(list(CleanStep)), unique=True, min_size=1),
)
def test_clean_text_idempotent_any_step_order(s, steps):
    cfg = CleaningConfig(steps=tuple(steps))
    once = clean_text(s, cfg)
    assert clean_text(once, cfg) == once


@settings(max_examples=200)
@given(st.text())
def test_lowercase_commutes_with_strip_non_ascii(s):
    a = clean_text(s, only(CleanStep.LOWERCASE, CleanStep.STRIP_NON_ASCII))
    b = clean_text(s, only(CleanStep.STRIP_NON_ASCII, CleanStep.LOWERCASE))
    assert a == b


def test_config_validation():
    with pytest.raises(ConfigError):
        CleaningConfig(steps=())
    with pytest.raises(ConfigError):
        CleaningConfig(steps=(CleanStep.LOWERCASE, CleanStep.LOWERCASE))
    with pytest.raises(ConfigError):
        CleaningConfig(contraction_map={"Can't": "cannot"})


def test_without_step():
    cfg = CleaningConfig().without(CleanStep.REMOVE_STOPWORDS)
    assert CleanStep.REMOVE_STOPWORDS not in cfg.steps
    assert "the" in clean_text("keep the stopwords", cfg).split()


def test_bundled_word_lists_load():
    stopwords = load_stopwords()
    assert "the" in stopwords and "cannot" not in stopwords
    contractions = load_contractions()
    assert contractions["can't"] == "cannot"
    assert len(contractions) >= 100


def test_clean_posts_sentinel_for_emptied_text():
    posts = [LabeledPost("u1", "!!!", 1), LabeledPost("u2", "real words", 0)]
    cleaned = clean_posts(posts)
    assert cleaned[0] == CleanPost("u1", EMPTY_SENTINEL, 1)
    assert cleaned[1].word_count == len(cleaned[1].clean_text.split())


def test_audit_counts_empty_and_missing():
    posts = [
        LabeledPost("u1", "!!!", 1),
        LabeledPost("u2", "   ", 0),
        LabeledPost("u3", "fine text", 0),
    ]
    audit = audit_no_loss(posts)
    assert audit.total == 3
    assert audit.missing_raw == 1
    assert audit.empty_after_cleaning == 1
    assert audit.empty_ids == ("u1",)


def test_audit_clean_corpus_reports_zero(separable_corpus):
    audit = audit_no_loss(separable_corpus)
    assert audit.missing_raw == 0
    assert audit.empty_after_cleaning == 0


def test_audit_empty_list():
    audit = audit_no_loss([])
    assert (audit.total, audit.missing_raw, audit.empty_after_cleaning) == (0, 0, 0)


def _posts_with_counts(counts):
    return [CleanPost(str(i), " ".join(["w"] * c), c) for i, c in enumerate(counts)]


def test_quantile_nearest_rank_examples():
    posts = _posts_with_counts(range(1, 101))
    assert word_count_quantile(posts, 0.98) == 98
    assert word_count_quantile(posts, 1.0) == 100
    assert word_count_quantile(_posts_with_counts([7] * 13), 0.5) == 7
    assert word_count_quantile(_posts_with_counts([7] * 13), 0.99) == 7


def test_quantile_monotone_and_max():
    rng = random.Random(3)
    for _ in range(100):
        counts = [rng.randint(0, 300) for _ in range(rng.randint(1, 80))]
        qs = sorted(rng.uniform(0.01, 1.0) for _ in range(6))
        values = [nearest_rank(counts, q) for q in qs]
        assert values == sorted(values)
        assert nearest_rank(counts, 1.0) == max(counts)


def test_quantile_validation():
    with pytest.raises(ConfigError):
        nearest_rank([1, 2], 0.0)
    with pytest.raises(ConfigError):
        nearest_rank([1, 2], 1.5)
    with pytest.raises(PreconditionError):
        nearest_rank([], 0.5)
    with pytest.raises(PreconditionError):
        word_count_quantile([], 0.5)
