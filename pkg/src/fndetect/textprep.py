"""Text cleaning pipeline and sequence-length selection.

Cleaning is a configurable ordered list of steps. Every step is idempotent,
so cleaning an already-cleaned string is a no-op. The default order keeps
links intact until they are removed and apostrophes intact until
contractions are expanded.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, PreconditionError

# Token a post is replaced with when cleaning empties it; keeps corpus sizes
# stable downstream while the audit still reports the post.
EMPTY_SENTINEL = "<pad>"


class CleanStep(str, Enum):
    LOWERCASE = "lowercase"
    EXPAND_CONTRACTIONS = "expand_contractions"
    REMOVE_LINKS = "remove_links"
    REMOVE_STOPWORDS = "remove_stopwords"
    REMOVE_SPECIAL_CHARS = "remove_special_chars"
    STRIP_NON_ASCII = "strip_non_ascii"
    COLLAPSE_WHITESPACE = "collapse_whitespace"


# Links must go before punctuation stripping destroys them; contractions
# need their apostrophes intact, so expansion precedes special-char removal.
DEFAULT_STEP_ORDER = (
    CleanStep.LOWERCASE,
    CleanStep.REMOVE_LINKS,
    CleanStep.EXPAND_CONTRACTIONS,
    CleanStep.REMOVE_SPECIAL_CHARS,
    CleanStep.STRIP_NON_ASCII,
    CleanStep.REMOVE_STOPWORDS,
    CleanStep.COLLAPSE_WHITESPACE,
)

# The one frozen link pattern: scheme-prefixed URLs, www-prefixed hosts, and
# bare domain tokens ending in a common TLD.
_TLDS = "com|org|net|gov|edu|info|io|co|ly|me|tv|news|int|mil|biz"
_LINK_RE = re.compile(
    r"""(?:https?://\S+)
       |(?:www\.\S+)
       |(?:\b[\w-]+(?:\.[\w-]+)*\.(?:%s)(?:/\S*)?(?=\s|$))
    """ % _TLDS,
    re.IGNORECASE | re.VERBOSE,
)

# ASCII-only case folding: A-Z -> a-z. Deliberately leaves non-ASCII letters
# alone so the step commutes with strip_non_ascii (which deletes them).
_ASCII_LOWER = str.maketrans({c: c + 32 for c in range(ord("A"), ord("Z") + 1)})

# Delete ASCII characters that are neither alphanumeric nor whitespace.
# Non-ASCII is left to strip_non_ascii so the two steps stay orthogonal.
_SPECIAL_DELETE = {
    c: None for c in range(128) if not (chr(c).isalnum() or chr(c).isspace())
}

_NON_ASCII_RE = re.compile(r"[^\x00-\x7f]")


def _default_data(name: str) -> Path:
    return resources.files("fndetect.data") / name  # type: ignore[return-value]


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """Read a one-word-per-line stopword list (default: bundled English list)."""
    source = Path(path) if path is not None else _default_data("stopwords.txt")
    words = [line.strip() for line in source.read_text(encoding="utf-8").splitlines()]
    return frozenset(w for w in words if w)


def load_contractions(path: str | Path | None = None) -> dict[str, str]:
    """Read a contraction,expansion CSV (default: bundled ~120-entry table)."""
    source = Path(path) if path is not None else _default_data("contractions.csv")
    mapping: dict[str, str] = {}
    with source.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            mapping[row["contraction"].lower()] = row["expansion"]
    return mapping


@dataclass(frozen=True)
class CleaningConfig:
    """Ordered cleaning steps plus the word lists they use."""

    steps: tuple[CleanStep, ...] = DEFAULT_STEP_ORDER
    stopword_list: frozenset[str] = field(default_factory=load_stopwords)
    contraction_map: dict[str, str] = field(default_factory=load_contractions)

    def __post_init__(self) -> None:
        if not self.steps:
            raise ConfigError("cleaning config needs at least one step")
        if len(set(self.steps)) != len(self.steps):
            raise ConfigError(f"duplicate cleaning step in {self.steps}")
        bad = [k for k in self.contraction_map if k != k.lower()]
        if bad:
            raise ConfigError(f"contraction keys must be lowercase: {bad}")

    def without(self, *steps: CleanStep) -> "CleaningConfig":
        """Copy of this config with the given steps removed (e.g. stopwords off)."""
        kept = tuple(s for s in self.steps if s not in steps)
        return CleaningConfig(kept, self.stopword_list, self.contraction_map)

    def contraction_pattern(self) -> re.Pattern:
        pattern = getattr(self, "_pattern", None)
        if pattern is None:
            pattern = _contraction_pattern(self.contraction_map)
            object.__setattr__(self, "_pattern", pattern)
        return pattern


@dataclass(frozen=True)
class CleanPost:
    """A post after cleaning; word_count is the whitespace-token count."""

    id: str
    clean_text: str
    word_count: int


def _contraction_pattern(mapping: dict[str, str]) -> re.Pattern:
    # Longest keys first so "y'all'd've" wins over "y'all"; lookarounds
    # instead of \b because keys may start with an apostrophe.
    keys = sorted(mapping, key=len, reverse=True)
    alt = "|".join(re.escape(k) for k in keys)
    return re.compile(r"(?<!\w)(?:%s)(?!\w)" % alt, re.IGNORECASE)


def _expand_contractions(text: str, mapping: dict[str, str], pattern: re.Pattern) -> str:
    return pattern.sub(lambda m: mapping[m.group(0).lower()], text)


def _remove_stopwords(text: str, stopwords: frozenset[str]) -> str:
    return " ".join(tok for tok in text.split() if tok.lower() not in stopwords)


def clean_text(raw: str, config: CleaningConfig | None = None) -> str:
    """Apply the configured cleaning steps in order.

    Total function: never raises on string input, and may return an empty
    string (callers decide how to flag that; see audit_no_loss).
    """
    if config is None:
        config = CleaningConfig()
    text = raw
    for step in config.steps:
        if step is CleanStep.LOWERCASE:
            text = text.translate(_ASCII_LOWER)
        elif step is CleanStep.REMOVE_LINKS:
            text = _LINK_RE.sub(" ", text)
        elif step is CleanStep.EXPAND_CONTRACTIONS:
            text = _expand_contractions(text, config.contraction_map, config.contraction_pattern())
        elif step is CleanStep.REMOVE_SPECIAL_CHARS:
            text = text.translate(_SPECIAL_DELETE)
        elif step is CleanStep.STRIP_NON_ASCII:
            text = _NON_ASCII_RE.sub("", text)
        elif step is CleanStep.REMOVE_STOPWORDS:
            text = _remove_stopwords(text, config.stopword_list)
        elif step is CleanStep.COLLAPSE_WHITESPACE:
            text = " ".join(text.split())
    return text


def clean_posts(posts, config: CleaningConfig | None = None) -> list[CleanPost]:
    """Clean every post; posts that clean to nothing get the sentinel token."""
    out = []
    for post in posts:
        text = clean_text(post.text, config)
        if not text.strip():
            text = EMPTY_SENTINEL
        out.append(CleanPost(id=post.id, clean_text=text, word_count=len(text.split())))
    return out


@dataclass(frozen=True)
class CleaningAudit:
    """Outcome of checking a corpus for data loss under a cleaning config."""

    total: int
    missing_raw: int
    empty_after_cleaning: int
    empty_ids: tuple[str, ...]

    def to_json_dict(self) -> dict:
        return {
            "total": self.total,
            "missing_raw": self.missing_raw,
            "empty_after_cleaning": self.empty_after_cleaning,
            "empty_ids": list(self.empty_ids),
        }


def audit_no_loss(posts, config: CleaningConfig | None = None) -> CleaningAudit:
    """Report posts with missing raw text or text that cleans to nothing."""
    missing = 0
    empty_ids = []
    for post in posts:
        if post.text is None or not post.text.strip():
            missing += 1
            continue
        if not clean_text(post.text, config).strip():
            empty_ids.append(post.id)
    return CleaningAudit(
        total=len(posts),
        missing_raw=missing,
        empty_after_cleaning=len(empty_ids),
        empty_ids=tuple(empty_ids),
    )


def nearest_rank(values: Iterable[int], q: float) -> int:
    """Nearest-rank quantile: the value at 1-based index ceil(q*n) ascending.

    q must lie in (0, 1]; q=1.0 returns the maximum.
    """
    if not (0.0 < q <= 1.0):
        raise ConfigError(f"quantile fraction must be in (0, 1], got {q}")
    ordered = sorted(values)
    n = len(ordered)
    if n == 0:
        raise PreconditionError("quantile of an empty sample")
    exact = q * n
    # treat q*n as integral when it is within float dust of an integer
    if abs(exact - round(exact)) < 1e-9:
        idx = int(round(exact))
    else:
        idx = math.ceil(exact)
    return ordered[min(max(idx, 1), n) - 1]


def word_count_quantile(posts: Sequence[CleanPost], q: float) -> int:
    """Nearest-rank quantile of the posts' word counts (used for max_len)."""
    if not posts:
        raise PreconditionError("word_count_quantile needs a non-empty list")
    return nearest_rank((p.word_count for p in posts), q)
