"""Comment tokenization and n-gram features."""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass

from ..errors import ModelError
from ..refs import BUILTIN_PATTERNS

URL_TOKEN = "_url_"
NUM_TOKEN = "_num_"
ISSUE_TOKEN = "_issue_"

_URL = re.compile(r"\b(?:https?|ftp)://[^\s<>\"'`)\]]+|\bwww\.[^\s<>\"'`)\]]+", re.IGNORECASE)
# shorthand forms only; "issue 42" keeps its words so the phrasing stays visible
_SHORTHAND = [p.regex for p in BUILTIN_PATTERNS if p.pattern_id in ("cross-repo", "local")]
_TOKEN = re.compile(r"_url_|_issue_|[a-z0-9]+")


def tokenize(body_text: str) -> list[str]:
    text = body_text.lower()
    text = _URL.sub(f" {URL_TOKEN} ", text)
    for regex in _SHORTHAND:
        text = regex.sub(f" {ISSUE_TOKEN} ", text)
    tokens = []
    for tok in _TOKEN.findall(text):
        if tok.isdigit():
            tok = NUM_TOKEN
        tokens.append(tok)
    return tokens


def ngrams(tokens, n_max: int = 2) -> Counter:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    grams: Counter = Counter()
    for n in range(1, n_max + 1):
        for i in range(len(tokens) - n + 1):
            grams[" ".join(tokens[i : i + n])] += 1
    return grams


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    n_max: int = 2

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.terms)})

    def __len__(self):
        return len(self.terms)

    def index(self, term: str) -> int | None:
        return self._index.get(term)

    @property
    def version(self) -> str:
        h = hashlib.sha256(f"n_max={self.n_max}\n".encode())
        for term in self.terms:
            h.update(term.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()[:16]

    @classmethod
    def build(cls, documents, n_max: int = 2, min_df: int = 2, min_features: int = 10) -> "Vocabulary":
        """Terms with document frequency >= ``min_df``; every term if that leaves too few."""
        df: Counter = Counter()
        for tokens in documents:
            df.update(set(ngrams(tokens, n_max)))
        kept = sorted(t for t, c in df.items() if c >= min_df)
        if len(kept) < min_features:
            kept = sorted(df)
        return cls(tuple(kept), n_max)


@dataclass(frozen=True)
class FeatureVector:
    indices: tuple[int, ...]
    values: tuple[float, ...]
    vocab_version: str

    def __len__(self):
        return len(self.indices)


def featurize(tokens, vocabulary: Vocabulary, expected_version: str | None = None) -> FeatureVector:
    if not len(vocabulary):
        raise ModelError("vocabulary is empty")
    if expected_version is not None and expected_version != vocabulary.version:
        raise ModelError(
            f"vocabulary version {vocabulary.version} does not match model ({expected_version})"
        )
    counts: dict[int, float] = {}
    for gram, count in ngrams(tokens, vocabulary.n_max).items():
        idx = vocabulary.index(gram)
        if idx is not None:
            counts[idx] = counts.get(idx, 0.0) + float(count)
    indices = tuple(sorted(counts))
    return FeatureVector(indices, tuple(counts[i] for i in indices), vocabulary.version)
