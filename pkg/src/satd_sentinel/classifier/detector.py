"""On-hold SATD decision for a single comment."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from ..comments import SourceComment
from ..errors import ConfigError
from ..refs import IssueReference
from .model import Label

# the example policy pattern teams start from
EXAMPLE_ONHOLD_PATTERN = r"(after|once)\s+(issue \d+) is resolved"

# fallback when no model is loaded, and the pattern-only evaluation baseline
DEFAULT_ONHOLD_PATTERNS = (
    EXAMPLE_ONHOLD_PATTERN,
    r"\b(?:once|after|when|until)\b[^.\n]{0,60}\b(?:is|are|gets?|has been|have been)\s+(?:fixed|resolved|merged|closed)\b",
    r"\bwaiting\s+(?:for|on)\b",
    r"\bblocked\s+(?:by|on)\b",
)


class Source(str, Enum):
    MODEL = "Model"
    PATTERN = "Pattern"


class PatternResult(str, Enum):
    ON_HOLD = "OnHold"
    NO_MATCH = "NoMatch"


@dataclass(frozen=True)
class SatdFinding:
    comment: SourceComment
    refs: tuple[IssueReference, ...]
    label: Label
    confidence: float
    source: Source

    def __post_init__(self):
        if not self.refs:
            raise ValueError("a finding needs at least one issue reference")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def on_hold(self) -> bool:
        return self.label is Label.ON_HOLD

    def to_dict(self) -> dict:
        return {
            "comment": self.comment.to_dict(),
            "refs": [r.to_dict() for r in self.refs],
            "label": self.label.value,
            "confidence": self.confidence,
            "source": self.source.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SatdFinding":
        return cls(
            comment=SourceComment.from_dict(data["comment"]),
            refs=tuple(IssueReference.from_dict(r) for r in data["refs"]),
            label=Label(data["label"]),
            confidence=float(data["confidence"]),
            source=Source(data["source"]),
        )


def compile_onhold_patterns(sources) -> list[re.Pattern]:
    compiled = []
    for source in sources:
        try:
            compiled.append(re.compile(source, re.IGNORECASE))
        except re.error as exc:
            raise ConfigError(f"on-hold pattern {source!r} does not compile at position {exc.pos}: {exc.msg}") from exc
    return compiled


def pattern_detect(body_text: str, patterns) -> PatternResult:
    for pattern in patterns:
        regex = pattern if isinstance(pattern, re.Pattern) else re.compile(pattern, re.IGNORECASE)
        if regex.search(body_text):
            return PatternResult.ON_HOLD
    return PatternResult.NO_MATCH


def pattern_scorer(patterns=DEFAULT_ONHOLD_PATTERNS):
    """Pattern detector viewed as a 0/1 scorer, for baselines and model-less runs."""
    compiled = compile_onhold_patterns(patterns)

    def score(text: str) -> float:
        return 1.0 if pattern_detect(text, compiled) is PatternResult.ON_HOLD else 0.0

    return score


def classify_comment(comment: SourceComment, refs, model=None, patterns=()) -> SatdFinding | None:
    """Classify a comment that carries issue references.

    Pattern hits override the model. Without a model, the default pattern set
    decides and non-matching comments are treated as cross-references.
    """
    if not refs:
        return None
    refs = tuple(refs)
    if patterns and pattern_detect(comment.body_text, patterns) is PatternResult.ON_HOLD:
        return SatdFinding(comment, refs, Label.ON_HOLD, 1.0, Source.PATTERN)
    if model is None:
        if pattern_detect(comment.body_text, _default_compiled()) is PatternResult.ON_HOLD:
            return SatdFinding(comment, refs, Label.ON_HOLD, 1.0, Source.PATTERN)
        return SatdFinding(comment, refs, Label.CROSS_REFERENCE, 0.0, Source.PATTERN)
    label, confidence = model.predict(comment.body_text)
    return SatdFinding(comment, refs, label, confidence, Source.MODEL)


_DEFAULT_COMPILED: list[re.Pattern] = []


def _default_compiled():
    if not _DEFAULT_COMPILED:
        _DEFAULT_COMPILED.extend(compile_onhold_patterns(DEFAULT_ONHOLD_PATTERNS))
    return _DEFAULT_COMPILED
