"""Small constructors for findings used across the store, render and service tests."""

from satd_sentinel.classifier import Label, SatdFinding, Source
from satd_sentinel.comments import JAVA, extract_comments
from satd_sentinel.refs import RepoId, extract_refs

REPO = RepoId.parse("acme/app")


def finding(text="TODO: remove once #1 is fixed", path="src/A.java", line=1, confidence=0.9,
            source=Source.MODEL, home=REPO):
    src = "\n" * (line - 1) + f"// {text}\n"
    (comment,) = extract_comments(src, JAVA, path).comments
    refs = tuple(extract_refs(comment.body_text, home))
    return SatdFinding(comment, refs, Label.ON_HOLD, confidence, source)
