import pytest

from builders import finding
from satd_sentinel.classifier import Source
from satd_sentinel.render import (
    REPORT_MARKER,
    Channel,
    confidence_text,
    excerpt,
    issue_title,
    marker_line,
    render_notification,
)
from satd_sentinel.store import FindingStatus, StoredFinding


def stored(f, fid="f1"):
    return StoredFinding(fid, "acme/app", "main", f, FindingStatus.READY, 0.0, 0.0)


def test_confidence_floored():
    assert confidence_text(finding(confidence=0.873)) == "confidence: 87%"
    assert confidence_text(finding(confidence=0.999)) == "confidence: 99%"
    assert confidence_text(finding(confidence=1.0)) == "confidence: 100%"
    # 0.29 * 100 is 28.999999999999996 in binary floating point
    assert confidence_text(finding(confidence=0.29)) == "confidence: 29%"


def test_pattern_tag_has_no_percent():
    body = render_notification([stored(finding(source=Source.PATTERN, confidence=1.0))], Channel.PULL_REQUEST_COMMENT)
    assert "(pattern match)" in body and "%" not in body


def test_single_model_finding_body():
    body = render_notification(
        [stored(finding(confidence=0.873, line=4))], Channel.PULL_REQUEST_COMMENT, trigger="pull request #2", batch_id="abc"
    )
    assert body.splitlines()[0] == marker_line("abc")
    assert REPORT_MARKER in body
    assert "- `src/A.java:4` (confidence: 87%)" in body
    assert "[acme/app#1](https://github.com/acme/app/issues/1)" in body
    assert "Trigger: pull request #2." in body
    assert "1 On-hold SATD comment in this pull request waits" in body


def test_sorted_by_path_then_line():
    items = [
        stored(finding(path="src/Z.java", line=1), "a"),
        stored(finding(path="src/B.java", line=9), "b"),
        stored(finding(path="src/B.java", line=2), "c"),
    ]
    body = render_notification(items, Channel.ISSUE_CREATION)
    spans = [ln.split("`")[1] for ln in body.splitlines() if ln.startswith("- `")]
    assert spans == ["src/B.java:2", "src/B.java:9", "src/Z.java:1"]
    assert "3 On-hold SATD comments in this repository wait" in body


def test_multiline_span_and_excerpt_ellipsis():
    assert excerpt("a\nb\nc\nd") == "a\nb\nc\n…"
    long = "x" * 200
    assert excerpt(long) == "x" * 159 + "…"


def test_backticks_in_comment_get_longer_fence():
    body = render_notification([stored(finding("use ```code``` once #1 is fixed"))], Channel.COMMIT_COMMENT)
    assert "  ````" in body


def test_render_is_deterministic():
    items = [stored(finding(path=f"F{i}.java", confidence=0.5 + i / 10), f"id{i}") for i in range(4)]
    a = render_notification(items, Channel.ISSUE_CREATION, "poll", "b1")
    b = render_notification(list(reversed(items)), Channel.ISSUE_CREATION, "poll", "b1")
    assert a == b


def test_resolved_annotation():
    f = finding()
    body = render_notification([stored(f)], Channel.ISSUE_CREATION, resolved={f.refs[0].key: True})
    assert "(resolved)" in body


def test_empty_rejected():
    with pytest.raises(ValueError):
        render_notification([], Channel.ISSUE_CREATION)


def test_channel_parse_and_title():
    assert Channel.parse("pull-request-comment") is Channel.PULL_REQUEST_COMMENT
    assert Channel.parse("IssueCreation") is Channel.ISSUE_CREATION
    with pytest.raises(ValueError):
        Channel.parse("email")
    assert issue_title(1).endswith("1 On-hold SATD comment is ready to be fixed")
    assert issue_title(3).endswith("3 On-hold SATD comments are ready to be fixed")
