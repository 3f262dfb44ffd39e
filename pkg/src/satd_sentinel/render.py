"""Markdown bodies for pull request comments, commit comments and report issues."""

from __future__ import annotations

import math
import re
from enum import Enum

from .classifier.detector import Source

REPORT_MARKER = "satd-sentinel:report"
BOT_NAME = "SATD Sentinel"
EXCERPT_LINES = 3
EXCERPT_WIDTH = 160


class Channel(str, Enum):
    PULL_REQUEST_COMMENT = "PullRequestComment"
    COMMIT_COMMENT = "CommitComment"
    ISSUE_CREATION = "IssueCreation"

    @classmethod
    def parse(cls, text: str) -> "Channel":
        norm = re.sub(r"[^a-z]", "", text.lower())
        for ch in cls:
            if ch.value.lower() == norm:
                return ch
        raise ValueError(f"unknown output channel {text!r}")


def marker_line(batch_id: str) -> str:
    return f"<!-- {REPORT_MARKER} batch={batch_id} -->"


def confidence_text(finding) -> str:
    if finding.source is Source.PATTERN:
        return "pattern match"
    return f"confidence: {math.floor(finding.confidence * 100 + 1e-9)}%"


def excerpt(body_text: str) -> str:
    lines = body_text.split("\n")
    shown = [ln if len(ln) <= EXCERPT_WIDTH else ln[: EXCERPT_WIDTH - 1] + "…" for ln in lines[:EXCERPT_LINES]]
    if len(lines) > EXCERPT_LINES:
        shown.append("…")
    return "\n".join(shown)


def _fence(text: str) -> str:
    longest = max((len(m) for m in re.findall(r"`+", text)), default=0)
    return "`" * max(3, longest + 1)


def issue_title(count: int) -> str:
    noun = "comment is" if count == 1 else "comments are"
    return f"{BOT_NAME}: {count} On-hold SATD {noun} ready to be fixed"


def render_notification(findings, channel: Channel, trigger: str = "", batch_id: str = "", resolved=None) -> str:
    """Deterministic markdown listing stored findings, sorted by (path, start_line).

    ``resolved`` optionally maps issue keys to True so links can be annotated.
    """
    if not findings:
        raise ValueError("nothing to render")
    channel = Channel(channel)
    ordered = sorted(
        findings,
        key=lambda s: (s.finding.comment.file_path, s.finding.comment.start_line, s.finding_id),
    )
    n = len(ordered)
    where = {
        Channel.PULL_REQUEST_COMMENT: "in this pull request",
        Channel.COMMIT_COMMENT: "in this commit",
        Channel.ISSUE_CREATION: "in this repository",
    }[channel]
    lines = [
        marker_line(batch_id),
        f"### {BOT_NAME}: Ready-to-be-fixed On-hold SATD",
        "",
        f"{n} On-hold SATD comment{'s' if n != 1 else ''} {where} "
        f"{'wait' if n != 1 else 'waits'} on issues that are now resolved.",
    ]
    if trigger:
        lines.append(f"Trigger: {trigger}.")
    lines.append("")
    for stored in ordered:
        comment = stored.finding.comment
        span = f"{comment.file_path}:{comment.start_line}"
        if comment.end_line != comment.start_line:
            span += f"-{comment.end_line}"
        lines.append(f"- `{span}` ({confidence_text(stored.finding)})")
        text = excerpt(comment.body_text)
        fence = _fence(text)
        lines.append(f"  {fence}")
        lines.extend(f"  {ln}" if ln else "" for ln in text.split("\n"))
        lines.append(f"  {fence}")
        links = []
        for key in sorted({r.key for r in stored.finding.refs}):
            state = " (resolved)" if resolved and resolved.get(key) else ""
            links.append(f"[{key.short}]({key.url}){state}")
        lines.append(f"  Referenced issue{'s' if len(links) > 1 else ''}: {', '.join(links)}")
    lines.append("")
    return "\n".join(lines)
