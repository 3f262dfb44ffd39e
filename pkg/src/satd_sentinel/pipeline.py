"""extract -> refs -> classify over a set of files; shared by the CLI and the service."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .classifier.detector import SatdFinding, classify_comment
from .comments import WORKTREE, decode_source, extract_comments, select_source_files
from .refs import BUILTIN_PATTERNS, RepoId, extract_refs
from .render import REPORT_MARKER

logger = logging.getLogger(__name__)


@dataclass
class ScanResult:
    files_scanned: int = 0
    comments: int = 0
    findings: list[SatdFinding] = field(default_factory=list)
    cross_references: list[SatdFinding] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    scanned_paths: list[str] = field(default_factory=list)


def scan_files(
    files,
    profiles,
    home: RepoId,
    ref_patterns=BUILTIN_PATTERNS,
    model=None,
    onhold_patterns=(),
    commit_sha: str = WORKTREE,
) -> ScanResult:
    """Scan ``files``, an iterable of ``(path, content_or_fetcher)`` pairs.

    Only paths matching a language profile are read. Comments carrying the
    bot's own report marker are skipped.
    """
    files = list(files)
    by_path = dict(files)
    result = ScanResult()
    for path, profile in select_source_files([p for p, _ in files], profiles):
        content = by_path[path]
        if callable(content):
            content = content()
        extraction = extract_comments(decode_source(content), profile, path, commit_sha)
        result.files_scanned += 1
        result.scanned_paths.append(path)
        result.comments += len(extraction.comments)
        result.diagnostics.extend(extraction.diagnostics)
        for comment in extraction.comments:
            if REPORT_MARKER in comment.raw_text:
                continue
            refs = extract_refs(comment.body_text, home, ref_patterns)
            finding = classify_comment(comment, refs, model, onhold_patterns)
            if finding is None:
                continue
            if finding.on_hold:
                result.findings.append(finding)
            else:
                result.cross_references.append(finding)
    return result
