"""Source comment extraction.

Files are selected by extension and lexed with a single-pass state machine
(code, string, line comment, block comment), so comment markers that appear
inside string or character literals are never reported as comments.
"""

from __future__ import annotations

import posixpath
import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import ConfigError

WORKTREE = "WORKTREE"


class CommentKind(str, Enum):
    LINE = "Line"
    BLOCK = "Block"


@dataclass(frozen=True)
class LanguageProfile:
    name: str
    file_extensions: frozenset[str]
    line_comment_markers: tuple[str, ...] = ()
    block_comment_pairs: tuple[tuple[str, str], ...] = ()
    # (delimiter, escape); single-character delimiters end at a newline,
    # longer ones (text blocks) may span lines
    string_delimiters: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not self.file_extensions:
            raise ConfigError(f"profile {self.name!r}: file_extensions is empty")
        for ext in self.file_extensions:
            if not ext or ext != ext.lower() or ext.startswith("."):
                raise ConfigError(
                    f"profile {self.name!r}: extension {ext!r} must be lowercase without a leading dot"
                )
        for opener, closer in self.block_comment_pairs:
            if not opener or not closer:
                raise ConfigError(f"profile {self.name!r}: empty block comment marker")
        for marker in self.line_comment_markers:
            if not marker:
                raise ConfigError(f"profile {self.name!r}: empty line comment marker")
        for delim, _escape in self.string_delimiters:
            if not delim:
                raise ConfigError(f"profile {self.name!r}: empty string delimiter")

    @classmethod
    def from_dict(cls, data: dict) -> "LanguageProfile":
        try:
            return cls(
                name=str(data["name"]),
                file_extensions=frozenset(str(e) for e in data["file_extensions"]),
                line_comment_markers=tuple(data.get("line_comment_markers", ())),
                block_comment_pairs=tuple(tuple(p) for p in data.get("block_comment_pairs", ())),
                string_delimiters=tuple(tuple(p) for p in data.get("string_delimiters", ())),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid language profile {data!r}: {exc}") from exc


JAVA = LanguageProfile(
    name="java",
    file_extensions=frozenset({"java"}),
    line_comment_markers=("//",),
    block_comment_pairs=(("/*", "*/"),),
    string_delimiters=(('"""', "\\"), ('"', "\\"), ("'", "\\")),
)

BUILTIN_PROFILES = {"java": JAVA}


@dataclass(frozen=True)
class SourceComment:
    file_path: str
    start_line: int
    end_line: int
    start_col: int
    raw_text: str
    body_text: str
    kind: CommentKind
    commit_sha: str = WORKTREE
    # character offsets into the decoded file content, end exclusive
    start_offset: int = 0
    end_offset: int = 0

    def to_dict(self) -> dict:
        return {
            "file_path": self.file_path,
            "start_line": self.start_line,
            "end_line": self.end_line,
            "start_col": self.start_col,
            "raw_text": self.raw_text,
            "body_text": self.body_text,
            "kind": self.kind.value,
            "commit_sha": self.commit_sha,
            "start_offset": self.start_offset,
            "end_offset": self.end_offset,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SourceComment":
        return cls(
            file_path=data["file_path"],
            start_line=data["start_line"],
            end_line=data["end_line"],
            start_col=data["start_col"],
            raw_text=data["raw_text"],
            body_text=data["body_text"],
            kind=CommentKind(data["kind"]),
            commit_sha=data.get("commit_sha", WORKTREE),
            start_offset=data.get("start_offset", 0),
            end_offset=data.get("end_offset", 0),
        )


@dataclass
class ExtractionResult:
    """Comments from one file plus lexer diagnostics."""

    comments: list[SourceComment] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    @property
    def unterminated(self) -> bool:
        return any(d.startswith("unterminated") for d in self.diagnostics)


def file_extension(path: str) -> str:
    base = posixpath.basename(path.replace("\\", "/"))
    if "." not in base.lstrip("."):
        return ""
    return base.rsplit(".", 1)[1].lower()


def select_source_files(paths, profiles):
    """Pair each path with the profile owning its extension, keeping input order."""
    by_ext: dict[str, LanguageProfile] = {}
    for profile in profiles:
        for ext in sorted(profile.file_extensions):
            owner = by_ext.get(ext)
            if owner is not None and owner is not profile:
                raise ConfigError(
                    f"extension {ext!r} claimed by both {owner.name!r} and {profile.name!r}"
                )
            by_ext[ext] = profile
    selected = []
    for path in paths:
        profile = by_ext.get(file_extension(path))
        if profile is not None:
            selected.append((path, profile))
    return selected


def decode_source(data: bytes | str) -> str:
    if isinstance(data, str):
        return data
    return data.decode("utf-8", errors="replace")


def _line_starts(content: str) -> list[int]:
    starts = [0]
    for i, ch in enumerate(content):
        if ch == "\n":
            starts.append(i + 1)
    return starts


def _position(line_starts: list[int], offset: int) -> tuple[int, int]:
    lo, hi = 0, len(line_starts) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if line_starts[mid] <= offset:
            lo = mid
        else:
            hi = mid - 1
    return lo + 1, offset - line_starts[lo] + 1


def _openers(profile: LanguageProfile):
    """All tokens that leave the code state, longest first."""
    tokens = []
    for marker in profile.line_comment_markers:
        tokens.append((marker, "line", None))
    for opener, closer in profile.block_comment_pairs:
        tokens.append((opener, "block", closer))
    for delim, escape in profile.string_delimiters:
        tokens.append((delim, "string", escape))
    tokens.sort(key=lambda t: -len(t[0]))
    return tokens


def lex_comment_spans(content: str, profile: LanguageProfile):
    """Return raw (start, end, kind, terminated) comment spans in offset order."""
    tokens = _openers(profile)
    first_chars = {t[0][0] for t in tokens}
    spans = []
    i = 0
    n = len(content)
    while i < n:
        ch = content[i]
        if ch not in first_chars:
            i += 1
            continue
        for text, kind, extra in tokens:
            if content.startswith(text, i):
                break
        else:
            i += 1
            continue
        if kind == "line":
            end = content.find("\n", i)
            if end == -1:
                end = n
            if end > i and content[end - 1] == "\r":
                end -= 1
            spans.append((i, end, CommentKind.LINE, True))
            i = end
        elif kind == "block":
            close = content.find(extra, i + len(text))
            if close == -1:
                spans.append((i, n, CommentKind.BLOCK, False))
                i = n
            else:
                end = close + len(extra)
                spans.append((i, end, CommentKind.BLOCK, True))
                i = end
        else:
            i = _skip_string(content, i, text, extra)
    return spans


def _skip_string(content: str, i: int, delim: str, escape: str) -> int:
    n = len(content)
    j = i + len(delim)
    multiline = len(delim) > 1
    while j < n:
        if escape and content.startswith(escape, j):
            j += len(escape) + 1
            continue
        if content.startswith(delim, j):
            return j + len(delim)
        if content[j] == "\n" and not multiline:
            # unterminated literal: resume lexing on the next line
            return j
        j += 1
    return n


_WS = re.compile(r"[ \t\f\v]*")


def strip_comment_markers(raw_text: str, kind: CommentKind, profile: LanguageProfile) -> str:
    """Remove comment markers and per-line decorations.

    Applied until a fixpoint, so stripping already-stripped text is a no-op.
    """
    previous = None
    text = raw_text
    while text != previous:
        previous = text
        text = _strip_once(text, CommentKind(kind), profile)
    return text


def _strip_once(raw_text: str, kind: CommentKind, profile: LanguageProfile) -> str:
    text = raw_text
    if kind is CommentKind.BLOCK:
        for opener, closer in profile.block_comment_pairs:
            if text.startswith(opener):
                text = text[len(opener):]
                if text.endswith(closer):
                    text = text[: -len(closer)]
                break
        lines = [re.sub(r"^[\s*]*", "", line).rstrip() for line in text.split("\n")]
    else:
        markers = "|".join(
            re.escape(m) + re.escape(m[-1]) + "*" for m in sorted(profile.line_comment_markers, key=len, reverse=True)
        )
        if markers:
            prefix = re.compile(rf"^\s*(?:(?:{markers})\s*)*")
            lines = [prefix.sub("", line).rstrip() for line in text.split("\n")]
        else:
            lines = [line.strip() for line in text.split("\n")]
    while lines and not lines[0]:
        lines.pop(0)
    while lines and not lines[-1]:
        lines.pop()
    return "\n".join(lines)


def extract_comments(content, profile: LanguageProfile, file_path: str, commit_sha: str = WORKTREE) -> ExtractionResult:
    """Extract every comment in ``content``, merging stacked line comments.

    Line comments on adjacent lines that start at the same column become a
    single multi-line comment so that prose split across ``//`` lines is
    classified as one unit.
    """
    content = decode_source(content)
    starts = _line_starts(content)
    result = ExtractionResult()
    groups: list[list[tuple[int, int, int, int]]] = []
    blocks = []
    for start, end, kind, terminated in lex_comment_spans(content, profile):
        line, col = _position(starts, start)
        if kind is CommentKind.BLOCK:
            end_line, _ = _position(starts, max(start, end - 1))
            blocks.append((start, end, line, end_line, col))
            if not terminated:
                result.diagnostics.append(f"unterminated block comment at {file_path}:{line}:{col}")
            groups.append(None)
            continue
        prev = groups[-1] if groups else None
        if prev and prev[-1][2] == line - 1 and prev[-1][3] == col:
            prev.append((start, end, line, col))
        else:
            groups.append([(start, end, line, col)])

    block_iter = iter(blocks)
    for group in groups:
        if group is None:
            start, end, line, end_line, col = next(block_iter)
            kind = CommentKind.BLOCK
        else:
            start, end = group[0][0], group[-1][1]
            line, end_line, col = group[0][2], group[-1][2], group[0][3]
            kind = CommentKind.LINE
        raw = content[start:end]
        result.comments.append(
            SourceComment(
                file_path=file_path,
                start_line=line,
                end_line=end_line,
                start_col=col,
                raw_text=raw,
                body_text=strip_comment_markers(raw, kind, profile),
                kind=kind,
                commit_sha=commit_sha,
                start_offset=start,
                end_offset=end,
            )
        )
    result.comments.sort(key=lambda c: (c.start_line, c.start_col))
    return result
