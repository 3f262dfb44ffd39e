"""Issue reference detection inside comment bodies."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

try:  # Python 3.11+
    import re._parser as sre_parse
    from re import _constants as sre_constants
except ImportError:  # pragma: no cover - Python 3.10
    import sre_constants
    import sre_parse

from .errors import ConfigError

DEFAULT_HOST = "github.com"


class PatternOrigin(str, Enum):
    BUILTIN = "BuiltIn"
    USER = "UserDefined"


@dataclass(frozen=True, order=True)
class IssueKey:
    host: str
    owner: str
    repo: str
    number: int

    def __str__(self):
        return f"{self.host}/{self.owner}/{self.repo}#{self.number}"

    @property
    def url(self) -> str:
        return f"https://{self.host}/{self.owner}/{self.repo}/issues/{self.number}"

    @property
    def short(self) -> str:
        return f"{self.owner}/{self.repo}#{self.number}"

    @classmethod
    def parse(cls, text: str) -> "IssueKey":
        m = re.fullmatch(r"([^/]+)/([^/]+)/([^/#]+)#(\d+)", text)
        if not m:
            raise ValueError(f"not an issue key: {text!r}")
        return cls(m.group(1), m.group(2), m.group(3), int(m.group(4)))


@dataclass(frozen=True)
class IssueReference:
    host: str
    owner: str
    repo: str
    number: int
    raw_match: str
    byte_offset: int

    @property
    def key(self) -> IssueKey:
        return IssueKey(self.host, self.owner, self.repo, self.number)

    def to_dict(self) -> dict:
        return {
            "host": self.host,
            "owner": self.owner,
            "repo": self.repo,
            "number": self.number,
            "raw_match": self.raw_match,
            "byte_offset": self.byte_offset,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IssueReference":
        return cls(**data)


@dataclass(frozen=True)
class RepoId:
    host: str
    owner: str
    repo: str

    @property
    def full_name(self) -> str:
        return f"{self.owner}/{self.repo}"

    def __str__(self):
        return self.full_name if self.host == DEFAULT_HOST else f"{self.host}/{self.full_name}"

    @classmethod
    def parse(cls, text: str, host: str = DEFAULT_HOST) -> "RepoId":
        parts = text.strip().strip("/").split("/")
        if len(parts) == 2:
            owner, repo = parts
        elif len(parts) == 3:
            host, owner, repo = parts
        else:
            raise ConfigError(f"repository must be 'owner/repo' or 'host/owner/repo', got {text!r}")
        if not owner or not repo:
            raise ConfigError(f"repository must be 'owner/repo', got {text!r}")
        return cls(host.lower(), owner, repo)


@dataclass(frozen=True)
class RefPattern:
    pattern_id: str
    regex_source: str
    number_group: int | str
    owner_group: int | str | None = None
    repo_group: int | str | None = None
    host_group: int | str | None = None
    origin: PatternOrigin = PatternOrigin.BUILTIN
    flags: int = 0

    @property
    def regex(self) -> re.Pattern:
        return _compiled(self.regex_source, self.flags)


_CACHE: dict[tuple[str, int], re.Pattern] = {}


def _compiled(source: str, flags: int) -> re.Pattern:
    key = (source, flags)
    pat = _CACHE.get(key)
    if pat is None:
        pat = _CACHE[key] = re.compile(source, flags)
    return pat


_OWNER = r"[A-Za-z0-9_-]+"  # GitHub account names have no dots
_NAME = r"[A-Za-z0-9_.-]+"

BUILTIN_PATTERNS = (
    RefPattern(
        "url",
        rf"https?://(?P<host>[A-Za-z0-9.-]+)/(?P<owner>{_OWNER})/(?P<repo>{_NAME})/issues/(?P<number>\d+)\b",
        number_group="number",
        owner_group="owner",
        repo_group="repo",
        host_group="host",
    ),
    RefPattern(
        "cross-repo",
        rf"(?<![\w/.-])(?P<owner>{_OWNER})/(?P<repo>{_NAME})#(?P<number>\d+)\b",
        number_group="number",
        owner_group="owner",
        repo_group="repo",
    ),
    RefPattern("local", r"(?<![\w/#&])#(?P<number>\d+)\b", number_group="number"),
    RefPattern(
        "issue-word",
        r"\bissue\s+(?:id\s+|#)?(?P<number>\d+)\b",
        number_group="number",
        flags=re.IGNORECASE,
    ),
)


def builtin_patterns() -> list[RefPattern]:
    """Built-in reference forms in priority order: URL, owner/repo#N, #N, 'issue N'."""
    return list(BUILTIN_PATTERNS)


def _group_exists(regex: re.Pattern, group) -> bool:
    if isinstance(group, int):
        return 1 <= group <= regex.groups
    return group in regex.groupindex


def _group_index(regex: re.Pattern, group) -> int:
    return group if isinstance(group, int) else regex.groupindex[group]


def _find_group(parsed, index):
    """Locate the subpattern of capture group ``index`` in a parsed regex."""
    for op, av in parsed:
        if op is sre_constants.SUBPATTERN:
            if av[0] == index:
                return av[-1]
            found = _find_group(av[-1], index)
            if found is not None:
                return found
        for child in _children(op, av):
            found = _find_group(child, index)
            if found is not None:
                return found
    return None


def _children(op, av):
    if op in (sre_constants.MAX_REPEAT, sre_constants.MIN_REPEAT) or op is getattr(
        sre_constants, "POSSESSIVE_REPEAT", None
    ):
        return [av[2]]
    if op is sre_constants.BRANCH:
        return list(av[1])
    if op in (sre_constants.ASSERT, sre_constants.ASSERT_NOT):
        return [av[1]]
    if op is sre_constants.GROUPREF_EXISTS:
        return [x for x in av[1:] if x is not None]
    if op is getattr(sre_constants, "ATOMIC_GROUP", None):
        return [av]
    return []


def _has_digit_element(parsed) -> bool:
    for op, av in parsed:
        if op is sre_constants.IN:
            for item_op, item_av in av:
                if item_op is sre_constants.CATEGORY and item_av is sre_constants.CATEGORY_DIGIT:
                    return True
                if item_op is sre_constants.RANGE and item_av[0] <= ord("0") and item_av[1] >= ord("9"):
                    return True
        if op is sre_constants.LITERAL and chr(av).isdigit():
            return True
        if op is sre_constants.SUBPATTERN and _has_digit_element(av[-1]):
            return True
        for child in _children(op, av):
            if _has_digit_element(child):
                return True
    return False


def _unbounded(op, av) -> bool:
    return op in (sre_constants.MAX_REPEAT, sre_constants.MIN_REPEAT) and av[1] == sre_constants.MAXREPEAT


def _backtracking_hazard(parsed, inside_unbounded=False) -> str | None:
    """Reject constructs that can make the backtracking engine super-linear."""
    for op, av in parsed:
        if op is sre_constants.GROUPREF or op is sre_constants.GROUPREF_EXISTS:
            return "backreferences are not allowed"
        if _unbounded(op, av):
            if inside_unbounded:
                return "nested unbounded repetition"
            hazard = _backtracking_hazard(av[2], True)
            if hazard:
                return hazard
            continue
        if op is sre_constants.SUBPATTERN:
            hazard = _backtracking_hazard(av[-1], inside_unbounded)
        else:
            hazard = None
            for child in _children(op, av):
                hazard = _backtracking_hazard(child, inside_unbounded)
                if hazard:
                    break
        if hazard:
            return hazard
    return None


def compile_user_pattern(
    regex_source: str,
    number_group,
    owner_group=None,
    repo_group=None,
    pattern_id: str = "user",
) -> RefPattern:
    """Validate a user-supplied reference pattern.

    The number group may contain more than digits (for example ``issue \\d+``);
    the number is taken from the digit run inside the group at match time.
    """
    try:
        regex = re.compile(regex_source, re.IGNORECASE)
    except re.error as exc:
        raise ConfigError(
            f"pattern {pattern_id!r} does not compile at position {exc.pos}: {exc.msg}"
        ) from exc
    for label, group in (("number", number_group), ("owner", owner_group), ("repo", repo_group)):
        if group is None:
            if label == "number":
                raise ConfigError(f"pattern {pattern_id!r}: number group is required")
            continue
        if not _group_exists(regex, group):
            raise ConfigError(f"pattern {pattern_id!r}: {label} group {group!r} does not exist")
    parsed = sre_parse.parse(regex_source, re.IGNORECASE)
    sub = _find_group(parsed, _group_index(regex, number_group))
    if sub is None or not _has_digit_element(sub):
        raise ConfigError(f"pattern {pattern_id!r}: number group {number_group!r} cannot match digits")
    hazard = _backtracking_hazard(parsed)
    if hazard:
        raise ConfigError(f"pattern {pattern_id!r} rejected: {hazard}")
    return RefPattern(
        pattern_id=pattern_id,
        regex_source=regex_source,
        number_group=number_group,
        owner_group=owner_group,
        repo_group=repo_group,
        origin=PatternOrigin.USER,
        flags=re.IGNORECASE,
    )


_DIGITS = re.compile(r"\d+")


def _reference_from_match(m: re.Match, pattern: RefPattern, home: RepoId) -> IssueReference | None:
    number_text = m.group(pattern.number_group)
    if number_text is None:
        return None
    runs = _DIGITS.findall(number_text)
    if len(runs) != 1:
        return None
    number = int(runs[0])
    if number < 1:
        return None
    host, owner, repo = home.host, home.owner, home.repo
    if pattern.host_group is not None and m.group(pattern.host_group):
        host = m.group(pattern.host_group).lower()
    if pattern.owner_group is not None and m.group(pattern.owner_group):
        owner = m.group(pattern.owner_group)
    if pattern.repo_group is not None and m.group(pattern.repo_group):
        repo = m.group(pattern.repo_group)
    return IssueReference(host, owner, repo, number, m.group(0), m.start())


def extract_refs(body_text: str, home: RepoId, patterns=None) -> list[IssueReference]:
    """Leftmost non-overlapping matches over all patterns, earlier patterns winning ties."""
    if patterns is None:
        patterns = BUILTIN_PATTERNS
    regexes = [p.regex for p in patterns]
    refs: list[IssueReference] = []
    seen: set[IssueKey] = set()
    pos = 0
    n = len(body_text)
    while pos <= n:
        best = None
        for pattern, regex in zip(patterns, regexes):
            m = regex.search(body_text, pos)
            if m and (best is None or m.start() < best[0].start()):
                best = (m, pattern)
        if best is None:
            break
        m, pattern = best
        ref = _reference_from_match(m, pattern, home)
        if ref is not None and ref.key not in seen:
            seen.add(ref.key)
            refs.append(ref)
        pos = m.end() if m.end() > m.start() else m.start() + 1
    return refs


def iter_match_spans(body_text: str, patterns=None):
    """Spans of the references ``extract_refs`` would consume, duplicates included."""
    if patterns is None:
        patterns = BUILTIN_PATTERNS
    pos = 0
    n = len(body_text)
    while pos <= n:
        best = None
        for pattern in patterns:
            m = pattern.regex.search(body_text, pos)
            if m and (best is None or m.start() < best[0].start()):
                best = (m, pattern)
        if best is None:
            return
        m, pattern = best
        yield m.start(), m.end(), pattern
        pos = m.end() if m.end() > m.start() else m.start() + 1
