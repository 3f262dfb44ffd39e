"""Code host abstraction shared by the GitHub client and the mock forge."""

from __future__ import annotations

import abc
import re
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from ..refs import IssueKey, RepoId

MAX_BODY_CHARS = 65536
TRUNCATION_NOTICE = "\n\n_(truncated: the full list exceeded the comment size limit)_\n"
_SHA = re.compile(r"[0-9a-f]{40}")


class IssueState(str, Enum):
    OPEN = "Open"
    RESOLVED = "Resolved"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class IssueStatus:
    key: IssueKey
    state: IssueState
    resolved_at: str | None = None
    etag: str | None = None
    close_reason: str | None = None


class TargetKind(str, Enum):
    PULL_REQUEST = "PullRequest"
    COMMIT = "Commit"
    NEW_ISSUE = "NewIssue"


@dataclass(frozen=True)
class PostTarget:
    kind: TargetKind
    repo: RepoId
    number: int | None = None
    sha: str | None = None

    def __post_init__(self):
        if self.kind is TargetKind.PULL_REQUEST and (self.number is None or self.number < 1):
            raise ValueError("pull request target needs a number >= 1")
        if self.kind is TargetKind.COMMIT and not (self.sha and _SHA.fullmatch(self.sha)):
            raise ValueError(f"commit target needs a 40-hex sha, got {self.sha!r}")

    @classmethod
    def pull_request(cls, repo: RepoId, number: int) -> "PostTarget":
        return cls(TargetKind.PULL_REQUEST, repo, number=number)

    @classmethod
    def commit(cls, repo: RepoId, sha: str) -> "PostTarget":
        return cls(TargetKind.COMMIT, repo, sha=sha)

    @classmethod
    def new_issue(cls, repo: RepoId) -> "PostTarget":
        return cls(TargetKind.NEW_ISSUE, repo)

    @property
    def label(self) -> str:
        if self.kind is TargetKind.PULL_REQUEST:
            return f"{self.repo}!pr/{self.number}"
        if self.kind is TargetKind.COMMIT:
            return f"{self.repo}@{self.sha}"
        return f"{self.repo}!issues"


@dataclass(frozen=True)
class PostReceipt:
    id: int
    url: str | None = None
    number: int | None = None
    truncated: bool = False

    def to_dict(self) -> dict:
        return {"id": self.id, "url": self.url, "number": self.number, "truncated": self.truncated}

    @classmethod
    def from_dict(cls, data: dict) -> "PostReceipt":
        return cls(**data)


@dataclass(frozen=True)
class PushChange:
    """Files touched by a push, taken from the webhook payload."""

    after_sha: str
    commits: tuple[dict, ...] = ()


@dataclass(frozen=True)
class PullRequestChange:
    number: int
    head_sha: str


@dataclass(frozen=True)
class ChangedFile:
    path: str
    sha: str
    fetch: Callable[[], bytes] = field(compare=False, repr=False)


def push_paths(commits) -> list[str]:
    """Added and modified paths across a push, minus paths a later commit removed."""
    order: list[str] = []
    live: set[str] = set()
    for commit in commits:
        for path in list(commit.get("added", ())) + list(commit.get("modified", ())):
            if path not in live:
                live.add(path)
                if path not in order:
                    order.append(path)
        for path in commit.get("removed", ()):
            live.discard(path)
    return [p for p in order if p in live]


def truncate_body(body: str) -> tuple[str, bool]:
    if len(body) <= MAX_BODY_CHARS:
        return body, False
    keep = MAX_BODY_CHARS - len(TRUNCATION_NOTICE)
    return body[:keep] + TRUNCATION_NOTICE, True


class RateLimiter:
    """Minimum spacing between requests, plus host-imposed pauses (Retry-After)."""

    def __init__(self, min_interval: float, clock):
        self.min_interval = float(min_interval)
        self.clock = clock
        self._next = None
        self._lock = threading.Lock()

    def acquire(self) -> None:
        with self._lock:
            now = self.clock.now()
            if self._next is not None and now < self._next:
                self.clock.sleep(self._next - now)
                now = self.clock.now()
            self._next = now + self.min_interval

    def defer(self, seconds: float) -> None:
        with self._lock:
            until = self.clock.now() + max(0.0, seconds)
            if self._next is None or until > self._next:
                self._next = until


class Forge(abc.ABC):
    @abc.abstractmethod
    def fetch_issue_status(self, key: IssueKey, etag: str | None = None) -> IssueStatus:
        """Current state of an issue; Unknown for 4xx or unparseable answers."""

    @abc.abstractmethod
    def post_comment(self, target: PostTarget, body: str) -> PostReceipt:
        ...

    @abc.abstractmethod
    def create_issue(self, repo: RepoId, title: str, body: str) -> PostReceipt:
        ...

    @abc.abstractmethod
    def list_changed_files(self, repo: RepoId, change) -> list[ChangedFile]:
        ...

    @abc.abstractmethod
    def find_post(self, target: PostTarget, marker: str) -> PostReceipt | None:
        """Locate an earlier post on ``target`` whose body contains ``marker``."""

    @abc.abstractmethod
    def list_tree(self, repo: RepoId, sha: str) -> list[ChangedFile]:
        ...

    @abc.abstractmethod
    def branch_head(self, repo: RepoId, branch: str) -> str:
        ...
