"""In-process fake code host with scenario controls.

Implements the :class:`Forge` interface plus test mutators: seed, close and
reopen issues, push commits, open pull requests, and inject failures into
the next N calls of a given operation. Every post lands in ``outbox``.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field
from enum import Enum

from ..clock import SimClock
from ..errors import CredentialError, ForgeError, NotFoundError, ServerError, TransportError
from ..refs import IssueKey, RepoId
from .base import (
    ChangedFile,
    Forge,
    IssueState,
    IssueStatus,
    PostReceipt,
    PostTarget,
    PullRequestChange,
    PushChange,
    TargetKind,
    push_paths,
    truncate_body,
)


class FailureKind(str, Enum):
    TIMEOUT = "Timeout"
    HTTP500 = "Http500"
    HTTP404 = "Http404"
    HTTP401 = "Http401"


OPERATIONS = (
    "fetch_issue_status",
    "post_comment",
    "create_issue",
    "list_changed_files",
    "find_post",
    "list_tree",
    "branch_head",
)


@dataclass
class MockIssue:
    number: int
    title: str = ""
    body: str = ""
    state: str = "open"
    closed_at: float | None = None
    close_reason: str | None = None
    version: int = 0


@dataclass
class MockCommit:
    sha: str
    repo: RepoId
    tree: dict[str, bytes]
    parent: str | None = None


@dataclass
class MockPull:
    number: int
    head_sha: str
    base: str
    files: list[str]


@dataclass(frozen=True)
class Post:
    target: PostTarget
    body: str
    timestamp: float
    receipt: PostReceipt

    @property
    def channel(self) -> str:
        return self.target.kind.value


@dataclass
class _Injection:
    kind: FailureKind
    remaining: int


class MockForge(Forge):
    def __init__(self, clock=None):
        self.clock = clock or SimClock()
        self._lock = threading.RLock()
        self.issues: dict[tuple[str, str, str], dict[int, MockIssue]] = {}
        self.commits: dict[str, MockCommit] = {}
        self.branches: dict[tuple[RepoId, str], str] = {}
        self.pulls: dict[tuple[RepoId, int], MockPull] = {}
        self.outbox: list[Post] = []
        self._next_post_id = 1
        self._failures: dict[str, list[_Injection]] = {}
        self.calls: dict[str, int] = {op: 0 for op in OPERATIONS}

    # scenario controls

    def _issues_of(self, repo: RepoId) -> dict[int, MockIssue]:
        return self.issues.setdefault((repo.host, repo.owner, repo.repo), {})

    def _next_number(self, repo: RepoId) -> int:
        numbers = list(self._issues_of(repo)) + [n for (r, n) in self.pulls if r == repo]
        return max(numbers, default=0) + 1

    def seed_issue(self, repo: RepoId, number: int, state: str = "open", title: str = "", body: str = "") -> None:
        with self._lock:
            issue = MockIssue(number, title or f"Issue {number}", body, state)
            if state == "closed":
                issue.closed_at = self.clock.now()
                issue.close_reason = "completed"
            self._issues_of(repo)[number] = issue

    def close_issue(self, repo: RepoId, number: int, reason: str = "completed") -> None:
        with self._lock:
            issue = self._issues_of(repo)[number]
            issue.state = "closed"
            issue.closed_at = self.clock.now()
            issue.close_reason = reason
            issue.version += 1

    def reopen_issue(self, repo: RepoId, number: int) -> None:
        with self._lock:
            issue = self._issues_of(repo)[number]
            issue.state = "open"
            issue.closed_at = None
            issue.close_reason = None
            issue.version += 1

    def inject_failure(self, kind, op: str, count: int = 1) -> None:
        if op not in OPERATIONS:
            raise ValueError(f"unknown operation {op!r}")
        with self._lock:
            self._failures.setdefault(op, []).append(_Injection(FailureKind(kind), count))

    def _maybe_fail(self, op: str) -> FailureKind | None:
        self.calls[op] += 1
        queue = self._failures.get(op)
        if not queue:
            return None
        injection = queue[0]
        injection.remaining -= 1
        if injection.remaining <= 0:
            queue.pop(0)
        if injection.kind is FailureKind.TIMEOUT:
            raise TransportError(f"{op}: simulated timeout")
        if injection.kind is FailureKind.HTTP500:
            raise ServerError(f"{op}: simulated HTTP 500", status=500)
        if injection.kind is FailureKind.HTTP401:
            raise CredentialError(f"{op}: simulated HTTP 401", status=401)
        return injection.kind

    def _make_sha(self, repo: RepoId, parent, changes) -> str:
        h = hashlib.sha1()
        h.update(f"{repo}|{parent}|{len(self.commits)}".encode())
        for path in sorted(changes):
            h.update(path.encode())
            h.update(b"\0")
            h.update(changes[path] if changes[path] is not None else b"<deleted>")
        return h.hexdigest()

    def commit(self, repo: RepoId, branch: str, files: dict, message: str = "update") -> dict:
        """Create a commit on ``branch``; ``files`` maps path to content, or None to delete.

        Returns the commit entry as it appears in a push payload.
        """
        with self._lock:
            changes = {
                p: (c.encode("utf-8") if isinstance(c, str) else c) for p, c in files.items()
            }
            parent = self.branches.get((repo, branch))
            tree = dict(self.commits[parent].tree) if parent else {}
            added, modified, removed = [], [], []
            for path in sorted(changes):
                content = changes[path]
                if content is None:
                    if path in tree:
                        del tree[path]
                        removed.append(path)
                    continue
                (modified if path in tree else added).append(path)
                tree[path] = content
            sha = self._make_sha(repo, parent, changes)
            self.commits[sha] = MockCommit(sha, repo, tree, parent)
            self.branches[(repo, branch)] = sha
            return {"id": sha, "message": message, "added": added, "modified": modified, "removed": removed}

    def push(self, repo: RepoId, branch: str, files: dict, message: str = "update") -> dict:
        """Commit and return a GitHub-shaped push webhook payload."""
        with self._lock:
            before = self.branches.get((repo, branch), "0" * 40)
            entry = self.commit(repo, branch, files, message)
            return {
                "ref": f"refs/heads/{branch}",
                "before": before,
                "after": entry["id"],
                "repository": {"full_name": repo.full_name},
                "commits": [entry],
            }

    def open_pull_request(self, repo: RepoId, head_branch: str, files: dict, base: str = "main", action: str = "opened") -> dict:
        """Commit ``files`` on ``head_branch`` and open a PR against ``base``; returns the payload."""
        with self._lock:
            base_sha = self.branches.get((repo, base))
            if (repo, head_branch) not in self.branches and base_sha:
                self.branches[(repo, head_branch)] = base_sha
            entry = self.commit(repo, head_branch, files)
            number = self._next_number(repo)
            changed = entry["added"] + entry["modified"]
            self.pulls[(repo, number)] = MockPull(number, entry["id"], base, changed)
            return self._pr_payload(repo, number, action)

    def _pr_payload(self, repo: RepoId, number: int, action: str) -> dict:
        pull = self.pulls[(repo, number)]
        return {
            "action": action,
            "number": number,
            "pull_request": {
                "number": number,
                "head": {"sha": pull.head_sha},
                "base": {"ref": pull.base},
            },
            "repository": {"full_name": repo.full_name},
        }

    def posts(self, kind: TargetKind | None = None) -> list[Post]:
        with self._lock:
            return [p for p in self.outbox if kind is None or p.target.kind is kind]

    # Forge interface

    def fetch_issue_status(self, key: IssueKey, etag: str | None = None) -> IssueStatus:
        with self._lock:
            if self._maybe_fail("fetch_issue_status") is not None:
                return IssueStatus(key, IssueState.UNKNOWN)
            issue = self.issues.get((key.host, key.owner, key.repo), {}).get(key.number)
            if issue is None:
                return IssueStatus(key, IssueState.UNKNOWN)
            new_etag = f'W/"{key.number}-{issue.version}"'
            state = IssueState.RESOLVED if issue.state == "closed" else IssueState.OPEN
            resolved_at = None
            if issue.closed_at is not None:
                resolved_at = f"{issue.closed_at:.0f}"
            return IssueStatus(key, state, resolved_at, new_etag, issue.close_reason)

    def _record(self, target: PostTarget, body: str, number: int | None = None) -> PostReceipt:
        body, truncated = truncate_body(body)
        post_id = self._next_post_id
        self._next_post_id += 1
        if target.kind is TargetKind.NEW_ISSUE:
            url = f"https://{target.repo.host}/{target.repo.full_name}/issues/{number}"
        elif target.kind is TargetKind.PULL_REQUEST:
            url = f"https://{target.repo.host}/{target.repo.full_name}/pull/{target.number}#issuecomment-{post_id}"
        else:
            url = f"https://{target.repo.host}/{target.repo.full_name}/commit/{target.sha}#commitcomment-{post_id}"
        receipt = PostReceipt(post_id, url, number, truncated)
        self.outbox.append(Post(target, body, self.clock.now(), receipt))
        return receipt

    def post_comment(self, target: PostTarget, body: str) -> PostReceipt:
        if not body:
            raise ValueError("comment body is empty")
        with self._lock:
            if self._maybe_fail("post_comment") is not None:
                raise NotFoundError("post_comment: simulated HTTP 404", status=404)
            if target.kind is TargetKind.PULL_REQUEST and (target.repo, target.number) not in self.pulls:
                raise NotFoundError(f"no pull request {target.number} in {target.repo}", status=404)
            if target.kind is TargetKind.COMMIT and target.sha not in self.commits:
                raise NotFoundError(f"no commit {target.sha} in {target.repo}", status=404)
            if target.kind is TargetKind.NEW_ISSUE:
                raise ForgeError("use create_issue for new issues")
            return self._record(target, body)

    def create_issue(self, repo: RepoId, title: str, body: str) -> PostReceipt:
        if not title:
            raise ValueError("issue title is empty")
        with self._lock:
            if self._maybe_fail("create_issue") is not None:
                raise NotFoundError("create_issue: simulated HTTP 404", status=404)
            number = self._next_number(repo)
            body, _ = truncate_body(body)
            self._issues_of(repo)[number] = MockIssue(number, title, body)
            return self._record(PostTarget.new_issue(repo), body, number)

    def list_changed_files(self, repo: RepoId, change) -> list[ChangedFile]:
        with self._lock:
            if self._maybe_fail("list_changed_files") is not None:
                raise NotFoundError("list_changed_files: simulated HTTP 404", status=404)
            if isinstance(change, PushChange):
                sha, paths = change.after_sha, push_paths(change.commits)
            elif isinstance(change, PullRequestChange):
                pull = self.pulls.get((repo, change.number))
                if pull is None:
                    raise NotFoundError(f"no pull request {change.number}", status=404)
                sha, paths = pull.head_sha, list(pull.files)
            else:
                raise TypeError(f"unsupported change {change!r}")
            commit = self.commits.get(sha)
            if commit is None:
                raise NotFoundError(f"unknown sha {sha}", status=404)
            return [self._file(commit, p) for p in paths if p in commit.tree]

    def _file(self, commit: MockCommit, path: str) -> ChangedFile:
        content = commit.tree[path]
        return ChangedFile(path, commit.sha, lambda: content)

    def list_tree(self, repo: RepoId, sha: str) -> list[ChangedFile]:
        with self._lock:
            self._maybe_fail("list_tree")
            commit = self.commits.get(sha)
            if commit is None:
                raise NotFoundError(f"unknown sha {sha}", status=404)
            return [self._file(commit, p) for p in sorted(commit.tree)]

    def branch_head(self, repo: RepoId, branch: str) -> str:
        with self._lock:
            self._maybe_fail("branch_head")
            try:
                return self.branches[(repo, branch)]
            except KeyError:
                raise NotFoundError(f"no branch {branch} in {repo}", status=404) from None

    def find_post(self, target: PostTarget, marker: str) -> PostReceipt | None:
        with self._lock:
            self._maybe_fail("find_post")
            for post in self.outbox:
                if post.target == target and marker in post.body:
                    return post.receipt
            return None
