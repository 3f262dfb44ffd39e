"""Scenario runner over the mock forge in simulated time.

A scenario is a JSON document::

    {
      "name": "lifecycle",
      "config": {... same shape as the service config file ...},
      "steps": [
        {"action": "SeedIssue", "repo": "acme/app", "number": 1},
        {"action": "Push", "repo": "acme/app", "branch": "main", "files": {"A.java": "..."}},
        {"action": "ExpectNoPost"},
        {"action": "CloseIssue", "repo": "acme/app", "number": 1},
        {"action": "AdvanceClock", "seconds": 901},
        {"action": "ExpectPost", "posts": [{"channel": "IssueCreation", "contains": ["A.java:3"]}]}
      ]
    }

Push and OpenPR steps may name a directory with ``"tree"`` (relative to the
scenario file) instead of inline ``files``. Expect steps compare against the
posts made since the previous Expect step, and the match must be exact in
count and order.
"""

from __future__ import annotations

import json
import random
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .clock import SimClock
from .config import Config
from .errors import ScenarioError
from .forge.base import TargetKind
from .forge.mock import FailureKind, MockForge, OPERATIONS
from .refs import RepoId
from .render import Channel
from .service import BotService, sign
from .store import Store

ACTIONS = (
    "SeedIssue",
    "CloseIssue",
    "ReopenIssue",
    "Push",
    "OpenPR",
    "AdvanceClock",
    "InjectFailure",
    "ExpectPost",
    "ExpectNoPost",
)

_CHANNEL_OF_KIND = {
    TargetKind.PULL_REQUEST: Channel.PULL_REQUEST_COMMENT,
    TargetKind.COMMIT: Channel.COMMIT_COMMENT,
    TargetKind.NEW_ISSUE: Channel.ISSUE_CREATION,
}

_REQUIRED = {
    "SeedIssue": ("repo", "number"),
    "CloseIssue": ("repo", "number"),
    "ReopenIssue": ("repo", "number"),
    "Push": ("repo",),
    "OpenPR": ("repo",),
    "AdvanceClock": ("seconds",),
    "InjectFailure": ("kind", "op"),
    "ExpectPost": ("posts",),
    "ExpectNoPost": (),
}


class SimulatedCrash(BaseException):
    """Raised at a fault point to emulate the process being killed.

    Derives from BaseException so ordinary ``except Exception`` handlers in
    service code cannot swallow it.
    """


class CrashInjector:
    """Crash at the ``at``-th checkpoint hit (1-based); ``None`` counts only."""

    def __init__(self, at: int | None = None):
        self.at = at
        self.hits: list[str] = []
        self.fired: str | None = None

    def __call__(self, point: str) -> None:
        self.hits.append(point)
        if self.at is not None and self.fired is None and len(self.hits) == self.at:
            self.fired = point
            raise SimulatedCrash(point)

    def disarm(self) -> None:
        self.at = None


@dataclass
class Scenario:
    name: str
    config: dict
    steps: list[dict]
    base_dir: Path | None = None

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "Scenario":
        if not isinstance(data, dict) or "steps" not in data:
            raise ScenarioError("scenario needs a 'steps' list")
        steps = data["steps"]
        if not isinstance(steps, list):
            raise ScenarioError("'steps' must be a list")
        for i, step in enumerate(steps):
            action = step.get("action") if isinstance(step, dict) else None
            if action not in ACTIONS:
                raise ScenarioError(f"step {i}: unknown action {action!r}")
            missing = [k for k in _REQUIRED[action] if k not in step]
            if missing:
                raise ScenarioError(f"step {i} ({action}): missing {', '.join(missing)}")
            if action in ("Push", "OpenPR") and "files" not in step and "tree" not in step:
                raise ScenarioError(f"step {i} ({action}): needs 'files' or 'tree'")
            if action == "InjectFailure":
                try:
                    FailureKind(step["kind"])
                except ValueError:
                    raise ScenarioError(f"step {i}: unknown failure kind {step['kind']!r}") from None
                if step["op"] not in OPERATIONS:
                    raise ScenarioError(f"step {i}: unknown operation {step['op']!r}")
            if action == "ExpectPost":
                for p in step["posts"]:
                    try:
                        Channel.parse(p.get("channel", ""))
                    except ValueError as exc:
                        raise ScenarioError(f"step {i}: {exc}") from None
        return cls(str(data.get("name", "scenario")), dict(data.get("config") or {}), steps, base_dir)

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
        return cls.from_dict(data, path.parent)


@dataclass
class StepFailure:
    index: int
    action: str
    message: str

    def __str__(self):
        return f"step {self.index} ({self.action}): {self.message}"


@dataclass
class ScenarioResult:
    name: str
    failure: StepFailure | None = None
    outbox: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failure is None

    def transcript(self) -> str:
        """Canonical dump of every post; equal for identical runs."""
        parts = []
        for post in self.outbox:
            parts.append(f"== {_CHANNEL_OF_KIND[post.target.kind].value} {post.target.label} @{post.timestamp:.0f}")
            parts.append(post.body)
        return "\n".join(parts)


class Harness:
    """A service wired to a mock forge, a simulated clock and a store."""

    def __init__(self, config: Config, store_path=":memory:", secret: str = "harness-secret", clock=None, forge=None, crash=None, model=None):
        self.config = config
        self.clock = clock or SimClock()
        self.forge = forge or MockForge(self.clock)
        self.secret = secret
        self.store_path = str(store_path)
        self.crash = crash
        self.model = model
        self.service: BotService | None = None
        self._delivery_seq = 0
        self.start()

    def start(self) -> BotService:
        store = Store(self.store_path, fault_hook=self.crash)
        self.service = BotService(
            self.config, self.forge, store, self.clock, secret=self.secret, crash_hook=self.crash, model=self.model
        )
        return self.service

    def restart(self) -> BotService:
        """Drop the service (as if the process died) and bring up a fresh one."""
        if self.service is not None:
            try:
                self.service.store.close()
            except Exception:
                pass
        self.start()
        self.service.recover()
        return self.service

    def emit_signed_webhook(self, event: str, payload: dict, delivery_id: str | None = None, corrupt: bool = False):
        body = json.dumps(payload, sort_keys=True).encode()
        if delivery_id is None:
            self._delivery_seq += 1
            delivery_id = str(uuid.UUID(int=random.Random(self._delivery_seq).getrandbits(128)))
        signature = sign(self.secret, body)
        if corrupt:
            signature = signature[:-1] + ("0" if signature[-1] != "0" else "1")
        headers = {
            "X-GitHub-Event": event,
            "X-GitHub-Delivery": delivery_id,
            "X-Hub-Signature-256": signature,
            "Content-Type": "application/json",
        }
        return self.service.handle_webhook(body, headers)

    def push(self, repo: RepoId, branch: str, files: dict, message: str = "update"):
        payload = self.forge.push(repo, branch, files, message)
        result = self.emit_signed_webhook("push", payload)
        self.service.process_pending()
        return payload, result

    def open_pr(self, repo: RepoId, head_branch: str, files: dict, base: str = "main"):
        payload = self.forge.open_pull_request(repo, head_branch, files, base)
        result = self.emit_signed_webhook("pull_request", payload)
        self.service.process_pending()
        return payload, result

    def advance(self, seconds: float):
        self.clock.advance(seconds)
        return self.service.tick()


def read_tree(root) -> dict[str, bytes]:
    root = Path(root)
    if not root.is_dir():
        raise ScenarioError(f"tree {root} is not a directory")
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _files(step: dict, base_dir: Path | None) -> dict:
    files = dict(step.get("files") or {})
    if "tree" in step:
        tree = Path(step["tree"])
        if not tree.is_absolute() and base_dir is not None:
            tree = base_dir / tree
        for path, content in read_tree(tree).items():
            files.setdefault(path, content)
    return files


def _check_posts(new_posts, expected) -> str | None:
    actual = [(_CHANNEL_OF_KIND[p.target.kind].value, p.target.label) for p in new_posts]
    if len(new_posts) != len(expected):
        return f"expected {len(expected)} post(s), got {len(new_posts)}: {actual}"
    for i, (post, want) in enumerate(zip(new_posts, expected)):
        channel = Channel.parse(want["channel"])
        if _CHANNEL_OF_KIND[post.target.kind] is not channel:
            return f"post {i}: expected {channel.value}, got {actual[i]}"
        if "number" in want and post.target.number != want["number"]:
            return f"post {i}: expected target #{want['number']}, got {actual[i]}"
        for text in want.get("contains", []):
            if text not in post.body:
                return f"post {i}: body lacks {text!r}\n--- body ---\n{post.body}"
        for text in want.get("excludes", []):
            if text in post.body:
                return f"post {i}: body unexpectedly contains {text!r}"
    return None


def run_scenario(scenario: Scenario, harness: Harness | None = None) -> ScenarioResult:
    """Replay ``scenario`` step by step; stops at the first violated expectation."""
    if harness is None:
        harness = Harness(Config.from_dict(scenario.config))
    forge = harness.forge
    result = ScenarioResult(scenario.name)
    seen = len(forge.outbox)
    for index, step in enumerate(scenario.steps):
        action = step["action"]
        repo = RepoId.parse(step["repo"]) if "repo" in step else None
        if action == "SeedIssue":
            forge.seed_issue(repo, int(step["number"]), step.get("state", "open"), step.get("title", ""))
        elif action == "CloseIssue":
            forge.close_issue(repo, int(step["number"]), step.get("reason", "completed"))
        elif action == "ReopenIssue":
            forge.reopen_issue(repo, int(step["number"]))
        elif action == "Push":
            _, ack = harness.push(repo, step.get("branch", "main"), _files(step, scenario.base_dir), step.get("message", "update"))
            if "expect_status" in step and ack.status != step["expect_status"]:
                result.failure = StepFailure(index, action, f"webhook status {ack.status}, expected {step['expect_status']}")
                break
        elif action == "OpenPR":
            harness.open_pr(repo, step.get("branch", "feature"), _files(step, scenario.base_dir), step.get("base", "main"))
        elif action == "AdvanceClock":
            harness.advance(float(step["seconds"]))
        elif action == "InjectFailure":
            forge.inject_failure(FailureKind(step["kind"]), step["op"], int(step.get("count", 1)))
        elif action in ("ExpectPost", "ExpectNoPost"):
            new_posts = forge.outbox[seen:]
            seen = len(forge.outbox)
            problem = _check_posts(new_posts, step.get("posts", []) if action == "ExpectPost" else [])
            if problem:
                result.failure = StepFailure(index, action, problem)
                break
    result.outbox = list(forge.outbox)
    return result
