from .base import (
    ChangedFile,
    Forge,
    IssueState,
    IssueStatus,
    PostReceipt,
    PostTarget,
    PullRequestChange,
    PushChange,
    RateLimiter,
    TargetKind,
    push_paths,
    truncate_body,
)
from .github import GitHubClient
from .mock import FailureKind, MockForge, Post

__all__ = [
    "ChangedFile",
    "FailureKind",
    "Forge",
    "GitHubClient",
    "IssueState",
    "IssueStatus",
    "MockForge",
    "Post",
    "PostReceipt",
    "PostTarget",
    "PullRequestChange",
    "PushChange",
    "RateLimiter",
    "TargetKind",
    "push_paths",
    "truncate_body",
]
