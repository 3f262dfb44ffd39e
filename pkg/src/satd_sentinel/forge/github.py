"""GitHub REST client (token auth)."""

from __future__ import annotations

import logging
import os
from urllib.parse import quote

import httpx

from ..clock import SystemClock
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
    RateLimiter,
    TargetKind,
    push_paths,
    truncate_body,
)

logger = logging.getLogger(__name__)

API_URL = "https://api.github.com"
TOKEN_ENV = "SATD_SENTINEL_TOKEN"
MAX_RETRIES = 3


class GitHubClient(Forge):
    def __init__(
        self,
        token: str | None = None,
        api_url: str = API_URL,
        clock=None,
        min_interval: float = 0.5,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
        closed_reasons: tuple[str, ...] | None = None,
    ):
        self.clock = clock or SystemClock()
        self.limiter = RateLimiter(min_interval, self.clock)
        # None: any closed issue counts as resolved
        self.closed_reasons = closed_reasons
        token = token if token is not None else os.environ.get(TOKEN_ENV)
        headers = {
            "Accept": "application/vnd.github+json",
            "X-GitHub-Api-Version": "2022-11-28",
            "User-Agent": "satd-sentinel",
        }
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._http = httpx.Client(base_url=api_url, headers=headers, timeout=timeout, transport=transport)
        self._etag_cache: dict[IssueKey, IssueStatus] = {}

    def close(self):
        self._http.close()

    def _request(self, method: str, url: str, **kwargs) -> httpx.Response:
        for attempt in range(MAX_RETRIES + 1):
            self.limiter.acquire()
            try:
                response = self._http.request(method, url, **kwargs)
            except httpx.TimeoutException as exc:
                raise TransportError(f"{method} {url}: timeout") from exc
            except httpx.TransportError as exc:
                raise TransportError(f"{method} {url}: {exc}") from exc
            wait = self._throttle_delay(response)
            if wait is None or attempt == MAX_RETRIES:
                return response
            logger.warning("rate limited on %s %s, waiting %.1fs", method, url, wait)
            self.limiter.defer(wait)
        return response  # pragma: no cover

    def _throttle_delay(self, response: httpx.Response) -> float | None:
        if response.status_code not in (403, 429):
            return None
        retry_after = response.headers.get("Retry-After")
        if retry_after is not None:
            try:
                return float(retry_after)
            except ValueError:
                return 60.0
        if response.headers.get("X-RateLimit-Remaining") == "0":
            reset = float(response.headers.get("X-RateLimit-Reset", "0"))
            return max(reset - self.clock.now(), 1.0)
        return None

    @staticmethod
    def _raise_for_post(response: httpx.Response, what: str) -> None:
        code = response.status_code
        if code < 300:
            return
        if code in (401, 403):
            raise CredentialError(f"{what}: HTTP {code}", status=code)
        if code >= 500:
            raise ServerError(f"{what}: HTTP {code}", status=code)
        if code == 404:
            raise NotFoundError(f"{what}: HTTP 404", status=code)
        raise ForgeError(f"{what}: HTTP {code} {response.text[:200]}", status=code)

    def _repo_path(self, repo) -> str:
        return f"/repos/{quote(repo.owner)}/{quote(repo.repo)}"

    def fetch_issue_status(self, key: IssueKey, etag: str | None = None) -> IssueStatus:
        headers = {}
        cached = self._etag_cache.get(key)
        if etag is None and cached is not None:
            etag = cached.etag
        if etag:
            headers["If-None-Match"] = etag
        response = self._request("GET", f"{self._repo_path(key)}/issues/{key.number}", headers=headers)
        if response.status_code == 304 and cached is not None:
            return cached
        if response.status_code >= 500:
            raise ServerError(f"issue {key}: HTTP {response.status_code}", status=response.status_code)
        if response.status_code != 200:
            return IssueStatus(key, IssueState.UNKNOWN)
        try:
            data = response.json()
            state = data["state"]
        except (ValueError, KeyError, TypeError):
            return IssueStatus(key, IssueState.UNKNOWN)
        reason = data.get("state_reason")
        if state == "closed" and (self.closed_reasons is None or reason in self.closed_reasons):
            mapped = IssueState.RESOLVED
        elif state in ("open", "closed"):
            mapped = IssueState.OPEN
        else:
            return IssueStatus(key, IssueState.UNKNOWN)
        status = IssueStatus(key, mapped, data.get("closed_at"), response.headers.get("ETag"), reason)
        if status.etag:
            self._etag_cache[key] = status
        return status

    def post_comment(self, target: PostTarget, body: str) -> PostReceipt:
        if not body:
            raise ValueError("comment body is empty")
        body, truncated = truncate_body(body)
        base = self._repo_path(target.repo)
        if target.kind is TargetKind.PULL_REQUEST:
            url = f"{base}/issues/{target.number}/comments"
        elif target.kind is TargetKind.COMMIT:
            url = f"{base}/commits/{target.sha}/comments"
        else:
            raise ForgeError("use create_issue for new issues")
        response = self._request("POST", url, json={"body": body})
        self._raise_for_post(response, f"comment on {target.label}")
        data = response.json()
        return PostReceipt(int(data["id"]), data.get("html_url"), None, truncated)

    def create_issue(self, repo: RepoId, title: str, body: str) -> PostReceipt:
        if not title:
            raise ValueError("issue title is empty")
        body, truncated = truncate_body(body)
        response = self._request("POST", f"{self._repo_path(repo)}/issues", json={"title": title, "body": body})
        self._raise_for_post(response, f"create issue in {repo}")
        data = response.json()
        return PostReceipt(int(data["id"]), data.get("html_url"), int(data["number"]), truncated)

    def _paginate(self, url: str, params=None):
        params = dict(params or {}, per_page=100)
        pages = 0
        while url and pages < 20:
            response = self._request("GET", url, params=params)
            self._raise_for_post(response, f"GET {url}")
            yield from response.json()
            url = response.links.get("next", {}).get("url")
            params = None
            pages += 1

    def _content_fetcher(self, repo: RepoId, path: str, sha: str):
        def fetch() -> bytes:
            response = self._request(
                "GET",
                f"{self._repo_path(repo)}/contents/{quote(path)}",
                params={"ref": sha},
                headers={"Accept": "application/vnd.github.raw+json"},
            )
            self._raise_for_post(response, f"read {path}@{sha}")
            return response.content

        return fetch

    def list_changed_files(self, repo: RepoId, change) -> list[ChangedFile]:
        if isinstance(change, PushChange):
            sha, paths = change.after_sha, push_paths(change.commits)
        elif isinstance(change, PullRequestChange):
            sha = change.head_sha
            paths = [
                f["filename"]
                for f in self._paginate(f"{self._repo_path(repo)}/pulls/{change.number}/files")
                if f.get("status") != "removed"
            ]
        else:
            raise TypeError(f"unsupported change {change!r}")
        return [ChangedFile(p, sha, self._content_fetcher(repo, p, sha)) for p in paths]

    def list_tree(self, repo: RepoId, sha: str) -> list[ChangedFile]:
        response = self._request("GET", f"{self._repo_path(repo)}/git/trees/{sha}", params={"recursive": "1"})
        self._raise_for_post(response, f"tree {sha}")
        entries = response.json().get("tree", [])
        return [
            ChangedFile(e["path"], sha, self._content_fetcher(repo, e["path"], sha))
            for e in entries
            if e.get("type") == "blob"
        ]

    def branch_head(self, repo: RepoId, branch: str) -> str:
        response = self._request("GET", f"{self._repo_path(repo)}/branches/{quote(branch, safe='')}")
        self._raise_for_post(response, f"branch {branch}")
        return response.json()["commit"]["sha"]

    def find_post(self, target: PostTarget, marker: str) -> PostReceipt | None:
        base = self._repo_path(target.repo)
        if target.kind is TargetKind.PULL_REQUEST:
            items = self._paginate(f"{base}/issues/{target.number}/comments")
        elif target.kind is TargetKind.COMMIT:
            items = self._paginate(f"{base}/commits/{target.sha}/comments")
        else:
            items = self._paginate(f"{base}/issues", {"state": "all", "sort": "created", "direction": "desc"})
        for item in items:
            if marker in (item.get("body") or ""):
                number = item.get("number") if target.kind is TargetKind.NEW_ISSUE else None
                return PostReceipt(int(item["id"]), item.get("html_url"), number)
        return None
