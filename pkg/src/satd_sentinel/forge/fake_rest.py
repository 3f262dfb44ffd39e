"""A GitHub REST look-alike served from a :class:`MockForge`, for httpx.MockTransport.

Lets the real :class:`GitHubClient` run against scenario state without a
network, so the same conformance tests cover both client implementations.
"""

from __future__ import annotations

import json
import re
from urllib.parse import unquote

import httpx

from ..errors import CredentialError, ForgeError, NotFoundError, ServerError, TransportError
from ..refs import RepoId
from .base import PostTarget, TargetKind
from .mock import MockForge

_ROUTES = [
    ("GET", re.compile(r"/repos/([^/]+)/([^/]+)/issues/(\d+)$"), "get_issue"),
    ("GET", re.compile(r"/repos/([^/]+)/([^/]+)/issues/(\d+)/comments$"), "list_issue_comments"),
    ("POST", re.compile(r"/repos/([^/]+)/([^/]+)/issues/(\d+)/comments$"), "post_issue_comment"),
    ("GET", re.compile(r"/repos/([^/]+)/([^/]+)/commits/([0-9a-f]{40})/comments$"), "list_commit_comments"),
    ("POST", re.compile(r"/repos/([^/]+)/([^/]+)/commits/([0-9a-f]{40})/comments$"), "post_commit_comment"),
    ("GET", re.compile(r"/repos/([^/]+)/([^/]+)/issues$"), "list_issues"),
    ("POST", re.compile(r"/repos/([^/]+)/([^/]+)/issues$"), "create_issue"),
    ("GET", re.compile(r"/repos/([^/]+)/([^/]+)/pulls/(\d+)/files$"), "pull_files"),
    ("GET", re.compile(r"/repos/([^/]+)/([^/]+)/contents/(.+)$"), "contents"),
    ("GET", re.compile(r"/repos/([^/]+)/([^/]+)/git/trees/([0-9a-f]{40})$"), "tree"),
    ("GET", re.compile(r"/repos/([^/]+)/([^/]+)/branches/(.+)$"), "branch"),
]


class FakeGitHubAPI:
    def __init__(self, forge: MockForge, host: str = "github.com", token: str | None = None):
        self.forge = forge
        self.host = host
        self.token = token
        self.requests: list[httpx.Request] = []

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self)

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.requests.append(request)
        if self.token is not None and request.headers.get("Authorization") != f"Bearer {self.token}":
            return httpx.Response(401, json={"message": "Bad credentials"})
        path = unquote(request.url.path)
        for method, pattern, handler in _ROUTES:
            m = pattern.match(path)
            if m and method == request.method:
                repo = RepoId(self.host, m.group(1), m.group(2))
                try:
                    return getattr(self, handler)(request, repo, *m.groups()[2:])
                except TransportError as exc:
                    raise httpx.ReadTimeout(str(exc), request=request) from exc
                except ServerError:
                    return httpx.Response(500, json={"message": "Server Error"})
                except CredentialError:
                    return httpx.Response(401, json={"message": "Bad credentials"})
                except NotFoundError:
                    return httpx.Response(404, json={"message": "Not Found"})
                except ForgeError as exc:
                    return httpx.Response(422, json={"message": str(exc)})
        return httpx.Response(404, json={"message": "Not Found"})

    def get_issue(self, request, repo, number):
        key_repo = (repo.host, repo.owner, repo.repo)
        with self.forge._lock:
            # the same failure hooks as the in-process client
            kind = self.forge._maybe_fail("fetch_issue_status")
            if kind is not None:
                return httpx.Response(404, json={"message": "Not Found"})
            issue = self.forge.issues.get(key_repo, {}).get(int(number))
            if issue is None:
                return httpx.Response(404, json={"message": "Not Found"})
            etag = f'W/"{issue.number}-{issue.version}"'
            if request.headers.get("If-None-Match") == etag:
                return httpx.Response(304, headers={"ETag": etag})
            data = {
                "number": issue.number,
                "title": issue.title,
                "body": issue.body,
                "state": issue.state,
                "state_reason": issue.close_reason,
                "closed_at": f"{issue.closed_at:.0f}" if issue.closed_at is not None else None,
            }
            return httpx.Response(200, json=data, headers={"ETag": etag})

    def _post(self, target: PostTarget, request):
        body = json.loads(request.content)["body"]
        receipt = self.forge.post_comment(target, body)
        return httpx.Response(201, json={"id": receipt.id, "html_url": receipt.url, "body": body})

    def post_issue_comment(self, request, repo, number):
        return self._post(PostTarget.pull_request(repo, int(number)), request)

    def post_commit_comment(self, request, repo, sha):
        return self._post(PostTarget.commit(repo, sha), request)

    def _comments(self, target):
        with self.forge._lock:
            return [
                {"id": p.receipt.id, "html_url": p.receipt.url, "body": p.body}
                for p in self.forge.outbox
                if p.target == target
            ]

    def list_issue_comments(self, request, repo, number):
        return httpx.Response(200, json=self._comments(PostTarget.pull_request(repo, int(number))))

    def list_commit_comments(self, request, repo, sha):
        return httpx.Response(200, json=self._comments(PostTarget.commit(repo, sha)))

    def list_issues(self, request, repo):
        with self.forge._lock:
            issues = self.forge.issues.get((repo.host, repo.owner, repo.repo), {})
            items = [
                {"id": n, "number": n, "body": i.body, "html_url": f"https://{repo.host}/{repo.full_name}/issues/{n}"}
                for n, i in sorted(issues.items(), reverse=True)
            ]
        for post in self.forge.posts(TargetKind.NEW_ISSUE):
            for item in items:
                if post.target.repo == repo and item["number"] == post.receipt.number:
                    item["id"] = post.receipt.id
        return httpx.Response(200, json=items)

    def create_issue(self, request, repo):
        data = json.loads(request.content)
        receipt = self.forge.create_issue(repo, data["title"], data["body"])
        return httpx.Response(201, json={"id": receipt.id, "number": receipt.number, "html_url": receipt.url})

    def pull_files(self, request, repo, number):
        with self.forge._lock:
            pull = self.forge.pulls.get((repo, int(number)))
            if pull is None:
                return httpx.Response(404, json={"message": "Not Found"})
            return httpx.Response(200, json=[{"filename": f, "status": "modified"} for f in pull.files])

    def contents(self, request, repo, path):
        sha = request.url.params.get("ref")
        commit = self.forge.commits.get(sha)
        if commit is None or path not in commit.tree:
            return httpx.Response(404, json={"message": "Not Found"})
        return httpx.Response(200, content=commit.tree[path])

    def tree(self, request, repo, sha):
        commit = self.forge.commits.get(sha)
        if commit is None:
            return httpx.Response(404, json={"message": "Not Found"})
        return httpx.Response(200, json={"sha": sha, "tree": [{"path": p, "type": "blob"} for p in sorted(commit.tree)]})

    def branch(self, request, repo, name):
        sha = self.forge.branches.get((repo, name))
        if sha is None:
            return httpx.Response(404, json={"message": "Branch not found"})
        return httpx.Response(200, json={"name": name, "commit": {"sha": sha}})
