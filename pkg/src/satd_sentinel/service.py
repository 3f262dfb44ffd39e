"""The bot backend: webhook intake, scan jobs, issue polling and notifications.

Webhooks are verified and turned into durable scan jobs; workers (or
``process_pending`` in tests) run them. ``tick`` is the monitor cycle: poll
due issues, notify about findings that became ready, and reconcile
notification reservations left behind by a crash.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import logging
import threading
from dataclasses import dataclass, field

from .classifier.model import Model, load_bundled_model
from .clock import SystemClock
from .config import Config, RepoConfig
from .errors import ForgeError, ModelError, NotFoundError
from .forge.base import IssueState, PostReceipt, PostTarget, PullRequestChange, PushChange, TargetKind
from .pipeline import scan_files
from .refs import IssueKey, RepoId
from .render import Channel, issue_title, marker_line, render_notification
from .store import FindingStatus, Store, StoredFinding

logger = logging.getLogger(__name__)

PR_ACTIONS = ("opened", "synchronize", "reopened")
ZERO_SHA = "0" * 40


@dataclass(frozen=True)
class WebhookResult:
    accepted: bool
    status: int
    reason: str = ""
    jobs: int = 0


@dataclass
class ScanReport:
    repo: str
    kind: str
    files_scanned: int = 0
    comments: int = 0
    findings: int = 0
    ready_now: list[str] = field(default_factory=list)
    new: list[str] = field(default_factory=list)
    disappeared: list[str] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)
    error: str | None = None

    def summary(self) -> tuple:
        return (self.files_scanned, self.comments, self.findings, tuple(self.ready_now))


@dataclass(frozen=True)
class Trigger:
    kind: str  # "pull_request", "push" or "poll"
    number: int | None = None
    sha: str | None = None

    @property
    def description(self) -> str:
        if self.kind == "pull_request":
            return f"pull request #{self.number}"
        if self.kind == "push":
            return f"push of {self.sha[:7]}"
        return "scheduled issue check"


@dataclass(frozen=True)
class NotificationRecord:
    channel: Channel
    target: PostTarget
    batch_id: str
    finding_ids: tuple[str, ...]
    receipt: PostReceipt


def sign(secret: str, body: bytes) -> str:
    return "sha256=" + hmac.new(secret.encode(), body, hashlib.sha256).hexdigest()


def verify_signature(secret: str, body: bytes, header: str | None) -> bool:
    if not header or not header.startswith("sha256="):
        return False
    return hmac.compare_digest(sign(secret, body), header.strip())


def _header(headers, name: str) -> str | None:
    for key, value in headers.items():
        if key.lower() == name.lower():
            return value
    return None


def _target_json(target: PostTarget) -> str:
    repo = target.repo
    return json.dumps(
        {"kind": target.kind.value, "host": repo.host, "owner": repo.owner, "repo": repo.repo,
         "number": target.number, "sha": target.sha},
        sort_keys=True,
    )


def _target_from_json(text: str) -> PostTarget:
    data = json.loads(text)
    repo = RepoId(data["host"], data["owner"], data["repo"])
    return PostTarget(TargetKind(data["kind"]), repo, data["number"], data["sha"])


class BotService:
    def __init__(self, config: Config, forge, store: Store, clock=None, secret: str | None = None, crash_hook=None, model=None):
        self.config = config
        self.forge = forge
        self.store = store
        self.clock = clock or SystemClock()
        self.secret = secret if secret is not None else config.secret()
        self._crash = crash_hook or (lambda point: None)
        self._models: dict[str | None, Model | None] = {}
        if model is not None:
            self._models[None] = model
        self._repo_locks: dict[str, threading.Lock] = {}
        self._lock = threading.Lock()
        self._inflight: set[int] = set()
        self._busy_repos: set[str] = set()
        self._wake = threading.Condition()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._last_full_scan: dict[tuple[RepoId, str], float] = {}

    # models

    def model_for(self, cfg: RepoConfig | None):
        path = cfg.model_path if cfg else None
        if path not in self._models:
            try:
                self._models[path] = Model.load(path) if path else load_bundled_model()
            except ModelError as exc:
                logger.error("model unavailable (%s); using the pattern detector", exc)
                self._models[path] = None
        return self._models[path]

    # webhook intake

    def handle_webhook(self, raw_body: bytes, headers) -> WebhookResult:
        if not self.secret:
            return WebhookResult(False, 500, "webhook secret not configured")
        if not verify_signature(self.secret, raw_body, _header(headers, "X-Hub-Signature-256")):
            return WebhookResult(False, 401, "bad signature")
        event = _header(headers, "X-GitHub-Event") or ""
        delivery = _header(headers, "X-GitHub-Delivery")
        if not delivery:
            return WebhookResult(False, 400, "missing X-GitHub-Delivery")
        try:
            payload = json.loads(raw_body)
            if not isinstance(payload, dict):
                raise ValueError("payload is not an object")
        except (ValueError, UnicodeDecodeError) as exc:
            return WebhookResult(False, 400, f"unparseable payload: {exc}")
        if event == "ping":
            return WebhookResult(True, 200, "pong")
        try:
            full_name = payload["repository"]["full_name"]
        except (KeyError, TypeError):
            return WebhookResult(False, 400, "payload lacks repository.full_name")
        cfg = self.config.find_repo(full_name)
        if cfg is None:
            logger.warning("webhook for unconfigured repository %s rejected", full_name)
            return WebhookResult(False, 404, f"repository {full_name} is not configured")
        try:
            job = self._job_from_event(event, payload, cfg)
        except (KeyError, TypeError, ValueError) as exc:
            return WebhookResult(False, 400, f"malformed {event} payload: {exc}")
        now = self.clock.now()
        if not self.store.accept_delivery(delivery, now, job, cfg.repo.full_name):
            return WebhookResult(True, 200, "duplicate delivery ignored")
        if job is None:
            return WebhookResult(True, 200, "event ignored")
        with self._wake:
            self._wake.notify_all()
        return WebhookResult(True, 202, "scan queued", jobs=1)

    def _job_from_event(self, event: str, payload: dict, cfg: RepoConfig) -> dict | None:
        if event == "push":
            ref = payload["ref"]
            if not ref.startswith("refs/heads/"):
                return None
            branch = ref[len("refs/heads/"):]
            after = payload["after"]
            if branch not in cfg.branches or after == ZERO_SHA:
                return None
            commits = [
                {k: list(c.get(k, [])) for k in ("added", "modified", "removed")}
                for c in payload.get("commits", [])
            ]
            return {"kind": "push", "repo": cfg.repo.full_name, "branch": branch, "after": after, "commits": commits}
        if event == "pull_request":
            if payload.get("action") not in PR_ACTIONS:
                return None
            pr = payload["pull_request"]
            base = (pr.get("base") or {}).get("ref")
            if base is not None and base not in cfg.branches:
                return None
            return {
                "kind": "pull_request",
                "repo": cfg.repo.full_name,
                "number": int(pr["number"]),
                "head_sha": pr["head"]["sha"],
                "base": base,
            }
        return None

    # scanning

    def _repo_lock(self, repo: str) -> threading.Lock:
        with self._lock:
            return self._repo_locks.setdefault(repo, threading.Lock())

    def process_pending(self) -> list[ScanReport]:
        """Run every queued scan job in order, synchronously."""
        reports = []
        for job_id, _repo, job in self.store.pending_jobs():
            reports.append(self._run_job(job_id, job))
        return reports

    def _run_job(self, job_id: int, job: dict) -> ScanReport:
        with self._repo_lock(job["repo"]):
            try:
                report = self.run_scan(job)
            except ForgeError as exc:
                if exc.retryable:
                    # job stays queued for the next pass
                    logger.warning("scan job %s deferred: %s", job_id, exc)
                    return ScanReport(job["repo"], job["kind"], error=str(exc))
                logger.error("scan job %s failed: %s", job_id, exc)
                report = ScanReport(job["repo"], job["kind"], error=str(exc))
            self._crash("job:before-complete")
            self.store.complete_job(job_id)
        return report

    def run_scan(self, job: dict) -> ScanReport:
        cfg = self.config.find_repo(job["repo"])
        report = ScanReport(job["repo"], job["kind"])
        if cfg is None:
            report.error = "repository not configured"
            return report
        if job["kind"] == "push":
            change = PushChange(job["after"], tuple(job.get("commits", ())))
            trigger = Trigger("push", sha=job["after"])
            sha = job["after"]
        else:
            change = PullRequestChange(job["number"], job["head_sha"])
            trigger = Trigger("pull_request", number=job["number"], sha=job["head_sha"])
            sha = job["head_sha"]
        try:
            files = self.forge.list_changed_files(cfg.repo, change)
        except NotFoundError as exc:
            logger.error("scan of %s aborted: %s", job["repo"], exc)
            report.error = str(exc)
            return report
        result = scan_files(
            [(f.path, f.fetch) for f in files],
            self.config.profiles,
            cfg.repo,
            cfg.ref_patterns,
            self.model_for(cfg),
            cfg.onhold_patterns,
            sha,
        )
        self._crash("scan:classified")
        report.files_scanned = result.files_scanned
        report.comments = result.comments
        report.findings = len(result.findings)
        report.diagnostics = result.diagnostics
        scanned = set(result.scanned_paths)
        if job["kind"] == "push":
            for commit in job.get("commits", ()):
                scanned.update(commit.get("removed", ()))
        upsert = self.store.upsert_findings(
            cfg.repo.full_name,
            result.findings,
            now=self.clock.now(),
            branch=job.get("branch") if job["kind"] == "push" else job.get("base"),
            commit_sha=sha if job["kind"] == "push" else None,
            pr_number=job.get("number") if job["kind"] == "pull_request" else None,
            scanned_paths=scanned,
            poll_interval=cfg.poll_interval,
        )
        self._crash("scan:upserted")
        report.new = upsert.new
        report.disappeared = upsert.disappeared
        self._fetch_new_statuses(upsert.ids)
        ready = [
            fid for fid in dict.fromkeys(upsert.ids)
            if (sf := self.store.get_finding(fid)) is not None and sf.status is FindingStatus.READY
        ]
        report.ready_now = ready
        if ready:
            self.dispatch_notifications(ready, trigger, cfg)
        return report

    def _fetch_new_statuses(self, finding_ids) -> None:
        keys: set[IssueKey] = set()
        for fid in finding_ids:
            sf = self.store.get_finding(fid)
            if sf is not None:
                keys.update(sf.ref_keys)
        watches = {w.key: w for w in self.store.watches()}
        for key in sorted(keys):
            w = watches.get(key)
            if w is None or w.last_polled is not None:
                continue
            try:
                status = self.forge.fetch_issue_status(key)
            except ForgeError as exc:
                # left due; the monitor retries it
                logger.warning("status of %s unavailable at scan time: %s", key, exc)
                continue
            self.store.record_status(key, status.state, self.clock.now(), status.etag)
            self._crash("scan:status-recorded")

    def full_scan(self, cfg: RepoConfig, branch: str) -> ScanReport:
        """Scan a whole branch and mark findings no longer present as disappeared."""
        report = ScanReport(cfg.repo.full_name, "full")
        with self._repo_lock(cfg.repo.full_name):
            sha = self.forge.branch_head(cfg.repo, branch)
            files = self.forge.list_tree(cfg.repo, sha)
            result = scan_files(
                [(f.path, f.fetch) for f in files],
                self.config.profiles,
                cfg.repo,
                cfg.ref_patterns,
                self.model_for(cfg),
                cfg.onhold_patterns,
                sha,
            )
            upsert = self.store.upsert_findings(
                cfg.repo.full_name, result.findings, now=self.clock.now(), branch=branch,
                commit_sha=sha, full_scan=True, poll_interval=cfg.poll_interval,
            )
            self._fetch_new_statuses(upsert.ids)
        report.files_scanned = result.files_scanned
        report.comments = result.comments
        report.findings = len(result.findings)
        report.new = upsert.new
        report.disappeared = upsert.disappeared
        return report

    # monitoring

    def poll_watched_issues(self, now: float | None = None, force: bool = False) -> list[str]:
        now = self.clock.now() if now is None else now
        svc = self.config.service
        watches = self.store.watches() if force else self.store.due_watches(now)
        flipped: list[str] = []
        for w in watches:
            try:
                status = self.forge.fetch_issue_status(w.key, w.etag)
            except ForgeError as exc:
                if not exc.retryable:
                    status = None
                else:
                    delay = self.store.record_poll_failure(w.key, now, svc.poll_backoff, svc.poll_backoff_max)
                    logger.warning("polling %s failed (%s); retry in %.0fs", w.key, exc, delay)
                    continue
            state = status.state if status is not None else IssueState.UNKNOWN
            flipped.extend(self.store.record_status(w.key, state, now, status.etag if status else None))
            self._crash("poll:recorded")
        return flipped

    def tick(self, now: float | None = None, force: bool = False) -> list[str]:
        """One monitor cycle; returns finding ids that became ready.

        ``force`` polls every watched issue regardless of its schedule.
        """
        now = self.clock.now() if now is None else now
        self.reconcile_reservations(older_than=now - self.config.service.reservation_timeout)
        flipped = self.poll_watched_issues(now, force)
        for cfg in self.config.repos.values():
            with self._repo_lock(cfg.repo.full_name):
                ready = [f.finding_id for f in self.store.findings(cfg.repo.full_name, live_only=True, status=FindingStatus.READY)]
                if ready:
                    self.dispatch_notifications(ready, Trigger("poll"), cfg)
        self._maybe_full_scans(now)
        return flipped

    def _maybe_full_scans(self, now: float) -> None:
        interval = self.config.service.full_scan_interval
        if interval <= 0:
            return
        for cfg in self.config.repos.values():
            for branch in cfg.branches:
                last = self._last_full_scan.setdefault((cfg.repo, branch), now)
                if now - last < interval:
                    continue
                self._last_full_scan[(cfg.repo, branch)] = now
                try:
                    self.full_scan(cfg, branch)
                except ForgeError as exc:
                    logger.warning("full scan of %s@%s failed: %s", cfg.repo, branch, exc)

    # notifications

    def _dedup_key(self, finding: StoredFinding, channel: Channel, target: PostTarget) -> str:
        epochs = ",".join(f"{k}@{self.store.epoch(k)}" for k in finding.ref_keys)
        raw = f"{finding.finding_id}|{channel.value}|{target.label}|{epochs}"
        return hashlib.sha256(raw.encode()).hexdigest()[:32]

    def _routes(self, findings: list[StoredFinding], trigger: Trigger, cfg: RepoConfig):
        enabled = set(cfg.output_channels)
        repo = cfg.repo
        if trigger.kind == "pull_request":
            if Channel.PULL_REQUEST_COMMENT in enabled:
                yield Channel.PULL_REQUEST_COMMENT, PostTarget.pull_request(repo, trigger.number), findings
            return
        if trigger.kind == "push":
            if Channel.COMMIT_COMMENT in enabled:
                yield Channel.COMMIT_COMMENT, PostTarget.commit(repo, trigger.sha), findings
            return
        if Channel.PULL_REQUEST_COMMENT in enabled:
            by_pr: dict[int, list] = {}
            for f in findings:
                if f.last_pr is not None:
                    by_pr.setdefault(f.last_pr, []).append(f)
            for number in sorted(by_pr):
                yield Channel.PULL_REQUEST_COMMENT, PostTarget.pull_request(repo, number), by_pr[number]
        if Channel.COMMIT_COMMENT in enabled:
            by_sha: dict[str, list] = {}
            for f in findings:
                if f.last_commit_sha:
                    by_sha.setdefault(f.last_commit_sha, []).append(f)
            for sha in sorted(by_sha):
                yield Channel.COMMIT_COMMENT, PostTarget.commit(repo, sha), by_sha[sha]
        if Channel.ISSUE_CREATION in enabled:
            yield Channel.ISSUE_CREATION, PostTarget.new_issue(repo), findings

    def dispatch_notifications(self, ready_ids, trigger: Trigger, cfg: RepoConfig) -> list[NotificationRecord]:
        """Post one aggregated notification per (channel, target), each finding at most once.

        Dedup keys are reserved before posting and finalized after; a failed
        post releases its reservation so the next cycle retries.
        """
        findings = [f for f in (self.store.get_finding(fid) for fid in dict.fromkeys(ready_ids)) if f is not None]
        findings = [
            f for f in findings
            if f.status is FindingStatus.READY and not f.disappeared and f.finding.confidence >= cfg.confidence_floor
        ]
        records = []
        for channel, target, group in self._routes(findings, trigger, cfg):
            entries = []
            for f in group:
                key = self._dedup_key(f, channel, target)
                if not self.store.notified(key):
                    entries.append((key, f))
            if not entries:
                continue
            batch_id = hashlib.sha256("|".join(sorted(k for k, _ in entries)).encode()).hexdigest()[:16]
            target_json = _target_json(target)
            reserved = set(
                self.store.reserve(
                    [(k, f.finding_id, channel.value, target_json) for k, f in entries], batch_id, self.clock.now()
                )
            )
            chosen = [f for k, f in entries if k in reserved]
            if not chosen:
                continue
            self._crash("notify:reserved")
            resolved = {w.key: w.status is IssueState.RESOLVED for w in self.store.watches()}
            body = render_notification(chosen, channel, trigger.description, batch_id, resolved)
            try:
                if channel is Channel.ISSUE_CREATION:
                    receipt = self.forge.create_issue(cfg.repo, issue_title(len(chosen)), body)
                else:
                    receipt = self.forge.post_comment(target, body)
            except ForgeError as exc:
                logger.warning("posting to %s failed (%s); will retry next cycle", target.label, exc)
                self.store.release(batch_id)
                continue
            self._crash("notify:posted")
            self.store.finalize(batch_id, receipt, self.clock.now())
            self._crash("notify:finalized")
            records.append(NotificationRecord(channel, target, batch_id, tuple(f.finding_id for f in chosen), receipt))
        return records

    def reconcile_reservations(self, older_than: float | None = None) -> None:
        """Settle pending reservations: finalize if the post exists on the host, else release."""
        for batch in self.store.pending_batches(older_than):
            target = _target_from_json(batch["target"])
            try:
                receipt = self.forge.find_post(target, marker_line(batch["batch_id"]))
            except ForgeError as exc:
                logger.warning("cannot reconcile batch %s yet: %s", batch["batch_id"], exc)
                continue
            if receipt is not None:
                self.store.finalize(batch["batch_id"], receipt, self.clock.now())
            else:
                self.store.release(batch["batch_id"])

    def recover(self) -> list[ScanReport]:
        """Startup: settle reservations from a previous run, then resume queued jobs."""
        self.reconcile_reservations()
        return self.process_pending()

    # threaded operation

    def _claim_job(self):
        with self._lock:
            for job_id, repo, job in self.store.pending_jobs():
                if job_id in self._inflight or repo in self._busy_repos:
                    continue
                self._inflight.add(job_id)
                self._busy_repos.add(repo)
                return job_id, repo, job
        return None

    def _worker(self):
        while not self._stop.is_set():
            claimed = self._claim_job()
            if claimed is None:
                with self._wake:
                    self._wake.wait(timeout=0.5)
                continue
            job_id, repo, job = claimed
            try:
                report = self._run_job(job_id, job)
                if report.error and self.store.pending_jobs() and not self._stop.is_set():
                    with self._wake:
                        self._wake.wait(timeout=1.0)
            except Exception:
                logger.exception("scan job %s failed", job_id)
                self.store.complete_job(job_id)
            finally:
                with self._lock:
                    self._inflight.discard(job_id)
                    self._busy_repos.discard(repo)
                with self._wake:
                    self._wake.notify_all()

    def _monitor(self, interval: float):
        while not self._stop.wait(interval):
            try:
                self.tick()
            except Exception:
                logger.exception("monitor cycle failed")

    def start(self, workers: int = 2, monitor_interval: float = 60.0) -> None:
        self.reconcile_reservations()
        self._stop.clear()
        for i in range(max(1, workers)):
            t = threading.Thread(target=self._worker, name=f"scan-worker-{i}", daemon=True)
            t.start()
            self._threads.append(t)
        t = threading.Thread(target=self._monitor, args=(monitor_interval,), name="monitor", daemon=True)
        t.start()
        self._threads.append(t)

    def stop(self, timeout: float = 30.0) -> None:
        """Stop accepting work; in-flight scans finish, queued jobs stay persisted."""
        self._stop.set()
        with self._wake:
            self._wake.notify_all()
        for t in self._threads:
            t.join(timeout)
        self._threads.clear()

    def queue_depths(self) -> dict:
        with self._lock:
            inflight = len(self._inflight)
        return {"pending_jobs": len(self.store.pending_jobs()), "in_flight": inflight}
