"""Durable bot state in a single SQLite file.

Holds findings, watched issues, the notification log, webhook delivery ids
and the pending scan-job queue. Every mutation is one transaction, so the
file is valid after interruption at any point; SQLite's journal rolls back
a transaction that never committed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import sqlite3
import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .classifier.detector import SatdFinding
from .errors import StoreError
from .forge.base import IssueState, PostReceipt
from .refs import IssueKey

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DELIVERY_TTL = 24 * 3600.0

_SCHEMA = """
CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS findings (
    finding_id TEXT PRIMARY KEY,
    repo TEXT NOT NULL,
    branch TEXT,
    file_path TEXT NOT NULL,
    start_line INTEGER NOT NULL,
    end_line INTEGER NOT NULL,
    finding_json TEXT NOT NULL,
    status TEXT NOT NULL,
    disappeared INTEGER NOT NULL DEFAULT 0,
    first_seen REAL NOT NULL,
    last_seen REAL NOT NULL,
    last_commit_sha TEXT,
    last_pr INTEGER
);
CREATE TABLE IF NOT EXISTS finding_refs (
    finding_id TEXT NOT NULL REFERENCES findings(finding_id),
    issue_key TEXT NOT NULL,
    PRIMARY KEY (finding_id, issue_key)
);
CREATE TABLE IF NOT EXISTS watches (
    issue_key TEXT PRIMARY KEY,
    status TEXT NOT NULL,
    last_polled REAL,
    next_poll REAL NOT NULL,
    poll_interval REAL NOT NULL,
    failures INTEGER NOT NULL DEFAULT 0,
    etag TEXT
);
CREATE TABLE IF NOT EXISTS epochs (issue_key TEXT PRIMARY KEY, epoch INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS notifications (
    dedup_key TEXT PRIMARY KEY,
    finding_id TEXT NOT NULL,
    channel TEXT NOT NULL,
    target TEXT NOT NULL,
    batch_id TEXT,
    state TEXT NOT NULL,
    reserved_at REAL NOT NULL,
    posted_at REAL,
    receipt_json TEXT
);
CREATE TABLE IF NOT EXISTS deliveries (delivery_id TEXT PRIMARY KEY, received_at REAL NOT NULL);
CREATE TABLE IF NOT EXISTS jobs (
    job_id INTEGER PRIMARY KEY AUTOINCREMENT,
    repo TEXT NOT NULL,
    payload_json TEXT NOT NULL,
    created_at REAL NOT NULL
);
CREATE INDEX IF NOT EXISTS findings_repo ON findings(repo, branch, file_path);
CREATE INDEX IF NOT EXISTS refs_issue ON finding_refs(issue_key);
CREATE INDEX IF NOT EXISTS notifications_batch ON notifications(batch_id);
"""


class FindingStatus(str, Enum):
    ON_HOLD = "OnHold"
    READY = "ReadyToBeFixed"
    DISMISSED = "Dismissed"


class RecordResult(str, Enum):
    INSERTED = "Inserted"
    ALREADY_PRESENT = "AlreadyPresent"


@dataclass
class StoredFinding:
    finding_id: str
    repo: str
    branch: str | None
    finding: SatdFinding
    status: FindingStatus
    first_seen: float
    last_seen: float
    disappeared: bool = False
    last_commit_sha: str | None = None
    last_pr: int | None = None

    @property
    def ref_keys(self) -> list[IssueKey]:
        return sorted({r.key for r in self.finding.refs})

    def to_dict(self) -> dict:
        return {
            "finding_id": self.finding_id,
            "repo": self.repo,
            "branch": self.branch,
            "status": self.status.value,
            "disappeared": self.disappeared,
            "first_seen": self.first_seen,
            "last_seen": self.last_seen,
            "last_commit_sha": self.last_commit_sha,
            "last_pr": self.last_pr,
            "finding": self.finding.to_dict(),
        }


@dataclass
class WatchedIssue:
    key: IssueKey
    status: IssueState
    last_polled: float | None
    next_poll: float
    poll_interval: float
    failures: int
    etag: str | None
    linked_findings: set[str] = field(default_factory=set)

    def to_dict(self) -> dict:
        return {
            "issue": str(self.key),
            "url": self.key.url,
            "status": self.status.value,
            "last_polled": self.last_polled,
            "next_poll": self.next_poll,
            "failures": self.failures,
            "linked_findings": sorted(self.linked_findings),
        }


@dataclass
class UpsertResult:
    new: list[str] = field(default_factory=list)
    refreshed: list[str] = field(default_factory=list)
    disappeared: list[str] = field(default_factory=list)
    ids: list[str] = field(default_factory=list)
    newly_watched: list[IssueKey] = field(default_factory=list)


def _normalize(text: str) -> str:
    return " ".join(text.split())


def finding_identity(repo: str, finding: SatdFinding, ordinal: int = 0) -> str:
    """Stable id from repo, path, normalized text and referenced issues; never line numbers."""
    h = hashlib.sha256()
    for part in (repo, finding.comment.file_path, _normalize(finding.comment.body_text)):
        h.update(part.encode("utf-8"))
        h.update(b"\0")
    for key in sorted({r.key for r in finding.refs}):
        h.update(str(key).encode("utf-8"))
        h.update(b"\0")
    h.update(str(ordinal).encode())
    return h.hexdigest()[:20]


def assign_ids(repo: str, findings) -> list[str]:
    """Ids for one scan; identical comments in one file are told apart by order."""
    counts: dict[str, int] = {}
    ordered = sorted(range(len(findings)), key=lambda i: (findings[i].comment.file_path, findings[i].comment.start_line))
    result = [None] * len(findings)
    for i in ordered:
        f = findings[i]
        base = finding_identity(repo, f, 0)
        n = counts.get(base, 0)
        counts[base] = n + 1
        result[i] = base if n == 0 else finding_identity(repo, f, n)
    return result


class Store:
    def __init__(self, path, fault_hook=None):
        self.path = str(path)
        self._lock = threading.RLock()
        self._fault = fault_hook or (lambda point: None)
        if self.path != ":memory:":
            Path(self.path).parent.mkdir(parents=True, exist_ok=True)
        try:
            self._db = sqlite3.connect(self.path, isolation_level=None, check_same_thread=False)
            self._db.execute("PRAGMA journal_mode=WAL")
            self._db.execute("PRAGMA synchronous=FULL")
            self._db.execute("PRAGMA foreign_keys=ON")
            with self._tx("schema"):
                for stmt in _SCHEMA.strip().split(";"):
                    if stmt.strip():
                        self._db.execute(stmt)
                row = self._db.execute("SELECT value FROM meta WHERE key='schema_version'").fetchone()
                if row is None:
                    self._db.execute("INSERT INTO meta VALUES ('schema_version', ?)", (str(SCHEMA_VERSION),))
                elif int(row[0]) != SCHEMA_VERSION:
                    raise StoreError(f"store schema version {row[0]} is not supported (expected {SCHEMA_VERSION})")
        except sqlite3.Error as exc:
            raise StoreError(f"cannot open store {self.path}: {exc}") from exc

    def close(self):
        with self._lock:
            self._db.close()

    @contextmanager
    def _tx(self, name: str):
        with self._lock:
            self._db.execute("BEGIN IMMEDIATE")
            try:
                yield self._db
                self._fault(f"store:{name}:before-commit")
                self._db.execute("COMMIT")
            except BaseException:
                if self._db.in_transaction:
                    self._db.execute("ROLLBACK")
                raise
            self._fault(f"store:{name}:after-commit")

    # findings

    def _row_to_finding(self, row) -> StoredFinding:
        return StoredFinding(
            finding_id=row["finding_id"],
            repo=row["repo"],
            branch=row["branch"],
            finding=SatdFinding.from_dict(json.loads(row["finding_json"])),
            status=FindingStatus(row["status"]),
            first_seen=row["first_seen"],
            last_seen=row["last_seen"],
            disappeared=bool(row["disappeared"]),
            last_commit_sha=row["last_commit_sha"],
            last_pr=row["last_pr"],
        )

    def _query(self, sql, params=()):
        with self._lock:
            cur = self._db.execute(sql, params)
            names = [d[0] for d in cur.description]
            return [dict(zip(names, row)) for row in cur.fetchall()]

    def get_finding(self, finding_id: str) -> StoredFinding | None:
        rows = self._query("SELECT * FROM findings WHERE finding_id=?", (finding_id,))
        return self._row_to_finding(rows[0]) if rows else None

    def findings(self, repo: str | None = None, live_only: bool = False, status: FindingStatus | None = None):
        sql = "SELECT * FROM findings WHERE 1=1"
        params: list = []
        if repo is not None:
            sql += " AND repo=?"
            params.append(repo)
        if live_only:
            sql += " AND disappeared=0 AND status!=?"
            params.append(FindingStatus.DISMISSED.value)
        if status is not None:
            sql += " AND status=?"
            params.append(status.value)
        sql += " ORDER BY file_path, start_line, finding_id"
        return [self._row_to_finding(r) for r in self._query(sql, params)]

    def upsert_findings(
        self,
        repo: str,
        findings,
        *,
        now: float,
        branch: str | None = None,
        commit_sha: str | None = None,
        pr_number: int | None = None,
        scanned_paths=None,
        full_scan: bool = False,
        poll_interval: float = 900.0,
    ) -> UpsertResult:
        """Insert or refresh one scan's findings atomically and update the watch list.

        Findings previously seen on ``branch`` in ``scanned_paths`` (or anywhere
        on the branch when ``full_scan``) that are absent now are marked
        disappeared. Pull-request scans never mark anything disappeared.
        """
        findings = list(findings)
        ids = assign_ids(repo, findings)
        result = UpsertResult(ids=ids)
        with self._tx("upsert") as db:
            for fid, finding in zip(ids, findings):
                blob = json.dumps(finding.to_dict(), sort_keys=True)
                row = db.execute("SELECT status FROM findings WHERE finding_id=?", (fid,)).fetchone()
                if row is None:
                    db.execute(
                        "INSERT INTO findings VALUES (?,?,?,?,?,?,?,?,0,?,?,?,?)",
                        (
                            fid, repo, branch, finding.comment.file_path,
                            finding.comment.start_line, finding.comment.end_line, blob,
                            FindingStatus.ON_HOLD.value, now, now, commit_sha, pr_number,
                        ),
                    )
                    for key in sorted({r.key for r in finding.refs}):
                        db.execute("INSERT OR IGNORE INTO finding_refs VALUES (?,?)", (fid, str(key)))
                    result.new.append(fid)
                else:
                    db.execute(
                        # a finding that comes back re-waits for fresh poll results
                        """UPDATE findings SET start_line=?, end_line=?, finding_json=?, last_seen=?,
                           status=CASE WHEN disappeared=1 AND status=? THEN ? ELSE status END,
                           disappeared=0,
                           branch=COALESCE(?, branch),
                           last_commit_sha=COALESCE(?, last_commit_sha),
                           last_pr=COALESCE(?, last_pr)
                           WHERE finding_id=?""",
                        (
                            finding.comment.start_line, finding.comment.end_line, blob, now,
                            FindingStatus.READY.value, FindingStatus.ON_HOLD.value,
                            None if pr_number is not None else branch,
                            commit_sha if pr_number is None else None,
                            pr_number, fid,
                        ),
                    )
                    result.refreshed.append(fid)
            if pr_number is None and branch is not None and (full_scan or scanned_paths):
                current = set(ids)
                sql = "SELECT finding_id, file_path FROM findings WHERE repo=? AND branch=? AND disappeared=0"
                for fid, path in db.execute(sql, (repo, branch)).fetchall():
                    if fid in current:
                        continue
                    if full_scan or path in scanned_paths:
                        db.execute("UPDATE findings SET disappeared=1 WHERE finding_id=?", (fid,))
                        result.disappeared.append(fid)
            result.newly_watched = self._sync_watches(db, now, poll_interval)
            self._refresh_readiness(db, ids)
        return result

    def _live_refs(self, db) -> dict[str, list[str]]:
        rows = db.execute(
            """SELECT r.issue_key, r.finding_id FROM finding_refs r JOIN findings f USING (finding_id)
               WHERE f.disappeared=0 AND f.status!=?""",
            (FindingStatus.DISMISSED.value,),
        ).fetchall()
        links: dict[str, list[str]] = {}
        for key, fid in rows:
            links.setdefault(key, []).append(fid)
        return links

    def _sync_watches(self, db, now: float, poll_interval: float) -> list[IssueKey]:
        links = self._live_refs(db)
        watched = {k for (k,) in db.execute("SELECT issue_key FROM watches").fetchall()}
        added = []
        for key in sorted(set(links) - watched):
            db.execute(
                "INSERT INTO watches VALUES (?,?,NULL,?,?,0,NULL)",
                (key, IssueState.UNKNOWN.value, now, poll_interval),
            )
            db.execute("INSERT OR IGNORE INTO epochs VALUES (?,0)", (key,))
            added.append(IssueKey.parse(key))
        for key in sorted(set(links) & watched):
            db.execute(
                "UPDATE watches SET poll_interval=MIN(poll_interval, ?) WHERE issue_key=?", (poll_interval, key)
            )
        for key in sorted(watched - set(links)):
            db.execute("DELETE FROM watches WHERE issue_key=?", (key,))
        return added

    def _refresh_readiness(self, db, finding_ids) -> list[str]:
        flipped = []
        for fid in finding_ids:
            row = db.execute("SELECT status, disappeared FROM findings WHERE finding_id=?", (fid,)).fetchone()
            if row is None or row[0] != FindingStatus.ON_HOLD.value:
                continue
            states = db.execute(
                """SELECT w.status FROM finding_refs r LEFT JOIN watches w USING (issue_key)
                   WHERE r.finding_id=?""",
                (fid,),
            ).fetchall()
            if states and all(s == IssueState.RESOLVED.value for (s,) in states):
                db.execute("UPDATE findings SET status=? WHERE finding_id=?", (FindingStatus.READY.value, fid))
                flipped.append(fid)
        return flipped

    def dismiss(self, finding_id: str, now: float) -> None:
        with self._tx("dismiss") as db:
            db.execute("UPDATE findings SET status=? WHERE finding_id=?", (FindingStatus.DISMISSED.value, finding_id))
            self._sync_watches(db, now, 900.0)

    # watches

    def watches(self) -> list[WatchedIssue]:
        rows = self._query("SELECT * FROM watches ORDER BY issue_key")
        with self._lock:
            links = self._live_refs(self._db)
        return [
            WatchedIssue(
                key=IssueKey.parse(r["issue_key"]),
                status=IssueState(r["status"]),
                last_polled=r["last_polled"],
                next_poll=r["next_poll"],
                poll_interval=r["poll_interval"],
                failures=r["failures"],
                etag=r["etag"],
                linked_findings=set(links.get(r["issue_key"], ())),
            )
            for r in rows
        ]

    def watch(self, key: IssueKey) -> WatchedIssue | None:
        for w in self.watches():
            if w.key == key:
                return w
        return None

    def due_watches(self, now: float) -> list[WatchedIssue]:
        return [w for w in self.watches() if w.next_poll <= now]

    def epoch(self, key: IssueKey) -> int:
        rows = self._query("SELECT epoch FROM epochs WHERE issue_key=?", (str(key),))
        return rows[0]["epoch"] if rows else 0

    def record_status(self, key: IssueKey, state: IssueState, now: float, etag: str | None = None) -> list[str]:
        """Store a polled status; returns findings that became Ready-to-be-fixed.

        Resolved -> Open (reopen) reverts linked Ready findings to OnHold and
        bumps the issue's epoch so a later resolution notifies afresh.
        """
        skey = str(key)
        with self._tx("status") as db:
            row = db.execute("SELECT status, poll_interval FROM watches WHERE issue_key=?", (skey,)).fetchone()
            if row is None:
                return []
            previous, interval = IssueState(row[0]), row[1]
            db.execute(
                """UPDATE watches SET last_polled=?, next_poll=?, failures=0,
                   etag=COALESCE(?, etag), status=? WHERE issue_key=?""",
                (now, now + interval, etag, (previous if state is IssueState.UNKNOWN else state).value, skey),
            )
            if state is IssueState.RESOLVED and previous is not IssueState.RESOLVED:
                return self._mark_resolved(db, skey)
            if state is IssueState.OPEN and previous is IssueState.RESOLVED:
                db.execute("UPDATE epochs SET epoch=epoch+1 WHERE issue_key=?", (skey,))
                linked = [fid for (fid,) in db.execute("SELECT finding_id FROM finding_refs WHERE issue_key=?", (skey,))]
                for fid in linked:
                    db.execute(
                        "UPDATE findings SET status=? WHERE finding_id=? AND status=?",
                        (FindingStatus.ON_HOLD.value, fid, FindingStatus.READY.value),
                    )
            return []

    def _mark_resolved(self, db, skey: str) -> list[str]:
        db.execute("UPDATE watches SET status=? WHERE issue_key=?", (IssueState.RESOLVED.value, skey))
        linked = [fid for (fid,) in db.execute("SELECT finding_id FROM finding_refs WHERE issue_key=? ORDER BY finding_id", (skey,))]
        return self._refresh_readiness(db, linked)

    def mark_resolved(self, key: IssueKey, now: float | None = None) -> list[str]:
        skey = str(key)
        with self._tx("resolve") as db:
            if db.execute("SELECT 1 FROM watches WHERE issue_key=?", (skey,)).fetchone() is None:
                return []
            if now is not None:
                db.execute("UPDATE watches SET last_polled=? WHERE issue_key=?", (now, skey))
            return self._mark_resolved(db, skey)

    def record_poll_failure(self, key: IssueKey, now: float, base_delay: float, max_delay: float) -> float:
        """Exponential backoff for one issue; returns the delay applied."""
        skey = str(key)
        with self._tx("backoff") as db:
            row = db.execute("SELECT failures FROM watches WHERE issue_key=?", (skey,)).fetchone()
            if row is None:
                return 0.0
            failures = row[0] + 1
            delay = min(base_delay * 2 ** (failures - 1), max_delay)
            db.execute(
                "UPDATE watches SET failures=?, next_poll=? WHERE issue_key=?", (failures, now + delay, skey)
            )
            return delay

    # notifications

    def record_notification(self, dedup_key: str, receipt: PostReceipt | None, *, finding_id: str = "", channel: str = "", target: str = "", now: float = 0.0) -> RecordResult:
        with self._tx("notify") as db:
            cur = db.execute(
                "INSERT OR IGNORE INTO notifications VALUES (?,?,?,?,NULL,'done',?,?,?)",
                (dedup_key, finding_id, channel, target, now, now, json.dumps(receipt.to_dict()) if receipt else None),
            )
            return RecordResult.INSERTED if cur.rowcount == 1 else RecordResult.ALREADY_PRESENT

    def reserve(self, entries, batch_id: str, now: float) -> list[str]:
        """Insert pending notifications; returns the dedup keys that were free."""
        reserved = []
        with self._tx("reserve") as db:
            for dedup_key, finding_id, channel, target in entries:
                cur = db.execute(
                    "INSERT OR IGNORE INTO notifications VALUES (?,?,?,?,?,'pending',?,NULL,NULL)",
                    (dedup_key, finding_id, channel, target, batch_id, now),
                )
                if cur.rowcount == 1:
                    reserved.append(dedup_key)
        return reserved

    def finalize(self, batch_id: str, receipt: PostReceipt, now: float) -> None:
        with self._tx("finalize") as db:
            db.execute(
                "UPDATE notifications SET state='done', posted_at=?, receipt_json=? WHERE batch_id=? AND state='pending'",
                (now, json.dumps(receipt.to_dict()), batch_id),
            )

    def release(self, batch_id: str) -> None:
        with self._tx("release") as db:
            db.execute("DELETE FROM notifications WHERE batch_id=? AND state='pending'", (batch_id,))

    def pending_batches(self, older_than: float | None = None) -> list[dict]:
        sql = "SELECT batch_id, channel, target, MIN(reserved_at) AS reserved_at FROM notifications WHERE state='pending'"
        sql += " GROUP BY batch_id, channel, target ORDER BY batch_id"
        rows = self._query(sql)
        if older_than is not None:
            rows = [r for r in rows if r["reserved_at"] <= older_than]
        return rows

    def notified(self, dedup_key: str) -> bool:
        return bool(self._query("SELECT 1 FROM notifications WHERE dedup_key=?", (dedup_key,)))

    def notifications(self) -> list[dict]:
        rows = self._query("SELECT * FROM notifications ORDER BY reserved_at, dedup_key")
        for r in rows:
            r["receipt"] = json.loads(r.pop("receipt_json")) if r.get("receipt_json") else None
        return rows

    # webhook deliveries and scan jobs

    def accept_delivery(self, delivery_id: str, now: float, job: dict | None = None, repo: str = "") -> bool:
        """Record a delivery id (and its scan job) once; False for a repeat within the TTL."""
        with self._tx("delivery") as db:
            db.execute("DELETE FROM deliveries WHERE received_at < ?", (now - DELIVERY_TTL,))
            cur = db.execute("INSERT OR IGNORE INTO deliveries VALUES (?,?)", (delivery_id, now))
            if cur.rowcount != 1:
                return False
            if job is not None:
                db.execute(
                    "INSERT INTO jobs (repo, payload_json, created_at) VALUES (?,?,?)",
                    (repo, json.dumps(job, sort_keys=True), now),
                )
            return True

    def enqueue_job(self, repo: str, job: dict, now: float) -> int:
        with self._tx("enqueue") as db:
            cur = db.execute(
                "INSERT INTO jobs (repo, payload_json, created_at) VALUES (?,?,?)",
                (repo, json.dumps(job, sort_keys=True), now),
            )
            return cur.lastrowid

    def pending_jobs(self) -> list[tuple[int, str, dict]]:
        rows = self._query("SELECT job_id, repo, payload_json FROM jobs ORDER BY job_id")
        return [(r["job_id"], r["repo"], json.loads(r["payload_json"])) for r in rows]

    def complete_job(self, job_id: int) -> None:
        with self._tx("job-done") as db:
            db.execute("DELETE FROM jobs WHERE job_id=?", (job_id,))

    # inspection

    def integrity_ok(self) -> bool:
        with self._lock:
            return self._db.execute("PRAGMA integrity_check").fetchone()[0] == "ok"

    def check_invariants(self) -> list[str]:
        """Referential and status invariants; returns human-readable violations."""
        problems = []
        watches = {str(w.key): w for w in self.watches()}
        by_id = {f.finding_id: f for f in self.findings()}
        for key, w in watches.items():
            if not w.linked_findings:
                problems.append(f"watch {key} has no live findings")
            for fid in w.linked_findings:
                if fid not in by_id:
                    problems.append(f"watch {key} links missing finding {fid}")
        for f in by_id.values():
            if f.disappeared or f.status is FindingStatus.DISMISSED:
                continue
            for key in f.ref_keys:
                if str(key) not in watches:
                    problems.append(f"finding {f.finding_id} references unwatched {key}")
            if f.status is FindingStatus.READY and not all(
                str(k) in watches and watches[str(k)].status is IssueState.RESOLVED for k in f.ref_keys
            ):
                problems.append(f"finding {f.finding_id} is ready but not all references are resolved")
        return problems

    def export(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "findings": [f.to_dict() for f in self.findings()],
            "watches": [w.to_dict() for w in self.watches()],
            "notifications": self.notifications(),
            "pending_jobs": [{"job_id": j, "repo": r, "job": p} for j, r, p in self.pending_jobs()],
        }
