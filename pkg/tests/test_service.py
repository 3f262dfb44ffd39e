import json
import time

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satd_sentinel.config import Config
from satd_sentinel.forge.base import IssueState, TargetKind
from satd_sentinel.harness import Harness
from satd_sentinel.refs import IssueKey, RepoId
from satd_sentinel.service import BotService, sign, verify_signature
from satd_sentinel.store import FindingStatus, Store

APP = RepoId.parse("acme/app")
STUDY = RepoId.parse("fixme-study/searcher")
MOCKITO = RepoId.parse("mockito/mockito")

SATD = "class A {\n  // TODO: drop this retry once #1 is fixed\n  int r;\n}\n"


def config(repo="acme/app", channels=None, **extra):
    block = {"repo": repo, "branches": ["main"], **extra}
    if channels is not None:
        block["output_channels"] = channels
    return Config.from_dict({"repos": [block], "service": {"full_scan_interval": 0}})


@pytest.fixture
def h(bundled_model):
    return Harness(config(), model=bundled_model)


def headers(body, secret="harness-secret", event="push", delivery="d-1"):
    return {"X-Hub-Signature-256": sign(secret, body), "X-GitHub-Event": event, "X-GitHub-Delivery": delivery}


# webhook intake


def test_signature_helpers():
    body = b'{"a": 1}'
    assert verify_signature("s", body, sign("s", body))
    assert not verify_signature("s", body, sign("t", body))
    assert not verify_signature("s", body, None)
    assert not verify_signature("s", body, "sha1=abc")


@given(st.binary(min_size=1, max_size=200), st.data())
@settings(max_examples=150, deadline=None)
def test_tampered_body_rejected(body, data):
    secret = "k3y"
    header = sign(secret, body)
    i = data.draw(st.integers(0, len(body) - 1))
    flip = data.draw(st.integers(1, 255))
    tampered = body[:i] + bytes([body[i] ^ flip]) + body[i + 1:]
    assert verify_signature(secret, body, header)
    assert not verify_signature(secret, tampered, header)


def test_bad_signature_is_401_and_stores_nothing(h):
    payload = h.forge.push(APP, "main", {"A.java": SATD})
    result = h.emit_signed_webhook("push", payload, corrupt=True)
    assert (result.accepted, result.status) == (False, 401)
    assert h.service.store.pending_jobs() == []


def test_no_secret_configured(h, monkeypatch):
    monkeypatch.delenv("SATD_SENTINEL_WEBHOOK_SECRET", raising=False)
    svc = BotService(h.config, h.forge, Store(":memory:"), h.clock)
    assert svc.handle_webhook(b"{}", {}).status == 500


@pytest.mark.parametrize(
    "body,hdr_delivery,status",
    [(b"not json", "d", 400), (b"[1]", "d", 400), (b"{}", "", 400), (b'{"repository": {}}', "d", 400)],
)
def test_malformed_requests(h, body, hdr_delivery, status):
    hdrs = headers(body, delivery=hdr_delivery)
    assert h.service.handle_webhook(body, hdrs).status == status


def test_ping_and_unconfigured_repo(h):
    assert h.service.handle_webhook(b"{}", headers(b"{}", event="ping")).status == 200
    body = json.dumps({"repository": {"full_name": "other/repo"}, "ref": "refs/heads/main", "after": "a" * 40}).encode()
    r = h.service.handle_webhook(body, headers(body))
    assert (r.accepted, r.status) == (False, 404)


def test_duplicate_delivery_ignored(h):
    payload = h.forge.push(APP, "main", {"A.java": SATD})
    first = h.emit_signed_webhook("push", payload, delivery_id="same")
    second = h.emit_signed_webhook("push", payload, delivery_id="same")
    assert (first.status, first.jobs) == (202, 1)
    assert (second.status, second.reason) == (200, "duplicate delivery ignored")
    assert len(h.service.store.pending_jobs()) == 1


def test_header_names_case_insensitive(h):
    payload = h.forge.push(APP, "main", {"A.java": SATD})
    body = json.dumps(payload).encode()
    hdrs = {k.lower(): v for k, v in headers(body).items()}
    assert h.service.handle_webhook(body, hdrs).status == 202


def test_branch_filter(h):
    h.forge.seed_issue(APP, 1, "closed")
    _, ack = h.push(APP, "develop", {"A.java": SATD})
    assert (ack.accepted, ack.jobs, ack.reason) == (True, 0, "event ignored")
    payload = h.forge.open_pull_request(APP, "f", {"A.java": SATD}, base="develop")
    assert h.emit_signed_webhook("pull_request", payload).jobs == 0
    h.advance(3600)
    assert h.service.store.findings() == [] and h.forge.outbox == []


def test_ignored_events(h):
    payload = h.forge.open_pull_request(APP, "f", {"A.java": SATD})
    payload["action"] = "closed"
    assert h.emit_signed_webhook("pull_request", payload).jobs == 0
    deleted = {"ref": "refs/heads/main", "after": "0" * 40, "repository": {"full_name": "acme/app"}, "commits": []}
    assert h.emit_signed_webhook("push", deleted).jobs == 0
    tag = dict(deleted, ref="refs/tags/v1", after="b" * 40)
    assert h.emit_signed_webhook("push", tag).jobs == 0
    assert h.emit_signed_webhook("issues", {"repository": {"full_name": "acme/app"}}).jobs == 0


def test_webhook_ack_is_fast_for_big_pushes(h):
    files = {f"src/F{i}.java": SATD for i in range(400)}
    payload = h.forge.push(APP, "main", files)
    start = time.perf_counter()
    ack = h.emit_signed_webhook("push", payload)
    assert ack.status == 202
    assert time.perf_counter() - start < 1.0
    assert h.service.store.findings() == []


# scanning


def test_study_fixture_push(bundled_model, mock_project_files):
    h = Harness(config("fixme-study/searcher"), model=bundled_model)
    for n in range(1, 5):
        h.forge.seed_issue(STUDY, n)
    h.forge.seed_issue(MOCKITO, 769, "closed")
    payload, ack = h.push(STUDY, "main", mock_project_files)
    assert ack.status == 202
    store = h.service.store
    findings = store.findings()
    assert len(findings) == 9
    assert len(store.watches()) == 5
    ready = store.findings(status=FindingStatus.READY)
    assert [f.finding.comment.file_path for f in ready] == ["src/test/java/searcher/TfIdfSearcherTest.java"]
    (post,) = h.forge.outbox
    assert post.target.kind is TargetKind.COMMIT and post.target.sha == payload["after"]
    assert "TfIdfSearcherTest.java:13" in post.body
    assert "mockito/mockito#769" in post.body


def test_run_scan_report_and_idempotent_rescan(bundled_model, mock_project_files):
    h = Harness(config("fixme-study/searcher"), model=bundled_model)
    h.forge.seed_issue(MOCKITO, 769, "closed")
    payload = h.forge.push(STUDY, "main", mock_project_files)
    job = {"kind": "push", "repo": "fixme-study/searcher", "branch": "main", "after": payload["after"],
           "commits": payload["commits"]}
    first = h.service.run_scan(job)
    assert (first.files_scanned, first.comments, first.findings) == (8, 20, 9)
    assert len(first.new) == 9 and len(first.ready_now) == 1
    posts = len(h.forge.outbox)
    second = h.service.run_scan(job)
    assert second.summary() == first.summary()
    assert second.new == [] and len(h.forge.outbox) == posts


def test_push_without_sources(h):
    _, ack = h.push(APP, "main", {"README.md": "# hi #1"})
    assert ack.status == 202
    assert h.service.store.findings() == []


def test_pr_comment_for_already_closed_issue(h):
    h.forge.seed_issue(APP, 1, "closed")
    payload, _ = h.open_pr(APP, "f", {"A.java": SATD})
    (post,) = h.forge.outbox
    assert post.target.kind is TargetKind.PULL_REQUEST and post.target.number == payload["number"]
    assert "confidence: " in post.body and "A.java:2" in post.body


def test_aggregation_two_findings_one_comment(h):
    h.forge.seed_issue(APP, 1, "closed")
    h.forge.seed_issue(APP, 2, "closed")
    other = "class B {\n  // FIXME: workaround until #2 is resolved\n}\n"
    h.open_pr(APP, "f", {"A.java": SATD, "B.java": other})
    (post,) = h.forge.outbox
    assert "A.java:2" in post.body and "B.java:2" in post.body
    h.advance(3600)
    # the poll cycle only adds the issue report
    assert [p.target.kind for p in h.forge.outbox] == [TargetKind.PULL_REQUEST, TargetKind.NEW_ISSUE]
    h.advance(3600)
    assert len(h.forge.outbox) == 2


def test_removed_file_marks_disappeared(h):
    h.push(APP, "main", {"A.java": SATD})
    assert len(h.service.store.findings(live_only=True)) == 1
    h.push(APP, "main", {"A.java": None})
    assert h.service.store.findings(live_only=True) == []
    assert h.service.store.watches() == []


def test_report_issue_is_not_rescanned(h):
    h.forge.seed_issue(APP, 1)
    h.push(APP, "main", {"A.java": SATD})
    h.forge.close_issue(APP, 1)
    h.advance(901)
    issue_post = h.forge.posts(TargetKind.NEW_ISSUE)[0]
    # someone pastes the report into a source file
    pasted = "/*\n" + issue_post.body.replace("*/", "* /") + "\n*/\nclass R {}\n"
    h.push(APP, "main", {"Report.java": pasted})
    assert len(h.service.store.findings()) == 1


def test_forge_failure_while_listing_files_defers_job(h):
    payload = h.forge.push(APP, "main", {"A.java": SATD})
    h.forge.inject_failure("Timeout", "list_changed_files")
    h.emit_signed_webhook("push", payload)
    (report,) = h.service.process_pending()
    assert report.error and len(h.service.store.pending_jobs()) == 1
    (report,) = h.service.process_pending()
    assert report.error is None and h.service.store.pending_jobs() == []


def test_unknown_sha_fails_job_without_retry(h):
    payload = {"ref": "refs/heads/main", "after": "c" * 40, "repository": {"full_name": "acme/app"},
               "commits": [{"added": ["A.java"]}]}
    h.emit_signed_webhook("push", payload)
    (report,) = h.service.process_pending()
    assert "unknown sha" in report.error
    assert h.service.store.pending_jobs() == []


def test_status_fetch_failure_at_scan_time_is_retried_by_monitor(h):
    h.forge.seed_issue(APP, 1, "closed")
    h.forge.inject_failure("Timeout", "fetch_issue_status")
    h.push(APP, "main", {"A.java": SATD})
    assert h.forge.outbox == []
    assert h.service.store.watches()[0].status is IssueState.UNKNOWN
    h.advance(1)
    assert [p.target.kind for p in h.forge.outbox] == [TargetKind.COMMIT, TargetKind.NEW_ISSUE]


# polling


def test_poll_flip_returned_once(h):
    h.forge.seed_issue(APP, 1)
    h.push(APP, "main", {"A.java": SATD})
    assert h.service.poll_watched_issues(h.clock.now() + 901) == []
    h.forge.close_issue(APP, 1)
    flipped = h.service.poll_watched_issues(h.clock.now() + 2000)
    assert len(flipped) == 1
    assert h.service.poll_watched_issues(h.clock.now() + 4000) == []


def test_poll_only_due_issues(h):
    h.forge.seed_issue(APP, 1)
    h.push(APP, "main", {"A.java": SATD})
    calls = h.forge.calls["fetch_issue_status"]
    h.advance(100)
    assert h.forge.calls["fetch_issue_status"] == calls
    h.advance(800)
    assert h.forge.calls["fetch_issue_status"] == calls + 1


def test_middle_issue_timeout_backs_off(h):
    for n in (1, 2, 3):
        h.forge.seed_issue(APP, n)
    src = "class A {\n" + "".join(f"  // TODO: remove once #{n} is fixed\n  int f{n};\n" for n in (1, 2, 3)) + "}\n"
    h.push(APP, "main", {"A.java": src})
    for n in (1, 2, 3):
        h.forge.close_issue(APP, n)
    store = h.service.store

    real = h.forge.fetch_issue_status

    def flaky(key, etag=None):
        if key.number == 2:
            from satd_sentinel.errors import TransportError
            raise TransportError("simulated timeout")
        return real(key, etag)

    h.forge.fetch_issue_status = flaky
    now = h.clock.now() + 900
    flipped = h.service.poll_watched_issues(now)
    assert len(flipped) == 2
    w2 = store.watch(IssueKey("github.com", "acme", "app", 2))
    assert w2.failures == 1 and w2.next_poll == now + 60
    assert w2.status is IssueState.OPEN
    h.forge.fetch_issue_status = real
    assert len(h.service.poll_watched_issues(now + 60)) == 1


@pytest.mark.parametrize("kind", ["Http404", "Http401"])
def test_non_retryable_poll_error_records_unknown_without_backoff(h, kind):
    h.forge.seed_issue(APP, 1)
    h.push(APP, "main", {"A.java": SATD})
    h.forge.inject_failure(kind, "fetch_issue_status")
    h.advance(901)
    w = h.service.store.watches()[0]
    assert w.failures == 0 and w.status is IssueState.OPEN


def test_reopen_then_close_notifies_again(h):
    h.forge.seed_issue(APP, 1)
    h.push(APP, "main", {"A.java": SATD})
    h.forge.close_issue(APP, 1)
    h.advance(901)
    assert len(h.forge.outbox) == 2
    h.forge.reopen_issue(APP, 1)
    h.advance(901)
    h.forge.close_issue(APP, 1)
    h.advance(901)
    assert len(h.forge.outbox) == 4


# notifications


def test_confidence_floor_excludes(bundled_model):
    h = Harness(config(confidence_floor=1.0), model=bundled_model)
    h.forge.seed_issue(APP, 1, "closed")
    h.push(APP, "main", {"A.java": SATD})
    h.advance(901)
    assert h.forge.outbox == []


def test_channel_selection(bundled_model):
    h = Harness(config(channels=["IssueCreation"]), model=bundled_model)
    h.forge.seed_issue(APP, 1, "closed")
    h.push(APP, "main", {"A.java": SATD})
    assert h.forge.outbox == []
    h.advance(901)
    assert [p.target.kind for p in h.forge.outbox] == [TargetKind.NEW_ISSUE]


def test_post_failure_releases_and_retries(h):
    h.forge.seed_issue(APP, 1)
    h.push(APP, "main", {"A.java": SATD})
    h.forge.close_issue(APP, 1)
    h.forge.inject_failure("Http500", "create_issue")
    h.advance(901)
    assert [p.target.kind for p in h.forge.outbox] == [TargetKind.COMMIT]
    assert h.service.store.pending_batches() == []
    h.advance(901)
    assert [p.target.kind for p in h.forge.outbox] == [TargetKind.COMMIT, TargetKind.NEW_ISSUE]


def test_reconcile_finalizes_posted_batch(h):
    h.forge.seed_issue(APP, 1)
    h.push(APP, "main", {"A.java": SATD})
    h.forge.close_issue(APP, 1)
    crashed = []

    def hook(point):
        if point == "notify:posted" and not crashed:
            crashed.append(point)
            raise RuntimeError("killed")

    h.service._crash = hook
    with pytest.raises(RuntimeError):
        h.advance(901)
    assert len(h.service.store.pending_batches()) == 1
    h.service._crash = lambda p: None
    h.service.reconcile_reservations()
    assert h.service.store.pending_batches() == []
    h.advance(901)
    channels = [p.target.kind for p in h.forge.outbox]
    assert channels.count(TargetKind.COMMIT) == 1 and channels.count(TargetKind.NEW_ISSUE) == 1


def test_export_and_full_scan(h):
    h.forge.seed_issue(APP, 1)
    h.push(APP, "main", {"A.java": SATD, "B.java": "class B {}"})
    cfg = h.config.find_repo("acme/app")
    report = h.service.full_scan(cfg, "main")
    assert (report.files_scanned, report.findings, report.new) == (2, 1, [])
    data = h.service.store.export()
    assert len(data["findings"]) == 1 and len(data["watches"]) == 1


def test_weekly_full_scan_reconciles(bundled_model):
    cfg = Config.from_dict({"repos": [{"repo": "acme/app"}], "service": {"full_scan_interval": "1d"}})
    h = Harness(cfg, model=bundled_model)
    h.forge.seed_issue(APP, 1)
    h.push(APP, "main", {"A.java": SATD})
    h.advance(1)
    # the comment vanishes without a webhook (e.g. missed delivery)
    h.forge.commit(APP, "main", {"A.java": "class A {}"})
    h.advance(86400)
    assert h.service.store.findings(live_only=True) == []


def test_threaded_workers_process_jobs(bundled_model):
    h = Harness(config(), model=bundled_model)
    h.forge.seed_issue(APP, 1, "closed")
    h.service.start(workers=2, monitor_interval=3600)
    try:
        payload = h.forge.push(APP, "main", {"A.java": SATD})
        assert h.emit_signed_webhook("push", payload).status == 202
        deadline = time.time() + 10
        while h.service.store.pending_jobs() and time.time() < deadline:
            time.sleep(0.02)
        assert h.service.queue_depths()["pending_jobs"] == 0
    finally:
        h.service.stop()
    assert len(h.forge.outbox) == 1
