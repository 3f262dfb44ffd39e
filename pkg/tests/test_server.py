import json
import socket

import httpx
import pytest

from satd_sentinel.config import Config
from satd_sentinel.harness import Harness
from satd_sentinel.refs import RepoId
from satd_sentinel.server import WebhookServer
from satd_sentinel.service import sign

APP = RepoId.parse("acme/app")


@pytest.fixture
def served(bundled_model):
    h = Harness(Config.from_dict({"repos": [{"repo": "acme/app"}]}), model=bundled_model)
    server = WebhookServer(h.service, "127.0.0.1", 0)
    server.start()
    yield h, f"http://127.0.0.1:{server.port}"
    server.stop()


def test_healthz(served):
    _, base = served
    r = httpx.get(base + "/healthz")
    assert r.status_code == 200
    assert r.json() == {"status": "ok", "pending_jobs": 0, "in_flight": 0}
    assert httpx.get(base + "/nope").status_code == 404


def test_webhook_round_trip(served):
    h, base = served
    payload = h.forge.push(APP, "main", {"A.java": "// TODO once #1 is fixed\n"})
    body = json.dumps(payload).encode()
    hdrs = {"X-Hub-Signature-256": sign("harness-secret", body), "X-GitHub-Event": "push",
            "X-GitHub-Delivery": "abc", "Content-Type": "application/json"}
    r = httpx.post(base + "/webhook", content=body, headers=hdrs)
    assert r.status_code == 202 and r.json()["jobs"] == 1
    assert httpx.get(base + "/healthz").json()["pending_jobs"] == 1
    hdrs["X-Hub-Signature-256"] = sign("wrong", body)
    r = httpx.post(base + "/webhook", content=body, headers=dict(hdrs, **{"X-GitHub-Delivery": "def"}))
    assert r.status_code == 401 and r.json()["accepted"] is False


def test_bad_content_length(served):
    _, base = served
    port = int(base.rsplit(":", 1)[1])
    with socket.create_connection(("127.0.0.1", port)) as s:
        s.sendall(b"POST /webhook HTTP/1.1\r\nHost: x\r\nContent-Length: nope\r\n\r\n")
        assert b" 400 " in s.recv(1024).split(b"\r\n")[0] + b" "


def test_port_in_use(served):
    h, base = served
    port = int(base.rsplit(":", 1)[1])
    with pytest.raises(OSError):
        WebhookServer(h.service, "127.0.0.1", port)
