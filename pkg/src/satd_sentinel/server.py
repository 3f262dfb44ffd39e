"""HTTP front end: ``POST /webhook`` and ``GET /healthz``."""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

logger = logging.getLogger(__name__)

MAX_BODY = 25 * 1024 * 1024


def make_handler(service):
    class Handler(BaseHTTPRequestHandler):
        server_version = "satd-sentinel"

        def log_message(self, fmt, *args):
            logger.info("%s %s", self.address_string(), fmt % args)

        def _reply(self, status: int, payload: dict):
            body = json.dumps(payload, sort_keys=True).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path.rstrip("/") != "/healthz":
                self._reply(404, {"error": "not found"})
                return
            self._reply(200, {"status": "ok", **service.queue_depths()})

        def do_POST(self):
            if self.path.rstrip("/") != "/webhook":
                self._reply(404, {"error": "not found"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
            except ValueError:
                length = -1
            if length < 0 or length > MAX_BODY:
                self._reply(400, {"error": "bad Content-Length"})
                return
            raw = self.rfile.read(length)
            result = service.handle_webhook(raw, dict(self.headers.items()))
            self._reply(result.status, {"accepted": result.accepted, "reason": result.reason, "jobs": result.jobs})

    return Handler


class WebhookServer:
    def __init__(self, service, host: str = "127.0.0.1", port: int = 8080):
        self.service = service
        # raises OSError when the port is taken
        self.httpd = ThreadingHTTPServer((host, port), make_handler(service))
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self.httpd.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, name="webhook-http", daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join()
