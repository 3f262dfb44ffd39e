import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from satd_sentinel.classifier import load_bundled_model  # noqa: E402
from satd_sentinel.classifier.model import data_path  # noqa: E402

STUDY_REPO = "fixme-study/searcher"


@pytest.fixture(scope="session")
def bundled_model():
    return load_bundled_model()


@pytest.fixture(scope="session")
def mock_project_dir() -> Path:
    return data_path("mock_project")


@pytest.fixture(scope="session")
def mock_project_files(mock_project_dir):
    root = mock_project_dir
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="session")
def scenarios_dir() -> Path:
    return data_path("scenarios")


_LOOPBACK = ("127.0.0.1", "localhost", "::1")


@pytest.fixture(autouse=True)
def _no_network(monkeypatch):
    """Connections to anything but loopback fail the test."""
    import socket

    real_connect = socket.socket.connect
    real_create = socket.create_connection

    def connect(self, address):
        if isinstance(address, tuple) and address[0] not in _LOOPBACK:
            raise AssertionError(f"network access attempted: {address}")
        return real_connect(self, address)

    def create_connection(address, *args, **kwargs):
        if address[0] not in _LOOPBACK:
            raise AssertionError(f"network access attempted: {address}")
        return real_create(address, *args, **kwargs)

    monkeypatch.setattr(socket.socket, "connect", connect)
    monkeypatch.setattr(socket, "create_connection", create_connection)


# acceptance summary: one line per criterion at the end of the run

_CRITERIA: dict[int, dict] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "ran": False})
    if report.when == "call" or report.failed:
        entry["ran"] = True
        entry["ok"] = entry["ok"] and report.passed


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        verdict = "PASS" if entry["ok"] and entry["ran"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {verdict}  {entry['title']}")
