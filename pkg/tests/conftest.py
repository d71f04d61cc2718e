from __future__ import annotations

import json
from datetime import datetime, timedelta, timezone

import pytest

from supplyaudit.fetch import FetchConfig, HttpResponse, Kind, SnapshotStore


class FakeTransport:
    """In-memory transport: url -> HttpResponse or exception instance."""

    def __init__(self, routes=None):
        self.routes = dict(routes or {})
        self.requested: list[str] = []

    def serve(self, url, body, content_type="text/plain"):
        if isinstance(body, (dict, list)):
            body, content_type = json.dumps(body), "application/json"
        if isinstance(body, str):
            body = body.encode()
        self.routes[url] = HttpResponse(200, body, content_type)

    def get(self, url, *, timeout, headers):
        self.requested.append(url)
        route = self.routes.get(url)
        if route is None:
            return HttpResponse(404)
        if isinstance(route, BaseException):
            raise route
        if isinstance(route, list):
            item = route.pop(0) if len(route) > 1 else route[0]
            if isinstance(item, BaseException):
                raise item
            return item
        return route


class TickClock:
    """Deterministic clock advancing one millisecond per call."""

    def __init__(self, start=datetime(2022, 2, 1, tzinfo=timezone.utc)):
        self.now = start

    def __call__(self):
        self.now += timedelta(milliseconds=1)
        return self.now


def sellers_doc(*entries, version="1.0"):
    return json.dumps({"version": version, "sellers": list(entries)})


def seller(sid, stype="PUBLISHER", domain=None, **extra):
    obj = {"seller_id": sid, "seller_type": stype}
    if domain is not None:
        obj["domain"] = domain
    obj.update(extra)
    return obj


def memory_store(ads=None, sellers=None, failed=None, date="2022-02-01"):
    """Build an in-memory store: ads/sellers map domain -> body text;
    failed maps domain -> (kind, FetchStatus)."""
    store = SnapshotStore(None, snapshot_date=date, clock=TickClock())
    for domain, body in (ads or {}).items():
        store.put(domain, Kind.ADS, body)
    for domain, body in (sellers or {}).items():
        store.put(domain, Kind.SELLERS, body if isinstance(body, (str, bytes)) else json.dumps(body))
    for domain, (kind, status) in (failed or {}).items():
        store.put(domain, kind, None, status=status)
    return store


@pytest.fixture
def fake_transport():
    return FakeTransport()


@pytest.fixture
def fast_config():
    return FetchConfig(delay=0.0, backoff=0.0, sleep=lambda s: None)


# -- acceptance reporting ---------------------------------------------------
# Tests marked ``@pytest.mark.acceptance("<criterion>")`` are grouped by
# criterion; the terminal summary prints one PASS/FAIL line per criterion
# together with any measurements recorded through ``record_property``.

_criteria: dict[str, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not marker.args:
        return
    if rep.when != "call" and not rep.failed:
        return
    entry = _criteria.setdefault(marker.args[0], {"ok": True, "tests": 0, "notes": []})
    entry["tests"] += 1
    entry["ok"] = entry["ok"] and rep.passed
    entry["notes"] += [f"{k}={v}" for k, v in item.user_properties]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, entry in _criteria.items():
        status = "PASS" if entry["ok"] else "FAIL"
        notes = f"  ({', '.join(entry['notes'])})" if entry["notes"] else ""
        terminalreporter.write_line(f"[{status}] {name}{notes}")
