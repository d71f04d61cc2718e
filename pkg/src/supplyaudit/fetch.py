"""Fetching ads.txt / sellers.json, snapshot persistence, and closure resolution.

Network access goes through a *transport*: any object with
``get(url, timeout=..., headers=...) -> HttpResponse`` that raises
``TimeoutError`` on timeouts and ``OSError`` on other network failures.
:class:`RequestsTransport` talks HTTP; :class:`MirrorTransport` replays a
directory tree laid out as ``<root>/<host>/<path>``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import threading
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol, Union
from urllib.parse import urlsplit

from .adstxt import AdsTxtFile, parse_ads_txt
from .domains import is_valid_hostname, normalize_host, registrable_domain
from .sellersjson import SellersJsonFile, SellerType, parse_sellers_json

log = logging.getLogger(__name__)

DEFAULT_ALTERNATE_PATHS = {
    "google.com": "https://storage.googleapis.com/adx-rtb-dictionaries/sellers.json",
}
DEFAULT_USER_AGENT = "supplyaudit/0.1 (+ads.txt/sellers.json transparency audit)"
MANIFEST_NAME = "manifest.jsonl"


class Kind(str, enum.Enum):
    ADS = "ads"
    SELLERS = "sellers"

    @property
    def filename(self) -> str:
        return "ads.txt" if self is Kind.ADS else "sellers.json"


class FetchStatus(str, enum.Enum):
    OK = "OK"
    NOT_FOUND = "NOT_FOUND"
    NETWORK_ERROR = "NETWORK_ERROR"
    TIMEOUT = "TIMEOUT"
    NON_TEXT = "NON_TEXT"


@dataclass(frozen=True)
class HttpResponse:
    status_code: int
    body: bytes = b""
    content_type: Optional[str] = None


class Transport(Protocol):
    def get(self, url: str, *, timeout: float, headers: dict[str, str]) -> HttpResponse: ...


@dataclass(frozen=True)
class FetchResult:
    url: str
    status: FetchStatus
    body: Optional[bytes]
    fetched_at: datetime
    content_hash: str

    def __post_init__(self) -> None:
        if (self.body is not None) != (self.status is FetchStatus.OK):
            raise ValueError("body must be present iff status is OK")


@dataclass(frozen=True)
class ManifestRow:
    domain: str
    kind: Kind
    url: str
    status: FetchStatus
    fetched_at: str
    sha256: str
    path: Optional[str]
    snapshot_date: str

    def to_json(self) -> dict:
        return {
            "domain": self.domain,
            "kind": self.kind.value,
            "url": self.url,
            "status": self.status.value,
            "fetched_at": self.fetched_at,
            "sha256": self.sha256,
            "path": self.path,
            "snapshot_date": self.snapshot_date,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ManifestRow":
        return cls(
            domain=obj["domain"],
            kind=Kind(obj["kind"]),
            url=obj["url"],
            status=FetchStatus(obj["status"]),
            fetched_at=obj["fetched_at"],
            sha256=obj["sha256"],
            path=obj.get("path"),
            snapshot_date=obj.get("snapshot_date") or obj["fetched_at"][:10],
        )


@dataclass
class FetchConfig:
    retries: int = 2
    backoff: float = 1.0
    timeout: float = 30.0
    delay: float = 0.5
    parallelism: int = 8
    max_depth: int = 10
    user_agent: str = DEFAULT_USER_AGENT
    sleep: Callable[[float], None] = field(default=time.sleep, repr=False)


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


def _rfc3339(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat(timespec="microseconds").replace("+00:00", "Z")


class SnapshotStore:
    """Fetched disclosure files for one or more snapshot dates.

    With ``root=None`` bodies are kept in memory only (handy for tests and
    for building stores from already-parsed data). Lookups (``ads``,
    ``sellers``) read the store's current ``snapshot_date``; when a
    (domain, kind) was recorded more than once that day the latest wins.
    """

    def __init__(
        self,
        root: Union[str, Path, None] = None,
        snapshot_date: Optional[str] = None,
        alternate_paths: Optional[dict[str, str]] = None,
        clock: Callable[[], datetime] = _utcnow,
    ) -> None:
        self.root = Path(root) if root is not None else None
        self.clock = clock
        self.snapshot_date = snapshot_date or clock().date().isoformat()
        self.alternate_paths = dict(DEFAULT_ALTERNATE_PATHS if alternate_paths is None else alternate_paths)
        self.manifest: list[ManifestRow] = []
        self.frontier_losses: set[tuple[str, str, str, str]] = set()
        self._latest: dict[tuple[str, str, Kind], ManifestRow] = {}
        self._bodies: dict[tuple[str, str, Kind], bytes] = {}
        self._parsed: dict[tuple[str, str, Kind], object] = {}
        self._lock = threading.Lock()
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)

    # -- loading ---------------------------------------------------------

    @classmethod
    def open(cls, root: Union[str, Path], snapshot_date: Optional[str] = None, **kwargs) -> "SnapshotStore":
        """Load an on-disk store; defaults to its most recent snapshot date."""
        root = Path(root)
        rows = []
        manifest = root / MANIFEST_NAME
        if manifest.exists():
            with manifest.open(encoding="utf-8") as fh:
                rows = [ManifestRow.from_json(json.loads(line)) for line in fh if line.strip()]
        if snapshot_date is None and rows:
            snapshot_date = max(r.snapshot_date for r in rows)
        store = cls(root, snapshot_date=snapshot_date, **kwargs)
        for row in rows:
            store._index(row)
        return store

    def with_date(self, snapshot_date: str) -> "SnapshotStore":
        """A view of the same on-disk data at another snapshot date."""
        if self.root is None:
            raise ValueError("in-memory stores hold a single snapshot date")
        return SnapshotStore.open(self.root, snapshot_date, alternate_paths=self.alternate_paths, clock=self.clock)

    def dates(self) -> list[str]:
        return sorted({r.snapshot_date for r in self.manifest})

    def _index(self, row: ManifestRow) -> None:
        self.manifest.append(row)
        key = (row.snapshot_date, row.domain, row.kind)
        self._latest[key] = row
        self._parsed.pop(key, None)

    # -- writing ---------------------------------------------------------

    def record(self, domain: str, kind: Kind, result: FetchResult) -> ManifestRow:
        domain = normalize_host(domain)
        date = self.snapshot_date
        rel_path = None
        with self._lock:
            if result.body is not None:
                rel_path = f"{date}/{domain}/{kind.filename}"
                if self.root is not None:
                    target = self.root / rel_path
                    target.parent.mkdir(parents=True, exist_ok=True)
                    target.write_bytes(result.body)
                else:
                    self._bodies[(date, domain, kind)] = result.body
            row = ManifestRow(
                domain=domain,
                kind=kind,
                url=result.url,
                status=result.status,
                fetched_at=_rfc3339(result.fetched_at),
                sha256=result.content_hash,
                path=rel_path,
                snapshot_date=date,
            )
            if self.root is not None:
                with (self.root / MANIFEST_NAME).open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(row.to_json(), sort_keys=True) + "\n")
            self._index(row)
        return row

    def put(
        self,
        domain: str,
        kind: Kind,
        body: Union[str, bytes, None],
        status: FetchStatus = FetchStatus.OK,
        url: Optional[str] = None,
    ) -> ManifestRow:
        """Record a body (or a failure status) without going through a transport."""
        if isinstance(body, str):
            body = body.encode("utf-8")
        if status is not FetchStatus.OK:
            body = None
        elif body is None:
            body = b""
        domain = normalize_host(domain)
        result = FetchResult(
            url=url or default_url(domain, kind),
            status=status,
            body=body,
            fetched_at=self.clock(),
            content_hash=hashlib.sha256(body or b"").hexdigest(),
        )
        return self.record(domain, kind, result)

    # -- reading ---------------------------------------------------------

    def row(self, domain: str, kind: Kind) -> Optional[ManifestRow]:
        host = normalize_host(domain)
        row = self._latest.get((self.snapshot_date, host, kind))
        if row is None:
            site = registrable_domain(host)
            if site != host:
                row = self._latest.get((self.snapshot_date, site, kind))
        return row

    def has(self, domain: str, kind: Kind) -> bool:
        return (self.snapshot_date, normalize_host(domain), kind) in self._latest

    def body(self, domain: str, kind: Kind) -> Optional[bytes]:
        row = self.row(domain, kind)
        if row is None or row.path is None:
            return None
        if self.root is None:
            return self._bodies.get((row.snapshot_date, row.domain, kind))
        return (self.root / row.path).read_bytes()

    def _parse(self, domain: str, kind: Kind):
        row = self.row(domain, kind)
        if row is None or row.status is not FetchStatus.OK:
            return None
        key = (row.snapshot_date, row.domain, kind)
        if key not in self._parsed:
            body = self.body(domain, kind) or b""
            if kind is Kind.ADS:
                self._parsed[key] = parse_ads_txt(row.domain, body)
            else:
                self._parsed[key] = parse_sellers_json(row.domain, body)
        return self._parsed[key]

    def ads(self, domain: str) -> Optional[AdsTxtFile]:
        return self._parse(domain, Kind.ADS)

    def sellers(self, domain: str) -> Optional[SellersJsonFile]:
        """The parsed sellers.json for a domain, or None when absent/unusable."""
        parsed = self._parse(domain, Kind.SELLERS)
        if parsed is None or not parsed.parseable:
            return None
        return parsed

    def sellers_state(self, domain: str) -> str:
        """'ok', 'absent' (never fetched), 'unparseable', or the failed fetch status."""
        row = self.row(domain, Kind.SELLERS)
        if row is None:
            return "absent"
        if row.status is not FetchStatus.OK:
            return row.status.value
        return "ok" if self.sellers(domain) is not None else "unparseable"

    def domains(self, kind: Kind) -> list[str]:
        return sorted(d for (date, d, k) in self._latest if date == self.snapshot_date and k is kind)

    def ads_files(self) -> list[AdsTxtFile]:
        out = []
        for d in self.domains(Kind.ADS):
            parsed = self.ads(d)
            if parsed is not None:
                out.append(parsed)
        return out

    def sellers_files(self) -> list[SellersJsonFile]:
        out = []
        for d in self.domains(Kind.SELLERS):
            parsed = self.sellers(d)
            if parsed is not None:
                out.append(parsed)
        return out


def default_url(domain: str, kind: Kind) -> str:
    return f"https://{domain}/{kind.filename}"


class RequestsTransport:
    """HTTP(S) transport backed by a ``requests`` session."""

    def __init__(self, proxy: Optional[str] = None) -> None:
        import requests

        self._requests = requests
        self._session = requests.Session()
        if proxy:
            self._session.proxies.update({"http": proxy, "https": proxy})

    def get(self, url: str, *, timeout: float, headers: dict[str, str]) -> HttpResponse:
        req = self._requests
        try:
            resp = self._session.get(url, timeout=timeout, headers=headers, allow_redirects=True)
        except req.exceptions.Timeout as exc:
            raise TimeoutError(str(exc)) from exc
        except req.exceptions.RequestException as exc:
            raise ConnectionError(str(exc)) from exc
        return HttpResponse(resp.status_code, resp.content, resp.headers.get("Content-Type"))


class MirrorTransport:
    """Serve ``https://host/path`` from ``<root>/host/path``; missing files are 404s."""

    def __init__(self, root: Union[str, Path]) -> None:
        self.root = Path(root)
        self.requested: list[str] = []

    def get(self, url: str, *, timeout: float, headers: dict[str, str]) -> HttpResponse:
        self.requested.append(url)
        parts = urlsplit(url)
        target = self.root / (parts.hostname or "") / parts.path.lstrip("/")
        try:
            target.resolve().relative_to(self.root.resolve())
        except ValueError:
            return HttpResponse(404)
        if not target.is_file():
            return HttpResponse(404)
        ctype = "application/json" if target.suffix == ".json" else "text/plain"
        return HttpResponse(200, target.read_bytes(), ctype)


class Politeness:
    """Serialize requests per host and space them ``delay`` seconds apart."""

    def __init__(self, delay: float, sleep: Callable[[float], None] = time.sleep) -> None:
        self.delay = delay
        self.sleep = sleep
        self._locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._last: dict[str, float] = {}
        self._guard = threading.Lock()

    def run(self, host: str, fn: Callable[[], HttpResponse]) -> HttpResponse:
        with self._guard:
            lock = self._locks[host]
        with lock:
            last = self._last.get(host)
            if last is not None and self.delay > 0:
                wait = self.delay - (time.monotonic() - last)
                if wait > 0:
                    self.sleep(wait)
            try:
                return fn()
            finally:
                self._last[host] = time.monotonic()


_BINARY_TYPES = ("image/", "audio/", "video/", "font/")


def _classify(resp: HttpResponse, kind: Kind) -> FetchStatus:
    if resp.status_code >= 500:
        return FetchStatus.NETWORK_ERROR
    if resp.status_code >= 400 or resp.status_code < 200:
        return FetchStatus.NOT_FOUND
    ctype = (resp.content_type or "").lower()
    if ctype.startswith(_BINARY_TYPES) or b"\x00" in resp.body[:4096]:
        return FetchStatus.NON_TEXT
    # soft-404 pages served with 200
    if kind is Kind.ADS and resp.body.lstrip()[:1] == b"<":
        return FetchStatus.NON_TEXT
    return FetchStatus.OK


def fetch_disclosure(
    domain: str,
    kind: Kind,
    transport: Transport,
    store: SnapshotStore,
    config: Optional[FetchConfig] = None,
    politeness: Optional[Politeness] = None,
) -> FetchResult:
    """Fetch one file, retrying transient failures, and record it in ``store``."""
    config = config or FetchConfig()
    domain = normalize_host(domain)
    url = default_url(domain, kind)
    if kind is Kind.SELLERS and domain in store.alternate_paths:
        url = store.alternate_paths[domain]
    headers = {"User-Agent": config.user_agent}
    host = urlsplit(url).hostname or domain

    status = FetchStatus.NETWORK_ERROR
    body: Optional[bytes] = None
    for attempt in range(1 + max(config.retries, 0)):
        if attempt:
            config.sleep(config.backoff)
        try:
            def call() -> HttpResponse:
                return transport.get(url, timeout=config.timeout, headers=headers)

            resp = politeness.run(host, call) if politeness else call()
        except TimeoutError:
            status = FetchStatus.TIMEOUT
            continue
        except OSError as exc:
            log.debug("network error for %s: %s", url, exc)
            status = FetchStatus.NETWORK_ERROR
            continue
        status = _classify(resp, kind)
        if status is FetchStatus.NETWORK_ERROR:
            continue
        if status is FetchStatus.OK:
            body = resp.body
        break

    result = FetchResult(
        url=url,
        status=status,
        body=body,
        fetched_at=store.clock(),
        content_hash=hashlib.sha256(body or b"").hexdigest(),
    )
    store.record(domain, kind, result)
    return result


def resolve_closure(
    seed_publishers: Iterable[str],
    transport: Transport,
    store: SnapshotStore,
    config: Optional[FetchConfig] = None,
) -> SnapshotStore:
    """Fetch seeds' ads.txt, their exchanges' sellers.json, then recurse through
    INTERMEDIARY/BOTH entries until nothing new turns up or ``max_depth`` levels
    of sellers.json have been expanded.

    A (domain, kind) already present in the store for this snapshot date is
    reused rather than fetched again, which makes re-runs no-ops.
    """
    config = config or FetchConfig()
    seeds = sorted({normalize_host(s) for s in seed_publishers if s.strip()})
    if not seeds:
        raise ValueError("resolve_closure needs at least one seed publisher")
    politeness = Politeness(config.delay, config.sleep)

    def fetch_all(domains: list[str], kind: Kind) -> None:
        todo = [d for d in domains if not store.has(d, kind)]
        if not todo:
            return
        workers = max(1, min(config.parallelism, len(todo)))
        if workers == 1:
            for d in todo:
                fetch_disclosure(d, kind, transport, store, config, politeness)
            return
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda d: fetch_disclosure(d, kind, transport, store, config, politeness), todo))

    valid_seeds = [s for s in seeds if is_valid_hostname(s)]
    for s in seeds:
        if s not in valid_seeds:
            log.warning("skipping seed %r: not a hostname", s)
    fetch_all(valid_seeds, Kind.ADS)

    frontier: set[str] = set()
    for s in valid_seeds:
        ads = store.ads(s)
        if ads is not None:
            frontier.update(r.exchange_domain for r in ads.records)

    seen: set[str] = set()
    depth = 0
    while frontier and depth < config.max_depth:
        level = sorted(frontier - seen)
        seen.update(level)
        fetch_all(level, Kind.SELLERS)
        frontier = set()
        for exchange in level:
            sellers = store.sellers(exchange)
            if sellers is None:
                continue
            for entry in sellers.entries:
                if entry.seller_type not in (SellerType.INTERMEDIARY, SellerType.BOTH):
                    continue
                sid = entry.seller_id or ""
                if entry.is_confidential:
                    store.frontier_losses.add((exchange, sid, "", "confidential"))
                    continue
                if not entry.domain:
                    store.frontier_losses.add((exchange, sid, "", "domain_absent"))
                    continue
                if not is_valid_hostname(entry.domain):
                    store.frontier_losses.add((exchange, sid, entry.domain, "domain_invalid"))
                    continue
                target = normalize_host(entry.domain)
                if target not in seen:
                    frontier.add(target)
        depth += 1
    return store
