"""Mining real-time-bidding evidence from HAR captures.

Pipeline: keep ad-related flows (filter-list match), pull ``key=value``
pairs out of URLs and bodies, match values against known publisher/seller
IDs, and turn matches into (publisher, exchange, owner) triples.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union
from urllib.parse import unquote_plus, urlsplit

from .domains import normalize_host, registrable_domain
from .fetch import SnapshotStore
from .pools import OwnerStatus, resolve_owner_id

MIN_ID_LENGTH = 6


# -- filter rules -----------------------------------------------------------

# adblock separator: anything but a letter, digit, or one of _ - . %
_SEPARATOR = r"(?:[^A-Za-z0-9_\-.%]|$)"
_DOMAIN_ANCHOR = r"^[A-Za-z][A-Za-z0-9+.\-]*://(?:[^/?#]*\.)?"


@dataclass(frozen=True)
class FilterRule:
    text: str
    pattern: str


def _rule_to_regex(rule: str) -> str:
    body = rule
    prefix = ""
    suffix = ""
    if body.startswith("||"):
        prefix, body = _DOMAIN_ANCHOR, body[2:]
    elif body.startswith("|"):
        prefix, body = "^", body[1:]
    if body.endswith("|"):
        suffix, body = "$", body[:-1]
    parts = []
    for ch in body:
        if ch == "*":
            parts.append(".*")
        elif ch == "^":
            parts.append(_SEPARATOR)
        else:
            parts.append(re.escape(ch))
    return prefix + "".join(parts) + suffix


class FilterRuleSet:
    """A compiled subset of adblock network-filter syntax.

    Supported: ``||domain`` anchors, ``|`` start/end anchors, ``*`` and
    ``^``. Exception rules, ``$options``, cosmetic rules and ``/regex/``
    rules are skipped and reported in ``diagnostics``. Matching is
    case-insensitive.
    """

    def __init__(self, rules: Sequence[FilterRule] = (), diagnostics: Sequence[tuple[int, str]] = ()) -> None:
        self.rules = tuple(rules)
        self.diagnostics = tuple(diagnostics)
        self._regex: Optional[re.Pattern] = None
        if self.rules:
            self._regex = re.compile("|".join(f"(?:{r.pattern})" for r in self.rules), re.IGNORECASE)

    @classmethod
    def parse(cls, text: str) -> "FilterRuleSet":
        rules: list[FilterRule] = []
        diagnostics: list[tuple[int, str]] = []
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("!") or line.startswith("["):
                continue
            if "##" in line or "#@#" in line or "#?#" in line or "#$#" in line:
                diagnostics.append((line_no, "cosmetic rule skipped"))
            elif line.startswith("@@"):
                diagnostics.append((line_no, "exception rule skipped"))
            elif "$" in line:
                diagnostics.append((line_no, "rule options not supported"))
            elif len(line) > 1 and line.startswith("/") and line.endswith("/"):
                diagnostics.append((line_no, "regular-expression rule skipped"))
            elif line.strip("*|^") == "":
                diagnostics.append((line_no, "rule matches everything; skipped"))
            else:
                rules.append(FilterRule(line, _rule_to_regex(line)))
        return cls(rules, diagnostics)

    @classmethod
    def load(cls, paths: Iterable[Union[str, Path]]) -> "FilterRuleSet":
        text = "\n".join(Path(p).read_text(encoding="utf-8", errors="replace") for p in paths)
        return cls.parse(text)

    def matches(self, url: str) -> bool:
        return self._regex is not None and self._regex.search(url) is not None


def classify_ad_flow(url: str, rules: FilterRuleSet) -> bool:
    return rules.matches(url)


# -- key/value extraction ---------------------------------------------------


@dataclass(frozen=True)
class Flow:
    url: str
    post_body: Optional[str] = None
    post_mime: Optional[str] = None
    response_body: Optional[str] = None


_KV_RE = re.compile(
    r"""([A-Za-z0-9_.\-\[\]]+)      # key
        \s*=\s*
        (?:"([^"]*)"|'([^']*)'|([^&\s"']+))""",
    re.VERBOSE,
)


def _scan(text: str) -> list[tuple[str, str]]:
    out = []
    for m in _KV_RE.finditer(text):
        value = next((g for g in m.group(2, 3, 4) if g is not None), "")
        if value:
            out.append((m.group(1), value))
    return out


def _is_form(flow: Flow) -> bool:
    if flow.post_mime:
        return "x-www-form-urlencoded" in flow.post_mime.lower()
    body = (flow.post_body or "").lstrip()
    return not body.startswith(("{", "["))


def extract_kv(flow: Union[Flow, Mapping]) -> list[tuple[str, str]]:
    """``key=value`` / ``key="value"`` pairs from the URL, request body and
    response body, in that order.

    URLs and form-encoded bodies are percent-decoded once before scanning;
    raw text is scanned as-is.
    """
    if isinstance(flow, Mapping):
        flow = Flow(flow.get("url", ""), flow.get("post_body"), flow.get("post_mime"), flow.get("response_body"))
    pairs: list[tuple[str, str]] = []
    if flow.url:
        pairs += _scan(_decode_once(flow.url))
    if flow.post_body:
        pairs += _scan(_decode_once(flow.post_body) if _is_form(flow) else flow.post_body)
    if flow.response_body:
        pairs += _scan(flow.response_body)
    return pairs


def _decode_once(text: str) -> str:
    # decode each &-separated piece so an encoded '&' cannot merge two pairs
    return "&".join(unquote_plus(piece) for piece in text.split("&"))


# -- ID matching and triples -------------------------------------------------


@dataclass(frozen=True, order=True)
class IdHit:
    page_domain: str
    flow_url: str
    key: str
    value: str
    issuing_exchange: str
    matched_id: str


IdIndex = Mapping[str, Sequence[tuple[str, str]]]


def build_id_index(store: SnapshotStore) -> dict[str, list[tuple[str, str]]]:
    """value -> [(exchange, id)] from every sellers.json entry and ads.txt record."""
    index: dict[str, set[tuple[str, str]]] = {}
    for sellers in store.sellers_files():
        for sid in sellers.id_index:
            index.setdefault(sid, set()).add((sellers.source_domain, sid))
    for ads in store.ads_files():
        for rec in ads.records:
            index.setdefault(rec.publisher_id, set()).add((rec.exchange_domain, rec.publisher_id))
    return {k: sorted(v) for k, v in index.items()}


def match_ids(
    kvs: Iterable[tuple[str, str]],
    page_domain: str,
    id_index: IdIndex,
    flow_url: str = "",
) -> list[IdHit]:
    hits = []
    for key, value in kvs:
        if len(value) < MIN_ID_LENGTH:
            continue
        for exchange, ident in id_index.get(value, ()):
            hits.append(IdHit(page_domain, flow_url, key, value, exchange, ident))
    return hits


UNRESOLVED_LABELS = {
    OwnerStatus.PUBID_UNLISTED: "pubid_unlisted",
    OwnerStatus.SELLERS_JSON_NOT_PUBLIC: "sellers_json_not_public",
    OwnerStatus.OWNER_NOT_LISTED: "owner_not_listed",
    OwnerStatus.OWNER_CONFIDENTIAL: "confidential",
}


@dataclass(frozen=True, order=True)
class Triple:
    publisher_domain: str
    exchange_domain: str
    owner_domain: str

    @property
    def resolved(self) -> bool:
        return not self.owner_domain.startswith("UNRESOLVED:")

    def to_json(self) -> dict:
        return {"publisher": self.publisher_domain, "exchange": self.exchange_domain, "owner": self.owner_domain}


def derive_triples(hits: Iterable[IdHit], store: SnapshotStore) -> list[Triple]:
    triples = set()
    for hit in hits:
        res = resolve_owner_id(hit.issuing_exchange, hit.matched_id, store)
        if res.status is OwnerStatus.RESOLVED:
            owner = registrable_domain(res.owner_domain)
        else:
            owner = f"UNRESOLVED:{UNRESOLVED_LABELS[res.status]}"
        triples.add(Triple(registrable_domain(hit.page_domain), hit.issuing_exchange, owner))
    return sorted(triples)


def dark_pool_evidence(triple: Triple, entities) -> bool:
    """True when the observed publisher and the ID's owner belong to two
    different known organizations."""
    if not triple.resolved:
        return False
    pub_org = entities.org(triple.publisher_domain)
    owner_org = entities.org(triple.owner_domain)
    return pub_org is not None and owner_org is not None and pub_org != owner_org


# -- HAR ingestion ----------------------------------------------------------


def _text_of(obj) -> Optional[str]:
    if not isinstance(obj, dict):
        return None
    text = obj.get("text")
    if not isinstance(text, str):
        return None
    if obj.get("encoding") == "base64":
        import base64
        import binascii

        try:
            return base64.b64decode(text).decode("utf-8", errors="replace")
        except (binascii.Error, ValueError):
            return None
    return text


def load_har(source: Union[str, Path, Mapping]) -> tuple[Optional[str], list[Flow]]:
    """Read a HAR 1.2 archive. Returns (page domain guess, flows).

    The page domain is taken from the first page's title when it looks like a
    URL, else from the first request's host.
    """
    if isinstance(source, Mapping):
        har = source
    else:
        har = json.loads(Path(source).read_text(encoding="utf-8", errors="replace"))
    logobj = har.get("log", {}) if isinstance(har, Mapping) else {}
    flows = []
    for entry in logobj.get("entries", []) or []:
        if not isinstance(entry, dict):
            continue
        request = entry.get("request") or {}
        response = entry.get("response") or {}
        url = request.get("url")
        if not isinstance(url, str):
            continue
        post = request.get("postData") or {}
        flows.append(Flow(
            url=url,
            post_body=_text_of(post),
            post_mime=post.get("mimeType") if isinstance(post, dict) else None,
            response_body=_text_of(response.get("content")),
        ))
    page = None
    pages = logobj.get("pages") or []
    if pages and isinstance(pages[0], dict):
        title = pages[0].get("title")
        if isinstance(title, str) and "://" in title:
            page = urlsplit(title).hostname
    if page is None and flows:
        page = urlsplit(flows[0].url).hostname
    return (registrable_domain(page) if page else None), flows


def mine_flows(
    flows: Iterable[Flow],
    page_domain: str,
    rules: FilterRuleSet,
    id_index: IdIndex,
) -> list[IdHit]:
    page_domain = normalize_host(page_domain)
    hits: list[IdHit] = []
    for flow in flows:
        if not classify_ad_flow(flow.url, rules):
            continue
        hits.extend(match_ids(extract_kv(flow), page_domain, id_index, flow.url))
    return hits
