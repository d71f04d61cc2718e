"""OpenRTB SupplyChain object (schain) parsing and validation.

A verdict combines two booleans:

* A: the terminal node's ``sid``, looked up in the ``asi`` exchange's
  sellers.json, names the same site the bid request was captured on.
* B: the dynamic path (upstream site, asi, request site) is one of the
  publisher's static paths (owner, exchange, publisher) built from its
  ads.txt and the exchanges' sellers.json files.

An SCO is CORRECT iff A and B both hold.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from typing import Any, Iterable, Optional
from urllib.parse import parse_qsl, unquote

from .domains import registrable_domain
from .fetch import SnapshotStore
from .sellersjson import lookup_seller


class MalformedSchain(ValueError):
    pass


@dataclass(frozen=True)
class SchainNode:
    asi: str
    sid: str
    hp: Optional[int] = None


@dataclass(frozen=True)
class SupplyChainObject:
    """``nodes[0]`` is the oldest seller, ``nodes[-1]`` the most recent."""

    complete: bool
    nodes: tuple[SchainNode, ...]
    version: Optional[str] = None

    @property
    def terminal(self) -> SchainNode:
        return self.nodes[-1]


class ScoStatus(str, enum.Enum):
    ABSENT = "ABSENT"
    CORRECT = "CORRECT"
    MISREPRESENTED = "MISREPRESENTED"
    UNVERIFIABLE = "UNVERIFIABLE"


@dataclass(frozen=True)
class ScoVerdict:
    status: ScoStatus
    a: Optional[bool] = None
    b: Optional[bool] = None
    dynamic_path: Optional[tuple[str, str, str]] = None
    diagnostic: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.status is ScoStatus.CORRECT) != (self.a is True and self.b is True):
            raise ValueError("CORRECT iff A and B are both true")

    def to_json(self) -> dict:
        return {
            "status": self.status.value,
            "a": self.a,
            "b": self.b,
            "dynamic_path": list(self.dynamic_path) if self.dynamic_path else None,
            "diagnostic": self.diagnostic,
        }


# -- parsing ----------------------------------------------------------------


def _bool01(value: Any, what: str) -> bool:
    if isinstance(value, bool):
        return value
    if value in (0, 1, "0", "1"):
        return int(value) == 1
    raise MalformedSchain(f"{what} must be 0 or 1, got {value!r}")


def _from_dict(obj: Any) -> SupplyChainObject:
    if isinstance(obj, str):
        return parse_serialized(obj)
    if not isinstance(obj, dict):
        raise MalformedSchain("schain is not an object")
    nodes_raw = obj.get("nodes")
    if not isinstance(nodes_raw, list) or not nodes_raw:
        raise MalformedSchain("schain has no nodes")
    nodes = []
    for i, n in enumerate(nodes_raw):
        if not isinstance(n, dict):
            raise MalformedSchain(f"node {i} is not an object")
        asi, sid = n.get("asi"), n.get("sid")
        if not isinstance(asi, str) or not asi.strip():
            raise MalformedSchain(f"node {i} has no asi")
        if sid is None or isinstance(sid, (dict, list, bool)) or str(sid).strip() == "":
            raise MalformedSchain(f"node {i} has no sid")
        hp = n.get("hp")
        nodes.append(SchainNode(asi.strip().lower(), str(sid).strip(),
                                None if hp is None else int(_bool01(hp, "hp"))))
    complete = _bool01(obj.get("complete", 0), "complete")
    ver = obj.get("ver")
    return SupplyChainObject(complete, tuple(nodes), None if ver is None else str(ver))


def parse_serialized(text: str) -> SupplyChainObject:
    """Parse the ``ver,complete!asi,sid,hp,rid,name,domain!...`` form."""
    parts = text.strip().split("!")
    head = parts[0].split(",")
    if len(head) < 2 or len(parts) < 2:
        raise MalformedSchain(f"bad serialized schain {text!r}")
    version = unquote(head[0]) or None
    complete = _bool01(head[1], "complete")
    nodes = []
    for i, raw in enumerate(parts[1:]):
        fields = [unquote(f) for f in raw.split(",")]
        if len(fields) < 2 or not fields[0].strip() or not fields[1].strip():
            raise MalformedSchain(f"node {i} lacks asi/sid")
        hp = int(_bool01(fields[2], "hp")) if len(fields) > 2 and fields[2] != "" else None
        nodes.append(SchainNode(fields[0].strip().lower(), fields[1].strip(), hp))
    return SupplyChainObject(complete, tuple(nodes), version)


def serialize(sco: SupplyChainObject) -> str:
    from urllib.parse import quote

    head = f"{quote(sco.version or '', safe='.')},{int(sco.complete)}"
    nodes = []
    for n in sco.nodes:
        fields = [quote(n.asi, safe="."), quote(n.sid, safe="")]
        if n.hp is not None:
            fields.append(str(n.hp))
        nodes.append(",".join(fields))
    return "!".join([head] + nodes)


def _find_key(obj: Any, key: str, depth: int = 0) -> Any:
    if depth > 32:
        return None
    if isinstance(obj, dict):
        if key in obj:
            return obj[key]
        children: Iterable = obj.values()
    elif isinstance(obj, list):
        children = obj
    else:
        return None
    for child in children:
        found = _find_key(child, key, depth + 1)
        if found is not None:
            return found
    return None


_SERIALIZED_RE = re.compile(r"^[0-9.]*,[01]!")


def parse_schain(payload: str) -> Optional[SupplyChainObject]:
    """Find and parse an schain in a bid-request body, query string, or
    bare serialized string. Returns None when there is none; raises
    :class:`MalformedSchain` when one is present but unusable."""
    text = payload.strip()
    if not text:
        return None
    if text[:1] in "{[":
        try:
            doc = json.loads(text)
        except ValueError:
            doc = None
        if doc is not None:
            found = _find_key(doc, "schain")
            return None if found is None else _from_dict(found)
    if _SERIALIZED_RE.match(text):
        return parse_serialized(text)
    query = text.split("?", 1)[1] if "?" in text else text
    for key, value in parse_qsl(query, keep_blank_values=True):
        if key == "schain":
            value = value.strip()
            if value.startswith("{"):
                try:
                    return _from_dict(json.loads(value))
                except ValueError as exc:
                    raise MalformedSchain(f"schain JSON is invalid: {exc}") from exc
            return parse_serialized(value)
    return None


# -- validation -------------------------------------------------------------


def _upstream(node: SchainNode, store: SnapshotStore) -> Optional[list[str]]:
    """Disclosed owner sites of ``node.sid`` at ``node.asi``; None if unknowable."""
    sellers = store.sellers(node.asi)
    if sellers is None:
        return None
    sites = [registrable_domain(e.known_domain) for e in lookup_seller(sellers, node.sid) if e.known_domain]
    return sites or None


def check_a(sco: SupplyChainObject, observed_domain: str, store: SnapshotStore) -> Optional[bool]:
    """A for the terminal node; None when it cannot be decided."""
    sites = _upstream(sco.terminal, store)
    if sites is None:
        return None
    return registrable_domain(observed_domain) in sites


def static_paths(publisher: str, store: SnapshotStore) -> frozenset[tuple[str, str, str]]:
    ads = store.ads(publisher)
    if ads is None:
        return frozenset()
    pub = registrable_domain(publisher)
    paths = set()
    for rec in ads.records:
        sellers = store.sellers(rec.exchange_domain)
        if sellers is None:
            continue
        for e in lookup_seller(sellers, rec.publisher_id):
            if e.known_domain:
                paths.add((registrable_domain(e.known_domain), registrable_domain(rec.exchange_domain), pub))
    return frozenset(paths)


def _links_ok(sco: SupplyChainObject, store: SnapshotStore) -> bool:
    """Each node's account at the next node must belong to the earlier node's asi.
    Links without sellers.json data are not held against the chain."""
    for older, newer in zip(sco.nodes, sco.nodes[1:]):
        sites = _upstream(newer, store)
        if sites is not None and registrable_domain(older.asi) not in sites:
            return False
    return True


def validate_sco(
    payload: str,
    observed_domain: str,
    store: SnapshotStore,
    check_links: bool = False,
    _path_cache: Optional[dict] = None,
) -> ScoVerdict:
    try:
        sco = parse_schain(payload)
    except MalformedSchain as exc:
        return ScoVerdict(ScoStatus.ABSENT, diagnostic=str(exc))
    if sco is None:
        return ScoVerdict(ScoStatus.ABSENT)

    site = registrable_domain(observed_domain)
    a = check_a(sco, site, store)
    if a is None:
        return ScoVerdict(ScoStatus.UNVERIFIABLE, diagnostic="owner of terminal sid is not disclosed")

    upstream = _upstream(sco.terminal, store) or []
    # prefer the disclosed owner that matches the observed site
    owner = site if a else upstream[0]
    dynamic = (owner, registrable_domain(sco.terminal.asi), site)
    if _path_cache is not None:
        if site not in _path_cache:
            _path_cache[site] = static_paths(site, store)
        paths = _path_cache[site]
    else:
        paths = static_paths(site, store)
    b = dynamic in paths
    if check_links and not _links_ok(sco, store):
        b = False
    status = ScoStatus.CORRECT if (a and b) else ScoStatus.MISREPRESENTED
    return ScoVerdict(status, a, b, dynamic)


@dataclass(frozen=True)
class ScoStats:
    total: int
    with_sco: int
    correct: int
    adoption_ratio: float
    correctness_ratio: float
    correctness_defined: bool

    def to_json(self) -> dict:
        return dict(vars(self))


class EmptyCorpus(ValueError):
    pass


def sco_stats(verdicts: Iterable[ScoVerdict]) -> ScoStats:
    verdicts = list(verdicts)
    if not verdicts:
        raise EmptyCorpus("no verdicts")
    with_sco = sum(1 for v in verdicts if v.status is not ScoStatus.ABSENT)
    correct = sum(1 for v in verdicts if v.status is ScoStatus.CORRECT)
    return ScoStats(
        total=len(verdicts),
        with_sco=with_sco,
        correct=correct,
        adoption_ratio=with_sco / len(verdicts),
        correctness_ratio=correct / with_sco if with_sco else 0.0,
        correctness_defined=bool(with_sco),
    )
