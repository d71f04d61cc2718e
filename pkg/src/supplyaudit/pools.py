"""Publisher-ID pools: detection, organizational homogeneity, owner resolution,
and summary statistics."""

from __future__ import annotations

import csv
import enum
import io
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .adstxt import AdsTxtFile, Relationship
from .domains import registrable_domain
from .fetch import SnapshotStore
from .sellersjson import lookup_seller


class Homogeneity(str, enum.Enum):
    HOMOGENEOUS = "HOMOGENEOUS"
    POTENTIALLY_HOMOGENEOUS = "POTENTIALLY_HOMOGENEOUS"
    HETEROGENEOUS = "HETEROGENEOUS"
    UNKNOWN = "UNKNOWN"


class OwnerStatus(str, enum.Enum):
    RESOLVED = "RESOLVED"
    PUBID_UNLISTED = "PUBID_UNLISTED"
    SELLERS_JSON_NOT_PUBLIC = "SELLERS_JSON_NOT_PUBLIC"
    OWNER_NOT_LISTED = "OWNER_NOT_LISTED"
    OWNER_CONFIDENTIAL = "OWNER_CONFIDENTIAL"


@dataclass(frozen=True)
class OwnerResolution:
    status: OwnerStatus
    owner_domain: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.owner_domain is not None) != (self.status is OwnerStatus.RESOLVED):
            raise ValueError("owner_domain must be set iff status is RESOLVED")


@dataclass(frozen=True)
class Pool:
    exchange_domain: str
    publisher_id: str
    members: frozenset[str]
    homogeneity: Optional[Homogeneity] = None
    contains_watchlisted: bool = False
    owner: Optional[OwnerResolution] = None

    @property
    def size(self) -> int:
        return len(self.members)

    def to_json(self) -> dict:
        return {
            "exchange": self.exchange_domain,
            "publisher_id": self.publisher_id,
            "members": sorted(self.members),
            "class": self.homogeneity.value if self.homogeneity else None,
            "owner_status": self.owner.status.value if self.owner else None,
            "owner_domain": self.owner.owner_domain if self.owner else None,
            "watchlisted": self.contains_watchlisted,
        }


class EntityMap:
    """Registrable domain -> organization name."""

    def __init__(self, mapping: Optional[Mapping[str, str]] = None) -> None:
        self._map: dict[str, str] = {}
        for domain, org in (mapping or {}).items():
            self._map[registrable_domain(domain)] = org

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EntityMap":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError(f"{path}: entity map must be a JSON object of domain -> organization")
        return cls({str(k): str(v) for k, v in data.items()})

    def org(self, domain: str) -> Optional[str]:
        return self._map.get(registrable_domain(domain))

    def __contains__(self, domain: str) -> bool:
        return registrable_domain(domain) in self._map

    def __len__(self) -> int:
        return len(self._map)


def detect_pools(corpus: Iterable[AdsTxtFile], direct_only: bool = False) -> list[Pool]:
    """Group records by (exchange, publisher ID) and keep those claimed by two
    or more distinct publisher sites. Publisher IDs compare exactly."""
    groups: dict[tuple[str, str], set[str]] = defaultdict(set)
    for ads in corpus:
        site = registrable_domain(ads.source_domain)
        if not site:
            continue
        for rec in ads.records:
            if direct_only and rec.relationship is not Relationship.DIRECT:
                continue
            groups[(rec.exchange_domain, rec.publisher_id)].add(site)
    return [
        Pool(adx, pid, frozenset(members))
        for (adx, pid), members in sorted(groups.items())
        if len(members) >= 2
    ]


def classify_homogeneity(pool: Pool, entities: EntityMap) -> Homogeneity:
    orgs = [entities.org(m) for m in pool.members]
    mapped = {o for o in orgs if o is not None}
    if not mapped:
        return Homogeneity.UNKNOWN
    if len(mapped) >= 2:
        return Homogeneity.HETEROGENEOUS
    if None in orgs:
        return Homogeneity.POTENTIALLY_HOMOGENEOUS
    return Homogeneity.HOMOGENEOUS


def resolve_owner_id(exchange_domain: str, publisher_id: str, store: SnapshotStore) -> OwnerResolution:
    """Who owns ``publisher_id`` according to the issuing exchange's sellers.json.

    When an id has several entries the first one in file order decides.
    """
    sellers = store.sellers(exchange_domain)
    if sellers is None:
        return OwnerResolution(OwnerStatus.SELLERS_JSON_NOT_PUBLIC)
    entries = lookup_seller(sellers, publisher_id)
    if not entries:
        return OwnerResolution(OwnerStatus.PUBID_UNLISTED)
    entry = entries[0]
    if entry.is_confidential:
        return OwnerResolution(OwnerStatus.OWNER_CONFIDENTIAL)
    if not entry.domain:
        return OwnerResolution(OwnerStatus.OWNER_NOT_LISTED)
    return OwnerResolution(OwnerStatus.RESOLVED, entry.domain)


def resolve_owner(pool: Pool, store: SnapshotStore) -> OwnerResolution:
    return resolve_owner_id(pool.exchange_domain, pool.publisher_id, store)


def annotate_pools(
    pools: Iterable[Pool],
    entities: EntityMap,
    store: Optional[SnapshotStore] = None,
    watchlist: Iterable[str] = (),
) -> list[Pool]:
    """Fill in homogeneity, watchlist flag and (when a store is given) owner."""
    watch = {registrable_domain(w) for w in watchlist}
    out = []
    for p in pools:
        out.append(replace(
            p,
            homogeneity=classify_homogeneity(p, entities),
            contains_watchlisted=bool(p.members & watch),
            owner=resolve_owner(p, store) if store is not None else p.owner,
        ))
    return out


# -- statistics -------------------------------------------------------------


@dataclass(frozen=True)
class PoolCell:
    count: int = 0
    total_members: int = 0

    @property
    def mu_size_exact(self) -> Optional[Fraction]:
        return Fraction(self.total_members, self.count) if self.count else None

    @property
    def mu_size(self) -> float:
        return self.total_members / self.count if self.count else 0.0


@dataclass(frozen=True)
class RankedDomain:
    domain: str
    pools: int
    pools_watchlisted: int


@dataclass(frozen=True)
class PoolStats:
    cells: Mapping[tuple[Homogeneity, bool], PoolCell]
    top_owners: tuple[RankedDomain, ...] = ()
    top_exchanges: tuple[RankedDomain, ...] = ()
    owner_failures: Mapping[tuple[OwnerStatus, bool], int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(c.count for c in self.cells.values())

    def row(self, watchlisted: bool) -> PoolCell:
        """The "all pools" row for one side of the watchlist split."""
        cells = [c for (h, w), c in self.cells.items() if w is watchlisted]
        return PoolCell(sum(c.count for c in cells), sum(c.total_members for c in cells))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pool_type", "pools_watch", "share_watch", "mu_size_watch",
                    "pools_other", "share_other", "mu_size_other"])
        watch_total, other_total = self.row(True).count, self.row(False).count

        def share(n: int, d: int) -> str:
            return f"{n / d:.4f}" if d else "0.0000"

        for h in Homogeneity:
            a, b = self.cells[(h, True)], self.cells[(h, False)]
            w.writerow([h.value, a.count, share(a.count, watch_total), f"{a.mu_size:.4f}",
                        b.count, share(b.count, other_total), f"{b.mu_size:.4f}"])
        a, b = self.row(True), self.row(False)
        w.writerow(["ALL", a.count, share(a.count, watch_total), f"{a.mu_size:.4f}",
                    b.count, share(b.count, other_total), f"{b.mu_size:.4f}"])
        return buf.getvalue()

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "cells": [
                {"class": h.value, "watchlisted": wl, "count": c.count, "mu_size": c.mu_size}
                for (h, wl), c in sorted(self.cells.items(), key=lambda kv: (kv[0][0].value, kv[0][1]))
            ],
            "top_owners": [vars(r) for r in self.top_owners],
            "top_exchanges": [vars(r) for r in self.top_exchanges],
            "owner_failures": [
                {"status": s.value, "watchlisted": wl, "count": n}
                for (s, wl), n in sorted(self.owner_failures.items(), key=lambda kv: (kv[0][0].value, kv[0][1]))
            ],
        }


def _top(counter: Counter, watch_counter: Counter, k: int) -> tuple[RankedDomain, ...]:
    ranked = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
    return tuple(RankedDomain(d, n, watch_counter.get(d, 0)) for d, n in ranked)


def pool_stats(pools: Iterable[Pool], watchlist: Iterable[str] = (), top_k: int = 5) -> PoolStats:
    """Pool counts and mean sizes by class x watchlist presence, plus the most
    pooled owner domains, issuing exchanges, and owner-resolution failures.

    The watchlist flag is recomputed from ``watchlist``; pools without a
    homogeneity class count as UNKNOWN.
    """
    watch = {registrable_domain(w) for w in watchlist}
    counts: dict[tuple[Homogeneity, bool], list[int]] = {
        (h, wl): [0, 0] for h in Homogeneity for wl in (True, False)
    }
    owners, owners_w = Counter(), Counter()
    exchanges, exchanges_w = Counter(), Counter()
    failures: Counter = Counter()
    for p in pools:
        wl = bool(p.members & watch)
        cell = counts[(p.homogeneity or Homogeneity.UNKNOWN, wl)]
        cell[0] += 1
        cell[1] += len(p.members)
        exchanges[p.exchange_domain] += 1
        if wl:
            exchanges_w[p.exchange_domain] += 1
        if p.owner is not None:
            if p.owner.status is OwnerStatus.RESOLVED:
                owner = registrable_domain(p.owner.owner_domain)
                owners[owner] += 1
                if wl:
                    owners_w[owner] += 1
            else:
                failures[(p.owner.status, wl)] += 1
    return PoolStats(
        cells={key: PoolCell(n, m) for key, (n, m) in counts.items()},
        top_owners=_top(owners, owners_w, top_k),
        top_exchanges=_top(exchanges, exchanges_w, top_k),
        owner_failures=dict(failures),
    )


def pools_to_jsonl(pools: Iterable[Pool]) -> str:
    return "".join(json.dumps(p.to_json(), sort_keys=True) + "\n" for p in pools)
