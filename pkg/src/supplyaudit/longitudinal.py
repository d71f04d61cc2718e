"""Diff two sellers.json snapshots of one exchange."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Iterable, Optional

from .domains import registrable_domain
from .sellersjson import SellersJsonFile


class ExchangeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class DiffReport:
    exchange_domain: str
    old_count: int
    new_count: int
    added: frozenset[str]
    dropped: frozenset[str]

    def to_row(self) -> list:
        return [self.exchange_domain, self.old_count, self.new_count, len(self.added), len(self.dropped)]


def listed_domains(sellers: SellersJsonFile) -> set[str]:
    """Distinct disclosed publisher sites; confidential entries are invisible."""
    out = set()
    for e in sellers.entries:
        if e.known_domain:
            site = registrable_domain(e.known_domain)
            if site:
                out.add(site)
    return out


def diff_snapshots(
    old: SellersJsonFile,
    new: SellersJsonFile,
    watchlist: Optional[Iterable[str]] = None,
) -> DiffReport:
    if registrable_domain(old.source_domain) != registrable_domain(new.source_domain):
        raise ExchangeMismatch(f"{old.source_domain} != {new.source_domain}")
    before, after = listed_domains(old), listed_domains(new)
    if watchlist is not None:
        watch = {registrable_domain(w) for w in watchlist}
        before &= watch
        after &= watch
    return DiffReport(
        exchange_domain=new.source_domain,
        old_count=len(before),
        new_count=len(after),
        added=frozenset(after - before),
        dropped=frozenset(before - after),
    )


def diffs_to_csv(reports: Iterable[DiffReport]) -> str:
    """Rows ordered by dropped count (descending), then exchange name."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["exchange", "old_count", "new_count", "added", "dropped"])
    for r in sorted(reports, key=lambda r: (-len(r.dropped), r.exchange_domain)):
        w.writerow(r.to_row())
    return buf.getvalue()
