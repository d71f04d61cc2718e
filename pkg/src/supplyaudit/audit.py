"""Cross-checks between a publisher's ads.txt and exchanges' sellers.json files.

Publisher-side checks (``audit_publisher``) look at each ads.txt record
against the named exchange's sellers.json. Exchange-side checks
(``audit_exchange``) look at the entries of one sellers.json file.
"""

from __future__ import annotations

import csv
import enum
import io
import json
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional

from .adstxt import AdsTxtFile, Relationship
from .domains import is_valid_hostname, normalize_host
from .fetch import SnapshotStore
from .sellersjson import SellersJsonFile, SellerType, lookup_seller


class FindingKind(str, enum.Enum):
    MISREPRESENTED_DIRECT = "MISREPRESENTED_DIRECT"
    FABRICATED_ID = "FABRICATED_ID"
    CONFLICTING_RELATIONSHIPS = "CONFLICTING_RELATIONSHIPS"
    INVALID_SELLER_TYPE = "INVALID_SELLER_TYPE"
    INVALID_DOMAIN = "INVALID_DOMAIN"
    CONFIDENTIAL_SELLER = "CONFIDENTIAL_SELLER"
    INTERMEDIARY_WITHOUT_SELLERS_JSON = "INTERMEDIARY_WITHOUT_SELLERS_JSON"
    NON_UNIQUE_ID = "NON_UNIQUE_ID"
    UNVERIFIABLE = "UNVERIFIABLE"


PUBLISHER_KINDS = (
    FindingKind.MISREPRESENTED_DIRECT,
    FindingKind.FABRICATED_ID,
    FindingKind.CONFLICTING_RELATIONSHIPS,
)
EXCHANGE_KINDS = (
    FindingKind.INVALID_SELLER_TYPE,
    FindingKind.INVALID_DOMAIN,
    FindingKind.CONFIDENTIAL_SELLER,
    FindingKind.INTERMEDIARY_WITHOUT_SELLERS_JSON,
    FindingKind.NON_UNIQUE_ID,
)


@dataclass(frozen=True, order=True)
class EvidenceRef:
    """Points at one side of a contradiction: ``file`` is e.g.
    ``pub.example/ads.txt`` and ``position`` a line number (ads.txt) or an
    entry index (sellers.json)."""

    file: str
    position: Optional[int] = None


@dataclass(frozen=True)
class Finding:
    kind: FindingKind
    subject_domain: str
    exchange_domain: Optional[str] = None
    publisher_id: Optional[str] = None
    message: str = ""
    refs: tuple[EvidenceRef, ...] = ()
    severity: str = "error"

    def sort_key(self) -> tuple:
        return (self.subject_domain, self.kind.value, self.exchange_domain or "", self.publisher_id or "", self.refs)

    def to_json(self) -> dict:
        return {
            "kind": self.kind.value,
            "subject": self.subject_domain,
            "exchange": self.exchange_domain,
            "publisher_id": self.publisher_id,
            "severity": self.severity,
            "message": self.message,
            "refs": [{"file": r.file, "position": r.position} for r in self.refs],
        }


def _ads_ref(ads: AdsTxtFile, line_no: int) -> EvidenceRef:
    return EvidenceRef(f"{ads.source_domain}/ads.txt", line_no)


def _sellers_ref(domain: str, position: Optional[int] = None) -> EvidenceRef:
    return EvidenceRef(f"{domain}/sellers.json", position)


def audit_publisher(ads: AdsTxtFile, store: SnapshotStore) -> list[Finding]:
    findings: list[Finding] = []
    pub = ads.source_domain
    rels: dict[tuple[str, str], dict[Relationship, list[int]]] = defaultdict(lambda: defaultdict(list))

    for rec in ads.records:
        adx, pid = rec.exchange_domain, rec.publisher_id
        rels[(adx, pid)][rec.relationship].append(rec.line_no)
        sellers = store.sellers(adx)
        if sellers is None:
            findings.append(Finding(
                FindingKind.UNVERIFIABLE, pub, adx, pid,
                f"sellers.json for {adx} is {store.sellers_state(adx)}",
                (_ads_ref(ads, rec.line_no), _sellers_ref(adx)),
            ))
            continue
        entries = lookup_seller(sellers, pid)
        if not entries:
            findings.append(Finding(
                FindingKind.FABRICATED_ID, pub, adx, pid,
                f"{adx} sellers.json has no entry for seller_id {pid!r}",
                (_ads_ref(ads, rec.line_no), _sellers_ref(adx)),
            ))
            continue
        if rec.relationship is Relationship.DIRECT and all(
            e.seller_type is SellerType.INTERMEDIARY for e in entries
        ):
            findings.append(Finding(
                FindingKind.MISREPRESENTED_DIRECT, pub, adx, pid,
                f"ads.txt claims DIRECT but {adx} lists {pid!r} as INTERMEDIARY",
                (_ads_ref(ads, rec.line_no),) + tuple(_sellers_ref(adx, e.position) for e in entries),
            ))

    for (adx, pid), by_rel in rels.items():
        if len(by_rel) < 2:
            continue
        sellers = store.sellers(adx)
        if sellers is None:
            continue
        entries = lookup_seller(sellers, pid)
        types = {e.seller_type for e in entries}
        if len(types) != 1 or SellerType.BOTH in types:
            continue
        only = next(iter(types))
        lines = sorted(n for ns in by_rel.values() for n in ns)
        findings.append(Finding(
            FindingKind.CONFLICTING_RELATIONSHIPS, pub, adx, pid,
            f"ads.txt claims both DIRECT and RESELLER; {adx} lists only {only.value}",
            tuple(_ads_ref(ads, n) for n in lines) + tuple(_sellers_ref(adx, e.position) for e in entries),
        ))
    return findings


def audit_exchange(sellers: SellersJsonFile, store: SnapshotStore) -> list[Finding]:
    findings: list[Finding] = []
    adx = sellers.source_domain
    for e in sellers.entries:
        ref = (_sellers_ref(adx, e.position),)
        if e.seller_type is SellerType.INVALID:
            findings.append(Finding(
                FindingKind.INVALID_SELLER_TYPE, adx, adx, e.seller_id,
                f"seller_type {e.seller_type_raw!r} is not PUBLISHER, INTERMEDIARY or BOTH", ref,
            ))
        if e.domain and not e.is_confidential and not is_valid_hostname(e.domain):
            findings.append(Finding(
                FindingKind.INVALID_DOMAIN, adx, adx, e.seller_id,
                f"domain {e.domain!r} is not a valid domain name", ref,
            ))
        if e.is_confidential:
            findings.append(Finding(
                FindingKind.CONFIDENTIAL_SELLER, adx, adx, e.seller_id,
                "seller is confidential; owner cannot be verified", ref, severity="info",
            ))
        if (
            e.seller_type in (SellerType.INTERMEDIARY, SellerType.BOTH)
            and e.known_domain
            and is_valid_hostname(e.known_domain)
            and store.sellers(e.known_domain) is None
        ):
            state = store.sellers_state(e.known_domain)
            findings.append(Finding(
                FindingKind.INTERMEDIARY_WITHOUT_SELLERS_JSON, adx, adx, e.seller_id,
                f"intermediary {e.known_domain} has no usable sellers.json ({state})",
                ref + (_sellers_ref(normalize_host(e.known_domain)),),
            ))

    for sid, positions in sellers.id_index.items():
        domains = {sellers.entries[p].known_domain for p in positions} - {None}
        if len(domains) >= 2:
            findings.append(Finding(
                FindingKind.NON_UNIQUE_ID, adx, adx, sid,
                f"seller_id {sid!r} is listed with {len(domains)} domains: {', '.join(sorted(domains))}",
                tuple(_sellers_ref(adx, p) for p in positions),
            ))
    return findings


def audit_corpus(store: SnapshotStore) -> list[Finding]:
    """All publisher and exchange findings for the store's snapshot date, sorted."""
    findings: list[Finding] = []
    for ads in store.ads_files():
        findings.extend(audit_publisher(ads, store))
    for sellers in store.sellers_files():
        findings.extend(audit_exchange(sellers, store))
    return sorted(findings, key=Finding.sort_key)


# -- prevalence -------------------------------------------------------------


class EmptyCohort(ValueError):
    pass


@dataclass(frozen=True)
class Cohort:
    """A labeled set of subjects (publishers or exchanges).

    ``entry_counts`` maps each subject to its number of entries (ads.txt
    records or sellers.json entries) and is needed only for entry-level
    fractions.
    """

    name: str
    subjects: frozenset[str]
    entry_counts: Mapping[str, int] = field(default_factory=dict)

    @classmethod
    def of(cls, name: str, subjects: Iterable[str], entry_counts: Optional[Mapping[str, int]] = None) -> "Cohort":
        return cls(name, frozenset(normalize_host(s) for s in subjects), dict(entry_counts or {}))


@dataclass(frozen=True)
class PrevalenceCell:
    kind: FindingKind
    cohort: str
    subjects_flagged: int
    subjects_total: int
    entries_flagged: int
    entries_total: int

    @property
    def subject_fraction(self) -> Fraction:
        return Fraction(self.subjects_flagged, self.subjects_total)

    @property
    def entry_fraction(self) -> Optional[Fraction]:
        if not self.entries_total:
            return None
        return Fraction(self.entries_flagged, self.entries_total)


@dataclass(frozen=True)
class PrevalenceReport:
    cells: tuple[PrevalenceCell, ...]

    def cell(self, kind: FindingKind, cohort: str) -> PrevalenceCell:
        for c in self.cells:
            if c.kind is kind and c.cohort == cohort:
                return c
        raise KeyError((kind, cohort))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kind", "cohort", "subjects_flagged", "subjects_total", "subject_fraction",
                    "entries_flagged", "entries_total", "entry_fraction"])
        for c in self.cells:
            ef = c.entry_fraction
            w.writerow([c.kind.value, c.cohort, c.subjects_flagged, c.subjects_total,
                        f"{float(c.subject_fraction):.6f}", c.entries_flagged, c.entries_total,
                        "" if ef is None else f"{float(ef):.6f}"])
        return buf.getvalue()


def prevalence_table(
    findings: Iterable[Finding],
    population: Iterable[Cohort],
    kinds: Iterable[FindingKind] = tuple(FindingKind),
) -> PrevalenceReport:
    """Per kind and cohort: the fraction of subjects with at least one finding
    and the fraction of entries carrying one.

    An entry is identified by its first evidence ref (the ads.txt line or the
    sellers.json entry the finding is about).
    """
    findings = list(findings)
    cells = []
    for cohort in population:
        if not cohort.subjects:
            raise EmptyCohort(f"cohort {cohort.name!r} has no subjects")
        entries_total = sum(cohort.entry_counts.get(s, 0) for s in cohort.subjects)
        for kind in kinds:
            hits = [f for f in findings if f.kind is kind and f.subject_domain in cohort.subjects]
            subjects = {f.subject_domain for f in hits}
            entries = {(f.subject_domain, f.refs[0] if f.refs else None) for f in hits}
            cells.append(PrevalenceCell(kind, cohort.name, len(subjects), len(cohort.subjects),
                                        len(entries), entries_total))
    return PrevalenceReport(tuple(cells))


def findings_to_jsonl(findings: Iterable[Finding]) -> str:
    return "".join(json.dumps(f.to_json(), sort_keys=True) + "\n" for f in findings)


def findings_to_csv(findings: Iterable[Finding]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "severity", "subject", "exchange", "publisher_id", "refs", "message"])
    for f in findings:
        refs = ";".join(r.file if r.position is None else f"{r.file}:{r.position}" for r in f.refs)
        w.writerow([f.kind.value, f.severity, f.subject_domain, f.exchange_domain or "",
                    f.publisher_id or "", refs, f.message])
    return buf.getvalue()
