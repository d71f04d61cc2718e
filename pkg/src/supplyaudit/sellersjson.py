"""sellers.json parsing and seller-ID lookup."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Any, Optional, Union


class SellerType(str, enum.Enum):
    PUBLISHER = "PUBLISHER"
    INTERMEDIARY = "INTERMEDIARY"
    BOTH = "BOTH"
    INVALID = "INVALID"


_VALID_TYPES = {"PUBLISHER": SellerType.PUBLISHER, "INTERMEDIARY": SellerType.INTERMEDIARY, "BOTH": SellerType.BOTH}
_TRUTHY = {"1", "true", "yes"}


@dataclass(frozen=True, slots=True)
class SellerEntry:
    seller_id: Optional[str]
    name: Optional[str]
    domain: Optional[str]
    seller_type_raw: str
    seller_type: SellerType
    is_confidential: bool
    position: int = 0

    @property
    def known_domain(self) -> Optional[str]:
        """The entry's domain when it is disclosed (present and not confidential)."""
        if self.is_confidential or not self.domain:
            return None
        return self.domain


@dataclass(frozen=True)
class SellersJsonFile:
    source_domain: str
    entries: tuple[SellerEntry, ...] = ()
    version: Optional[str] = None
    diagnostics: tuple[tuple[str, str], ...] = ()
    id_index: dict[str, tuple[int, ...]] = field(default_factory=dict, compare=False)
    parseable: bool = True


class DocumentUnparseable(ValueError):
    """Raised by :func:`load_sellers_json_strict` when a document cannot be used."""


def canonical_id(value: Any) -> Optional[str]:
    """Stringify a seller id; numbers become canonical decimal text.

    Returns None for values that cannot serve as an id (missing, empty,
    booleans, containers).
    """
    if value is None or isinstance(value, bool):
        return None
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if value != value or value in (float("inf"), float("-inf")):
            return None
        return str(int(value)) if value.is_integer() else repr(value)
    if isinstance(value, str):
        value = value.strip()
        return value or None
    return None


def _flag(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return value == 1
    if isinstance(value, str):
        return value.strip().lower() in _TRUTHY
    return False


def _text(value: Any) -> Optional[str]:
    if value is None:
        return None
    if not isinstance(value, str):
        value = str(value)
    value = value.strip()
    return value or None


def _unusable(source_domain: str, message: str) -> SellersJsonFile:
    return SellersJsonFile(source_domain, diagnostics=(("$", message),), parseable=False)


def parse_sellers_json(source_domain: str, text: Union[str, bytes]) -> SellersJsonFile:
    """Parse a sellers.json document. Never raises on bad input.

    A document that is not JSON, or lacks a top-level ``sellers`` array, comes
    back with ``parseable=False``, no entries and one diagnostic.
    """
    source_domain = source_domain.strip().lower().rstrip(".")
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    text = text.lstrip("\ufeff")
    try:
        doc = json.loads(text)
    except (ValueError, RecursionError) as exc:
        return _unusable(source_domain, f"document is not valid JSON: {exc}")
    if not isinstance(doc, dict):
        return _unusable(source_domain, "top-level value is not an object")
    sellers = doc.get("sellers")
    if not isinstance(sellers, list):
        return _unusable(source_domain, "missing 'sellers' array")

    entries: list[SellerEntry] = []
    diagnostics: list[tuple[str, str]] = []
    index: dict[str, list[int]] = {}
    for i, item in enumerate(sellers):
        if not isinstance(item, dict):
            diagnostics.append((f"sellers[{i}]", "entry is not an object"))
            continue
        pos = len(entries)
        sid = canonical_id(item.get("seller_id"))
        raw_type = item.get("seller_type")
        raw_type = raw_type.strip() if isinstance(raw_type, str) else ("" if raw_type is None else str(raw_type))
        stype = _VALID_TYPES.get(raw_type.upper(), SellerType.INVALID)
        domain = _text(item.get("domain"))
        if domain is not None:
            domain = domain.lower().rstrip(".")
        confidential = _flag(item.get("is_confidential")) or domain == "confidential"
        entries.append(SellerEntry(sid, _text(item.get("name")), domain, raw_type, stype, confidential, pos))
        if sid is None:
            diagnostics.append((f"sellers[{i}]", "entry has no usable seller_id"))
        else:
            index.setdefault(sid, []).append(pos)

    version = doc.get("version")
    return SellersJsonFile(
        source_domain=source_domain,
        entries=tuple(entries),
        version=None if version is None else str(version),
        diagnostics=tuple(diagnostics),
        id_index={k: tuple(v) for k, v in index.items()},
    )


def lookup_seller(file: SellersJsonFile, seller_id: str) -> list[SellerEntry]:
    positions = file.id_index.get(seller_id.strip(), ())
    return [file.entries[p] for p in positions]


def load_sellers_json_strict(source_domain: str, text: Union[str, bytes]) -> SellersJsonFile:
    parsed = parse_sellers_json(source_domain, text)
    if not parsed.parseable:
        raise DocumentUnparseable(parsed.diagnostics[0][1])
    return parsed
