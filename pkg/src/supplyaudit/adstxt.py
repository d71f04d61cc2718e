"""ads.txt parsing.

Every physical line of the input ends up in exactly one bucket: a record, a
variable, a comment/blank line, or a diagnostic. Nothing here raises on bad
input; malformed lines are reported and skipped.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Optional, Union

from .domains import is_valid_hostname


class Relationship(str, enum.Enum):
    DIRECT = "DIRECT"
    RESELLER = "RESELLER"


class LineKind(str, enum.Enum):
    RECORD = "record"
    VARIABLE = "variable"
    COMMENT = "comment"
    DIAGNOSTIC = "diagnostic"


@dataclass(frozen=True)
class AdsTxtRecord:
    exchange_domain: str
    publisher_id: str
    relationship: Relationship
    cert_authority_id: Optional[str] = None
    line_no: int = 0

    def key(self) -> tuple[str, str, Relationship, Optional[str]]:
        """Identity without the line number (used for round-trip and dedup)."""
        return (self.exchange_domain, self.publisher_id, self.relationship, self.cert_authority_id)


@dataclass(frozen=True)
class AdsTxtVariable:
    name: str
    value: str
    line_no: int


@dataclass(frozen=True)
class AdsTxtFile:
    source_domain: str
    records: tuple[AdsTxtRecord, ...] = ()
    variables: tuple[AdsTxtVariable, ...] = ()
    diagnostics: tuple[tuple[int, str], ...] = ()
    line_kinds: tuple[LineKind, ...] = ()

    @property
    def line_count(self) -> int:
        return len(self.line_kinds)

    def count(self, kind: LineKind) -> int:
        return sum(1 for k in self.line_kinds if k is kind)

    def variable(self, name: str) -> list[str]:
        """All values declared for a variable name (case-insensitive)."""
        wanted = name.upper()
        return [v.value for v in self.variables if v.name == wanted]

    @property
    def variable_map(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for v in self.variables:
            out.setdefault(v.name, []).append(v.value)
        return out


_VARIABLE_RE = re.compile(r"^([A-Za-z][A-Za-z0-9_-]*)\s*=\s*(.*)$")


def _decode(text: Union[str, bytes]) -> str:
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    return text.lstrip("\ufeff")


def _parse_record(body: str, line_no: int) -> Union[AdsTxtRecord, str]:
    """Return a record, or a diagnostic message for a malformed data line."""
    # extension fields follow ';' and are not part of the record grammar
    body = body.split(";", 1)[0]
    fields = [f.strip() for f in body.split(",")]
    if len(fields) < 3:
        return f"expected at least 3 comma-separated fields, found {len(fields)}"
    exchange = fields[0].lower().rstrip(".")
    if not exchange:
        return "empty exchange domain"
    if not is_valid_hostname(exchange):
        return f"exchange domain {fields[0]!r} is not a hostname"
    publisher_id = fields[1]
    if not publisher_id:
        return "empty publisher id"
    rel_token = fields[2].upper()
    try:
        relationship = Relationship(rel_token)
    except ValueError:
        return f"unknown relationship {fields[2]!r}"
    cert = fields[3] if len(fields) > 3 and fields[3] else None
    return AdsTxtRecord(exchange, publisher_id, relationship, cert, line_no)


def parse_ads_txt(source_domain: str, text: Union[str, bytes]) -> AdsTxtFile:
    records: list[AdsTxtRecord] = []
    variables: list[AdsTxtVariable] = []
    diagnostics: list[tuple[int, str]] = []
    kinds: list[LineKind] = []

    for line_no, raw in enumerate(_decode(text).splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            kinds.append(LineKind.COMMENT)
            continue

        eq, comma = body.find("="), body.find(",")
        if eq != -1 and (comma == -1 or eq < comma):
            m = _VARIABLE_RE.match(body)
            if m:
                variables.append(AdsTxtVariable(m.group(1).upper(), m.group(2).strip(), line_no))
                kinds.append(LineKind.VARIABLE)
                continue
            if comma == -1:
                diagnostics.append((line_no, "malformed variable declaration"))
                kinds.append(LineKind.DIAGNOSTIC)
                continue

        parsed = _parse_record(body, line_no)
        if isinstance(parsed, AdsTxtRecord):
            records.append(parsed)
            kinds.append(LineKind.RECORD)
        else:
            diagnostics.append((line_no, parsed))
            kinds.append(LineKind.DIAGNOSTIC)

    return AdsTxtFile(
        source_domain=source_domain.strip().lower().rstrip("."),
        records=tuple(records),
        variables=tuple(variables),
        diagnostics=tuple(diagnostics),
        line_kinds=tuple(kinds),
    )


def format_record(record: AdsTxtRecord) -> str:
    fields = [record.exchange_domain, record.publisher_id, record.relationship.value]
    if record.cert_authority_id:
        fields.append(record.cert_authority_id)
    return ", ".join(fields)
