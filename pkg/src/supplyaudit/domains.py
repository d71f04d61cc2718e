"""Hostname normalization, syntax checks, and registrable-domain reduction."""

from __future__ import annotations

import re
from functools import lru_cache
from urllib.parse import urlsplit

import tldextract

# Bundled public suffix snapshot only; never reach out to the network.
_extract = tldextract.TLDExtract(suffix_list_urls=(), cache_dir=None)

_LABEL_RE = re.compile(r"^[a-z0-9](?:[a-z0-9-]*[a-z0-9])?$")


def normalize_host(value: str) -> str:
    """Lowercase, trim whitespace, drop a trailing dot, scheme, path and port."""
    host = value.strip().lower()
    if "://" in host:
        host = urlsplit(host).hostname or ""
    else:
        host = host.split("/", 1)[0]
        if host.count(":") == 1:
            host = host.split(":", 1)[0]
    return host.rstrip(".")


def is_valid_hostname(value: str) -> bool:
    """Conservative hostname check: >=2 dot-separated labels of [a-z0-9-],
    no label starting or ending with a hyphen.

    Upper-case input is accepted (DNS is case-insensitive) but anything else
    outside the label alphabet is rejected, including schemes and paths.
    """
    host = value.strip().lower().rstrip(".")
    if not host or len(host) > 253:
        return False
    labels = host.split(".")
    if len(labels) < 2:
        return False
    return all(len(label) <= 63 and _LABEL_RE.match(label) for label in labels)


@lru_cache(maxsize=1 << 18)
def registrable_domain(value: str) -> str:
    """Reduce a hostname (or URL) to its eTLD+1.

    Hosts under a TLD missing from the public suffix list (``.example``,
    ``.test``, internal names) fall back to their last two labels, so
    ``www.a.example`` and ``a.example`` still collapse to one site.
    """
    host = normalize_host(value)
    if not host:
        return ""
    parts = _extract(host)
    if parts.suffix and parts.domain:
        return f"{parts.domain}.{parts.suffix}"
    labels = host.split(".")
    return ".".join(labels[-2:])


def same_site(a: str, b: str) -> bool:
    return bool(a) and bool(b) and registrable_domain(a) == registrable_domain(b)
