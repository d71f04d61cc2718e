"""Audit the programmatic-advertising supply chain from public disclosures.

Parses ads.txt and sellers.json, cross-checks them, finds shared publisher-ID
pools, mines bid traffic for ID evidence, validates OpenRTB supply chain
objects, and summarizes snapshots over time and brand exposure.
"""

__version__ = "0.1.0"

from .adstxt import AdsTxtFile, AdsTxtRecord, Relationship, parse_ads_txt
from .audit import Finding, FindingKind, audit_corpus, audit_exchange, audit_publisher, prevalence_table
from .brands import RankList, classify_reputable, exposure_table, ols_slope
from .fetch import FetchResult, FetchStatus, Kind, SnapshotStore, fetch_disclosure, resolve_closure
from .longitudinal import DiffReport, diff_snapshots
from .pools import (
    EntityMap,
    Homogeneity,
    OwnerStatus,
    Pool,
    classify_homogeneity,
    detect_pools,
    pool_stats,
    resolve_owner,
)
from .rtb import FilterRuleSet, classify_ad_flow, derive_triples, extract_kv, match_ids
from .schain import ScoStatus, check_a, parse_schain, sco_stats, static_paths, validate_sco
from .sellersjson import SellerEntry, SellersJsonFile, SellerType, lookup_seller, parse_sellers_json

__all__ = [
    "AdsTxtFile", "AdsTxtRecord", "Relationship", "parse_ads_txt",
    "Finding", "FindingKind", "audit_corpus", "audit_exchange", "audit_publisher", "prevalence_table",
    "RankList", "classify_reputable", "exposure_table", "ols_slope",
    "FetchResult", "FetchStatus", "Kind", "SnapshotStore", "fetch_disclosure", "resolve_closure",
    "DiffReport", "diff_snapshots",
    "EntityMap", "Homogeneity", "OwnerStatus", "Pool", "classify_homogeneity", "detect_pools",
    "pool_stats", "resolve_owner",
    "FilterRuleSet", "classify_ad_flow", "derive_triples", "extract_kv", "match_ids",
    "ScoStatus", "check_a", "parse_schain", "sco_stats", "static_paths", "validate_sco",
    "SellerEntry", "SellersJsonFile", "SellerType", "lookup_seller", "parse_sellers_json",
]
