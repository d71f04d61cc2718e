"""Command-line entry point.

Exit status: 0 on success, 1 on configuration errors, 2 when a required
input is empty (no seeds, no ads.txt in the snapshot, no HAR files, ...).
Reports are deterministic for a given snapshot; the only dates written are
the snapshot dates in each report's ``metadata`` block.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .audit import (
    EXCHANGE_KINDS,
    PUBLISHER_KINDS,
    Cohort,
    FindingKind,
    audit_corpus,
    findings_to_csv,
    findings_to_jsonl,
    prevalence_table,
)
from .brands import (
    RankList,
    brand_distribution_csv,
    exposure_table,
    exposure_to_csv,
    load_pairs,
    regression_report,
)
from .config import ConfigError, RunConfig, load_config, read_domain_list
from .domains import registrable_domain
from .fetch import FetchStatus, Kind, MirrorTransport, RequestsTransport, SnapshotStore, resolve_closure
from .longitudinal import diff_snapshots, diffs_to_csv
from .pools import EntityMap, annotate_pools, detect_pools, pool_stats, pools_to_jsonl
from .rtb import FilterRuleSet, build_id_index, derive_triples, load_har, mine_flows
from .schain import ScoStatus, sco_stats, validate_sco

log = logging.getLogger("supplyaudit")

PROXY_ENV = "SUPPLYAUDIT_PROXY"


class EmptyInput(Exception):
    pass


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    target = out / name
    target.write_text(text, encoding="utf-8")
    return target


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _open_store(cfg: RunConfig, date: Optional[str]) -> SnapshotStore:
    return SnapshotStore.open(cfg.snapshot_root, date, alternate_paths=cfg.alternate_paths)


# -- pipelines shared by the individual commands and `report` -------------


def run_audit(cfg: RunConfig, store: SnapshotStore, out: Path) -> dict:
    publishers = store.ads_files()
    if not publishers:
        raise EmptyInput(f"no ads.txt files in snapshot {store.snapshot_date}")
    findings = audit_corpus(store)
    watch = {registrable_domain(w) for w in cfg.read_watchlist()}

    pub_counts = {a.source_domain: len(a.records) for a in publishers}
    pub_cohorts = _split(pub_counts, lambda d: registrable_domain(d) in watch, bool(watch))
    exchanges = store.sellers_files()
    ex_counts = {s.source_domain: len(s.entries) for s in exchanges}
    serving = {
        s.source_domain for s in exchanges
        if any(e.known_domain and registrable_domain(e.known_domain) in watch for e in s.entries)
    }
    ex_cohorts = _split(ex_counts, lambda d: d in serving, bool(watch))

    pub_table = prevalence_table(findings, pub_cohorts, PUBLISHER_KINDS + (FindingKind.UNVERIFIABLE,))
    _write(out, "findings.jsonl", findings_to_jsonl(findings))
    _write(out, "findings.csv", findings_to_csv(findings))
    _write(out, "prevalence_publishers.csv", pub_table.to_csv())
    if ex_cohorts:
        _write(out, "prevalence_exchanges.csv", prevalence_table(findings, ex_cohorts, EXCHANGE_KINDS).to_csv())

    by_kind: dict[str, int] = {k.value: 0 for k in FindingKind}
    for f in findings:
        by_kind[f.kind.value] += 1
    return {"publishers": len(publishers), "exchanges": len(exchanges), "findings": len(findings), "by_kind": by_kind}


def _split(counts: dict[str, int], flagged, use_watch: bool) -> list[Cohort]:
    if not counts:
        return []
    if not use_watch:
        return [Cohort.of("all", counts, counts)]
    cohorts = []
    for name, want in (("watchlist", True), ("control", False)):
        members = [d for d in counts if bool(flagged(d)) is want]
        if members:
            cohorts.append(Cohort.of(name, members, counts))
    return cohorts


def _entities(cfg: RunConfig) -> EntityMap:
    return EntityMap.load(cfg.entity_map) if cfg.entity_map else EntityMap()


def build_pools(cfg: RunConfig, store: SnapshotStore):
    corpus = store.ads_files()
    if not corpus:
        raise EmptyInput(f"no ads.txt files in snapshot {store.snapshot_date}")
    pools = detect_pools(corpus, direct_only=cfg.direct_only)
    return annotate_pools(pools, _entities(cfg), store, cfg.read_watchlist())


def run_pools(cfg: RunConfig, store: SnapshotStore, out: Path) -> dict:
    pools = build_pools(cfg, store)
    stats = pool_stats(pools, cfg.read_watchlist())
    _write(out, "pools.jsonl", pools_to_jsonl(pools))
    _write(out, "pool_stats.csv", stats.to_csv())
    _write(out, "pool_stats.json", _dump(stats.to_json()))
    return stats.to_json()


def run_mine(cfg: RunConfig, store: SnapshotStore, har_dir: Path, out: Path) -> dict:
    hars = sorted(har_dir.glob("*.har")) if har_dir.is_dir() else []
    if not hars:
        raise EmptyInput(f"no .har files in {har_dir}")
    rules = FilterRuleSet.load(cfg.filter_lists)
    index = build_id_index(store)
    hits = []
    for path in hars:
        try:
            page, flows = load_har(path)
        except ValueError as exc:
            log.warning("skipping %s: %s", path, exc)
            continue
        if page is None:
            continue
        hits.extend(mine_flows(flows, page, rules, index))
    hits.sort()
    triples = derive_triples(hits, store)
    _write(out, "id_hits.jsonl", "".join(json.dumps(vars(h), sort_keys=True) + "\n" for h in hits))
    _write(out, "triples.jsonl", "".join(json.dumps(t.to_json(), sort_keys=True) + "\n" for t in triples))
    return {"har_files": len(hars), "rules": len(rules.rules), "hits": len(hits), "triples": len(triples)}


def read_payloads(path: Path) -> list[tuple[str, str]]:
    """Lines of ``observed_domain<TAB>payload`` or JSON ``{"domain":..., "payload":...}``."""
    rows = []
    for line in path.read_text(encoding="utf-8", errors="replace").splitlines():
        if not line.strip():
            continue
        if line.lstrip().startswith("{"):
            try:
                obj = json.loads(line)
            except ValueError:
                obj = None
            if isinstance(obj, dict) and "domain" in obj and "payload" in obj:
                payload = obj["payload"]
                rows.append((str(obj["domain"]), payload if isinstance(payload, str) else json.dumps(payload)))
                continue
        if "\t" in line:
            domain, payload = line.split("\t", 1)
            rows.append((domain.strip(), payload))
    return rows


def run_schain(cfg: RunConfig, store: SnapshotStore, payloads: Path, out: Path, check_links: bool = False) -> dict:
    rows = read_payloads(payloads)
    if not rows:
        raise EmptyInput(f"no payloads in {payloads}")
    cache: dict = {}
    verdicts = [validate_sco(p, d, store, check_links=check_links, _path_cache=cache) for d, p in rows]
    lines = []
    for (domain, _), v in zip(rows, verdicts):
        obj = v.to_json()
        obj["observed_domain"] = domain
        lines.append(json.dumps(obj, sort_keys=True) + "\n")
    stats = sco_stats(verdicts)
    _write(out, "sco_verdicts.jsonl", "".join(lines))
    _write(out, "sco_stats.json", _dump(stats.to_json()))
    summary = stats.to_json()
    summary["by_status"] = {s.value: sum(1 for v in verdicts if v.status is s) for s in ScoStatus}
    return summary


def run_diff(cfg: RunConfig, old_date: str, new_date: str, out: Path) -> dict:
    old_store = _open_store(cfg, old_date)
    new_store = _open_store(cfg, new_date)
    watch = cfg.read_watchlist() or None
    shared = sorted(set(old_store.domains(Kind.SELLERS)) & set(new_store.domains(Kind.SELLERS)))
    reports = []
    for domain in shared:
        old, new = old_store.sellers(domain), new_store.sellers(domain)
        if old is None or new is None:
            continue
        reports.append(diff_snapshots(old, new, watch))
    if not reports:
        raise EmptyInput(f"no exchange has usable sellers.json on both {old_date} and {new_date}")
    _write(out, "longitudinal.csv", diffs_to_csv(reports))
    return {"exchanges": len(reports), "with_changes": sum(1 for r in reports if r.added or r.dropped)}


def run_brands(cfg: RunConfig, store: SnapshotStore, pairs_path: Path, out: Path) -> dict:
    pairs = load_pairs(pairs_path)
    if not pairs:
        raise EmptyInput(f"no (publisher, brand) pairs in {pairs_path}")
    ranks = RankList.load(cfg.rank_list) if cfg.rank_list else RankList()
    pools = build_pools(cfg, store) if store.ads_files() else []
    rows = exposure_table(pairs, ranks, pools)
    regression = regression_report(rows)
    _write(out, "exposure.csv", exposure_to_csv(rows))
    _write(out, "brand_distribution.csv", brand_distribution_csv(rows))
    _write(out, "regression.json", _dump(regression))
    return {"publishers": len(rows), "regression": regression}


# -- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="supplyaudit",
        description="Audit ads.txt and sellers.json disclosures, publisher-ID pools and supply chain objects.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--snapshot-date", help="snapshot date (yyyy-mm-dd); default: latest in the store")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
    common.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("fetch", parents=[common], help="crawl ads.txt and the sellers.json closure")
    p.add_argument("--seeds", type=Path, help="seed publisher list (overrides config)")
    p.add_argument("--mirror", type=Path, help="replay files from a local mirror directory instead of HTTP")
    sub.add_parser("audit", parents=[common], help="run the misrepresentation checks")
    sub.add_parser("pools", parents=[common], help="detect and classify publisher-ID pools")
    p = sub.add_parser("mine", parents=[common], help="mine HAR captures for ID evidence")
    p.add_argument("--har-dir", type=Path, required=True)
    p = sub.add_parser("schain", parents=[common], help="validate supply chain objects")
    p.add_argument("--payloads", type=Path, required=True)
    p.add_argument("--check-links", action="store_true", help="also verify adjacent multi-node links")
    p = sub.add_parser("diff", parents=[common], help="diff sellers.json between two snapshot dates")
    p.add_argument("--old-date", required=True)
    p = sub.add_parser("brands", parents=[common], help="brand exposure and rank regression")
    p.add_argument("--pairs", type=Path, required=True)
    p = sub.add_parser("report", parents=[common], help="run everything available into one summary")
    p.add_argument("--har-dir", type=Path)
    p.add_argument("--payloads", type=Path)
    p.add_argument("--pairs", type=Path)
    p.add_argument("--old-date")
    return parser


def _dispatch(args: argparse.Namespace, cfg: RunConfig) -> dict:
    out: Path = args.out
    if args.command == "fetch":
        seeds_path = args.seeds or cfg.seeds
        if seeds_path is None or not Path(seeds_path).exists():
            raise ConfigError("fetch needs a seeds file (--seeds or config 'seeds')")
        seeds = read_domain_list(seeds_path)
        if not seeds:
            raise EmptyInput(f"no seeds in {seeds_path}")
        mirror = args.mirror or cfg.mirror
        transport = MirrorTransport(mirror) if mirror else RequestsTransport(os.environ.get(PROXY_ENV))
        date = args.snapshot_date or datetime.now(timezone.utc).date().isoformat()
        store = SnapshotStore.open(cfg.snapshot_root, date, alternate_paths=cfg.alternate_paths)
        resolve_closure(seeds, transport, store, cfg.fetch)
        rows = [r for r in store.manifest if r.snapshot_date == store.snapshot_date]
        summary = {
            "fetched": len(rows),
            "by_status": {s.value: sum(1 for r in rows if r.status is s) for s in FetchStatus},
            "frontier_losses": [list(x) for x in sorted(store.frontier_losses)],
        }
        _write(out, "fetch_summary.json", _dump({"metadata": {"snapshot_date": store.snapshot_date}, **summary}))
        return summary

    if args.command == "diff":
        new_date = args.snapshot_date or _open_store(cfg, None).snapshot_date
        return run_diff(cfg, args.old_date, new_date, out)

    store = _open_store(cfg, args.snapshot_date)
    if args.command == "audit":
        return run_audit(cfg, store, out)
    if args.command == "pools":
        return run_pools(cfg, store, out)
    if args.command == "mine":
        return run_mine(cfg, store, args.har_dir, out)
    if args.command == "schain":
        return run_schain(cfg, store, args.payloads, out, args.check_links)
    if args.command == "brands":
        return run_brands(cfg, store, args.pairs, out)

    # report
    summary: dict = {"metadata": {"snapshot_date": store.snapshot_date}}
    summary["audit"] = run_audit(cfg, store, out / "audit")
    summary["pools"] = run_pools(cfg, store, out / "pools")
    if args.har_dir:
        summary["mine"] = run_mine(cfg, store, args.har_dir, out / "mine")
    if args.payloads:
        summary["schain"] = run_schain(cfg, store, args.payloads, out / "schain")
    if args.pairs:
        summary["brands"] = run_brands(cfg, store, args.pairs, out / "brands")
    if args.old_date:
        summary["diff"] = run_diff(cfg, args.old_date, store.snapshot_date, out / "diff")
        summary["metadata"]["old_snapshot_date"] = args.old_date
    _write(out, "report.json", _dump(summary))
    return summary


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        summary = _dispatch(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except EmptyInput as exc:
        print(f"empty input: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(summary, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
