import json
from pathlib import Path

import pytest

from supplyaudit.cli import main, read_payloads
from supplyaudit.fetch import Kind, SnapshotStore

from conftest import TickClock, seller, sellers_doc

FIXTURES = Path(__file__).parent / "fixtures"


def _config(tmp_path, name, **extra):
    fixture = FIXTURES / name
    cfg = {
        "snapshot_root": str(tmp_path / "snapshots"),
        "seeds": str(fixture / "seeds.txt"),
        "mirror": str(fixture / "mirror"),
        "fetch": {"delay": 0, "backoff": 0, "retries": 0},
    }
    cfg.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def _fetch(tmp_path, name, capsys, **extra):
    cfg = _config(tmp_path, name, **extra)
    assert main(["fetch", "--config", cfg, "--snapshot-date", "2022-02-01", "--out", str(tmp_path / "f")]) == 0
    capsys.readouterr()
    return cfg


def _summary(capsys):
    return json.loads(capsys.readouterr().out)


def test_fetch_then_audit_clean_corpus(tmp_path, capsys):
    cfg = _fetch(tmp_path, "clean", capsys)
    out = tmp_path / "out"
    assert main(["audit", "--config", cfg, "--out", str(out)]) == 0
    summary = _summary(capsys)
    assert summary["findings"] == 0 and summary["publishers"] == 2 and summary["exchanges"] == 2
    assert (out / "findings.jsonl").read_text() == ""
    assert (out / "prevalence_publishers.csv").exists()


def test_pools_fixture(tmp_path, capsys):
    fixture = FIXTURES / "pooled"
    cfg = _fetch(tmp_path, "pooled", capsys,
                 entity_map=str(fixture / "entities.json"), watchlist=str(fixture / "watchlist.txt"))
    out = tmp_path / "out"
    assert main(["pools", "--config", cfg, "--out", str(out)]) == 0
    got = [json.loads(line) for line in (out / "pools.jsonl").read_text().splitlines()]
    expected = json.loads((fixture / "expected_pools.json").read_text())
    assert [(g["exchange"], g["publisher_id"], g["members"], g["class"], g["owner_domain"]) for g in got] == [
        (e["exchange"], e["publisher_id"], e["members"], e["homogeneity"], e["owner"]) for e in expected
    ]
    assert [g["watchlisted"] for g in got] == [False, True, True]
    assert "HETEROGENEOUS,2,1.0000,3.0000,0,0.0000,0.0000" in (out / "pool_stats.csv").read_text()


def test_schain_hand_counts(tmp_path, capsys):
    cfg = _fetch(tmp_path, "clean", capsys)
    out = tmp_path / "out"
    assert main(["schain", "--config", cfg, "--payloads", str(FIXTURES / "clean" / "payloads.tsv"), "--out", str(out)]) == 0
    summary = _summary(capsys)
    assert (summary["total"], summary["with_sco"], summary["correct"]) == (10, 6, 3)
    assert (summary["adoption_ratio"], summary["correctness_ratio"]) == (0.6, 0.5)
    assert summary["by_status"] == {"ABSENT": 4, "CORRECT": 3, "MISREPRESENTED": 2, "UNVERIFIABLE": 1}
    assert len((out / "sco_verdicts.jsonl").read_text().splitlines()) == 10


def test_reports_are_byte_identical(tmp_path, capsys):
    cfg = _fetch(tmp_path, "pooled", capsys, entity_map=str(FIXTURES / "pooled" / "entities.json"))
    payloads = str(FIXTURES / "clean" / "payloads.tsv")
    runs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        assert main(["report", "--config", cfg, "--payloads", payloads, "--out", str(out)]) == 0
        runs.append({p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()})
    capsys.readouterr()
    assert runs[0] == runs[1]
    assert Path("report.json") in runs[0]


def test_refetch_same_date_is_idempotent(tmp_path, capsys):
    cfg = _fetch(tmp_path, "clean", capsys)
    manifest = tmp_path / "snapshots" / "manifest.jsonl"
    before = manifest.read_text()
    assert main(["fetch", "--config", cfg, "--snapshot-date", "2022-02-01", "--out", str(tmp_path / "f")]) == 0
    assert manifest.read_text() == before


def test_diff_command(tmp_path, capsys):
    root = tmp_path / "snapshots"
    old = SnapshotStore(root, snapshot_date="2022-02-01", clock=TickClock())
    old.put("adx.example", Kind.SELLERS, sellers_doc(seller("1", domain="a.example"), seller("2", domain="b.example")))
    new = SnapshotStore(root, snapshot_date="2022-05-01", clock=TickClock())
    new.put("adx.example", Kind.SELLERS, sellers_doc(seller("2", domain="b.example"), seller("3", domain="c.example")))
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"snapshot_root": str(root)}))
    out = tmp_path / "out"
    assert main(["diff", "--config", str(cfg), "--old-date", "2022-02-01", "--out", str(out)]) == 0
    assert (out / "longitudinal.csv").read_text().splitlines()[1] == "adx.example,2,2,1,1"


def test_brands_command(tmp_path, capsys):
    cfg = _fetch(tmp_path, "pooled", capsys)
    pairs = tmp_path / "pairs.csv"
    pairs.write_text("publisher,brand\na.example,shop.example\nb.example,shop.example\nb.example,tiny.example\n")
    ranks = tmp_path / "ranks.csv"
    ranks.write_text("1,shop.example\n5000,tiny.example\n")
    cfg_obj = json.loads(Path(cfg).read_text())
    cfg_obj["rank_list"] = str(ranks)
    Path(cfg).write_text(json.dumps(cfg_obj))
    out = tmp_path / "out"
    assert main(["brands", "--config", cfg, "--pairs", str(pairs), "--out", str(out)]) == 0
    assert "b.example,2,1,2500.5,2,0" in (out / "exposure.csv").read_text()


def test_mine_command(tmp_path, capsys):
    cfg = _fetch(tmp_path, "clean", capsys)
    rules = tmp_path / "rules.txt"
    rules.write_text("||adx.example^\n")
    cfg_obj = json.loads(Path(cfg).read_text())
    cfg_obj["filter_lists"] = [str(rules)]
    Path(cfg).write_text(json.dumps(cfg_obj))
    har_dir = tmp_path / "hars"
    har_dir.mkdir()
    (har_dir / "blog.har").write_text(json.dumps({"log": {
        "pages": [{"title": "https://blog.example/"}],
        "entries": [{"request": {"url": "https://adx.example/bid?slot=N1xxxx&pub=N1"}}],
    }}))
    out = tmp_path / "out"
    assert main(["mine", "--config", cfg, "--har-dir", str(har_dir), "--out", str(out)]) == 0
    # N1 is shorter than six characters, so it cannot be matched
    assert _summary(capsys)["hits"] == 0


def test_exit_codes(tmp_path, capsys):
    assert main(["audit", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"fetch": {"timeout": 0}}))
    assert main(["audit", "--config", str(bad)]) == 1
    empty = tmp_path / "empty.json"
    empty.write_text(json.dumps({"snapshot_root": str(tmp_path / "nothing")}))
    assert main(["audit", "--config", str(empty), "--out", str(tmp_path / "o")]) == 2
    assert main(["mine", "--config", str(empty), "--har-dir", str(tmp_path), "--out", str(tmp_path / "o")]) == 2
    seeds = tmp_path / "seeds.txt"
    seeds.write_text("# nothing\n")
    assert main(["fetch", "--config", str(empty), "--seeds", str(seeds), "--out", str(tmp_path / "o")]) == 2
    assert main(["fetch", "--config", str(empty), "--out", str(tmp_path / "o")]) == 1


def test_read_payloads(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text('a.example\t1.0,1!x.example,1\n\n{"domain": "b.example", "payload": {"x": 1}}\nnoise\n')
    assert read_payloads(path) == [("a.example", "1.0,1!x.example,1"), ("b.example", '{"x": 1}')]


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert "supplyaudit" in capsys.readouterr().out
