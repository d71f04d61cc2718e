import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from supplyaudit.longitudinal import ExchangeMismatch, diff_snapshots, diffs_to_csv, listed_domains
from supplyaudit.sellersjson import parse_sellers_json


def snap(domains, exchange="adx.example", extra=()):
    entries = [{"seller_id": str(i), "seller_type": "PUBLISHER", "domain": d} for i, d in enumerate(domains)]
    entries += list(extra)
    return parse_sellers_json(exchange, json.dumps({"sellers": entries}))


def test_basic_diff():
    r = diff_snapshots(snap(["a.example", "b.example", "c.example"]), snap(["b.example", "c.example", "d.example"]))
    assert r.added == {"d.example"} and r.dropped == {"a.example"}
    assert (r.old_count, r.new_count) == (3, 3)


def test_identical():
    s = snap(["a.example", "b.example"])
    r = diff_snapshots(s, s)
    assert not r.added and not r.dropped


def test_confidential_and_duplicates_ignored():
    s = snap(["a.example", "www.a.example", "A.example"], extra=[
        {"seller_id": "x", "seller_type": "PUBLISHER", "is_confidential": 1, "domain": "hidden.example"},
    ])
    assert listed_domains(s) == {"a.example"}


def test_revcontent_shaped_fixture():
    # 204 watch domains before; 71 kept, 133 dropped, 2 added -> 73
    watch = [f"w{i}.example" for i in range(206)]
    old = snap(watch[:204] + ["noise1.example"], exchange="revcontent.com")
    new = snap(watch[133:206] + ["noise2.example"], exchange="revcontent.com")
    r = diff_snapshots(old, new, watchlist=watch)
    assert (r.old_count, r.new_count, len(r.added), len(r.dropped)) == (204, 73, 2, 133)
    assert diffs_to_csv([r]).splitlines()[1] == "revcontent.com,204,73,2,133"


def test_exchange_mismatch():
    with pytest.raises(ExchangeMismatch):
        diff_snapshots(snap([], "a.example"), snap([], "b.example"))


def test_csv_sorted_by_drops():
    small = diff_snapshots(snap(["a.example"], "x.example"), snap([], "x.example"))
    big = diff_snapshots(snap(["a.example", "b.example"], "y.example"), snap([], "y.example"))
    lines = diffs_to_csv([small, big]).splitlines()
    assert lines[0] == "exchange,old_count,new_count,added,dropped"
    assert [l.split(",")[0] for l in lines[1:]] == ["y.example", "x.example"]


_doms = st.lists(st.sampled_from([f"d{i}.example" for i in range(12)]), max_size=15)


@settings(max_examples=300, deadline=None)
@given(_doms, _doms, st.one_of(st.none(), _doms))
def test_identity_and_antisymmetry(old, new, watch):
    fwd = diff_snapshots(snap(old), snap(new), watch)
    back = diff_snapshots(snap(new), snap(old), watch)
    assert fwd.new_count == fwd.old_count + len(fwd.added) - len(fwd.dropped)
    assert not (fwd.added & fwd.dropped)
    assert fwd.added == back.dropped and fwd.dropped == back.added
