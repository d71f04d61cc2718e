"""Brand exposure per publisher and the regression of median brand rank on
pool membership."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .domains import registrable_domain
from .pools import Homogeneity, Pool

REPUTABLE_RANK = 1000


class RankList:
    """Registrable domain -> popularity rank (1 = most popular)."""

    def __init__(self, ranks: Optional[Mapping[str, int]] = None) -> None:
        self._ranks: dict[str, int] = {}
        for domain, rank in (ranks or {}).items():
            site = registrable_domain(domain)
            # keep the best rank when two hosts collapse to one site
            if site not in self._ranks or rank < self._ranks[site]:
                self._ranks[site] = int(rank)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RankList":
        """Read a ``rank,domain`` CSV (Tranco format); a header row is tolerated."""
        ranks: dict[str, int] = {}
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.reader(fh):
                if len(row) < 2:
                    continue
                try:
                    rank = int(row[0])
                except ValueError:
                    continue
                if rank > 0:
                    ranks.setdefault(row[1].strip(), rank)
        return cls(ranks)

    def rank(self, domain: str) -> Optional[int]:
        return self._ranks.get(registrable_domain(domain))

    def __len__(self) -> int:
        return len(self._ranks)


def classify_reputable(brand: str, ranks: RankList, threshold: int = REPUTABLE_RANK) -> bool:
    rank = ranks.rank(brand)
    return rank is not None and rank <= threshold


def median(values: Sequence[int]) -> Optional[Fraction]:
    """Exact median; an even count gives the mean of the two middle values."""
    if not values:
        return None
    s = sorted(values)
    mid = len(s) // 2
    if len(s) % 2:
        return Fraction(s[mid])
    return Fraction(s[mid - 1] + s[mid], 2)


@dataclass(frozen=True)
class BrandExposure:
    publisher: str
    distinct_brands: int
    reputable_brands: int
    median_brand_rank: Optional[Fraction]
    pool_count: int
    heterogeneous_pool_count: int


def exposure_table(
    pairs: Iterable[tuple[str, str]],
    ranks: RankList,
    pools: Iterable[Pool],
    threshold: int = REPUTABLE_RANK,
) -> list[BrandExposure]:
    brands: dict[str, set[str]] = defaultdict(set)
    for publisher, brand in pairs:
        brands[registrable_domain(publisher)].add(registrable_domain(brand))

    pool_count: Counter = Counter()
    het_count: Counter = Counter()
    for p in pools:
        for m in p.members:
            pool_count[m] += 1
            if p.homogeneity is Homogeneity.HETEROGENEOUS:
                het_count[m] += 1

    rows = []
    for pub in sorted(brands):
        seen = brands[pub]
        ranked = [r for r in (ranks.rank(b) for b in seen) if r is not None]
        rows.append(BrandExposure(
            publisher=pub,
            distinct_brands=len(seen),
            reputable_brands=sum(1 for r in ranked if r <= threshold),
            median_brand_rank=median(ranked),
            pool_count=pool_count[pub],
            heterogeneous_pool_count=het_count[pub],
        ))
    return rows


class DegenerateX(ValueError):
    pass


@dataclass(frozen=True)
class OlsFit:
    slope: float
    intercept: float
    n: int


def ols_slope(points: Iterable[tuple[float, float]]) -> OlsFit:
    """Least-squares line through (x, y) points, computed on centered data."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2:
        raise DegenerateX("need at least two points")
    n = len(pts)
    x_bar = math.fsum(x for x, _ in pts) / n
    y_bar = math.fsum(y for _, y in pts) / n
    sxx = math.fsum((x - x_bar) ** 2 for x, _ in pts)
    if sxx == 0:
        raise DegenerateX("all x values are equal")
    sxy = math.fsum((x - x_bar) * (y - y_bar) for x, y in pts)
    slope = sxy / sxx
    return OlsFit(slope, y_bar - slope * x_bar, n)


def regression_points(rows: Iterable[BrandExposure], heterogeneous_only: bool = False) -> list[tuple[int, Fraction]]:
    return [
        (r.heterogeneous_pool_count if heterogeneous_only else r.pool_count, r.median_brand_rank)
        for r in rows
        if r.median_brand_rank is not None
    ]


def regression_report(rows: Sequence[BrandExposure]) -> dict:
    """Slopes for all pools and heterogeneous pools only; a degenerate fit is
    reported as null with the reason."""
    out = {}
    for label, het in (("all_pools", False), ("heterogeneous_pools", True)):
        pts = regression_points(rows, het)
        try:
            fit = ols_slope(pts)
            out[label] = {"slope": fit.slope, "intercept": fit.intercept, "n": fit.n}
        except DegenerateX as exc:
            out[label] = {"slope": None, "intercept": None, "n": len(pts), "error": str(exc)}
    return out


def exposure_to_csv(rows: Iterable[BrandExposure]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["publisher", "distinct_brands", "reputable_brands", "median_brand_rank",
                "pool_count", "heterogeneous_pool_count"])
    for r in rows:
        med = "" if r.median_brand_rank is None else str(float(r.median_brand_rank))
        w.writerow([r.publisher, r.distinct_brands, r.reputable_brands, med,
                    r.pool_count, r.heterogeneous_pool_count])
    return buf.getvalue()


def brand_distribution_csv(rows: Iterable[BrandExposure]) -> str:
    """How many publishers saw each number of distinct brands (for CDF plots)."""
    counts = Counter(r.distinct_brands for r in rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["distinct_brands", "publishers"])
    for k in sorted(counts):
        w.writerow([k, counts[k]])
    return buf.getvalue()


def load_pairs(path: Union[str, Path]) -> list[tuple[str, str]]:
    """Read a ``publisher,brand`` CSV; a header row is skipped."""
    pairs = []
    with open(path, encoding="utf-8", newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if len(row) < 2 or not row[0].strip() or not row[1].strip():
                continue
            if i == 0 and row[0].strip().lower() == "publisher":
                continue
            pairs.append((row[0].strip(), row[1].strip()))
    return pairs
