"""Exploratory statistics: country rankings, cumulative attack share,
time-series panels, top malware families and co-targeted country pairs.

An incident targeting k countries contributes one count to each of the k
countries, so totals are country-attributions, not event counts.
"""

import datetime as dt
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import EmptyInput
from .model import Corpus

BINS = ("day", "week", "month")


@dataclass(frozen=True)
class CountryCounts:
    counts: dict[str, int]
    total: int


def count_by_country(corpus: Corpus) -> CountryCounts:
    """Number of incidents per targeted country (zero-count countries omitted)."""
    counter: Counter[str] = Counter()
    for event in corpus.events:
        counter.update(set(event.countries))
    return CountryCounts(counts=dict(counter), total=sum(counter.values()))


def cumulative_share(counts: CountryCounts) -> list[tuple[str, float]]:
    """Countries by descending count with their running share of all attacks.

    The running sum is kept as integers and divided last, so the final
    entry is exactly 1.0.  Ties sort lexicographically.
    """
    if not counts.counts:
        raise EmptyInput("no country counts to rank")
    ranked = sorted(counts.counts.items(), key=lambda kv: (-kv[1], kv[0]))
    out = []
    running = 0
    for country, count in ranked:
        running += count
        out.append((country, running / counts.total))
    return out


def _bin_start(date: dt.date, bin: str) -> dt.date:
    if bin == "day":
        return date
    if bin == "week":
        return date - dt.timedelta(days=date.weekday())  # weeks start Monday
    if bin == "month":
        return date.replace(day=1)
    raise ValueError(f"unknown bin {bin!r}")


def _next_bin(date: dt.date, bin: str) -> dt.date:
    if bin == "day":
        return date + dt.timedelta(days=1)
    if bin == "week":
        return date + dt.timedelta(days=7)
    # first day of the next month
    if date.month == 12:
        return dt.date(date.year + 1, 1, 1)
    return dt.date(date.year, date.month + 1, 1)


@dataclass(frozen=True)
class TimeSeriesPanel:
    """Per-country counts on a regular calendar grid (weeks start Monday)."""

    start: dt.date
    bin: str
    countries: tuple[str, ...]
    values: np.ndarray  # shape (len(countries), n_bins), dtype int64

    def __post_init__(self):
        if self.values.shape[0] != len(self.countries):
            raise ValueError("row count must match countries list")

    def __eq__(self, other):
        return (
            isinstance(other, TimeSeriesPanel)
            and self.start == other.start
            and self.bin == other.bin
            and self.countries == other.countries
            and np.array_equal(self.values, other.values)
        )

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]

    def bin_starts(self) -> list[dt.date]:
        starts = []
        current = self.start
        for _ in range(self.n_bins):
            starts.append(current)
            current = _next_bin(current, self.bin)
        return starts

    def series(self, country: str) -> np.ndarray:
        return self.values[self.countries.index(country)]

    def to_csv_rows(self) -> list[tuple[str, str, int]]:
        """Rows for the "country,bin_start,count" export."""
        starts = self.bin_starts()
        rows = []
        for i, country in enumerate(self.countries):
            for j, start in enumerate(starts):
                rows.append((country, start.isoformat(), int(self.values[i, j])))
        return rows


def build_panel(
    corpus: Corpus, bin: str = "day", countries: Sequence[str] | None = None
) -> TimeSeriesPanel:
    """Count events per (country, calendar bin) with explicit zero bins.

    The grid spans the corpus date range regardless of the country subset;
    multi-country events count once per targeted country.
    """
    if bin not in BINS:
        raise ValueError(f"bin must be one of {BINS}")
    if not corpus.events:
        raise EmptyInput("cannot build a panel from an empty corpus")
    if countries is None:
        countries = sorted({c for e in corpus.events for c in e.countries})
    countries = tuple(countries)

    first = _bin_start(corpus.events[0].created_at, bin)
    last = _bin_start(corpus.events[-1].created_at, bin)
    starts = [first]
    while starts[-1] < last:
        starts.append(_next_bin(starts[-1], bin))
    index = {start: i for i, start in enumerate(starts)}
    row = {country: i for i, country in enumerate(countries)}

    values = np.zeros((len(countries), len(starts)), dtype=np.int64)
    for event in corpus.events:
        j = index[_bin_start(event.created_at, bin)]
        for country in set(event.countries):
            i = row.get(country)
            if i is not None:
                values[i, j] += 1
    return TimeSeriesPanel(start=first, bin=bin, countries=countries, values=values)


def top_malware(corpus: Corpus, year: int, k: int = 5) -> list[tuple[str, int]]:
    """The k most-seen malware families among events created in ``year``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    counter: Counter[str] = Counter()
    for event in corpus.events:
        if event.created_at.year == year:
            counter.update(event.malware_families)
    ranked = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


@dataclass(frozen=True)
class PairCounts:
    """Co-incident counts per unordered country pair, keys (a, b) with a < b."""

    pairs: dict[tuple[str, str], int]


def pair_counts(corpus: Corpus, min_count: int = 1) -> PairCounts:
    """How often two countries are hit by the same incident."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counter: Counter[tuple[str, str]] = Counter()
    for event in corpus.events:
        targets = sorted(set(event.countries))
        for a, b in combinations(targets, 2):
            counter[(a, b)] += 1
    kept = {pair: n for pair, n in counter.items() if n >= min_count}
    return PairCounts(pairs=kept)


def top_pairs(counts: PairCounts, k: int) -> list[tuple[tuple[str, str], int]]:
    """Most frequently co-targeted pairs, count-descending then lexicographic."""
    ranked = sorted(counts.pairs.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]
