"""Canonicalize noisy country strings against a gazetteer.

Feeds carry country names as free text ("untied states", "Germny",
"UNITED KINGDOM").  Each raw string is matched case-insensitively against
every canonical name and alias; the closest candidate by edit distance
wins when it is within the threshold.  Exact alias matches short-circuit
the fuzzy search, which is how near pairs like Iran/Iraq stay distinct.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from .errors import ThreatflowError
from .kernels import CandidateSet
from .kernels import levenshtein as _lev_kernel
from .model import Corpus, ThreatEvent, with_countries

DEFAULT_THRESHOLD = 2

#: Distance reported for raw strings that had no candidate at all.
UNRESOLVED = math.inf


def levenshtein(a: str, b: str) -> int:
    """Edit distance between ``a`` and ``b`` (insertions, deletions,
    substitutions at unit cost).  Defined for every string pair, including
    empty strings; O(|a|*|b|) time."""
    return _lev_kernel(a, b)


@dataclass(frozen=True)
class Gazetteer:
    """Canonical country registry: (canonical name, aliases, ISO-3166 alpha-2)."""

    entries: tuple[tuple[str, tuple[str, ...], str], ...]

    def __post_init__(self):
        canonicals = set()
        iso2s = set()
        folded: dict[str, str] = {}
        for canonical, aliases, iso2 in self.entries:
            if canonical in canonicals:
                raise ThreatflowError(f"duplicate canonical name {canonical!r}")
            canonicals.add(canonical)
            if iso2 in iso2s:
                raise ThreatflowError(f"duplicate iso2 code {iso2!r}")
            iso2s.add(iso2)
            for name in (canonical, *aliases):
                key = name.casefold()
                if folded.get(key, canonical) != canonical:
                    raise ThreatflowError(
                        f"{name!r} maps to both {folded[key]!r} and {canonical!r}"
                    )
                folded[key] = canonical

    @property
    def canonical_names(self) -> tuple[str, ...]:
        return tuple(entry[0] for entry in self.entries)

    @cached_property
    def exact_lookup(self) -> dict[str, str]:
        """Case-folded exact-match table over canonicals and aliases."""
        table: dict[str, str] = {}
        for canonical, aliases, _ in self.entries:
            table[canonical.casefold()] = canonical
            for alias in aliases:
                table[alias.casefold()] = canonical
        return table

    @cached_property
    def candidates(self) -> tuple[tuple[str, str], ...]:
        """All (case-folded candidate, canonical name) pairs for fuzzy search."""
        pairs = []
        for canonical, aliases, _ in self.entries:
            pairs.append((canonical.casefold(), canonical))
            for alias in aliases:
                pairs.append((alias.casefold(), canonical))
        return tuple(pairs)

    @cached_property
    def candidate_set(self) -> CandidateSet:
        """Encoded candidates for batch distance queries, aligned with
        ``candidates``."""
        return CandidateSet(candidate for candidate, _ in self.candidates)


def load_gazetteer(path: str | Path | None = None) -> Gazetteer:
    """Load a gazetteer CSV (header: canonical_name,iso2,aliases).

    Aliases are ";"-joined within their column.  When ``path`` is omitted
    the registry bundled with the package is used.
    """
    if path is None:
        path = Path(__file__).parent / "data" / "gazetteer.csv"
    path = Path(path)
    entries = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "canonical_name" not in reader.fieldnames:
            raise ThreatflowError(f"{path}: missing gazetteer header row")
        for row in reader:
            aliases = tuple(a for a in (row.get("aliases") or "").split(";") if a)
            entries.append((row["canonical_name"], aliases, row["iso2"]))
    if not entries:
        raise ThreatflowError(f"{path}: empty gazetteer")
    return Gazetteer(entries=tuple(entries))


@dataclass(frozen=True)
class Unresolved:
    """A raw string that matched nothing within the threshold."""

    best: str
    distance: float  # math.inf when there was no candidate at all


@dataclass(frozen=True)
class NormalizationReport:
    resolved: int
    unresolved: tuple[tuple[str, str, float], ...]  # (raw, best candidate, distance)
    threshold_used: int


def canonicalize(
    raw: str, gazetteer: Gazetteer, threshold: int = DEFAULT_THRESHOLD
) -> str | Unresolved:
    """Resolve one raw country string to its canonical gazetteer name.

    The input is trimmed and case-folded.  Exact canonical/alias matches
    return immediately; otherwise the closest candidate by edit distance
    wins if within ``threshold``.  Ties break deterministically: lower
    distance, then shorter candidate string, then lexicographically
    smaller canonical name.
    """
    if threshold < 0:
        raise ThreatflowError("threshold must be >= 0")
    needle = raw.strip().casefold()
    if not needle:
        return Unresolved(best="", distance=UNRESOLVED)
    exact = gazetteer.exact_lookup.get(needle)
    if exact is not None:
        return exact
    distances = gazetteer.candidate_set.distances(needle)
    best_key = None
    best_canonical = ""
    best_candidate = ""
    for (candidate, canonical), distance in zip(gazetteer.candidates, distances):
        key = (distance, len(candidate), canonical)
        if best_key is None or key < best_key:
            best_key = key
            best_canonical = canonical
            best_candidate = candidate
    assert best_key is not None
    if best_key[0] <= threshold:
        return best_canonical
    return Unresolved(best=best_candidate, distance=best_key[0])


def normalize_corpus(
    corpus: Corpus,
    gazetteer: Gazetteer | None = None,
    threshold: int = DEFAULT_THRESHOLD,
    max_workers: int | None = None,
) -> tuple[Corpus, NormalizationReport]:
    """Map every event's raw country strings through canonicalize.

    Resolved names are de-duplicated into event.countries preserving
    first-seen order; unresolved strings stay in raw_country_strings and
    are listed once each in the report.  Events without raw strings keep
    their existing countries, so normalizing twice is a no-op.

    Each distinct raw string is resolved once.  With ``max_workers`` > 1
    the distinct strings are resolved in a thread pool (the compiled
    distance kernel releases the GIL); results are identical at any
    worker count.
    """
    if gazetteer is None:
        gazetteer = load_gazetteer()
    distinct: list[str] = []
    seen = set()
    for event in corpus.events:
        for raw in event.raw_country_strings:
            if raw not in seen:
                seen.add(raw)
                distinct.append(raw)

    # the distance kernel drops the GIL, so strings chunk across threads;
    # one chunk per worker keeps executor overhead negligible
    if max_workers and max_workers > 1 and len(distinct) > max_workers:
        chunks = [distinct[i::max_workers] for i in range(max_workers)]

        def resolve(chunk):
            return [(raw, canonicalize(raw, gazetteer, threshold)) for raw in chunk]

        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            cache = {
                raw: outcome
                for part in pool.map(resolve, chunks)
                for raw, outcome in part
            }
    else:
        cache = {raw: canonicalize(raw, gazetteer, threshold) for raw in distinct}

    resolved_count = 0
    unresolved: dict[str, tuple[str, str, float]] = {}
    new_events: list[ThreatEvent] = []
    for event in corpus.events:
        if not event.raw_country_strings:
            new_events.append(event)
            continue
        names: list[str] = []
        for raw in event.raw_country_strings:
            outcome = cache[raw]
            if isinstance(outcome, Unresolved):
                unresolved.setdefault(raw, (raw, outcome.best, outcome.distance))
            else:
                resolved_count += 1
                if outcome not in names:
                    names.append(outcome)
        new_events.append(with_countries(event, names))
    report = NormalizationReport(
        resolved=resolved_count,
        unresolved=tuple(unresolved.values()),
        threshold_used=threshold,
    )
    return Corpus(events=tuple(new_events), provenance=corpus.provenance), report
