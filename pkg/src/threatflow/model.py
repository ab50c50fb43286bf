"""Core domain types, the event store, and canonical serialization.

A ThreatEvent is one shared incident; a Corpus is an immutable, ordered,
de-duplicated collection of them.  NDJSON is the primary on-disk format
(one event per line, fixed key order); CSV is provided for spreadsheet
interop with list fields ";"-joined.
"""

import csv
import datetime as dt
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

from .errors import ParseError, ThreatflowError

# Documented NDJSON/CSV key order.  Changing this breaks the file format.
FIELD_ORDER = (
    "id",
    "created_at",
    "title",
    "description",
    "countries",
    "raw_country_strings",
    "adversary",
    "malware_families",
    "industries",
    "technique_ids",
    "tags",
)

LIST_FIELDS = (
    "countries",
    "raw_country_strings",
    "malware_families",
    "industries",
    "technique_ids",
    "tags",
)

# Events dated outside this window are rejected at ingest.
MIN_DATE = dt.date(1990, 1, 1)

# Separator for list fields in the CSV format.  Canonical country names
# never contain ";"; other list values must not either (NDJSON has no such
# restriction).
CSV_LIST_SEP = ";"


def _max_date() -> dt.date:
    return dt.date.today() + dt.timedelta(days=1)


def parse_date(value: str) -> dt.date:
    """Parse an ISO date or datetime string, truncated to day resolution."""
    text = str(value).strip()
    if not text:
        raise ValueError("empty date")
    # Tolerate full timestamps ("2020-03-15T10:22:01Z"): keep the date part.
    date_part = text[:10]
    return dt.date.fromisoformat(date_part)


@dataclass(frozen=True)
class ThreatEvent:
    """One shared incident as carried by a pulse-style feed."""

    id: str
    created_at: dt.date
    title: str = ""
    description: str = ""
    countries: tuple[str, ...] = ()
    raw_country_strings: tuple[str, ...] = ()
    adversary: str | None = None
    malware_families: tuple[str, ...] = ()
    industries: tuple[str, ...] = ()
    technique_ids: tuple[str, ...] = ()
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.id:
            raise ParseError("id", "event id must be non-empty")
        if not isinstance(self.created_at, dt.date):
            raise ParseError("created", "created_at must be a date")
        for name in LIST_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, tuple):
                object.__setattr__(self, name, tuple(value))

    def to_dict(self) -> dict:
        """Serialize to a plain dict in the documented key order."""
        return {
            "id": self.id,
            "created_at": self.created_at.isoformat(),
            "title": self.title,
            "description": self.description,
            "countries": list(self.countries),
            "raw_country_strings": list(self.raw_country_strings),
            "adversary": self.adversary,
            "malware_families": list(self.malware_families),
            "industries": list(self.industries),
            "technique_ids": list(self.technique_ids),
            "tags": list(self.tags),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ThreatEvent":
        if "id" not in data or data["id"] in (None, ""):
            raise ParseError("id")
        if "created_at" not in data or data["created_at"] in (None, ""):
            raise ParseError("created")
        try:
            created = parse_date(data["created_at"])
        except ValueError as exc:
            raise ParseError("created", f"bad date {data['created_at']!r}: {exc}") from None
        if not (MIN_DATE <= created <= _max_date()):
            raise ParseError("created", f"date {created} outside accepted range")
        adversary = data.get("adversary")
        if adversary == "":
            adversary = None
        lists = {}
        for name in LIST_FIELDS:
            raw = data.get(name) or ()
            if isinstance(raw, str):
                raise ParseError(name, f"{name} must be a list, got a string")
            lists[name] = tuple(str(v) for v in raw)
        return cls(
            id=str(data["id"]),
            created_at=created,
            title=str(data.get("title") or ""),
            description=str(data.get("description") or ""),
            adversary=adversary,
            **lists,
        )


@dataclass(frozen=True)
class Corpus:
    """Immutable ordered event store.

    Events are sorted by (created_at, id) with unique ids.  ``provenance``
    and ``ingested_at`` are bookkeeping only and excluded from equality so
    that serialization round-trips compare equal.
    """

    events: tuple[ThreatEvent, ...]
    provenance: str = field(default="", compare=False)
    ingested_at: dt.datetime = field(
        default_factory=lambda: dt.datetime.now(dt.timezone.utc), compare=False
    )

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        seen = set()
        prev_key = None
        for event in self.events:
            if event.id in seen:
                raise ThreatflowError(f"duplicate event id {event.id!r} in corpus")
            seen.add(event.id)
            key = (event.created_at, event.id)
            if prev_key is not None and key < prev_key:
                raise ThreatflowError("corpus events must be sorted by (created_at, id)")
            prev_key = key

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    @classmethod
    def from_events(cls, events: Iterable[ThreatEvent], provenance: str = "") -> "Corpus":
        """Build a Corpus from unordered events: sort and drop duplicate ids.

        The first occurrence of an id wins (feeds re-publish pulses; the
        earliest record is the original share).
        """
        unique: dict[str, ThreatEvent] = {}
        for event in events:
            unique.setdefault(event.id, event)
        ordered = sorted(unique.values(), key=lambda e: (e.created_at, e.id))
        return cls(events=tuple(ordered), provenance=provenance)


@dataclass(frozen=True)
class LoadReport:
    """What load_corpus rejected and why."""

    rejected: int = 0
    errors: tuple[str, ...] = ()


@dataclass(frozen=True)
class EventFilter:
    """Conjunction of optional clauses; an absent clause matches everything.

    date_from/date_to are inclusive; technique_ids/countries/malware match
    when the intersection is non-empty; tag_substring matches when any tag
    contains it.
    """

    date_from: dt.date | None = None
    date_to: dt.date | None = None
    technique_ids: frozenset[str] | None = None
    countries: frozenset[str] | None = None
    tag_substring: str | None = None
    malware_families: frozenset[str] | None = None

    def __post_init__(self):
        if self.date_from and self.date_to and self.date_from > self.date_to:
            raise ThreatflowError(
                f"filter date range is empty: {self.date_from} > {self.date_to}"
            )
        for name in ("technique_ids", "countries", "malware_families"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, frozenset):
                object.__setattr__(self, name, frozenset(value))

    def matches(self, event: ThreatEvent) -> bool:
        if self.date_from and event.created_at < self.date_from:
            return False
        if self.date_to and event.created_at > self.date_to:
            return False
        if self.technique_ids is not None and not (
            self.technique_ids & set(event.technique_ids)
        ):
            return False
        if self.countries is not None and not (self.countries & set(event.countries)):
            return False
        if self.tag_substring is not None and not any(
            self.tag_substring in tag for tag in event.tags
        ):
            return False
        if self.malware_families is not None and not (
            self.malware_families & set(event.malware_families)
        ):
            return False
        return True


def filter_events(corpus: Corpus, predicate: EventFilter) -> Corpus:
    """Return the sub-corpus of events satisfying every present clause."""
    kept = tuple(e for e in corpus.events if predicate.matches(e))
    return Corpus(events=kept, provenance=corpus.provenance)


def _event_to_csv_row(event: ThreatEvent) -> list[str]:
    row = []
    for name in FIELD_ORDER:
        value = getattr(event, name) if name != "created_at" else event.created_at
        if name == "created_at":
            row.append(value.isoformat())
        elif name in LIST_FIELDS:
            for item in value:
                if CSV_LIST_SEP in item:
                    raise ThreatflowError(
                        f"CSV format cannot store {name} value containing "
                        f"{CSV_LIST_SEP!r}: {item!r} (use ndjson)"
                    )
            row.append(CSV_LIST_SEP.join(value))
        elif name == "adversary":
            row.append(value or "")
        else:
            row.append(value)
    return row


def _csv_row_to_dict(row: dict) -> dict:
    data = dict(row)
    for name in LIST_FIELDS:
        raw = data.get(name, "")
        data[name] = raw.split(CSV_LIST_SEP) if raw else []
    return data


def save_corpus(corpus: Corpus, path: str | Path, format: str = "ndjson") -> None:
    """Write a corpus to disk; load_corpus(save_corpus(c)) == c field-for-field."""
    path = Path(path)
    if format == "ndjson":
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for event in corpus.events:
                fh.write(json.dumps(event.to_dict(), ensure_ascii=False))
                fh.write("\n")
    elif format == "csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(FIELD_ORDER)
            for event in corpus.events:
                writer.writerow(_event_to_csv_row(event))
    else:
        raise ThreatflowError(f"unknown corpus format {format!r}")


def load_corpus(path: str | Path, format: str = "ndjson") -> tuple[Corpus, LoadReport]:
    """Load a corpus file, collecting per-record errors instead of failing.

    Records are validated, de-duplicated by id (first occurrence wins) and
    sorted.  If more than half of the records are malformed the load aborts
    with a summary error.
    """
    path = Path(path)
    if not path.is_file():
        raise ThreatflowError(f"corpus file not readable: {path}")
    parsed: list[ThreatEvent] = []
    errors: list[str] = []
    total = 0

    def _collect(records: Iterable[tuple[str, Callable[[], ThreatEvent]]]):
        nonlocal total
        for label, thunk in records:
            total += 1
            try:
                parsed.append(thunk())
            except (ParseError, ValueError) as exc:
                errors.append(f"{label}: {exc}")

    if format == "ndjson":
        with path.open("r", encoding="utf-8") as fh:
            lines = [(i, line) for i, line in enumerate(fh, start=1) if line.strip()]

        def _ndjson_thunk(text):
            def thunk():
                try:
                    data = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise ParseError("json", f"invalid JSON: {exc}") from None
                return ThreatEvent.from_dict(data)

            return thunk

        _collect((f"line {i}", _ndjson_thunk(line)) for i, line in lines)
    elif format == "csv":
        with path.open("r", encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        _collect(
            (f"row {i}", (lambda r=row: ThreatEvent.from_dict(_csv_row_to_dict(r))))
            for i, row in enumerate(rows, start=2)
        )
    else:
        raise ThreatflowError(f"unknown corpus format {format!r}")

    if total and len(errors) * 2 > total:
        summary = "; ".join(errors[:5])
        raise ThreatflowError(
            f"{len(errors)} of {total} records malformed in {path}: {summary}"
        )

    seen: dict[str, ThreatEvent] = {}
    for event in parsed:
        if event.id in seen:
            errors.append(f"duplicate id {event.id!r} (first occurrence kept)")
        else:
            seen[event.id] = event
    corpus = Corpus.from_events(seen.values(), provenance=str(path))
    return corpus, LoadReport(rejected=len(errors), errors=tuple(errors))


def with_countries(event: ThreatEvent, countries: Iterable[str]) -> ThreatEvent:
    """Copy of ``event`` with the canonical country list replaced."""
    return replace(event, countries=tuple(countries))
