"""Case-study pipeline: windowed + technique-filtered corpora, landmark
overlays on weekly panels, top-k indicator tables and the filtered spread
graph, all composed from the upstream modules.
"""

import csv
import datetime as dt
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .analytics import TimeSeriesPanel, build_panel, count_by_country
from .errors import EmptyStudy, ThreatflowError
from .model import Corpus, EventFilter, filter_events
from .spread import SpreadGraph, build_spread_graph, estimate_transitions

TOPK_CATEGORIES = ("malware_family", "industry", "country")


@dataclass(frozen=True)
class EventOverlay:
    """Weekly panel for the study window plus dated landmark annotations."""

    events: tuple[tuple[dt.date, str], ...]
    panel: TimeSeriesPanel

    def __post_init__(self):
        starts = self.panel.bin_starts()
        if not starts:
            return
        span_end = starts[-1] + dt.timedelta(days=7)
        for date, label in self.events:
            if not (starts[0] <= date < span_end):
                raise ThreatflowError(
                    f"landmark {label!r} ({date}) outside the panel span"
                )


@dataclass(frozen=True)
class TopKTable:
    """Per-category (value, count) rankings, count-descending then lexicographic."""

    categories: dict[str, tuple[tuple[str, int], ...]]


def _top_k(values: Iterable[str], k: int) -> tuple[tuple[str, int], ...]:
    counter = Counter(values)
    ranked = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))
    return tuple(ranked[:k])


def top_k_table(corpus: Corpus, k: int) -> TopKTable:
    malware = [m for e in corpus.events for m in e.malware_families]
    industries = [i for e in corpus.events for i in e.industries]
    countries = [c for e in corpus.events for c in set(e.countries)]
    return TopKTable(
        categories={
            "malware_family": _top_k(malware, k),
            "industry": _top_k(industries, k),
            "country": _top_k(countries, k),
        }
    )


def load_landmarks(path: str | Path) -> tuple[list[tuple[dt.date, str]], list[str]]:
    """Read a "date,label" CSV of landmark events.

    Malformed rows are reported, not fatal; valid rows come back sorted by
    date (duplicate dates allowed).
    """
    path = Path(path)
    landmarks: list[tuple[dt.date, str]] = []
    errors: list[str] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["date", "label"]:
            raise ThreatflowError(f'{path}: expected header "date,label"')
        for i, row in enumerate(reader, start=2):
            if not row or not any(cell.strip() for cell in row):
                continue
            try:
                date = dt.date.fromisoformat(row[0].strip())
            except (ValueError, IndexError) as exc:
                errors.append(f"row {i}: {exc}")
                continue
            label = row[1].strip() if len(row) > 1 else ""
            landmarks.append((date, label))
    landmarks.sort(key=lambda pair: pair[0])
    return landmarks, errors


def case_study(
    corpus: Corpus,
    window: tuple[dt.date, dt.date],
    technique_ids: frozenset[str] | set[str],
    k: int = 5,
    landmarks: Iterable[tuple[dt.date, str]] = (),
    min_prob: float = 0.0,
) -> tuple[EventOverlay, TopKTable, SpreadGraph]:
    """Filter to the study window and technique set, then derive the weekly
    overlay panel, top-k indicator tables and the spread graph.

    Raises EmptyStudy naming the clause (window or technique_ids) that
    removed the last event.
    """
    if k < 1:
        raise ThreatflowError("k must be >= 1")
    date_from, date_to = window
    windowed = filter_events(
        corpus, EventFilter(date_from=date_from, date_to=date_to)
    )
    if not windowed.events:
        raise EmptyStudy("window")
    if technique_ids:
        studied = filter_events(
            windowed, EventFilter(technique_ids=frozenset(technique_ids))
        )
        if not studied.events:
            raise EmptyStudy("technique_ids")
    else:
        studied = windowed

    panel = build_panel(studied, bin="week")
    span_start = panel.bin_starts()[0]
    span_end = panel.bin_starts()[-1] + dt.timedelta(days=7)
    inside = tuple(
        (date, label) for date, label in landmarks if span_start <= date < span_end
    )
    overlay = EventOverlay(events=inside, panel=panel)

    table = top_k_table(studied, k)
    tm = estimate_transitions(studied, group_by="all")["all"]
    graph = build_spread_graph(
        tm, count_by_country(studied), min_prob=min_prob, group_key="case-study"
    )
    return overlay, table, graph


def overlay_to_json(overlay: EventOverlay) -> dict:
    starts = overlay.panel.bin_starts()
    return {
        "bin": overlay.panel.bin,
        "bin_starts": [d.isoformat() for d in starts],
        "countries": list(overlay.panel.countries),
        "values": overlay.panel.values.tolist(),
        "landmarks": [
            {"date": date.isoformat(), "label": label}
            for date, label in overlay.events
        ],
    }


def table_to_json(table: TopKTable) -> dict:
    return {
        "categories": {
            name: [{"value": v, "count": c} for v, c in entries]
            for name, entries in sorted(table.categories.items())
        }
    }
