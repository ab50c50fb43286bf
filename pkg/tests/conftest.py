import datetime as dt
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from threatflow.model import Corpus, ThreatEvent

# one line per acceptance criterion, printed after the run (see
# pytest_terminal_summary below and the gate() helper in test_acceptance)
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

FIXTURES = Path(__file__).parent / "fixtures"
DATA = Path(__file__).parent.parent / "src" / "threatflow" / "data"

APT29_FIXTURE = DATA / "apt29_fixture.ndjson"
COVID_LANDMARKS = DATA / "covid_landmarks.csv"
APT29_TECHNIQUES = frozenset({"T1059", "T1071", "T1078", "T1027", "T1550"})
APT29_WINDOW = (dt.date(2020, 1, 1), dt.date(2021, 6, 30))


def make_event(eid: str, date: str, countries=(), **kwargs) -> ThreatEvent:
    return ThreatEvent(
        id=eid,
        created_at=dt.date.fromisoformat(date),
        countries=tuple(countries),
        **kwargs,
    )


def make_corpus(*events: ThreatEvent) -> Corpus:
    return Corpus.from_events(events)


def targets_corpus(*target_sets, start="2020-01-01"):
    """Corpus with one event per target set, one day apart."""
    base = dt.date.fromisoformat(start)
    events = [
        ThreatEvent(
            id=f"e{i:03d}",
            created_at=base + dt.timedelta(days=i),
            countries=tuple(targets),
        )
        for i, targets in enumerate(target_sets)
    ]
    return Corpus.from_events(events)


@pytest.fixture(scope="session")
def apt29_corpus():
    from threatflow.model import load_corpus
    from threatflow.normalize import normalize_corpus

    corpus, report = load_corpus(APT29_FIXTURE)
    assert report.rejected == 0
    normalized, _ = normalize_corpus(corpus)
    return normalized


@pytest.fixture(scope="session")
def gazetteer():
    from threatflow.normalize import load_gazetteer

    return load_gazetteer()


# random but CSV-safe corpus material (';' is the CSV list separator and
# list items must be non-empty for the round-trip to be well defined)
_TEXT_ALPHABET = list(
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    " ,.'\"!?-_()/&éüñ中文Ωß"
)


def random_text(rng, low=1, high=24) -> str:
    n = int(rng.integers(low, high + 1))
    return "".join(rng.choice(_TEXT_ALPHABET) for _ in range(n))


def random_corpus(rng, max_events: int = 8) -> Corpus:
    n = int(rng.integers(0, max_events + 1))
    events = []
    for i in range(n):
        date = dt.date(1995, 1, 1) + dt.timedelta(days=int(rng.integers(0, 11000)))
        def string_list(limit):
            return tuple(random_text(rng) for _ in range(int(rng.integers(0, limit))))
        events.append(
            ThreatEvent(
                id=f"id-{i:03d}-{random_text(rng, 1, 8)}",
                created_at=date,
                title=random_text(rng, 0, 40),
                description=random_text(rng, 0, 60),
                countries=string_list(3),
                raw_country_strings=string_list(3),
                adversary=random_text(rng) if rng.integers(0, 2) else None,
                malware_families=string_list(3),
                industries=string_list(2),
                technique_ids=string_list(3),
                tags=string_list(4),
            )
        )
    return Corpus.from_events(events)
