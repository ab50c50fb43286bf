import datetime as dt
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from threatflow.errors import ParseError, ThreatflowError
from threatflow.model import (
    FIELD_ORDER,
    Corpus,
    EventFilter,
    ThreatEvent,
    filter_events,
    load_corpus,
    save_corpus,
)

from conftest import make_corpus, make_event, random_corpus


def write_ndjson(path, lines):
    path.write_text("\n".join(json.dumps(obj) for obj in lines) + "\n")


def minimal(eid="a", date="2020-01-01", **extra):
    obj = {"id": eid, "created_at": date, "title": "", "description": ""}
    obj.update(extra)
    return obj


class TestLoadCorpus:
    def test_duplicate_id_first_wins(self, tmp_path):
        path = tmp_path / "c.ndjson"
        write_ndjson(
            path,
            [
                minimal("a", "2020-01-01", title="first"),
                minimal("b", "2020-01-02"),
                minimal("a", "2020-01-03", title="second"),
            ],
        )
        corpus, report = load_corpus(path)
        assert len(corpus.events) == 2
        assert report.rejected == 1
        assert corpus.events[0].title == "first"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "c.ndjson"
        path.write_text("")
        corpus, report = load_corpus(path)
        assert len(corpus.events) == 0
        assert report.rejected == 0

    def test_date_round_trip(self, tmp_path):
        path = tmp_path / "c.ndjson"
        write_ndjson(path, [minimal("x", "2017-03-15")])
        corpus, _ = load_corpus(path)
        assert corpus.events[0].created_at == dt.date(2017, 3, 15)

    def test_bad_records_collected_not_fatal(self, tmp_path):
        path = tmp_path / "c.ndjson"
        write_ndjson(
            path,
            [
                minimal("a"),
                {"created_at": "2020-01-01"},  # missing id
                minimal("b"),
                minimal("c", "not-a-date"),
            ],
        )
        corpus, report = load_corpus(path)
        assert {e.id for e in corpus.events} == {"a", "b"}
        assert report.rejected == 2

    def test_majority_malformed_aborts(self, tmp_path):
        path = tmp_path / "c.ndjson"
        write_ndjson(path, [minimal("a"), {"nope": 1}, {"nah": 2}])
        with pytest.raises(ThreatflowError, match="malformed"):
            load_corpus(path)

    def test_out_of_range_date_rejected(self, tmp_path):
        path = tmp_path / "c.ndjson"
        write_ndjson(path, [minimal("a", "1989-12-31"), minimal("b", "2020-01-01")])
        corpus, report = load_corpus(path)
        assert [e.id for e in corpus.events] == ["b"]
        assert report.rejected == 1

    def test_events_sorted_by_date_then_id(self, tmp_path):
        path = tmp_path / "c.ndjson"
        write_ndjson(
            path,
            [
                minimal("z", "2020-01-02"),
                minimal("a", "2020-01-02"),
                minimal("m", "2019-05-05"),
            ],
        )
        corpus, _ = load_corpus(path)
        assert [e.id for e in corpus.events] == ["m", "a", "z"]


class TestSaveCorpus:
    def test_ndjson_key_order_documented(self, tmp_path):
        corpus = make_corpus(make_event("a", "2020-01-01"))
        path = tmp_path / "c.ndjson"
        save_corpus(corpus, path)
        line = path.read_text().splitlines()[0]
        assert tuple(json.loads(line).keys()) == FIELD_ORDER

    def test_empty_countries_serialized_not_omitted(self, tmp_path):
        corpus = make_corpus(make_event("a", "2020-01-01", countries=()))
        path = tmp_path / "c.ndjson"
        save_corpus(corpus, path)
        data = json.loads(path.read_text())
        assert data["countries"] == []

    @pytest.mark.parametrize("fmt", ["ndjson", "csv"])
    def test_round_trip_identity(self, tmp_path, fmt):
        corpus = make_corpus(
            make_event(
                "a",
                "2020-01-01",
                countries=("United Kingdom", "Germany"),
                raw_country_strings=("UK", "Germny"),
                adversary="APT29",
                malware_families=("Cobalt Strike",),
                industries=("Government",),
                technique_ids=("T1059", "T1078"),
                tags=("covid-19",),
                title="A title, with punctuation & unicode é",
                description="line one\nline two",
            ),
            make_event("b", "2021-06-30"),
        )
        path = tmp_path / f"c.{fmt}"
        save_corpus(corpus, path, format=fmt)
        loaded, report = load_corpus(path, format=fmt)
        assert report.rejected == 0
        assert loaded == corpus

    def test_csv_semicolon_in_list_field_rejected(self, tmp_path):
        corpus = make_corpus(make_event("a", "2020-01-01", tags=("x;y",)))
        with pytest.raises(ThreatflowError, match="ndjson"):
            save_corpus(corpus, tmp_path / "c.csv", format="csv")

    def test_random_corpora_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        for i in range(25):
            corpus = random_corpus(rng)
            for fmt in ("ndjson", "csv"):
                path = tmp_path / f"c{i}.{fmt}"
                save_corpus(corpus, path, format=fmt)
                loaded, _ = load_corpus(path, format=fmt)
                assert loaded == corpus


class TestEventValidation:
    def test_empty_id_rejected(self):
        with pytest.raises(ParseError):
            ThreatEvent(id="", created_at=dt.date(2020, 1, 1))

    def test_duplicate_ids_rejected_in_corpus(self):
        e = make_event("a", "2020-01-01")
        with pytest.raises(ThreatflowError, match="duplicate"):
            Corpus(events=(e, e))

    def test_missing_created_raises_parse_error(self):
        with pytest.raises(ParseError) as exc:
            ThreatEvent.from_dict({"id": "a"})
        assert exc.value.field == "created"


class TestFilterEvents:
    @pytest.fixture()
    def corpus(self):
        return make_corpus(
            make_event("a", "2020-01-01", technique_ids=("T1059",)),
            make_event("b", "2020-02-01", technique_ids=("T1486",)),
            make_event("c", "2020-03-01", technique_ids=("T1059", "T1027")),
            make_event("d", "2021-01-01", countries=("Germany",), tags=("covid",)),
        )

    def test_empty_filter_is_identity(self, corpus):
        assert filter_events(corpus, EventFilter()) == corpus

    def test_technique_filter(self, corpus):
        got = filter_events(corpus, EventFilter(technique_ids={"T1059"}))
        assert [e.id for e in got.events] == ["a", "c"]

    def test_date_range_inclusive(self, corpus):
        predicate = EventFilter(
            date_from=dt.date(2020, 2, 1), date_to=dt.date(2020, 3, 1)
        )
        got = filter_events(corpus, predicate)
        assert [e.id for e in got.events] == ["b", "c"]

    def test_tag_substring(self, corpus):
        got = filter_events(corpus, EventFilter(tag_substring="cov"))
        assert [e.id for e in got.events] == ["d"]

    def test_country_filter(self, corpus):
        got = filter_events(corpus, EventFilter(countries={"Germany"}))
        assert [e.id for e in got.events] == ["d"]

    def test_reversed_range_rejected(self):
        with pytest.raises(ThreatflowError):
            EventFilter(date_from=dt.date(2021, 1, 1), date_to=dt.date(2020, 1, 1))

    def test_idempotent(self, corpus):
        predicate = EventFilter(technique_ids={"T1059"})
        once = filter_events(corpus, predicate)
        assert filter_events(once, predicate) == once

    def test_filters_commute(self, corpus):
        p = EventFilter(technique_ids={"T1059"})
        q = EventFilter(date_to=dt.date(2020, 2, 15))
        assert filter_events(filter_events(corpus, p), q) == filter_events(
            filter_events(corpus, q), p
        )


@st.composite
def filters(draw):
    date_from = draw(
        st.one_of(st.none(), st.dates(dt.date(2019, 1, 1), dt.date(2021, 1, 1)))
    )
    date_to = draw(
        st.one_of(st.none(), st.dates(dt.date(2021, 1, 2), dt.date(2022, 12, 31)))
    )
    ids = draw(
        st.one_of(
            st.none(),
            st.frozensets(st.sampled_from(["T1059", "T1486", "T1027"]), max_size=3),
        )
    )
    return EventFilter(date_from=date_from, date_to=date_to, technique_ids=ids)


@given(filters(), filters())
@settings(max_examples=60, deadline=None)
def test_filter_commutativity_property(p, q):
    corpus = make_corpus(
        make_event("a", "2020-01-01", technique_ids=("T1059",)),
        make_event("b", "2020-06-15", technique_ids=("T1486", "T1027")),
        make_event("c", "2021-02-01"),
        make_event("d", "2022-05-05", technique_ids=("T1027",)),
    )
    left = filter_events(filter_events(corpus, p), q)
    right = filter_events(filter_events(corpus, q), p)
    assert left == right
    assert filter_events(left, p) == left  # idempotence on the composed result
