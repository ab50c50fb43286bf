import datetime as dt

import pytest

from threatflow.analytics import build_panel, count_by_country
from threatflow.errors import EmptyStudy, ThreatflowError
from threatflow.lens import (
    EventOverlay,
    case_study,
    load_landmarks,
    overlay_to_json,
    table_to_json,
    top_k_table,
)
from threatflow.model import Corpus, EventFilter, filter_events
from threatflow.spread import build_spread_graph, estimate_transitions

from conftest import APT29_TECHNIQUES, APT29_WINDOW, make_corpus, make_event


class TestLoadLandmarks:
    def test_three_valid_rows_sorted(self, tmp_path):
        path = tmp_path / "lm.csv"
        path.write_text("date,label\n2020-06-01,b\n2020-01-01,a\n2020-12-08,c\n")
        landmarks, errors = load_landmarks(path)
        assert errors == []
        assert [l for _, l in landmarks] == ["a", "b", "c"]

    def test_header_only_empty(self, tmp_path):
        path = tmp_path / "lm.csv"
        path.write_text("date,label\n")
        landmarks, errors = load_landmarks(path)
        assert landmarks == [] and errors == []

    def test_invalid_month_rejected_row_kept_rest(self, tmp_path):
        path = tmp_path / "lm.csv"
        path.write_text("date,label\n2020-13-01,bad\n2020-02-02,good\n")
        landmarks, errors = load_landmarks(path)
        assert [l for _, l in landmarks] == ["good"]
        assert len(errors) == 1 and "row 2" in errors[0]

    def test_missing_header_fatal(self, tmp_path):
        path = tmp_path / "lm.csv"
        path.write_text("when,what\n2020-01-01,x\n")
        with pytest.raises(ThreatflowError, match="header"):
            load_landmarks(path)

    def test_duplicate_dates_allowed(self, tmp_path):
        path = tmp_path / "lm.csv"
        path.write_text("date,label\n2020-01-01,a\n2020-01-01,b\n")
        landmarks, _ = load_landmarks(path)
        assert len(landmarks) == 2

    def test_bundled_covid_landmarks_parse(self):
        from conftest import COVID_LANDMARKS

        landmarks, errors = load_landmarks(COVID_LANDMARKS)
        assert errors == []
        assert len(landmarks) == 4


class TestCaseStudy:
    def test_apt29_fixture_country_ranking(self, apt29_corpus):
        _, table, _ = case_study(
            apt29_corpus, APT29_WINDOW, APT29_TECHNIQUES, k=5
        )
        countries = [v for v, _ in table.categories["country"]]
        assert countries[:2] == ["United States of America", "Germany"]

    def test_apt29_fixture_uk_transition_probabilities(self, apt29_corpus):
        _, _, graph = case_study(apt29_corpus, APT29_WINDOW, APT29_TECHNIQUES, k=5)
        edges = {(s, d): p for s, d, p in graph.edges}
        assert edges[("United Kingdom", "United States of America")] == pytest.approx(
            0.47, abs=0.01
        )
        assert edges[("United Kingdom", "Germany")] == pytest.approx(0.33, abs=0.01)

    def test_decoys_are_filtered_out(self, apt29_corpus):
        overlay, table, _ = case_study(apt29_corpus, APT29_WINDOW, APT29_TECHNIQUES, k=10)
        assert "France" not in dict(table.categories["country"])
        assert "Dridex" not in dict(table.categories["malware_family"])

    def test_unmatched_techniques_name_the_clause(self, apt29_corpus):
        with pytest.raises(EmptyStudy) as exc:
            case_study(apt29_corpus, APT29_WINDOW, {"T9999"}, k=3)
        assert exc.value.clause == "technique_ids"

    def test_empty_window_names_the_clause(self, apt29_corpus):
        window = (dt.date(1995, 1, 1), dt.date(1995, 12, 31))
        with pytest.raises(EmptyStudy) as exc:
            case_study(apt29_corpus, window, APT29_TECHNIQUES, k=3)
        assert exc.value.clause == "window"

    def test_pipeline_equals_composition_of_parts(self, apt29_corpus):
        overlay, table, graph = case_study(
            apt29_corpus, APT29_WINDOW, APT29_TECHNIQUES, k=5
        )
        manual = filter_events(
            apt29_corpus,
            EventFilter(date_from=APT29_WINDOW[0], date_to=APT29_WINDOW[1]),
        )
        manual = filter_events(manual, EventFilter(technique_ids=APT29_TECHNIQUES))
        assert overlay.panel == build_panel(manual, bin="week")
        assert table == top_k_table(manual, 5)
        tm = estimate_transitions(manual, "all")["all"]
        expected = build_spread_graph(
            tm, count_by_country(manual), group_key="case-study"
        )
        assert graph == expected

    def test_topk_stable_under_event_reordering(self, apt29_corpus):
        _, table, _ = case_study(apt29_corpus, APT29_WINDOW, APT29_TECHNIQUES, k=5)
        reordered = Corpus.from_events(reversed(apt29_corpus.events))
        _, table2, _ = case_study(reordered, APT29_WINDOW, APT29_TECHNIQUES, k=5)
        assert table == table2

    def test_landmarks_outside_window_dropped(self, apt29_corpus):
        landmarks = [
            (dt.date(2020, 3, 16), "inside"),
            (dt.date(1999, 1, 1), "way before"),
        ]
        overlay, _, _ = case_study(
            apt29_corpus, APT29_WINDOW, APT29_TECHNIQUES, k=3, landmarks=landmarks
        )
        assert [label for _, label in overlay.events] == ["inside"]

    def test_weekly_panel(self, apt29_corpus):
        overlay, _, _ = case_study(apt29_corpus, APT29_WINDOW, APT29_TECHNIQUES, k=3)
        assert overlay.panel.bin == "week"

    def test_empty_technique_set_keeps_window_only(self, apt29_corpus):
        overlay, table, _ = case_study(
            apt29_corpus, APT29_WINDOW, frozenset(), k=10
        )
        # decoys inside the window stay when no technique filter is given
        assert "France" in dict(table.categories["country"])


class TestOverlayInvariants:
    def test_landmark_outside_span_rejected(self):
        corpus = make_corpus(make_event("a", "2020-06-01", countries=("X",)))
        panel = build_panel(corpus, bin="week")
        with pytest.raises(ThreatflowError, match="outside"):
            EventOverlay(events=((dt.date(2021, 1, 1), "late"),), panel=panel)

    def test_json_exports(self, apt29_corpus):
        overlay, table, _ = case_study(
            apt29_corpus,
            APT29_WINDOW,
            APT29_TECHNIQUES,
            k=2,
            landmarks=[(dt.date(2020, 3, 16), "trial")],
        )
        payload = overlay_to_json(overlay)
        assert payload["bin"] == "week"
        assert payload["landmarks"] == [{"date": "2020-03-16", "label": "trial"}]
        table_payload = table_to_json(table)
        assert set(table_payload["categories"]) == {
            "malware_family",
            "industry",
            "country",
        }
        assert all(
            len(entries) <= 2 for entries in table_payload["categories"].values()
        )
