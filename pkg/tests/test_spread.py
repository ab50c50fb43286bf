import datetime as dt

import numpy as np
import pytest

from threatflow.analytics import count_by_country
from threatflow.errors import EmptyInput, ThreatflowError
from threatflow.model import Corpus
from threatflow.spread import (
    SpreadGraph,
    TransitionMatrix,
    build_spread_graph,
    estimate_transitions,
    export_dot,
    graph_to_json,
)
from threatflow.synth import SynthSpec, generate

from conftest import make_corpus, make_event, targets_corpus
from oracles import expected_transition_counts, generator_consistent_matrix


def random_stochastic(rng, n):
    m = rng.dirichlet(np.ones(n), size=n)
    return np.asarray(m)


class TestEstimateTransitions:
    def test_hand_enumerated_probabilities(self):
        corpus = targets_corpus({"A", "B"}, {"A", "B"}, {"A", "C"})
        tm = estimate_transitions(corpus, "all")["all"]
        assert tm.countries == ("A", "B", "C")
        assert tm.prob("A", "B") == pytest.approx(2 / 3)
        assert tm.prob("A", "C") == pytest.approx(1 / 3)
        assert tm.prob("B", "A") == 1.0
        assert tm.prob("C", "A") == 1.0

    def test_single_country_events_give_self_loop(self):
        tm = estimate_transitions(targets_corpus({"A"}, {"A"}), "all")["all"]
        assert tm.countries == ("A",)
        assert tm.probs.tolist() == [[1.0]]

    def test_counts_symmetric_off_diagonal(self):
        rng = np.random.default_rng(9)
        sets = [
            {f"C{rng.integers(0, 6)}" for _ in range(rng.integers(1, 5))}
            for _ in range(200)
        ]
        tm = estimate_transitions(targets_corpus(*sets), "all")["all"]
        off = tm.counts.copy()
        np.fill_diagonal(off, 0)
        assert np.array_equal(off, off.T)

    def test_grouping_by_malware_family(self):
        corpus = make_corpus(
            make_event("a", "2020-01-01", countries=("A", "B"), malware_families=("m1",)),
            make_event("b", "2020-01-02", countries=("C",), malware_families=("m2",)),
            make_event("c", "2020-01-03", countries=("A",), malware_families=("m1", "m2")),
        )
        matrices = estimate_transitions(corpus, "malware_family")
        assert set(matrices) == {"m1", "m2"}
        assert matrices["m1"].countries == ("A", "B")
        assert matrices["m2"].countries == ("A", "C")

    def test_adversary_grouping_skips_unattributed(self):
        corpus = make_corpus(
            make_event("a", "2020-01-01", countries=("A",), adversary="APT1"),
            make_event("b", "2020-01-02", countries=("B",)),
        )
        matrices = estimate_transitions(corpus, "adversary")
        assert set(matrices) == {"APT1"}

    def test_empty_corpus_rejected(self):
        with pytest.raises(EmptyInput):
            estimate_transitions(Corpus(events=()), "all")

    def test_rows_sum_to_one_on_random_corpora(self):
        rng = np.random.default_rng(21)
        for trial in range(20):
            n = int(rng.integers(2, 7))
            spec = SynthSpec(
                countries=tuple(f"C{i}" for i in range(n)),
                p_star=random_stochastic(rng, n),
                incidents=int(rng.integers(50, 300)),
                date_from=dt.date(2020, 1, 1),
                date_to=dt.date(2020, 12, 31),
                seed=trial,
            )
            for tm in estimate_transitions(generate(spec), "all").values():
                rows = tm.probs.sum(axis=1)
                assert np.abs(rows - 1.0).max() <= 1e-9

    def test_consistency_against_expected_count_oracle(self):
        # finite-sample estimate must approach the exact expected counts
        # of the generator, row-normalized
        p_star = generator_consistent_matrix(4)
        spec = SynthSpec(
            countries=("A", "B", "C", "D"),
            p_star=p_star,
            incidents=6000,
            date_from=dt.date(2020, 1, 1),
            date_to=dt.date(2020, 12, 31),
            seed=7,
        )
        tm = estimate_transitions(generate(spec), "all")["all"]
        expected = expected_transition_counts(p_star)
        expected_probs = expected / expected.sum(axis=1, keepdims=True)
        assert np.abs(tm.probs - expected_probs).max() < 0.05


class TestTransitionMatrixInvariants:
    def test_row_sum_violation_rejected(self):
        with pytest.raises(ThreatflowError, match="sum to 1"):
            TransitionMatrix(
                countries=("A", "B"),
                counts=np.ones((2, 2), dtype=np.int64),
                probs=np.array([[0.5, 0.6], [0.5, 0.5]]),
            )

    def test_negative_prob_rejected(self):
        with pytest.raises(ThreatflowError):
            TransitionMatrix(
                countries=("A", "B"),
                counts=np.zeros((2, 2), dtype=np.int64),
                probs=np.array([[1.2, -0.2], [0.5, 0.5]]),
            )


class TestSpreadGraph:
    @pytest.fixture()
    def corpus(self):
        return targets_corpus({"A", "B"}, {"A", "B"}, {"A", "C"})

    def test_single_node_no_edges(self):
        corpus = targets_corpus({"A"})
        tm = estimate_transitions(corpus, "all")["all"]
        graph = build_spread_graph(tm, count_by_country(corpus))
        assert len(graph.nodes) == 1
        assert graph.edges == ()

    def test_min_prob_pruning(self, corpus):
        tm = estimate_transitions(corpus, "all")["all"]
        graph = build_spread_graph(tm, count_by_country(corpus), min_prob=0.5)
        edges = {(s, d): p for s, d, p in graph.edges}
        assert edges == {
            ("A", "B"): pytest.approx(2 / 3),
            ("B", "A"): 1.0,
            ("C", "A"): 1.0,
        }

    def test_min_prob_zero_keeps_all_positive_off_diagonal(self, corpus):
        tm = estimate_transitions(corpus, "all")["all"]
        graph = build_spread_graph(tm, count_by_country(corpus), min_prob=0.0)
        positive = (tm.probs > 0).sum() - (np.diagonal(tm.probs) > 0).sum()
        assert len(graph.edges) == positive

    def test_pruning_never_renormalizes(self, corpus):
        tm = estimate_transitions(corpus, "all")["all"]
        graph = build_spread_graph(tm, count_by_country(corpus), min_prob=0.6)
        for src, dst, p in graph.edges:
            assert p == pytest.approx(tm.prob(src, dst))

    def test_node_weights_from_counts(self, corpus):
        tm = estimate_transitions(corpus, "all")["all"]
        graph = build_spread_graph(tm, count_by_country(corpus))
        assert dict(graph.nodes) == {"A": 3, "B": 2, "C": 1}


class TestExportDot:
    def test_empty_graph(self):
        graph = SpreadGraph(group_key="all", nodes=(), edges=())
        assert export_dot(graph) == "digraph spread {\n}\n"

    def test_two_node_golden(self):
        graph = SpreadGraph(
            group_key="all",
            nodes=(("Alpha", 4), ("Beta", 2)),
            edges=(("Alpha", "Beta", 0.5),),
        )
        assert export_dot(graph) == (
            "digraph spread {\n"
            '  "Alpha" [width=2.00];\n'
            '  "Beta" [width=1.00];\n'
            '  "Alpha" -> "Beta" [label="0.50"];\n'
            "}\n"
        )

    def test_names_with_spaces_quoted(self):
        graph = SpreadGraph(
            group_key="all",
            nodes=(("United Kingdom", 1),),
            edges=(),
        )
        assert '"United Kingdom"' in export_dot(graph)

    def test_deterministic_across_node_order(self):
        a = SpreadGraph(
            group_key="all",
            nodes=(("B", 1), ("A", 2)),
            edges=(("B", "A", 0.25), ("A", "B", 0.75)),
        )
        b = SpreadGraph(
            group_key="all",
            nodes=(("A", 2), ("B", 1)),
            edges=(("A", "B", 0.75), ("B", "A", 0.25)),
        )
        assert export_dot(a) == export_dot(b)

    def test_label_rounded_two_decimals(self):
        graph = SpreadGraph(
            group_key="all",
            nodes=(("A", 1), ("B", 1)),
            edges=(("A", "B", 0.4666666),),
        )
        assert 'label="0.47"' in export_dot(graph)


def test_graph_json_schema():
    graph = SpreadGraph(
        group_key="g",
        nodes=(("B", 2), ("A", 1)),
        edges=(("A", "B", 0.5),),
    )
    payload = graph_to_json(graph)
    assert payload == {
        "nodes": [{"name": "A", "weight": 1}, {"name": "B", "weight": 2}],
        "edges": [{"src": "A", "dst": "B", "p": 0.5}],
    }
