"""Attack-propagation structure: row-stochastic country transition matrices
estimated from co-targeting counts, and the graphs derived from them.

For every incident hitting the target set S: each ordered pair (i, j) of
distinct members adds one co-occurrence count, and a single-target incident
adds one to its country's diagonal.  Row-normalizing the counts gives the
probability that an attack seen in country i also reaches country j.
"""

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .analytics import CountryCounts
from .errors import EmptyInput, ThreatflowError
from .model import Corpus, ThreatEvent

GROUP_KEYS = ("all", "malware_family", "adversary", "tag")

ROW_SUM_TOL = 1e-9


@dataclass(frozen=True)
class TransitionMatrix:
    """Co-occurrence counts and their row-normalized spread probabilities."""

    countries: tuple[str, ...]
    counts: np.ndarray  # n x n, int64
    probs: np.ndarray  # n x n, float64, rows sum to 1

    def __post_init__(self):
        n = len(self.countries)
        if self.counts.shape != (n, n) or self.probs.shape != (n, n):
            raise ThreatflowError("matrix shape must match the country index")
        if (self.probs < -1e-12).any() or (self.probs > 1 + 1e-12).any():
            raise ThreatflowError("probabilities must lie in [0, 1]")
        rows = self.probs.sum(axis=1)
        if n and np.abs(rows - 1.0).max() > ROW_SUM_TOL:
            raise ThreatflowError(
                f"rows must sum to 1 within {ROW_SUM_TOL}; worst "
                f"deviation {np.abs(rows - 1.0).max():.3e}"
            )

    def __eq__(self, other):
        return (
            isinstance(other, TransitionMatrix)
            and self.countries == other.countries
            and np.array_equal(self.counts, other.counts)
            and np.array_equal(self.probs, other.probs)
        )

    def prob(self, src: str, dst: str) -> float:
        i = self.countries.index(src)
        j = self.countries.index(dst)
        return float(self.probs[i, j])


def _grouping(event: ThreatEvent, group_by: str) -> list[str]:
    if group_by == "all":
        return ["all"]
    if group_by == "malware_family":
        return sorted(set(event.malware_families))
    if group_by == "adversary":
        return [event.adversary] if event.adversary else []
    if group_by == "tag":
        return sorted(set(event.tags))
    raise ValueError(f"group_by must be one of {GROUP_KEYS}")


def estimate_transitions(
    corpus: Corpus, group_by: str = "all"
) -> dict[str, TransitionMatrix]:
    """Estimate one TransitionMatrix per group of incidents.

    Countries that never appear in a group are absent from that group's
    index, so every row has positive mass and normalizes cleanly.
    """
    if not corpus.events:
        raise EmptyInput("cannot estimate transitions from an empty corpus")
    grouped: dict[str, list[set[str]]] = defaultdict(list)
    for event in corpus.events:
        targets = set(event.countries)
        if not targets:
            continue
        for key in _grouping(event, group_by):
            grouped[key].append(targets)

    result: dict[str, TransitionMatrix] = {}
    for key in sorted(grouped):
        target_sets = grouped[key]
        countries = tuple(sorted(set().union(*target_sets)))
        index = {c: i for i, c in enumerate(countries)}
        counts = np.zeros((len(countries), len(countries)), dtype=np.int64)
        for targets in target_sets:
            if len(targets) == 1:
                i = index[next(iter(targets))]
                counts[i, i] += 1
            else:
                idx = [index[c] for c in targets]
                for i in idx:
                    for j in idx:
                        if i != j:
                            counts[i, j] += 1
        row_sums = counts.sum(axis=1)
        keep = row_sums > 0
        if not keep.all():
            countries = tuple(c for c, k in zip(countries, keep) if k)
            counts = counts[np.ix_(keep, keep)]
            row_sums = counts.sum(axis=1)
        probs = counts / row_sums[:, None]
        result[key] = TransitionMatrix(countries=countries, counts=counts, probs=probs)
    if not result:
        raise EmptyInput("no event in the corpus carries a country target")
    return result


@dataclass(frozen=True)
class SpreadGraph:
    """Directed propagation graph for one incident group.

    Node weights are incident counts; edge probabilities are the true
    (un-renormalized) transition probabilities, diagonal excluded.
    """

    group_key: str
    nodes: tuple[tuple[str, int], ...]  # (country, weight)
    edges: tuple[tuple[str, str, float], ...]  # (src, dst, probability)

    def __post_init__(self):
        for name, weight in self.nodes:
            if weight < 1:
                raise ThreatflowError(f"node {name!r} has weight {weight} < 1")
        for src, dst, p in self.edges:
            if not (0.0 < p <= 1.0 + 1e-12):
                raise ThreatflowError(f"edge {src}->{dst} probability {p} outside (0, 1]")


def build_spread_graph(
    tm: TransitionMatrix,
    node_weights: CountryCounts,
    min_prob: float = 0.0,
    group_key: str = "all",
) -> SpreadGraph:
    """Graph view of a TransitionMatrix with display-only edge pruning.

    Pruning below ``min_prob`` never re-normalizes: edges keep the true
    probabilities so graphs remain comparable across thresholds.
    """
    if not (0.0 <= min_prob < 1.0):
        raise ThreatflowError("min_prob must lie in [0, 1)")
    nodes = tuple(
        (country, int(node_weights.counts[country])) for country in tm.countries
    )
    edges = []
    n = len(tm.countries)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            p = float(tm.probs[i, j])
            if p > 0.0 and p >= min_prob:
                edges.append((tm.countries[i], tm.countries[j], p))
    return SpreadGraph(group_key=group_key, nodes=nodes, edges=tuple(edges))


def _dot_quote(name: str) -> str:
    escaped = name.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'


def export_dot(graph: SpreadGraph) -> str:
    """Deterministic DOT rendering: sorted nodes and edges, widths
    proportional to node weight, probabilities labeled to 2 decimals."""
    lines = ["digraph spread {"]
    if graph.nodes:
        max_weight = max(weight for _, weight in graph.nodes)
        for name, weight in sorted(graph.nodes):
            width = 2.0 * weight / max_weight
            lines.append(f"  {_dot_quote(name)} [width={width:.2f}];")
    for src, dst, p in sorted(graph.edges):
        lines.append(f"  {_dot_quote(src)} -> {_dot_quote(dst)} [label=\"{p:.2f}\"];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_to_json(graph: SpreadGraph) -> dict:
    """JSON-ready dict: {nodes: [{name, weight}], edges: [{src, dst, p}]}."""
    return {
        "nodes": [{"name": n, "weight": w} for n, w in sorted(graph.nodes)],
        "edges": [{"src": s, "dst": d, "p": p} for s, d, p in sorted(graph.edges)],
    }
