"""Spectral clustering of countries from co-targeting affinity.

Affinity is the raw co-incident count between two countries.  The
normalized Laplacian I - D^{-1/2} A D^{-1/2} is eigendecomposed with the
Jacobi kernel; the cluster count comes from the largest eigengap unless
fixed by the caller; the spectral embedding is grouped by k-means.
"""

import json
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ThreatflowError, TooFewNodes
from .kernels import jacobi_eigh
from .model import Corpus

EIG_TOL = 1e-10
MAX_SWEEPS = 100
ISOLATED_DEGREE = 1e-12
KMEANS_RESTARTS = 100
KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class AffinityMatrix:
    countries: tuple[str, ...]
    a: np.ndarray  # symmetric, non-negative, zero diagonal

    def __post_init__(self):
        n = len(self.countries)
        if self.a.shape != (n, n):
            raise ThreatflowError("affinity shape must match the country list")
        if not np.array_equal(self.a, self.a.T):
            raise ThreatflowError("affinity matrix must be symmetric")
        if (self.a < 0).any():
            raise ThreatflowError("affinity entries must be non-negative")
        if np.diagonal(self.a).any():
            raise ThreatflowError("affinity diagonal must be zero")


def affinity_from_corpus(corpus: Corpus, min_events: int = 1) -> AffinityMatrix:
    """Co-incident counts between countries with at least ``min_events`` events."""
    if min_events < 1:
        raise ThreatflowError("min_events must be >= 1")
    totals: Counter[str] = Counter()
    for event in corpus.events:
        totals.update(set(event.countries))
    eligible = sorted(c for c, n in totals.items() if n >= min_events)
    if len(eligible) < 2:
        raise TooFewNodes(
            f"need at least 2 countries with >= {min_events} events, "
            f"found {len(eligible)}"
        )
    index = {c: i for i, c in enumerate(eligible)}
    a = np.zeros((len(eligible), len(eligible)), dtype=np.float64)
    for event in corpus.events:
        members = sorted(index[c] for c in set(event.countries) if c in index)
        for x in range(len(members)):
            for y in range(x + 1, len(members)):
                a[members[x], members[y]] += 1
                a[members[y], members[x]] += 1
    return AffinityMatrix(countries=tuple(eligible), a=a)


@dataclass(frozen=True)
class ClusterAssignment:
    k: int
    labels: dict[str, int]
    eigenvalues: tuple[float, ...]  # ascending, full Laplacian spectrum

    def __post_init__(self):
        ids = set(self.labels.values())
        if ids != set(range(self.k)):
            raise ThreatflowError(f"label ids must be exactly 0..{self.k - 1}")
        for i in range(1, len(self.eigenvalues)):
            if self.eigenvalues[i] < self.eigenvalues[i - 1]:
                raise ThreatflowError("eigenvalues must be ascending")
        if self.eigenvalues:
            low, high = self.eigenvalues[0], self.eigenvalues[-1]
            if low < -1e-9 or high > 2 + 1e-9:
                raise ThreatflowError(
                    f"normalized Laplacian spectrum outside [0, 2]: [{low}, {high}]"
                )

    def members(self) -> dict[int, list[str]]:
        out: dict[int, list[str]] = {i: [] for i in range(self.k)}
        for country in sorted(self.labels):
            out[self.labels[country]].append(country)
        return out


def normalized_laplacian(aff: AffinityMatrix) -> np.ndarray:
    """I - D^{-1/2} A D^{-1/2}; isolated nodes get a tiny degree so the
    scaling stays finite (their Laplacian row is then the identity row)."""
    degrees = aff.a.sum(axis=1)
    degrees = np.where(degrees > 0, degrees, ISOLATED_DEGREE)
    inv_sqrt = 1.0 / np.sqrt(degrees)
    lap = np.eye(len(degrees)) - (inv_sqrt[:, None] * aff.a) * inv_sqrt[None, :]
    # exact symmetry despite floating-point scaling, Jacobi expects it
    return (lap + lap.T) / 2.0


def _eigengap_k(eigenvalues: np.ndarray, max_k: int) -> int:
    """k in [2, max_k] with the largest gap between consecutive eigenvalues."""
    n = len(eigenvalues)
    best_k, best_gap = 2, -1.0
    for k in range(2, min(max_k, n - 1) + 1):
        gap = eigenvalues[k] - eigenvalues[k - 1]
        if gap > best_gap:  # ties keep the smaller k
            best_k, best_gap = k, gap
    return best_k


def _kmeans_once(points: np.ndarray, k: int, rng: np.random.Generator):
    n = points.shape[0]
    # k-means++ seeding
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    closest = ((points - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centroids[c] = points[idx]
        dist = ((points - centroids[c]) ** 2).sum(axis=1)
        closest = np.minimum(closest, dist)

    labels = np.full(n, -1)
    for _ in range(KMEANS_MAX_ITER):
        dists = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            mask = labels == c
            if mask.any():
                centroids[c] = points[mask].mean(axis=0)
    inertia = float(((points - centroids[labels]) ** 2).sum())
    return labels, inertia


def _kmeans(points: np.ndarray, k: int, seed: int) -> np.ndarray:
    """k-means with k-means++ seeding and per-restart seeds seed+r."""
    best_labels, best_inertia = None, np.inf
    for restart in range(KMEANS_RESTARTS):
        rng = np.random.default_rng(seed + restart)
        labels, inertia = _kmeans_once(points, k, rng)
        if inertia < best_inertia - 1e-12:
            best_labels, best_inertia = labels, inertia
    assert best_labels is not None
    return best_labels


def spectral_cluster(
    aff: AffinityMatrix,
    k: int | None = None,
    max_k: int = 12,
    seed: int = 0,
) -> ClusterAssignment:
    """Cluster countries by the normalized spectral algorithm.

    Rows of the first k eigenvectors are unit-normalized and k-means'd
    (100 restarts, k-means++ with per-restart seeds).  When k is omitted
    the largest eigengap over [2, max_k] picks it.  Isolated countries
    become singleton clusters instead of polluting the embedding.
    """
    n = len(aff.countries)
    if n < 2:
        raise TooFewNodes("need at least 2 countries to cluster")
    if max_k < 2:
        raise ThreatflowError("max_k must be >= 2")
    lap = normalized_laplacian(aff)
    eigenvalues, eigenvectors, _ = jacobi_eigh(lap, tol=EIG_TOL, max_sweeps=MAX_SWEEPS)

    isolated = aff.a.sum(axis=1) == 0
    connected = ~isolated
    if k is None:
        chosen = _eigengap_k(eigenvalues, max_k)
    else:
        if not (1 <= k <= n):
            raise ThreatflowError(f"k must lie in [1, {n}]")
        chosen = k
    chosen = min(chosen, int(connected.sum())) if connected.any() else 0

    raw_labels = np.zeros(n, dtype=np.int64)
    if chosen > 0:
        embedding = eigenvectors[:, :chosen]
        norms = np.linalg.norm(embedding, axis=1, keepdims=True)
        safe = np.where(norms > 1e-30, norms, 1.0)
        points = embedding / safe
        raw_labels[connected] = _kmeans(points[connected], chosen, seed)
    next_id = chosen
    for i in np.flatnonzero(isolated):
        raw_labels[i] = next_id
        next_id += 1

    # canonical ids: renumber by first appearance over the sorted country
    # list so equal partitions always get equal label maps
    order = np.argsort(np.array(aff.countries))
    remap: dict[int, int] = {}
    for i in order:
        remap.setdefault(int(raw_labels[i]), len(remap))
    labels = {
        country: remap[int(raw_labels[i])] for i, country in enumerate(aff.countries)
    }
    return ClusterAssignment(
        k=len(remap), labels=labels, eigenvalues=tuple(float(v) for v in eigenvalues)
    )


def cluster_report(assignment: ClusterAssignment) -> dict:
    """JSON-ready report: clusters with sorted members plus the spectrum."""
    return {
        "k": assignment.k,
        "clusters": [
            {"id": cid, "members": members}
            for cid, members in sorted(assignment.members().items())
        ],
        "eigenvalues": list(assignment.eigenvalues),
    }


def cluster_report_text(assignment: ClusterAssignment) -> str:
    lines = [f"k = {assignment.k}"]
    for cid, members in sorted(assignment.members().items()):
        lines.append(f"cluster {cid}: {', '.join(members)}")
    return "\n".join(lines) + "\n"


def cluster_report_json(assignment: ClusterAssignment) -> str:
    return json.dumps(cluster_report(assignment), indent=2) + "\n"
