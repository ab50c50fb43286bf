"""Independent reference implementations the tests check the package against.

Nothing here shares code with the implementations under test: the edit
distance is the direct recursive recurrence, expected transition counts
come from exhaustive path enumeration, and the clustering/stationary
helpers lean on numpy's own linear algebra.
"""

import itertools
from functools import lru_cache

import numpy as np

# target-set size distribution of the synthetic generator:
# Geometric(0.5) capped at 5
SIZE_PROBS = {1: 0.5, 2: 0.25, 3: 0.125, 4: 0.0625, 5: 0.0625}


def naive_levenshtein(a: str, b: str) -> int:
    """Edit-distance recurrence transcribed directly: base case max(i, j)
    when min(i, j) = 0, else min(deletion+1, insertion+1, substitution+
    [a_i != b_j]).  Memoized only so the oracle is usable beyond toy
    lengths; the recurrence and its values are untouched."""

    @lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if min(i, j) == 0:
            return max(i, j)
        return min(
            rec(i - 1, j) + 1,
            rec(i, j - 1) + 1,
            rec(i - 1, j - 1) + (1 if a[i - 1] != b[j - 1] else 0),
        )

    result = rec(len(a), len(b))
    rec.cache_clear()
    return result


def stationary_by_eig(p: np.ndarray) -> np.ndarray:
    """Stationary distribution via the left eigenvector for eigenvalue 1."""
    values, vectors = np.linalg.eig(p.T)
    idx = int(np.argmin(np.abs(values - 1.0)))
    pi = np.real(vectors[:, idx])
    pi = np.abs(pi)
    return pi / pi.sum()


def expected_transition_counts(p: np.ndarray) -> np.ndarray:
    """Exact per-incident expectation of the co-targeting count matrix
    under the synthetic generator: seed from the stationary distribution,
    size ~ Geometric(0.5) capped at 5, one Markov step per extra target,
    duplicate visits collapsed; singletons hit the diagonal, larger sets
    every ordered pair of distinct members."""
    n = p.shape[0]
    pi = stationary_by_eig(p)
    expected = np.zeros((n, n))
    for size, weight in SIZE_PROBS.items():
        for seed in range(n):
            base = pi[seed] * weight
            for path in itertools.product(range(n), repeat=size - 1):
                prob = base
                previous = seed
                members = {seed}
                for step in path:
                    prob *= p[previous, step]
                    previous = step
                    members.add(step)
                if prob == 0.0:
                    continue
                if len(members) == 1:
                    expected[seed, seed] += prob
                else:
                    for a in members:
                        for b in members:
                            if a != b:
                                expected[a, b] += prob
    return expected


def generator_consistent_matrix(n: int = 6, iterations: int = 400) -> np.ndarray:
    """The row-stochastic matrix the generator/estimator pair reproduces.

    Row-normalized expected counts define a map on stochastic matrices;
    its fixed point is the only ground truth the estimator can recover
    exactly.  Iteration from the uniform chain converges to it."""
    p = np.full((n, n), 1.0 / n)
    for _ in range(iterations):
        counts = expected_transition_counts(p)
        nxt = counts / counts.sum(axis=1, keepdims=True)
        if np.abs(nxt - p).max() < 1e-14:
            return nxt
        p = nxt
    return p


def rand_index(labels_a: dict, labels_b: dict) -> float:
    """Fraction of item pairs on which two clusterings agree."""
    keys = sorted(labels_a)
    assert keys == sorted(labels_b)
    agree = 0
    total = 0
    for i, x in enumerate(keys):
        for y in keys[i + 1 :]:
            same_a = labels_a[x] == labels_a[y]
            same_b = labels_b[x] == labels_b[y]
            agree += same_a == same_b
            total += 1
    return agree / total if total else 1.0
