#!/usr/bin/env python3
"""Benchmark the compiled kernels against their pure-Python fallbacks.

Run from the repository root after installing the package:

    python3 benchmarks/bench_kernels.py

The workloads mirror real usage: edit distance of noisy country strings
against every gazetteer candidate, and eigendecomposition of normalized
Laplacians at typical country counts.
"""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from threatflow.kernels import pykernels
from threatflow.normalize import load_gazetteer

try:
    from threatflow.kernels import _ckernels
except ImportError:
    _ckernels = None


def time_call(fn, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        started = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - started)
    return best


def bench_levenshtein(impl):
    gazetteer = load_gazetteer()
    candidates = [c for c, _ in gazetteer.candidates]
    rng = np.random.default_rng(0)
    pool = list("abcdefghijklmnopqrstuvwxyz ")
    queries = [
        "".join(rng.choice(pool, size=rng.integers(4, 24))) for _ in range(200)
    ]

    def work():
        for query in queries:
            for candidate in candidates:
                impl.levenshtein(query, candidate)

    return time_call(work, repeat=3), len(queries) * len(candidates)


def bench_jacobi(impl, n):
    rng = np.random.default_rng(1)
    a = rng.uniform(0.0, 1.0, size=(n, n))
    a = np.triu(a, 1)
    a = a + a.T
    degrees = a.sum(axis=1)
    lap = np.eye(n) - a / np.sqrt(np.outer(degrees, degrees))
    lap = (lap + lap.T) / 2
    return time_call(lambda: impl.jacobi_eigh(lap), repeat=3)


def main():
    backends = [("python", pykernels)]
    if _ckernels is not None:
        backends.append(("c", _ckernels))
    else:
        print("compiled kernels not built; benchmarking the fallback only\n")

    print(f"{'kernel':<28} {'backend':<8} {'time':>10}   throughput / speedup")
    print("-" * 72)

    reference = {}
    for name, impl in backends:
        elapsed, pairs = bench_levenshtein(impl)
        rate = pairs / elapsed
        line = f"{'levenshtein (gazetteer)':<28} {name:<8} {elapsed * 1e3:>8.1f}ms   {rate / 1e3:,.0f}k pairs/s"
        if name == "python":
            reference["lev"] = elapsed
        else:
            line += f"  ({reference['lev'] / elapsed:.1f}x)"
        print(line)

    for n in (40, 80, 160):
        reference_time = None
        for name, impl in backends:
            elapsed = bench_jacobi(impl, n)
            line = f"{f'jacobi eigh (n={n})':<28} {name:<8} {elapsed * 1e3:>8.1f}ms"
            if name == "python":
                reference_time = elapsed
            else:
                line += f"   ({reference_time / elapsed:.1f}x)"
            print(line)


if __name__ == "__main__":
    main()
