"""Hot numerical kernels with a compiled core and a pure-Python fallback.

The compiled extension (_ckernels, built from the bundled .pyx) is used
when it imported successfully; otherwise the pure implementations take
over transparently.  Set THREATFLOW_PURE=1 to force the fallback, e.g.
for benchmarking (see benchmarks/bench_kernels.py).
"""

import os

from . import pykernels

if os.environ.get("THREATFLOW_PURE"):
    _impl = pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "c"
    except ImportError:
        _impl = pykernels
        BACKEND = "python"

levenshtein = _impl.levenshtein
jacobi_eigh = _impl.jacobi_eigh
CandidateSet = _impl.CandidateSet

__all__ = ["levenshtein", "jacobi_eigh", "CandidateSet", "BACKEND"]
