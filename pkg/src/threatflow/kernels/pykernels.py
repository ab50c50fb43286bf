"""Pure-Python implementations of the hot kernels.

These are the reference implementations; threatflow.kernels prefers the
compiled twins in _ckernels when the extension built.  Both backends must
agree (see tests/test_kernels.py).
"""

import math

import numpy as np

from ..errors import ConvergenceError


def levenshtein(a: str, b: str) -> int:
    """Edit distance between two strings (insert/delete/substitute, unit cost).

    Dynamic program over two rows: O(|a|*|b|) time, O(min(|a|,|b|)) space.
    Comparison is on Unicode scalar values; case-folding is the caller's job.
    """
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    curr = [0] * (len(b) + 1)
    for i, ca in enumerate(a, start=1):
        curr[0] = i
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            curr[j] = min(prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + cost)
        prev, curr = curr, prev
    return prev[len(b)]


class CandidateSet:
    """Pre-stored string collection answering batch distance queries.

    Same surface as the compiled twin; here distances() is a plain loop.
    """

    def __init__(self, strings):
        self.strings = tuple(strings)

    def __len__(self):
        return len(self.strings)

    def distances(self, needle: str) -> list:
        return [levenshtein(needle, candidate) for candidate in self.strings]


def jacobi_eigh(matrix, tol: float = 1e-10, max_sweeps: int = 100):
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns, sweeps used).
    Convergence: Frobenius norm of the off-diagonal part below ``tol``.
    Raises ConvergenceError with the residual norm after ``max_sweeps``.
    """
    a = np.array(matrix, dtype=np.float64, copy=True)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v, 0

    def off_norm():
        off = a - np.diag(a.diagonal())
        return math.sqrt(float((off * off).sum()))

    sweeps = 0
    while off_norm() >= tol:
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"Jacobi eigensolver: off-diagonal norm {off_norm():.3e} "
                f"after {max_sweeps} sweeps (tol {tol:.1e})",
                residual=off_norm(),
            )
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # Stable symmetric Schur rotation annihilating a[p, q].
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + math.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                app, aqq = a[p, p], a[q, q]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    if k != p and k != q:
                        akp, akq = a[k, p], a[k, q]
                        a[k, p] = akp * c - akq * s
                        a[p, k] = a[k, p]
                        a[k, q] = akq * c + akp * s
                        a[q, k] = a[k, q]
                for k in range(n):
                    vkp, vkq = v[k, p], v[k, q]
                    v[k, p] = vkp * c - vkq * s
                    v[k, q] = vkq * c + vkp * s

    eigenvalues = a.diagonal().copy()
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order], sweeps
