# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the pure-Python kernels in pykernels.py.

Same algorithms, same results; only the inner loops are C.
"""

from libc.math cimport sqrt
from libc.stdlib cimport free, malloc

import numpy as np

from ..errors import ConvergenceError


cdef int _lev_dp(unsigned int *ca, Py_ssize_t la, unsigned int *cb, Py_ssize_t lb,
                 int *prev, int *curr) nogil:
    cdef Py_ssize_t i, j
    cdef int cost, best, candidate
    cdef int *tmp
    for j in range(lb + 1):
        prev[j] = <int> j
    for i in range(1, la + 1):
        curr[0] = <int> i
        for j in range(1, lb + 1):
            cost = 0 if ca[i - 1] == cb[j - 1] else 1
            best = prev[j] + 1
            candidate = curr[j - 1] + 1
            if candidate < best:
                best = candidate
            candidate = prev[j - 1] + cost
            if candidate < best:
                best = candidate
            curr[j] = best
        tmp = prev
        prev = curr
        curr = tmp
    return prev[lb]


def levenshtein(a: str, b: str) -> int:
    """Edit distance between two strings (insert/delete/substitute, unit cost).

    Dynamic program over two rows: O(|a|*|b|) time, O(min(|a|,|b|)) space.
    Comparison is on Unicode scalar values; case-folding is the caller's
    job.  The inner loop runs without the GIL, so batch callers can use
    real threads.
    """
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    cdef Py_ssize_t la = len(a), lb = len(b)
    if lb == 0:
        return la
    cdef unsigned int *ca = <unsigned int *> malloc(la * sizeof(unsigned int))
    cdef unsigned int *cb = <unsigned int *> malloc(lb * sizeof(unsigned int))
    cdef int *prev = <int *> malloc((lb + 1) * sizeof(int))
    cdef int *curr = <int *> malloc((lb + 1) * sizeof(int))
    if ca == NULL or cb == NULL or prev == NULL or curr == NULL:
        free(ca)
        free(cb)
        free(prev)
        free(curr)
        raise MemoryError()
    cdef Py_ssize_t i
    cdef int distance
    try:
        for i in range(la):
            ca[i] = <unsigned int> (<Py_UCS4> a[i])
        for i in range(lb):
            cb[i] = <unsigned int> (<Py_UCS4> b[i])
        with nogil:
            distance = _lev_dp(ca, la, cb, lb, prev, curr)
        return distance
    finally:
        free(ca)
        free(cb)
        free(prev)
        free(curr)


cdef int _lev_pair(unsigned int *xa, Py_ssize_t la, unsigned int *xb, Py_ssize_t lb,
                   int *prev, int *curr) nogil:
    # keep the row dimension on the shorter string
    if la < lb:
        return _lev_dp(xb, lb, xa, la, prev, curr)
    if lb == 0:
        return <int> la
    return _lev_dp(xa, la, xb, lb, prev, curr)


cdef class CandidateSet:
    """Pre-encoded string collection answering batch distance queries.

    Candidates are encoded to code-point arrays once at construction;
    each distances() call then runs every dynamic program inside one GIL
    release, so concurrent callers scale across threads.  The encoded
    arena is read-only after construction, making the object safe to
    share.
    """

    cdef unsigned int *arena
    cdef Py_ssize_t *offsets
    cdef Py_ssize_t *lengths
    cdef Py_ssize_t count
    cdef Py_ssize_t longest
    cdef tuple strings

    def __cinit__(self, strings):
        self.strings = tuple(strings)
        self.count = len(self.strings)
        self.longest = 0
        cdef Py_ssize_t total = 0
        cdef Py_ssize_t k, i, length
        for k in range(self.count):
            length = len(<str> self.strings[k])
            total += length
            if length > self.longest:
                self.longest = length
        self.arena = <unsigned int *> malloc((total or 1) * sizeof(unsigned int))
        self.offsets = <Py_ssize_t *> malloc((self.count or 1) * sizeof(Py_ssize_t))
        self.lengths = <Py_ssize_t *> malloc((self.count or 1) * sizeof(Py_ssize_t))
        if self.arena == NULL or self.offsets == NULL or self.lengths == NULL:
            raise MemoryError()
        cdef str candidate
        cdef Py_ssize_t position = 0
        for k in range(self.count):
            candidate = <str> self.strings[k]
            self.offsets[k] = position
            self.lengths[k] = len(candidate)
            for i in range(self.lengths[k]):
                self.arena[position] = <unsigned int> (<Py_UCS4> candidate[i])
                position += 1

    def __dealloc__(self):
        free(self.arena)
        free(self.offsets)
        free(self.lengths)

    def __len__(self):
        return self.count

    def distances(self, needle: str) -> list:
        """[levenshtein(needle, c) for c in candidates], computed in one
        no-GIL sweep."""
        if self.count == 0:
            return []
        cdef Py_ssize_t ln = len(needle)
        cdef Py_ssize_t rows = self.longest if self.longest > ln else ln
        cdef unsigned int *needle_buf = <unsigned int *> malloc((ln or 1) * sizeof(unsigned int))
        cdef int *prev = <int *> malloc((rows + 1) * sizeof(int))
        cdef int *curr = <int *> malloc((rows + 1) * sizeof(int))
        cdef int *out = <int *> malloc(self.count * sizeof(int))
        if needle_buf == NULL or prev == NULL or curr == NULL or out == NULL:
            free(needle_buf); free(prev); free(curr); free(out)
            raise MemoryError()
        cdef Py_ssize_t i, k
        try:
            for i in range(ln):
                needle_buf[i] = <unsigned int> (<Py_UCS4> needle[i])
            with nogil:
                for k in range(self.count):
                    out[k] = _lev_pair(
                        needle_buf, ln,
                        self.arena + self.offsets[k], self.lengths[k],
                        prev, curr,
                    )
            return [out[k] for k in range(self.count)]
        finally:
            free(needle_buf); free(prev); free(curr); free(out)


cdef double _off_norm(double[:, ::1] a, Py_ssize_t n):
    cdef double total = 0.0
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(n):
            if i != j:
                total += a[i, j] * a[i, j]
    return sqrt(total)


def jacobi_eigh(matrix, tol: float = 1e-10, max_sweeps: int = 100):
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi rotations.

    Returns (eigenvalues ascending, eigenvectors as columns, sweeps used).
    Convergence: Frobenius norm of the off-diagonal part below ``tol``.
    Raises ConvergenceError with the residual norm after ``max_sweeps``.
    """
    a_arr = np.array(matrix, dtype=np.float64, copy=True, order="C")
    cdef Py_ssize_t n = a_arr.shape[0]
    if a_arr.ndim != 2 or a_arr.shape[1] != n:
        raise ValueError("matrix must be square")
    v_arr = np.eye(n, dtype=np.float64)
    if n == 1:
        return a_arr.diagonal().copy(), v_arr, 0

    cdef double[:, ::1] a = a_arr
    cdef double[:, ::1] v = v_arr
    cdef double ctol = tol
    cdef int sweeps = 0, limit = max_sweeps
    cdef Py_ssize_t p, q, k
    cdef double apq, tau, t, c, s, app, aqq, akp, akq, vkp, vkq, residual

    residual = _off_norm(a, n)
    while residual >= ctol:
        if sweeps >= limit:
            raise ConvergenceError(
                f"Jacobi eigensolver: off-diagonal norm {residual:.3e} "
                f"after {limit} sweeps (tol {ctol:.1e})",
                residual=residual,
            )
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + sqrt(1.0 + tau * tau))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                app = a[p, p]
                aqq = a[q, q]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    if k != p and k != q:
                        akp = a[k, p]
                        akq = a[k, q]
                        a[k, p] = akp * c - akq * s
                        a[p, k] = a[k, p]
                        a[k, q] = akq * c + akp * s
                        a[q, k] = a[k, q]
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = vkp * c - vkq * s
                    v[k, q] = vkq * c + vkp * s
        residual = _off_norm(a, n)

    eigenvalues = a_arr.diagonal().copy()
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], v_arr[:, order], sweeps
