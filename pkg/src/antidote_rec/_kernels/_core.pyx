# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend: streams over entities, one small LAPACK solve each.

Same contract as the pure-numpy backend (see ``_numpy.solve_normal_equations``)
but without the (rank, nnz) temporaries, which makes it the preferred path for
the alternating-least-squares sweeps that dominate antidote optimization.
"""

import numpy as np

cimport numpy as cnp
from scipy.linalg.cython_lapack cimport dposv

from antidote_rec.errors import NumericalError

BACKEND_NAME = "compiled"


def solve_normal_equations(
    factors,
    indptr,
    indices,
    values,
    double reg,
    extra_gram=None,
    extra_rhs=None,
    str entity_kind="entity",
):
    cdef double[:, ::1] f = np.ascontiguousarray(factors, dtype=np.float64)
    cdef long long[::1] ip = np.ascontiguousarray(indptr, dtype=np.int64)
    cdef long long[::1] ix = np.ascontiguousarray(indices, dtype=np.int64)

    cdef bint has_values = values is not None
    cdef double[::1] vals
    if has_values:
        vals = np.ascontiguousarray(values, dtype=np.float64)
    else:
        vals = np.empty(0, dtype=np.float64)

    cdef bint has_gram = extra_gram is not None
    cdef double[:, ::1] gram
    if has_gram:
        gram = np.ascontiguousarray(extra_gram, dtype=np.float64)
    else:
        gram = np.empty((0, 0), dtype=np.float64)

    cdef bint has_rhs = extra_rhs is not None
    cdef double[:, ::1] erhs
    if has_rhs:
        erhs = np.ascontiguousarray(extra_rhs, dtype=np.float64)
    else:
        erhs = np.empty((0, 0), dtype=np.float64)

    cdef int rank = f.shape[0]
    cdef Py_ssize_t n_entities = ip.shape[0] - 1
    out_arr = np.empty((rank, n_entities), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    work_a_arr = np.empty(rank * rank, dtype=np.float64)
    work_b_arr = np.empty(rank, dtype=np.float64)
    cdef double[::1] A = work_a_arr
    cdef double[::1] b = work_b_arr

    cdef Py_ssize_t e, p
    cdef long long j
    cdef int a, c, info, nrhs = 1
    cdef double fa, w
    cdef int bad_entity = -1

    with nogil:
        for e in range(n_entities):
            # A = extra_gram + reg * I (upper triangle, row-major)
            for a in range(rank):
                for c in range(a, rank):
                    A[a * rank + c] = gram[a, c] if has_gram else 0.0
                A[a * rank + a] += reg
            # b = extra_rhs[:, e]
            for a in range(rank):
                b[a] = erhs[a, e] if has_rhs else 0.0
            # accumulate observations
            for p in range(ip[e], ip[e + 1]):
                j = ix[p]
                for a in range(rank):
                    fa = f[a, j]
                    for c in range(a, rank):
                        A[a * rank + c] += fa * f[c, j]
                if has_values:
                    w = vals[p]
                    for a in range(rank):
                        b[a] += f[a, j] * w
            # mirror to the lower triangle so either LAPACK uplo works
            for a in range(rank):
                for c in range(a + 1, rank):
                    A[c * rank + a] = A[a * rank + c]
            info = 0
            dposv('U', &rank, &nrhs, &A[0], &rank, &b[0], &rank, &info)
            if info != 0:
                bad_entity = <int> e
                break
            for a in range(rank):
                out[a, e] = b[a]

    if bad_entity >= 0:
        raise NumericalError(
            f"singular normal equations for {entity_kind} {bad_entity} (reg={reg}, "
            f"observations={int(ip[bad_entity + 1] - ip[bad_entity])})"
        )
    return out_arr
