# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled centering pass over a run of disjoint subtensors.

A run is a set of subtensors from one group, so no entry belongs to two of
them and all their mean corrections can be applied in one streaming pass.
Sums are compensated with the branchless two-sum error term.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def center_run(double[::1] vals not None,
               double[::1] shifts not None,
               const long long[::1] entries not None,
               const long long[::1] local not None,
               const long long[::1] positions not None,
               const double[::1] counts not None,
               double[::1] sums not None,
               double[::1] comp not None):
    """Center every subtensor of the run in place; return the sum of squared corrections.

    ``entries`` lists the value positions touched by the run (empty means
    all of ``vals``); ``local[j]`` is the run-local subtensor of the j-th
    touched value. ``sums`` and ``comp`` are scratch arrays of run length.
    """
    cdef Py_ssize_t n = positions.shape[0]
    cdef Py_ssize_t m = local.shape[0]
    cdef bint all_entries = entries.shape[0] == 0
    cdef Py_ssize_t j, i
    cdef long long e
    cdef double s, x, t, bp, rho, v = 0.0
    with nogil:
        for i in range(n):
            sums[i] = 0.0
            comp[i] = 0.0
        for j in range(m):
            e = j if all_entries else entries[j]
            i = local[j]
            s = sums[i]
            x = vals[e]
            t = s + x
            bp = t - s
            comp[i] += (s - (t - bp)) + (x - bp)
            sums[i] = t
        for i in range(n):
            rho = -(sums[i] + comp[i]) / counts[i]
            sums[i] = rho
            shifts[positions[i]] -= rho
            v += rho * rho
        for j in range(m):
            e = j if all_entries else entries[j]
            vals[e] += sums[local[j]]
    return v


def scatter_sums(const double[::1] shifts not None,
                 const long long[:, ::1] members not None):
    """Sum of member shift coefficients for each row of ``members``."""
    cdef Py_ssize_t n = members.shape[0], g = members.shape[1], r, c
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for r in range(n):
            acc = 0.0
            for c in range(g):
                acc += shifts[members[r, c]]
            o[r] = acc
    return out
