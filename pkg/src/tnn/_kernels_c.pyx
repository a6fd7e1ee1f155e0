# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled quadratic Toeplitz kernels.

These are the exact O(n^2 d) reference paths; tnn._kernels_np provides the
same surface in pure numpy. Selection happens in tnn._backend.
"""

ctypedef fused real:
    float
    double

BACKEND = "ext"


def naive_matvec(real[:, ::1] values, real[:, ::1] x, real[:, ::1] out):
    """out[i, c] = sum_j values[i - j + n - 1, c] * x[j, c]. Overwrites out."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, j, c, row
    for i in range(n):
        for c in range(d):
            out[i, c] = 0
    for i in range(n):
        for j in range(n):
            row = i - j + n - 1
            for c in range(d):
                out[i, c] += values[row, c] * x[j, c]


def coeff_grad(real[:, ::1] grad_y, real[:, ::1] x, real[:, ::1] out):
    """out[k + n - 1, c] += sum_{i - j = k} grad_y[i, c] * x[j, c]. Accumulates."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, j, c, row
    for i in range(n):
        for j in range(n):
            row = i - j + n - 1
            for c in range(d):
                out[row, c] += grad_y[i, c] * x[j, c]


def causal_naive_matvec(real[:, ::1] values, real[:, ::1] x, real[:, ::1] out):
    """out[i, c] = sum_{j <= i} values[i - j + n - 1, c] * x[j, c]. Overwrites out.

    Never reads x beyond position i or any negative-offset row, so output
    position i is bit-identical under suffix edits and length extension.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, j, c, row
    for i in range(n):
        for c in range(d):
            out[i, c] = 0
    for i in range(n):
        for j in range(i + 1):
            row = i - j + n - 1
            for c in range(d):
                out[i, c] += values[row, c] * x[j, c]
