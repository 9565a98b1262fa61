# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled consensus-round kernels.

Both kernels accumulate in strict ascending column order (the mandated
summation order), which is what makes the dense and neighbor-list forms
and the pure-Python fallback bit-identical.
"""


def dense_step(const double[:, ::1] w, const double[::1] v, double[::1] out):
    """out[i] = sum_j w[i, j] * v[j], ascending j, no reassociation."""
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc = acc + w[i, j] * v[j]
        out[i] = acc


def neighbor_step(const double[:, ::1] w,
                  const Py_ssize_t[::1] indptr,
                  const Py_ssize_t[::1] indices,
                  const double[::1] v,
                  double[::1] out):
    """Per-node form: out[i] sums only over row i's support (self + neighbors),
    stored ascending in indices[indptr[i]:indptr[i+1]]."""
    cdef Py_ssize_t n = w.shape[0]
    cdef Py_ssize_t i, t, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for t in range(indptr[i], indptr[i + 1]):
            j = indices[t]
            acc = acc + w[i, j] * v[j]
        out[i] = acc
