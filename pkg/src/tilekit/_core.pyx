# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: K-panel multiply-accumulate and a naive baseline.

Per output element the accumulation order is k ascending, matching both the
scalar operator loops and the numpy fallback lane, so a given configuration
produces bit-identical results however the inner loop is executed.
"""

LANE = "compiled"

ctypedef fused real_t:
    float
    double


def panel_fma(real_t[::1, :] a, real_t[::1, :] b, real_t[::1, :] acc, Py_ssize_t bk):
    """acc (bm x bn) += a[:bm, :bk] @ b[:bk, :bn], k ascending per element.

    a and b are the physical scratch arrays; rows beyond the logical extents
    (column padding) are ignored.
    """
    cdef Py_ssize_t bm = acc.shape[0], bn = acc.shape[1]
    cdef Py_ssize_t m, n, k, n0 = 0
    cdef real_t b0, b1, b2, b3
    with nogil:
        while n0 + 4 <= bn:
            for k in range(bk):
                b0 = b[k, n0]
                b1 = b[k, n0 + 1]
                b2 = b[k, n0 + 2]
                b3 = b[k, n0 + 3]
                for m in range(bm):
                    acc[m, n0] += a[m, k] * b0
                    acc[m, n0 + 1] += a[m, k] * b1
                    acc[m, n0 + 2] += a[m, k] * b2
                    acc[m, n0 + 3] += a[m, k] * b3
            n0 += 4
        for n in range(n0, bn):
            for k in range(bk):
                b0 = b[k, n]
                for m in range(bm):
                    acc[m, n] += a[m, k] * b0


def panel_fma_wide(float[::1, :] a, float[::1, :] b, double[::1, :] acc,
                   Py_ssize_t bk):
    """Mixed precision panel: f32 storage, f64 products and accumulation."""
    cdef Py_ssize_t bm = acc.shape[0], bn = acc.shape[1]
    cdef Py_ssize_t m, n, k, n0 = 0
    cdef double b0, b1, b2, b3
    with nogil:
        while n0 + 4 <= bn:
            for k in range(bk):
                b0 = <double> b[k, n0]
                b1 = <double> b[k, n0 + 1]
                b2 = <double> b[k, n0 + 2]
                b3 = <double> b[k, n0 + 3]
                for m in range(bm):
                    acc[m, n0] += <double> a[m, k] * b0
                    acc[m, n0 + 1] += <double> a[m, k] * b1
                    acc[m, n0 + 2] += <double> a[m, k] * b2
                    acc[m, n0 + 3] += <double> a[m, k] * b3
            n0 += 4
        for n in range(n0, bn):
            for k in range(bk):
                b0 = <double> b[k, n]
                for m in range(bm):
                    acc[m, n] += <double> a[m, k] * b0


def naive_matmul(real_t[::1, :] a, real_t[::1, :] b, real_t[::1, :] out):
    """Textbook triple loop (m, n outer, k innermost); the benchmark baseline."""
    cdef Py_ssize_t mm = a.shape[0], kk = a.shape[1], nn = b.shape[1]
    cdef Py_ssize_t m, n, k
    cdef real_t s
    with nogil:
        for m in range(mm):
            for n in range(nn):
                s = 0
                for k in range(kk):
                    s += a[m, k] * b[k, n]
                out[m, n] = s
