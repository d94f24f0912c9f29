"""Brute-force oracles the test suite compares the kernels against.

Deliberately naive: every output element is an explicit sum over the
contraction index, with float64 (or complex128 / scalar dual) arithmetic.
Nothing here shares code with the kernel engine or the operators.
"""

from __future__ import annotations

import numpy as np

from .operators import DualNumber


def oracle_gemm(a, b, c=None, alpha=1.0, beta=0.0, trans_a=False, trans_b=False):
    """D[m, n] = alpha * sum_k op(A)[m, k] * op(B)[k, n] + beta * C[m, n].

    Inner products run in float64 regardless of the input precision, so the
    oracle is always the higher-accuracy side of a comparison.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if trans_a:
        a = a.T
    if trans_b:
        b = b.T
    m, k = a.shape
    k2, n = b.shape
    if k != k2:
        raise ValueError(f"inner dimensions disagree: {k} vs {k2}")
    d = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            d[i, j] = alpha * np.dot(a[i, :], b[:, j])
    if beta != 0.0:
        if c is None:
            raise ValueError("beta != 0 requires a C matrix")
        d += beta * np.asarray(c, dtype=np.float64)
    return d


def oracle_gemm_scalar(a, b, c=None):
    """Literal triple loop in Python scalars; cross-checks oracle_gemm at small sizes."""
    m, k = len(a), len(a[0])
    n = len(b[0])
    d = [[0.0] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            acc = float(c[i][j]) if c is not None else 0.0
            for p in range(k):
                acc += float(a[i][p]) * float(b[p][j])
            d[i][j] = acc
    return np.array(d)


def oracle_complex(a, b, c=None, alpha=1.0, beta=0.0, trans_a=False, trans_b=False):
    """Complex GEMM oracle: same per-element inner products over complex128."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if trans_a:
        a = a.T
    if trans_b:
        b = b.T
    m, k = a.shape
    _, n = b.shape
    d = np.zeros((m, n), dtype=np.complex128)
    for i in range(m):
        for j in range(n):
            d[i, j] = alpha * np.dot(a[i, :], b[:, j])
    if beta != 0.0:
        if c is None:
            raise ValueError("beta != 0 requires a C matrix")
        d += beta * np.asarray(c, dtype=np.complex128)
    return d


def oracle_dual(a_value, a_eps, b_value, b_eps, c_value=None, c_eps=None):
    """Dual-number GEMM as a triple loop over DualNumber scalars (eps^2 = 0).

    Returns (value, eps) float64 arrays.
    """
    av = np.asarray(a_value, dtype=np.float64)
    ae = np.asarray(a_eps, dtype=np.float64)
    bv = np.asarray(b_value, dtype=np.float64)
    be = np.asarray(b_eps, dtype=np.float64)
    m, k = av.shape
    _, n = bv.shape
    value = np.zeros((m, n))
    eps = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = DualNumber(0.0, 0.0)
            if c_value is not None:
                acc = DualNumber(float(c_value[i, j]), float(c_eps[i, j]))
            for p in range(k):
                acc = acc + DualNumber(av[i, p], ae[i, p]) * DualNumber(bv[p, j], be[p, j])
            value[i, j] = acc.value
            eps[i, j] = acc.epsilon
    return value, eps


def oracle_tc(a, b):
    """Tensor contraction D[a, b, c] = sum_d A[b, d, a] * B[d, c].

    Four nested scalar loops; A has shape (Nb, Nd, Na), B has shape (Nd, Nc),
    D has shape (Na, Nb, Nc).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    nb, nd, na = a.shape
    nd2, nc = b.shape
    if nd != nd2:
        raise ValueError(f"contraction extents disagree: {nd} vs {nd2}")
    d = np.zeros((na, nb, nc))
    for ia in range(na):
        for ib in range(nb):
            for ic in range(nc):
                acc = 0.0
                for idx in range(nd):
                    acc += a[ib, idx, ia] * b[idx, ic]
                d[ia, ib, ic] = acc
    return d
