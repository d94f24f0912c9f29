"""Pure-numpy lane mirroring the compiled kernels in _core.pyx.

Selected at import when the extension is unavailable.  The per-element
accumulation order (k ascending) is identical to the compiled lane.
"""

import numpy as np

LANE = "python"


def panel_fma(a, b, acc, bk):
    bm, bn = acc.shape
    for k in range(bk):
        acc += np.multiply.outer(a[:bm, k], b[k, :bn])


def panel_fma_wide(a, b, acc, bk):
    bm, bn = acc.shape
    a = np.asarray(a[:bm, :bk], dtype=np.float64)
    b = np.asarray(b[:bk, :bn], dtype=np.float64)
    for k in range(bk):
        acc += np.multiply.outer(a[:, k], b[k, :])


def naive_matmul(a, b, out):
    # Literal triple loop in Python scalars; only usable at small sizes.
    mm, kk = a.shape
    nn = b.shape[1]
    zero = out.dtype.type(0)
    for m in range(mm):
        for n in range(nn):
            s = zero
            for k in range(kk):
                s += a[m, k] * b[k, n]
            out[m, n] = s
