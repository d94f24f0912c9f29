"""User-facing entry points and the wiring for the shipped GEMM variants.

``matmul`` runs a fully-specified configuration; ``gemm_ex`` is the BLAS-like
interface that derives every component from the argument types (real, complex
or dual element types; transposition realised by layout selection rather than
data movement).  ``gemm_ex_raw`` exposes the same operation over flat
pointers, extents and integer type tags so it can be driven through a C FFI.

The build_* helpers wire the five shipped variants: dense (optionally
mixed-precision), diagonal-A, fused elementwise/bias, complex/dual numbers,
and the tensor contraction D[a,b,c] = sum_d A[b,d,a] * B[d,c].
"""

from __future__ import annotations

import ctypes
import dataclasses

import numpy as np

from . import components, kernel, layouts
from .components import BiasEpilogue, ConfigError, DiagonalPredicate, Params, identity, scale
from .kernel import EventCounters, KernelConfig
from .layouts import (
    ColMajor,
    Diagonal,
    InterleavedComplex,
    RowMajor,
    StridedPermutation,
    Zero,
    col_major,
    split_pairs,
)
from .operators import DUAL32, DUAL64, ComplexOperator, DualOperator, FmaOperator, OperatorShape


def matmul(config: KernelConfig, a, b, c, d) -> EventCounters:
    """Resolve, validate and execute a kernel configuration."""
    config = kernel.resolve_config(config)
    return kernel.gemm_execute(config, a, b, c, d)


# --- element-type dispatch ------------------------------------------------------

_REAL = (np.dtype(np.float32), np.dtype(np.float64))
_COMPLEX = (np.dtype(np.complex64), np.dtype(np.complex128))
_DUAL = (DUAL32, DUAL64)
SUPPORTED_ELEMENT_TYPES = _REAL + _COMPLEX + _DUAL


def _operator_for(dtype, shape: OperatorShape, wide_accumulate: bool):
    dtype = np.dtype(dtype)
    if dtype in _REAL:
        compute = np.float64 if (wide_accumulate and dtype == np.dtype(np.float32)) else dtype
        return FmaOperator(shape, compute)
    if dtype in _COMPLEX:
        return ComplexOperator(shape, dtype)
    if dtype in _DUAL:
        return DualOperator(shape, dtype)
    raise ConfigError(
        f"unsupported element type {dtype}; supported: "
        + ", ".join(str(t) for t in SUPPORTED_ELEMENT_TYPES)
    )


def _flat_buffer(arr: np.ndarray):
    """(flat scalar buffer, storage order) of a matrix, without copying."""
    if arr.ndim != 2:
        raise ConfigError(f"expected a 2-D matrix, got shape {arr.shape}")
    if arr.flags["F_CONTIGUOUS"]:
        flat, order = arr.reshape(-1, order="F"), "F"
    elif arr.flags["C_CONTIGUOUS"]:
        flat, order = arr.reshape(-1, order="C"), "C"
    else:
        raise ConfigError("matrix must be C- or F-contiguous")
    if arr.dtype in _COMPLEX or arr.dtype in _DUAL:
        flat = flat.view(np.float32 if arr.dtype.itemsize == 8 else np.float64)
    return flat, order


def _global_layout(arr, names, extents, trans):
    """Layout describing op(arr) over its existing storage.

    A transposed operand is realised by flipping between column-major and
    row-major indexing of the same buffer; no elements move.
    """
    flat, order = _flat_buffer(arr)
    expect = extents[::-1] if trans else extents
    if arr.shape != expect:
        raise ConfigError(f"matrix shape {arr.shape} != expected {expect}")
    colmajor = (order == "F") != trans
    if arr.dtype in _COMPLEX or arr.dtype in _DUAL:
        layout = InterleavedComplex(arr.dtype, names, extents, order="F" if colmajor else "C")
    elif colmajor:
        layout = ColMajor(arr.dtype, names, extents)
    else:
        layout = RowMajor(arr.dtype, names, extents)
    return layout, flat


def _shared_builder(dtype):
    dtype = np.dtype(dtype)
    if dtype in _COMPLEX or dtype in _DUAL:
        return split_pairs(dtype)
    return col_major(dtype)


def gemm_ex(trans_a, trans_b, alpha, a, b, beta, c, *, operator_shape=None,
            block_tile=None, wide_accumulate=False, worker_threads=1,
            workers_per_block=1, scratch_budget=components.DEFAULT_SCRATCH_BUDGET):
    """C := alpha * op(A) @ op(B) + beta * C  (op = identity or transpose).

    All components are derived from the element type of the matrices:
    real types use the FMA operator, complex types the four-product complex
    operator with interleaved global / split scratch layouts, dual types the
    three-product dual operator.  C is updated in place.
    """
    a, b, c = np.asarray(a), np.asarray(b), np.asarray(c)
    if not (a.dtype == b.dtype == c.dtype):
        raise ConfigError(
            f"element types must agree, got {a.dtype}/{b.dtype}/{c.dtype}; supported: "
            + ", ".join(str(t) for t in SUPPORTED_ELEMENT_TYPES)
        )
    m, k = (a.shape[1], a.shape[0]) if trans_a else a.shape
    n = c.shape[1]
    shape = OperatorShape(*(operator_shape or components.DEFAULT_OPERATOR_SHAPE))
    op = _operator_for(a.dtype, shape, wide_accumulate)

    zero_alpha = alpha == 0
    if zero_alpha:
        # alpha = 0 short-circuits A and B entirely: C := beta * C exactly.
        layout_a = Zero(a.dtype, ("M", "K"), (m, k))
        layout_b = Zero(a.dtype, ("K", "N"), (k, n))
        buf_a = np.zeros(0, layout_a.storage_dtype)
        buf_b = np.zeros(0, layout_b.storage_dtype)
        t_c, t_d = scale(beta), identity
    else:
        layout_a, buf_a = _global_layout(a, ("M", "K"), (m, k), trans_a)
        layout_b, buf_b = _global_layout(b, ("K", "N"), (k, n), trans_b)
        t_c = identity if beta / alpha == 1 else scale(beta / alpha)
        t_d = identity if alpha == 1 else scale(alpha)
    layout_c, buf_c = _global_layout(c, ("M", "N"), (m, n), False)

    config = KernelConfig(
        params=Params(gemm_shape=(m, n, k), block_tile=block_tile,
                      operator_shape=(shape.m, shape.n, shape.k),
                      worker_threads=worker_threads, workers_per_block=workers_per_block,
                      scratch_budget=scratch_budget),
        operator=op,
        global_a_layout=layout_a,
        global_b_layout=layout_b,
        global_c_layout=layout_c,
        global_d_layout=layout_c,
        shared_a_layout=_shared_builder(a.dtype),
        shared_b_layout=_shared_builder(a.dtype),
        shared_c_layout=_shared_builder(a.dtype),
        shared_d_layout=_shared_builder(a.dtype),
        transform_g2s_c=t_c,
        transform_r2s_d=t_d,
    )
    return matmul(config, buf_a, buf_b, buf_c, buf_c)


# --- variant wiring ---------------------------------------------------------------

def build_dense_config(m, n, k, dtype=np.float32, *, trans_a=False, trans_b=False,
                       wide_accumulate=False, block_tile=None, operator_shape=None,
                       shared_pad=0, worker_threads=1, workers_per_block=1,
                       compute_warp=None) -> KernelConfig:
    """Plain (optionally mixed-precision) GEMM over dense col/row-major matrices."""
    dtype = np.dtype(dtype)
    shape = OperatorShape(*(operator_shape or components.DEFAULT_OPERATOR_SHAPE))
    kind_a = RowMajor if trans_a else ColMajor
    kind_b = RowMajor if trans_b else ColMajor
    shared = col_major(dtype)
    if shared_pad:
        shared = layouts.padded(shared, shared_pad)
    return KernelConfig(
        params=Params(gemm_shape=(m, n, k), block_tile=block_tile,
                      compute_warp=compute_warp,
                      operator_shape=(shape.m, shape.n, shape.k),
                      worker_threads=worker_threads, workers_per_block=workers_per_block),
        operator=_operator_for(dtype, shape, wide_accumulate),
        global_a_layout=kind_a(dtype, ("M", "K"), (m, k)),
        global_b_layout=kind_b(dtype, ("K", "N"), (k, n)),
        global_c_layout=ColMajor(dtype, ("M", "N"), (m, n)),
        global_d_layout=ColMajor(dtype, ("M", "N"), (m, n)),
        shared_a_layout=shared,
        shared_b_layout=shared,
    )


def build_diagonal_config(n, dtype=np.float32, *, block_tile=None,
                          operator_shape=None, worker_threads=1) -> KernelConfig:
    """GEMM with a diagonal A matrix: only the diagonal is stored and loaded,
    and block-K iterations off the diagonal are skipped by the predicate."""
    base = build_dense_config(n, n, n, dtype, block_tile=block_tile,
                              operator_shape=operator_shape, worker_threads=worker_threads)
    return dataclasses.replace(
        base,
        global_a_layout=Diagonal(dtype, ("M", "K"), (n, n)),
        predicate=DiagonalPredicate(),
    )


def build_fused_config(m, n, k, dtype=np.float32, *, bias, relu_on_c=False,
                       relu_on_d=True, add_a=None, add_b=None, block_tile=None,
                       operator_shape=None, worker_threads=1) -> KernelConfig:
    """Fused elementwise / bias variant.

    Optional constant additions ride the A/B global->scratch streams, ReLU the
    C stream and the final D store; bias[j] is added per output column by the
    epilogue before the final D transform.  All of it happens inside the one
    kernel pass.
    """
    dtype = np.dtype(dtype)
    base = build_dense_config(m, n, k, dtype, block_tile=block_tile,
                              operator_shape=operator_shape, worker_threads=worker_threads)

    def stream_add(const):
        return identity if const is None else components.add_constant(dtype.type(const))

    return dataclasses.replace(
        base,
        transform_g2s_a=stream_add(add_a),
        transform_g2s_b=stream_add(add_b),
        transform_g2s_c=components.relu if relu_on_c else identity,
        transform_s2g_d=components.relu if relu_on_d else identity,
        epilogue=BiasEpilogue(np.asarray(bias, dtype=dtype)),
    )


def build_complex_config(m, n, k, dtype=np.complex64, *, block_tile=None,
                         operator_shape=None, worker_threads=1) -> KernelConfig:
    """Complex GEMM: interleaved global layouts, split scratch layouts."""
    dtype = np.dtype(dtype)
    shape = OperatorShape(*(operator_shape or components.DEFAULT_OPERATOR_SHAPE))
    return KernelConfig(
        params=Params(gemm_shape=(m, n, k), block_tile=block_tile,
                      operator_shape=(shape.m, shape.n, shape.k),
                      worker_threads=worker_threads),
        operator=_operator_for(dtype, shape, False),
        global_a_layout=InterleavedComplex(dtype, ("M", "K"), (m, k)),
        global_b_layout=InterleavedComplex(dtype, ("K", "N"), (k, n)),
        global_c_layout=InterleavedComplex(dtype, ("M", "N"), (m, n)),
        global_d_layout=InterleavedComplex(dtype, ("M", "N"), (m, n)),
        shared_a_layout=split_pairs(dtype),
        shared_b_layout=split_pairs(dtype),
        shared_c_layout=split_pairs(dtype),
        shared_d_layout=split_pairs(dtype),
    )


def build_dual_config(m, n, k, dtype=DUAL64, **kwargs) -> KernelConfig:
    """Dual-number GEMM; reuses the interleaved/split pair layouts."""
    return build_complex_config(m, n, k, dtype, **kwargs)


def build_tc_config(na, nb, nc, nd, dtype=np.float32, *, block_tile=None,
                    operator_shape=None, worker_threads=1) -> KernelConfig:
    """Tensor contraction D[a,b,c] = sum_d A[b,d,a] * B[d,c] as a GEMM.

    The index permutations are fused into the global layouts: the kernel sees
    a plain (M, K) x (K, N) product with M = (b, a) and K = d, while A stays
    stored as a (Nb, Nd, Na) column-major tensor and D is scattered into
    (Na, Nb, Nc) on the way out.  C is a Zero layout: no loads, no buffer.
    """
    dtype = np.dtype(dtype)
    m, n, k = nb * na, nc, nd
    shape = OperatorShape(*(operator_shape or _tc_operator_shape(m, n, k)))
    layout_a = StridedPermutation(
        dtype, ("M", "K"), (m, k),
        dim_map={"M": (("b", nb), ("a", na)), "K": (("d", nd),)},
        storage_order=("b", "d", "a"),
    )
    layout_d = StridedPermutation(
        dtype, ("M", "N"), (m, n),
        dim_map={"M": (("b", nb), ("a", na)), "N": (("c", nc),)},
        storage_order=("a", "b", "c"),
    )
    return KernelConfig(
        params=Params(gemm_shape=(m, n, k), block_tile=block_tile,
                      operator_shape=(shape.m, shape.n, shape.k),
                      worker_threads=worker_threads),
        operator=_operator_for(dtype, shape, False),
        global_a_layout=layout_a,
        global_b_layout=ColMajor(dtype, ("K", "N"), (k, n)),
        global_c_layout=Zero(dtype, ("M", "N"), (m, n)),
        global_d_layout=layout_d,
    )


def _tc_operator_shape(m, n, k):
    pick = lambda extent, default: extent if extent < default else default
    return (pick(m, 8), pick(n, 8), pick(k, 8))


def contract(a, b, *, worker_threads=1, block_tile=None):
    """Run the tensor-contraction variant on (Nb, Nd, Na) x (Nd, Nc) arrays.

    Returns (D, counters) with D of shape (Na, Nb, Nc).
    """
    a = np.asfortranarray(a)
    b = np.asfortranarray(b)
    nb, nd, na = a.shape
    _, nc = b.shape
    config = build_tc_config(na, nb, nc, nd, a.dtype, worker_threads=worker_threads,
                             block_tile=block_tile)
    d = np.zeros(na * nb * nc, dtype=a.dtype)
    counters = matmul(config, a.ravel(order="F"), b.ravel(order="F"),
                      np.zeros(0, a.dtype), d)
    return d.reshape((na, nb, nc), order="F"), counters


# --- C-compatible export -----------------------------------------------------------

# type tags for the flat-pointer surface
TAG_F32, TAG_F64, TAG_C64, TAG_C128, TAG_DUAL32, TAG_DUAL64 = range(6)
_TAG_DTYPES = {
    TAG_F32: np.dtype(np.float32),
    TAG_F64: np.dtype(np.float64),
    TAG_C64: np.dtype(np.complex64),
    TAG_C128: np.dtype(np.complex128),
    TAG_DUAL32: DUAL32,
    TAG_DUAL64: DUAL64,
}


def _matrix_from_address(ptr, rows, cols, dtype):
    count = rows * cols
    raw = (ctypes.c_char * (count * dtype.itemsize)).from_address(ptr)
    return np.frombuffer(raw, dtype=dtype).reshape((rows, cols), order="F")


def gemm_ex_raw(type_tag, trans_a, trans_b, m, n, k,
                alpha_re, alpha_im, a_ptr, b_ptr, beta_re, beta_im, c_ptr) -> int:
    """gemm_ex over flat column-major pointers, extents and a type tag.

    Matrices are column-major as stored: A is m x k (k x m when trans_a), B is
    k x n (n x k when trans_b), C is m x n and is updated in place.  For real
    and dual tags the imaginary scalar parts must be zero.  Returns 0 on
    success, 1 on any configuration error.
    """
    try:
        dtype = _TAG_DTYPES[type_tag]
    except KeyError:
        return 1
    alpha = alpha_re + 1j * alpha_im if dtype in _COMPLEX else alpha_re
    beta = beta_re + 1j * beta_im if dtype in _COMPLEX else beta_re
    try:
        a = _matrix_from_address(a_ptr, *( (k, m) if trans_a else (m, k) ), dtype)
        b = _matrix_from_address(b_ptr, *( (n, k) if trans_b else (k, n) ), dtype)
        c = _matrix_from_address(c_ptr, m, n, dtype)
        gemm_ex(bool(trans_a), bool(trans_b), alpha, a, b, beta, c)
        return 0
    except (ConfigError, ValueError):
        return 1


GEMM_EX_CFUNC = ctypes.CFUNCTYPE(
    ctypes.c_int,
    ctypes.c_int, ctypes.c_int, ctypes.c_int,            # tag, transA, transB
    ctypes.c_longlong, ctypes.c_longlong, ctypes.c_longlong,  # m, n, k
    ctypes.c_double, ctypes.c_double,                    # alpha re/im
    ctypes.c_void_p, ctypes.c_void_p,                    # A, B
    ctypes.c_double, ctypes.c_double,                    # beta re/im
    ctypes.c_void_p,                                     # C (in/out)
)


def gemm_ex_cfunc():
    """A ctypes function pointer for gemm_ex_raw, callable from C."""
    return GEMM_EX_CFUNC(gemm_ex_raw)
