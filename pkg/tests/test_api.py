import ctypes
import dataclasses

import numpy as np
import pytest

import tilekit.api as api
from tilekit.components import ConfigError, relu
from tilekit.layouts import Diagonal
from tilekit.operators import DUAL32, DUAL64, dual_array
from tilekit.reference import oracle_complex, oracle_dual, oracle_gemm, oracle_tc


def test_matmul_default_config_is_plain_gemm():
    m = n = k = 64
    cfg = api.build_dense_config(m, n, k, np.float64, block_tile=(32, 32, 8))
    rng = np.random.default_rng(0)
    a = rng.standard_normal((m, k))
    b = rng.standard_normal((k, n))
    c = rng.standard_normal((m, n))
    d = np.zeros(m * n)
    api.matmul(cfg, a.ravel(order="F"), b.ravel(order="F"), c.ravel(order="F"), d)
    want = oracle_gemm(a, b, c, beta=1.0)
    assert np.max(np.abs(d.reshape((m, n), order="F") - want)) <= 1e-12 * np.max(np.abs(want))


def test_matmul_relu_on_d():
    # D[i,j] = max(sum_k A[i,k] B[k,j] + C[i,j], 0)
    m = n = k = 32
    cfg = api.build_dense_config(m, n, k, np.float32, block_tile=(16, 16, 8))
    cfg = dataclasses.replace(cfg, transform_r2s_d=relu)
    rng = np.random.default_rng(1)
    a = rng.standard_normal((m, k)).astype(np.float32)
    b = rng.standard_normal((k, n)).astype(np.float32)
    c = rng.standard_normal((m, n)).astype(np.float32)
    d = np.zeros(m * n, np.float32)
    api.matmul(cfg, a.ravel(order="F"), b.ravel(order="F"), c.ravel(order="F"), d)
    want = np.maximum(oracle_gemm(a, b, c, beta=1.0), 0)
    err = np.max(np.abs(d.reshape((m, n), order="F") - want)) / np.max(np.abs(want))
    assert err <= 1e-5


@pytest.mark.parametrize("trans_a,trans_b", [(False, False), (False, True),
                                             (True, False), (True, True)])
def test_gemm_ex_transposition_via_layouts(trans_a, trans_b):
    m, n, k = 48, 40, 24
    rng = np.random.default_rng(2)
    a = np.asfortranarray(rng.standard_normal((k, m) if trans_a else (m, k)).astype(np.float32))
    b = np.asfortranarray(rng.standard_normal((n, k) if trans_b else (k, n)).astype(np.float32))
    c = np.asfortranarray(rng.standard_normal((m, n)).astype(np.float32))
    want = oracle_gemm(a, b, c, alpha=2.0, beta=0.5, trans_a=trans_a, trans_b=trans_b)
    api.gemm_ex(trans_a, trans_b, 2.0, a, b, 0.5, c, operator_shape=(8, 8, 8))
    err = np.max(np.abs(c - want)) / np.max(np.abs(want))
    assert err <= 1e-5


def test_gemm_ex_row_major_inputs():
    # C-contiguous matrices ride a RowMajor layout; no copies, same math
    m, n, k = 32, 32, 16
    rng = np.random.default_rng(3)
    a = np.ascontiguousarray(rng.standard_normal((m, k)).astype(np.float32))
    b = np.ascontiguousarray(rng.standard_normal((k, n)).astype(np.float32))
    c = np.asfortranarray(rng.standard_normal((m, n)).astype(np.float32))
    want = oracle_gemm(a, b, c, beta=1.0)
    api.gemm_ex(False, False, 1.0, a, b, 1.0, c, operator_shape=(8, 8, 8))
    assert np.max(np.abs(c - want)) / np.max(np.abs(want)) <= 1e-5


def test_gemm_ex_alpha_zero_ignores_a_and_b():
    m = n = k = 16
    rng = np.random.default_rng(4)
    a = np.full((m, k), np.nan, np.float32)
    b = np.full((k, n), np.inf, np.float32)
    c = np.asfortranarray(rng.standard_normal((m, n)).astype(np.float32))
    c0 = c.copy()
    counters = api.gemm_ex(False, False, 0.0, a, b, 3.0, c, operator_shape=(8, 8, 8))
    assert np.array_equal(c, np.float32(3.0) * c0)
    # Zero layouts for A and B: the only global loads are C's
    assert counters.global_loads == m * n


def test_gemm_ex_transposition_does_not_copy():
    # identical A global load counts across the N and T flags
    m = n = k = 32
    rng = np.random.default_rng(5)
    a_n = np.asfortranarray(rng.standard_normal((m, k)).astype(np.float32))
    a_t = np.asfortranarray(a_n.T.copy())
    b = np.asfortranarray(rng.standard_normal((k, n)).astype(np.float32))
    c1 = np.asfortranarray(np.zeros((m, n), np.float32))
    c2 = c1.copy(order="F")
    n_counters = api.gemm_ex(False, False, 1.0, a_n, b, 0.0, c1, operator_shape=(8, 8, 8))
    t_counters = api.gemm_ex(True, False, 1.0, a_t, b, 0.0, c2, operator_shape=(8, 8, 8))
    assert n_counters.global_loads == t_counters.global_loads
    assert np.allclose(c1, c2, rtol=1e-5)


def test_gemm_ex_complex_matches_oracle():
    m, n, k = 32, 24, 16
    rng = np.random.default_rng(6)
    mk = lambda shape: np.asfortranarray(
        (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)).astype(np.complex64))
    a, b, c = mk((m, k)), mk((k, n)), mk((m, n))
    want = oracle_complex(a, b, c, alpha=1 + 1j, beta=2.0)
    api.gemm_ex(False, False, 1 + 1j, a, b, 2.0, c, operator_shape=(8, 8, 8))
    assert np.max(np.abs(c - want)) / np.max(np.abs(want)) <= 1e-5


def test_gemm_ex_dual_epsilon_identity():
    m = n = k = 16
    rng = np.random.default_rng(7)
    ints = lambda: rng.integers(-4, 5, (m, k)).astype(np.float64)
    a0, a1, b0, b1 = ints(), ints(), ints(), ints()
    a = dual_array(np.asfortranarray(a0), np.asfortranarray(a1))
    b = dual_array(np.asfortranarray(b0), np.asfortranarray(b1))
    c = dual_array(np.zeros((m, n), order="F"), np.zeros((m, n), order="F"))
    api.gemm_ex(False, False, 1.0, a, b, 0.0, c, operator_shape=(8, 8, 8))
    assert np.array_equal(c["value"], oracle_gemm(a0, b0))
    assert np.array_equal(c["epsilon"], oracle_gemm(a0, b1) + oracle_gemm(a1, b0))
    want_v, want_e = oracle_dual(a0, a1, b0, b1)
    assert np.array_equal(c["value"], want_v)
    assert np.array_equal(c["epsilon"], want_e)


def test_gemm_ex_rejects_mixed_element_types():
    a = np.zeros((8, 8), np.float32)
    b = np.zeros((8, 8), np.float64)
    c = np.zeros((8, 8), np.float32)
    with pytest.raises(ConfigError, match="supported"):
        api.gemm_ex(False, False, 1.0, a, b, 0.0, c)


def test_gemm_ex_rejects_unsupported_types():
    a = np.zeros((8, 8), np.int32)
    with pytest.raises(ConfigError, match="supported"):
        api.gemm_ex(False, False, 1.0, a, a, 0.0, a)


def test_type_dispatch_totality():
    # every advertised element type resolves to a working configuration
    for dtype in api.SUPPORTED_ELEMENT_TYPES:
        m = n = k = 8
        if dtype in (DUAL32, DUAL64):
            scalar = dtype["value"]
            a = dual_array(np.ones((m, k), scalar, order="F"),
                           np.zeros((m, k), scalar, order="F"), dtype)
            b = dual_array(np.ones((k, n), scalar, order="F"),
                           np.zeros((k, n), scalar, order="F"), dtype)
            c = dual_array(np.zeros((m, n), scalar, order="F"),
                           np.zeros((m, n), scalar, order="F"), dtype)
            api.gemm_ex(False, False, 1.0, a, b, 0.0, c, operator_shape=(4, 4, 4))
            assert np.all(c["value"] == k)
        else:
            a = np.ones((m, k), dtype, order="F")
            b = np.ones((k, n), dtype, order="F")
            c = np.zeros((m, n), dtype, order="F")
            api.gemm_ex(False, False, 1.0, a, b, 0.0, c, operator_shape=(4, 4, 4))
            assert np.all(c == k)


def test_diagonal_variant_equals_materialised_oracle():
    n = 64
    cfg = api.build_diagonal_config(n, np.float32, block_tile=(16, 16, 8))
    assert isinstance(cfg.global_a_layout, Diagonal)
    rng = np.random.default_rng(8)
    diag = rng.standard_normal(n).astype(np.float32)
    b = rng.standard_normal((n, n)).astype(np.float32)
    c = rng.standard_normal((n, n)).astype(np.float32)
    d = np.zeros(n * n, np.float32)
    api.matmul(cfg, diag, b.ravel(order="F"), c.ravel(order="F"), d)
    want = oracle_gemm(np.diag(diag), b, c, beta=1.0)
    assert np.max(np.abs(d.reshape((n, n), order="F") - want)) / np.max(np.abs(want)) <= 1e-5


def test_contract_matches_tc_oracle():
    rng = np.random.default_rng(9)
    a = rng.standard_normal((4, 8, 2)).astype(np.float32)  # (Nb, Nd, Na)
    b = rng.standard_normal((8, 8)).astype(np.float32)
    d, counters = api.contract(a, b)
    want = oracle_tc(a, b)
    assert d.shape == want.shape
    assert np.max(np.abs(d - want)) / np.max(np.abs(want)) <= 1e-5
    # C rides a Zero layout; loads come from A and B tiles only
    assert counters.global_loads > 0


def test_mixed_precision_gemm_ex():
    m = n = k = 32
    rng = np.random.default_rng(10)
    a = np.asfortranarray(rng.integers(-3, 4, (m, k)).astype(np.float32))
    b = np.asfortranarray(rng.integers(-3, 4, (k, n)).astype(np.float32))
    c = np.asfortranarray(np.zeros((m, n), np.float32))
    api.gemm_ex(False, False, 1.0, a, b, 0.0, c, operator_shape=(8, 8, 8),
                wide_accumulate=True)
    assert np.array_equal(c.astype(np.float64), oracle_gemm(a, b))


# --- C-compatible export ----------------------------------------------------

def test_gemm_ex_raw_f32():
    m, n, k = 16, 16, 8
    rng = np.random.default_rng(11)
    a = np.asfortranarray(rng.standard_normal((m, k)).astype(np.float32))
    b = np.asfortranarray(rng.standard_normal((k, n)).astype(np.float32))
    c = np.asfortranarray(rng.standard_normal((m, n)).astype(np.float32))
    want = oracle_gemm(a, b, c, alpha=1.5, beta=0.25)
    status = api.gemm_ex_raw(api.TAG_F32, 0, 0, m, n, k, 1.5, 0.0,
                             a.ctypes.data, b.ctypes.data, 0.25, 0.0, c.ctypes.data)
    assert status == 0
    assert np.max(np.abs(c - want)) / np.max(np.abs(want)) <= 1e-5


def test_gemm_ex_raw_complex_and_trans():
    m, n, k = 16, 8, 16
    rng = np.random.default_rng(12)
    a = np.asfortranarray((rng.standard_normal((k, m)) + 1j * rng.standard_normal((k, m)))
                          .astype(np.complex64))
    b = np.asfortranarray((rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n)))
                          .astype(np.complex64))
    c = np.asfortranarray(np.zeros((m, n), np.complex64))
    want = oracle_complex(a, b, trans_a=True, alpha=2j)
    status = api.gemm_ex_raw(api.TAG_C64, 1, 0, m, n, k, 0.0, 2.0,
                             a.ctypes.data, b.ctypes.data, 0.0, 0.0, c.ctypes.data)
    assert status == 0
    assert np.max(np.abs(c - want)) / np.max(np.abs(want)) <= 1e-5


def test_gemm_ex_raw_bad_tag_and_bad_shape():
    a = np.zeros((8, 8), np.float32, order="F")
    assert api.gemm_ex_raw(99, 0, 0, 8, 8, 8, 1.0, 0.0,
                           a.ctypes.data, a.ctypes.data, 0.0, 0.0, a.ctypes.data) == 1
    # K not divisible by the operator K: configuration error -> status 1
    bad = np.zeros((8, 3), np.float32, order="F")
    c = np.zeros((8, 8), np.float32, order="F")
    assert api.gemm_ex_raw(api.TAG_F32, 0, 0, 8, 8, 3, 1.0, 0.0,
                           bad.ctypes.data, bad.ctypes.data, 0.0, 0.0, c.ctypes.data) == 1


def test_gemm_ex_cfunc_is_callable_from_ctypes():
    fn = api.gemm_ex_cfunc()
    m = n = k = 8
    rng = np.random.default_rng(13)
    a = np.asfortranarray(rng.standard_normal((m, k)).astype(np.float64))
    b = np.asfortranarray(rng.standard_normal((k, n)).astype(np.float64))
    c = np.asfortranarray(np.zeros((m, n), np.float64))
    status = fn(api.TAG_F64, 0, 0, m, n, k, 1.0, 0.0,
                ctypes.c_void_p(a.ctypes.data), ctypes.c_void_p(b.ctypes.data),
                0.0, 0.0, ctypes.c_void_p(c.ctypes.data))
    assert status == 0
    want = oracle_gemm(a, b)
    assert np.max(np.abs(c - want)) <= 1e-12 * np.max(np.abs(want))
