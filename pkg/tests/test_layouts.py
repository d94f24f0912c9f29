import numpy as np
import pytest

from tilekit.layouts import (
    ColMajor,
    Diagonal,
    InterleavedComplex,
    Padded,
    RowMajor,
    SplitComplex,
    StridedPermutation,
    Zero,
    alloc_buffer,
)
from tilekit.operators import DUAL64, dual_array
from tilekit.tiling import Coord, Tile, translate


def _tile(names, start, size):
    t = Tile(Coord(names, tuple(start)), Coord(names, (0,) * len(names)),
             Coord(names, tuple(size)))
    return t


def test_physical_sizes():
    assert ColMajor(np.float32, ("M", "N"), (4, 4)).physical_size() == 16
    assert Padded(ColMajor(np.float32, ("M", "K"), (128, 16)), 8).physical_size() == 2176
    assert Padded(RowMajor(np.float32, ("M", "K"), (128, 16)), 8).physical_size() == 128 * 24
    assert Diagonal(np.float32, ("M", "K"), (64, 64)).physical_size() == 64
    assert Zero(np.float32, ("M", "N"), (10, 10)).physical_size() == 0
    assert InterleavedComplex(np.complex64, ("M", "N"), (3, 5)).physical_size() == 30
    assert SplitComplex(np.complex64, ("M", "N"), (3, 5)).physical_size() == 30


def test_diagonal_requires_square():
    with pytest.raises(ValueError, match="square"):
        Diagonal(np.float32, ("M", "K"), (4, 8))


def test_col_major_identity_readback():
    lay = ColMajor(np.float64, ("M", "N"), (2, 2))
    buf = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(lay.load(buf, _tile(("M", "N"), (0, 0), (2, 2))), [1, 2, 3, 4])


def test_row_major_readback():
    lay = RowMajor(np.float64, ("M", "N"), (2, 3))
    buf = np.arange(6, dtype=float)  # rows [0,1,2], [3,4,5]
    got = lay.load(buf, _tile(("M", "N"), (0, 0), (2, 3)))
    # local column-major order of a 2x3 tile: (0,0),(1,0),(0,1),(1,1),(0,2),(1,2)
    assert np.array_equal(got, [0, 3, 1, 4, 2, 5])


def test_out_of_bounds_is_an_error():
    lay = ColMajor(np.float32, ("M", "N"), (4, 4))
    buf = alloc_buffer(lay)
    with pytest.raises(ValueError, match="out of bounds"):
        lay.load(buf, _tile(("M", "N"), (2, 0), (4, 2)))
    with pytest.raises(ValueError, match="do not match"):
        lay.load(buf, _tile(("M", "K"), (0, 0), (2, 2)))


@pytest.mark.parametrize("make", [
    lambda: ColMajor(np.float64, ("M", "N"), (6, 5)),
    lambda: RowMajor(np.float64, ("M", "N"), (6, 5)),
    lambda: Padded(ColMajor(np.float64, ("M", "N"), (6, 5)), 3),
    lambda: Padded(RowMajor(np.float64, ("M", "N"), (6, 5)), 2),
    lambda: InterleavedComplex(np.complex128, ("M", "N"), (6, 5)),
    lambda: SplitComplex(np.complex128, ("M", "N"), (6, 5)),
    lambda: StridedPermutation.pure(np.float64, ("M", "N"), (6, 5), ("N", "M")),
])
def test_store_load_roundtrip(make):
    rng = np.random.default_rng(11)
    lay = make()
    buf = alloc_buffer(lay)
    for _ in range(25):
        m0, n0 = rng.integers(0, 4), rng.integers(0, 3)
        sm, sn = rng.integers(1, 7 - m0), rng.integers(1, 6 - n0)
        tile = _tile(("M", "N"), (m0, n0), (sm, sn))
        values = rng.standard_normal(tile.volume)
        if np.dtype(lay.element_type).kind == "c":
            values = values + 1j * rng.standard_normal(tile.volume)
        values = values.astype(lay.element_type)
        lay.store(buf, tile, values)
        assert np.array_equal(lay.load(buf, tile), values)


def test_padded_never_observes_padding():
    # load/store through Padded{L, p} equals L on an unpadded buffer
    rng = np.random.default_rng(12)
    inner = ColMajor(np.float64, ("M", "N"), (6, 4))
    lay = Padded(inner, 5)
    buf_padded = alloc_buffer(lay)
    buf_plain = alloc_buffer(inner)
    full = _tile(("M", "N"), (0, 0), (6, 4))
    values = rng.standard_normal(24)
    lay.store(buf_padded, full, values)
    inner.store(buf_plain, full, values)
    for _ in range(10):
        m0, n0 = rng.integers(0, 5), rng.integers(0, 3)
        tile = _tile(("M", "N"), (m0, n0), (rng.integers(1, 7 - m0), rng.integers(1, 5 - n0)))
        assert np.array_equal(lay.load(buf_padded, tile), inner.load(buf_plain, tile))


def test_padded_physical_index():
    # logical (m=0, k=1) with M=128, pad 8 lands at flat (M+p)*k + m = 136
    lay = Padded(ColMajor(np.float64, ("M", "K"), (128, 16)), 8)
    buf = alloc_buffer(lay)
    lay.store(buf, _tile(("M", "K"), (0, 1), (1, 1)), np.array([7.5]))
    assert buf[136] == 7.5
    assert np.count_nonzero(buf) == 1


def test_diagonal_off_diagonal_loads_zero_without_access():
    lay = Diagonal(np.float64, ("M", "K"), (64, 64))
    buf = np.arange(64, dtype=float)
    tile = _tile(("M", "K"), (0, 32), (16, 16))  # entirely off-diagonal
    assert lay.load_count(tile) == 0
    assert np.array_equal(lay.load(buf, tile), np.zeros(256))


def test_diagonal_on_diagonal_values():
    lay = Diagonal(np.float64, ("M", "K"), (8, 8))
    buf = np.arange(8, dtype=float)
    tile = _tile(("M", "K"), (2, 0), (4, 8))
    got = lay.load(buf, tile).reshape((4, 8), order="F")
    want = np.zeros((4, 8))
    for i in range(2, 6):
        want[i - 2, i] = i
    assert np.array_equal(got, want)
    assert lay.load_count(tile) == 4


def test_diagonal_store_rejects_off_diagonal_values():
    lay = Diagonal(np.float64, ("M", "K"), (4, 4))
    buf = alloc_buffer(lay)
    tile = _tile(("M", "K"), (0, 0), (4, 4))
    values = np.zeros(16)
    values[1] = 3.0  # local (1, 0): off-diagonal
    with pytest.raises(ValueError, match="off-diagonal"):
        lay.store(buf, tile, values)
    # diagonal-only writes succeed
    good = np.diag([1.0, 2.0, 3.0, 4.0]).ravel(order="F")
    lay.store(buf, tile, good)
    assert np.array_equal(buf, [1, 2, 3, 4])


def test_zero_layout_loads_zeros_and_ignores_stores():
    lay = Zero(np.float32, ("M", "N"), (4, 4))
    buf = alloc_buffer(lay)
    tile = _tile(("M", "N"), (1, 1), (2, 2))
    assert np.array_equal(lay.load(buf, tile), np.zeros(4, np.float32))
    lay.store(buf, tile, np.ones(4, np.float32))  # no-op
    assert lay.load_count(tile) == 0 and lay.store_count(tile) == 0


def test_split_equals_interleaved_as_complex():
    rng = np.random.default_rng(13)
    inter = InterleavedComplex(np.complex64, ("M", "N"), (5, 4))
    split = SplitComplex(np.complex64, ("M", "N"), (5, 4))
    data = (rng.standard_normal(20) + 1j * rng.standard_normal(20)).astype(np.complex64)
    buf_i = alloc_buffer(inter)
    buf_s = alloc_buffer(split)
    full = _tile(("M", "N"), (0, 0), (5, 4))
    inter.store(buf_i, full, data)
    split.store(buf_s, full, data)
    for _ in range(10):
        m0, n0 = rng.integers(0, 4), rng.integers(0, 3)
        tile = _tile(("M", "N"), (m0, n0), (rng.integers(1, 6 - m0), rng.integers(1, 5 - n0)))
        assert np.array_equal(inter.load(buf_i, tile), split.load(buf_s, tile))


def test_interleaved_pairs_are_adjacent():
    lay = InterleavedComplex(np.complex64, ("M", "N"), (2, 2))
    buf = alloc_buffer(lay)
    lay.store(buf, _tile(("M", "N"), (0, 0), (2, 2)),
              np.array([1 + 2j, 3 + 4j, 5 + 6j, 7 + 8j], np.complex64))
    assert np.array_equal(buf, [1, 2, 3, 4, 5, 6, 7, 8])


def test_split_planes_are_separate():
    lay = SplitComplex(np.complex64, ("M", "N"), (2, 2))
    buf = alloc_buffer(lay)
    lay.store(buf, _tile(("M", "N"), (0, 0), (2, 2)),
              np.array([1 + 2j, 3 + 4j, 5 + 6j, 7 + 8j], np.complex64))
    assert np.array_equal(buf, [1, 3, 5, 7, 2, 4, 6, 8])


def test_pair_layouts_carry_dual_records():
    lay = InterleavedComplex(DUAL64, ("M", "N"), (2, 2))
    buf = alloc_buffer(lay)
    vals = dual_array([1.0, 2.0, 3.0, 4.0], [10.0, 20.0, 30.0, 40.0])
    lay.store(buf, _tile(("M", "N"), (0, 0), (2, 2)), vals)
    assert np.array_equal(buf, [1, 10, 2, 20, 3, 30, 4, 40])
    back = lay.load(buf, _tile(("M", "N"), (0, 0), (2, 2)))
    assert np.array_equal(back["value"], vals["value"])
    assert np.array_equal(back["epsilon"], vals["epsilon"])


def test_strided_permutation_spec_index():
    # logical (b, a, d) over storage order (b, d, a), extents Nb=2, Nd=3, Na=2:
    # element (b=1, a=0, d=2) reads physical 1 + 2*2 + 0*6 = 5
    lay = StridedPermutation.pure(np.float64, ("b", "a", "d"), (2, 2, 3), ("b", "d", "a"))
    buf = np.arange(12, dtype=float)
    tile = _tile(("b", "a", "d"), (1, 0, 2), (1, 1, 1))
    assert lay.load(buf, tile)[0] == 5.0


def test_strided_permutation_matches_permuted_copy():
    # exhaustive over all tiles, extents <= 4 per dim
    rng = np.random.default_rng(14)
    nb, na, nd = 3, 4, 2
    lay = StridedPermutation.pure(np.float64, ("b", "a", "d"), (nb, na, nd), ("b", "d", "a"))
    storage = rng.standard_normal(nb * nd * na)
    # eager reference: physical (b, d, a) column-major -> logical (b, a, d)
    ref = storage.reshape((nb, nd, na), order="F").transpose(0, 2, 1)
    for b0 in range(nb):
        for a0 in range(na):
            for d0 in range(nd):
                for sb in range(1, nb - b0 + 1):
                    for sa in range(1, na - a0 + 1):
                        for sd in range(1, nd - d0 + 1):
                            tile = _tile(("b", "a", "d"), (b0, a0, d0), (sb, sa, sd))
                            got = lay.load(storage, tile)
                            want = ref[b0:b0 + sb, a0:a0 + sa, d0:d0 + sd].ravel(order="F")
                            assert np.array_equal(got, want)


def test_strided_permutation_split_dims():
    # GEMM-facing (M, K) view of a (Nb, Nd, Na) tensor with M = (b, a), K = d
    nb, nd, na = 2, 3, 2
    lay = StridedPermutation(
        np.float64, ("M", "K"), (nb * na, nd),
        dim_map={"M": (("b", nb), ("a", na)), "K": (("d", nd),)},
        storage_order=("b", "d", "a"),
    )
    tensor = np.arange(nb * nd * na, dtype=float).reshape((nb, nd, na), order="F")
    got = lay.load(tensor.ravel(order="F"), _tile(("M", "K"), (0, 0), (nb * na, nd)))
    got = got.reshape((nb * na, nd), order="F")
    for m in range(nb * na):
        for k in range(nd):
            assert got[m, k] == tensor[m % nb, k, m // nb]


def test_strided_permutation_validates_mapping():
    with pytest.raises(ValueError, match="multiply"):
        StridedPermutation(np.float64, ("M",), (6,), {"M": (("a", 2), ("b", 2))}, ("a", "b"))
    with pytest.raises(ValueError, match="storage_order"):
        StridedPermutation(np.float64, ("M",), (4,), {"M": (("a", 4),)}, ("a", "b"))


def test_tile_translation_reaches_layout_frame():
    # a tile expressed in global coordinates, translated into a scratch frame
    lay = ColMajor(np.float64, ("M", "N"), (4, 4))
    buf = np.arange(16, dtype=float)
    g_tile = _tile(("M", "N"), (130, 66), (2, 2))
    local = translate(g_tile, Coord.of(M=-130, N=-66))
    assert np.array_equal(lay.load(buf, local), [0, 1, 4, 5])
