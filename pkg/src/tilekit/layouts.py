"""Mappings from logical tile coordinates to physical storage.

A layout owns three things: the physical size a logical extent occupies, and
tile-granular load/store.  Values always travel as a flat array in the tile's
local column-major order, whatever the physical arrangement is; that fixes
the contract between layouts, transforms and operators.

Buffers are bare 1-D numpy arrays of the layout's storage scalar, with length
equal to ``physical_size()``.  Some layouts are not materialised at all: Zero
never touches a buffer, Diagonal stores only the diagonal and fabricates
zeros elsewhere.  ``load_count``/``store_count`` report how many buffer
elements a tile access actually touches, which is what the kernel's event
counters charge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tiling import Tile


def _volume(extents) -> int:
    v = 1
    for e in extents:
        v *= e
    return v


class Layout:
    """Base: dimension names, logical extents, element type, bounds checks."""

    names: tuple[str, ...]
    extents: tuple[int, ...]
    element_type: np.dtype

    def physical_size(self) -> int:
        raise NotImplementedError

    @property
    def storage_dtype(self) -> np.dtype:
        """Scalar dtype of the backing buffer (pair layouts store two per element)."""
        return self.element_type

    def load(self, buf: np.ndarray, tile: Tile) -> np.ndarray:
        raise NotImplementedError

    def store(self, buf: np.ndarray, tile: Tile, values: np.ndarray) -> None:
        raise NotImplementedError

    def load_count(self, tile: Tile) -> int:
        return tile.volume

    def store_count(self, tile: Tile) -> int:
        return tile.volume

    def _check_tile(self, tile: Tile) -> tuple[slice, ...]:
        if tile.names != self.names:
            raise ValueError(
                f"tile dims {tile.names} do not match layout dims {self.names}"
            )
        slices = []
        for name, start, size, extent in zip(
            self.names, tile.absolute.values, tile.size.values, self.extents
        ):
            if start < 0 or start + size > extent:
                raise ValueError(
                    f"tile out of bounds in {name}: [{start}, {start + size}) "
                    f"outside [0, {extent})"
                )
            slices.append(slice(start, start + size))
        return tuple(slices)

    def _check_values(self, tile: Tile, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values)
        if values.size != tile.volume:
            raise ValueError(
                f"value tuple length {values.size} != tile element count {tile.volume}"
            )
        return values.reshape(-1)


def alloc_buffer(layout: Layout) -> np.ndarray:
    return np.zeros(layout.physical_size(), dtype=layout.storage_dtype)


def check_buffer(layout: Layout, buf: np.ndarray, label: str = "buffer") -> None:
    need = layout.physical_size()
    if buf.ndim != 1 or buf.size != need:
        raise ValueError(f"{label}: expected flat buffer of {need} elements, got shape {buf.shape}")


@dataclass(frozen=True)
class ColMajor(Layout):
    """Dense column-major storage: the first-listed dimension has stride 1."""

    element_type: np.dtype
    names: tuple[str, ...]
    extents: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "element_type", np.dtype(self.element_type))

    def physical_size(self) -> int:
        return _volume(self.extents)

    def _view(self, buf):
        return buf.reshape(self.extents, order="F")

    def load(self, buf, tile):
        region = self._view(buf)[self._check_tile(tile)]
        return region.astype(self.element_type, copy=False).ravel(order="F")

    def store(self, buf, tile, values):
        slices = self._check_tile(tile)
        values = self._check_values(tile, values)
        self._view(buf)[slices] = values.reshape(tile.size.values, order="F").astype(
            self.storage_dtype, copy=False
        )


@dataclass(frozen=True)
class RowMajor(ColMajor):
    """Dense row-major storage: the last-listed dimension has stride 1."""

    def _view(self, buf):
        return buf.reshape(self.extents, order="C")


@dataclass(frozen=True)
class Padded(Layout):
    """Wraps a dense layout, padding its fastest-varying dimension by ``pad``.

    Only the physical size differs; loads and stores are delegated to the
    inner layout's indexing over the padded backing array, so padding bytes
    are never observed.
    """

    inner: ColMajor
    pad: int

    def __post_init__(self):
        if self.pad < 0:
            raise ValueError("padding must be >= 0")
        if not isinstance(self.inner, (ColMajor, RowMajor)):
            raise ValueError("Padded wraps a ColMajor or RowMajor layout")

    @property
    def names(self):
        return self.inner.names

    @property
    def extents(self):
        return self.inner.extents

    @property
    def element_type(self):
        return self.inner.element_type

    def _fastest_axis(self) -> int:
        return len(self.extents) - 1 if isinstance(self.inner, RowMajor) else 0

    def _padded_extents(self) -> tuple[int, ...]:
        ext = list(self.extents)
        ext[self._fastest_axis()] += self.pad
        return tuple(ext)

    def physical_size(self) -> int:
        return _volume(self._padded_extents())

    def _view(self, buf):
        order = "C" if isinstance(self.inner, RowMajor) else "F"
        full = buf.reshape(self._padded_extents(), order=order)
        trim = tuple(slice(0, e) for e in self.extents)
        return full[trim]

    def load(self, buf, tile):
        region = self._view(buf)[self._check_tile(tile)]
        return region.astype(self.element_type, copy=False).ravel(order="F")

    def store(self, buf, tile, values):
        slices = self._check_tile(tile)
        values = self._check_values(tile, values)
        self._view(buf)[slices] = values.reshape(tile.size.values, order="F").astype(
            self.storage_dtype, copy=False
        )


@dataclass(frozen=True)
class Diagonal(Layout):
    """Square matrix of which only the diagonal is materialised.

    Loads return a[i, i] on the diagonal and 0 elsewhere without touching the
    buffer; stores reject nonzero off-diagonal values rather than drop them.
    """

    element_type: np.dtype
    names: tuple[str, ...]
    extents: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "element_type", np.dtype(self.element_type))
        if len(self.extents) != 2 or self.extents[0] != self.extents[1]:
            raise ValueError(f"Diagonal layout needs square extents, got {self.extents}")

    def physical_size(self) -> int:
        return self.extents[0]

    def _diag_range(self, tile: Tile) -> tuple[int, int]:
        (r0, c0) = tile.absolute.values
        (rn, cn) = tile.size.values
        lo = max(r0, c0)
        hi = min(r0 + rn, c0 + cn)
        return lo, max(lo, hi)

    def load(self, buf, tile):
        self._check_tile(tile)
        rows, cols = tile.size.values
        out = np.zeros(rows * cols, dtype=self.element_type)
        lo, hi = self._diag_range(tile)
        if hi > lo:
            r0, c0 = tile.absolute.values
            # flat col-major position of local (i - r0, i - c0) for i in [lo, hi)
            pos = (np.arange(lo, hi) - r0) + (np.arange(lo, hi) - c0) * rows
            out[pos] = buf[lo:hi]
        return out

    def store(self, buf, tile, values):
        self._check_tile(tile)
        values = self._check_values(tile, values)
        rows, cols = tile.size.values
        lo, hi = self._diag_range(tile)
        grid = values.reshape((rows, cols), order="F")
        r0, c0 = tile.absolute.values
        mask = np.ones((rows, cols), dtype=bool)
        if hi > lo:
            mask[np.arange(lo, hi) - r0, np.arange(lo, hi) - c0] = False
        if np.any(grid[mask] != 0):
            raise ValueError("Diagonal layout cannot store nonzero off-diagonal values")
        if hi > lo:
            buf[lo:hi] = grid[np.arange(lo, hi) - r0, np.arange(lo, hi) - c0].astype(
                self.storage_dtype, copy=False
            )

    def load_count(self, tile):
        lo, hi = self._diag_range(tile)
        return hi - lo

    def store_count(self, tile):
        return self.load_count(tile)


@dataclass(frozen=True)
class Zero(Layout):
    """Non-materialised all-zero matrix: loads fabricate zeros, stores are no-ops."""

    element_type: np.dtype
    names: tuple[str, ...]
    extents: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "element_type", np.dtype(self.element_type))

    def physical_size(self) -> int:
        return 0

    def load(self, buf, tile):
        self._check_tile(tile)
        return np.zeros(tile.volume, dtype=self.element_type)

    def store(self, buf, tile, values):
        self._check_tile(tile)
        self._check_values(tile, values)

    def load_count(self, tile):
        return 0

    def store_count(self, tile):
        return 0


def _pair_planes(element_type: np.dtype):
    """Split/combine helpers for two-plane element types (complex or dual)."""
    element_type = np.dtype(element_type)
    if element_type.kind == "c":
        scalar = np.dtype("f4") if element_type.itemsize == 8 else np.dtype("f8")

        def split(values):
            return values.real, values.imag

        def combine(p0, p1):
            return (p0 + 1j * p1).astype(element_type, copy=False)

    elif element_type.names and len(element_type.names) == 2:
        f0, f1 = element_type.names
        scalar = element_type[f0]

        def split(values):
            return values[f0], values[f1]

        def combine(p0, p1):
            out = np.empty(p0.shape, dtype=element_type)
            out[f0] = p0
            out[f1] = p1
            return out

    else:
        raise ValueError(f"{element_type} is not a two-plane element type")
    return scalar, split, combine


@dataclass(frozen=True)
class InterleavedComplex(Layout):
    """Pairs stored adjacently: (re, im) or (value, epsilon) per element.

    ``order`` is the arrangement over elements: "F" (column-major, default)
    or "C" (row-major).  The backing buffer holds 2 * prod(extents) scalars.
    """

    element_type: np.dtype
    names: tuple[str, ...]
    extents: tuple[int, ...]
    order: str = "F"
    _planes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "element_type", np.dtype(self.element_type))
        object.__setattr__(self, "_planes", _pair_planes(self.element_type))

    @property
    def storage_dtype(self):
        return self._planes[0]

    def physical_size(self) -> int:
        return 2 * _volume(self.extents)

    def _view(self, buf):
        return buf.view(self.element_type).reshape(self.extents, order=self.order)

    def load(self, buf, tile):
        return self._view(buf)[self._check_tile(tile)].ravel(order="F")

    def store(self, buf, tile, values):
        slices = self._check_tile(tile)
        values = self._check_values(tile, values)
        self._view(buf)[slices] = values.reshape(tile.size.values, order="F").astype(
            self.element_type, copy=False
        )


@dataclass(frozen=True)
class SplitComplex(Layout):
    """Two separate planes in one buffer: all re/value scalars, then all im/epsilon."""

    element_type: np.dtype
    names: tuple[str, ...]
    extents: tuple[int, ...]
    order: str = "F"
    _planes: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "element_type", np.dtype(self.element_type))
        object.__setattr__(self, "_planes", _pair_planes(self.element_type))

    @property
    def storage_dtype(self):
        return self._planes[0]

    def physical_size(self) -> int:
        return 2 * _volume(self.extents)

    def _plane_views(self, buf):
        n = _volume(self.extents)
        return (
            buf[:n].reshape(self.extents, order=self.order),
            buf[n:].reshape(self.extents, order=self.order),
        )

    def load(self, buf, tile):
        slices = self._check_tile(tile)
        p0, p1 = self._plane_views(buf)
        _, _, combine = self._planes
        return combine(p0[slices].ravel(order="F"), p1[slices].ravel(order="F"))

    def store(self, buf, tile, values):
        slices = self._check_tile(tile)
        values = self._check_values(tile, values).astype(self.element_type, copy=False)
        _, split, _ = self._planes
        v0, v1 = split(values.reshape(tile.size.values, order="F"))
        p0, p1 = self._plane_views(buf)
        p0[slices] = v0
        p1[slices] = v1


# Builders produce a layout once the per-block extents are known; the kernel
# config stores these for scratch layouts, whose extents follow the block tile.

def col_major(element_type):
    def build(names, extents):
        return ColMajor(element_type, tuple(names), tuple(extents))

    return build


def row_major(element_type):
    def build(names, extents):
        return RowMajor(element_type, tuple(names), tuple(extents))

    return build


def padded(inner_builder, pad: int):
    def build(names, extents):
        return Padded(inner_builder(names, extents), pad)

    return build


def interleaved_pairs(element_type):
    def build(names, extents):
        return InterleavedComplex(element_type, tuple(names), tuple(extents))

    return build


def split_pairs(element_type):
    def build(names, extents):
        return SplitComplex(element_type, tuple(names), tuple(extents))

    return build


@dataclass(frozen=True)
class StridedPermutation(Layout):
    """Logical dims mapped onto permuted (and optionally split) storage dims.

    ``dim_map`` sends each logical dimension to an ordered (fastest-first)
    group of storage dimensions whose extents multiply to the logical extent;
    ``storage_order`` lists the storage dims in column-major order.  This is
    the fused-transposition layout: a GEMM-facing (M, K) view over a tensor
    stored in any index permutation, with no data movement.
    """

    element_type: np.dtype
    names: tuple[str, ...]
    extents: tuple[int, ...]
    dim_map: dict
    storage_order: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "element_type", np.dtype(self.element_type))
        storage_extents = {}
        for name, extent in zip(self.names, self.extents):
            group = self.dim_map.get(name)
            if not group:
                raise ValueError(f"dim_map missing logical dimension {name!r}")
            prod = 1
            for sname, sext in group:
                storage_extents[sname] = sext
                prod *= sext
            if prod != extent:
                raise ValueError(
                    f"storage extents for {name!r} multiply to {prod}, expected {extent}"
                )
        if set(storage_extents) != set(self.storage_order):
            raise ValueError("storage_order must list exactly the mapped storage dims")
        strides = {}
        stride = 1
        for sname in self.storage_order:
            strides[sname] = stride
            stride *= storage_extents[sname]
        object.__setattr__(self, "_strides", strides)

    @classmethod
    def pure(cls, element_type, names, extents, storage_order):
        """Permutation-only case: each logical dim is one storage dim."""
        dim_map = {n: ((n, e),) for n, e in zip(names, extents)}
        return cls(element_type, tuple(names), tuple(extents), dim_map, tuple(storage_order))

    def physical_size(self) -> int:
        return _volume(self.extents)

    def _flat_indices(self, tile: Tile) -> np.ndarray:
        self._check_tile(tile)
        shape = tile.size.values
        total = np.zeros(shape, dtype=np.int64)
        for axis, name in enumerate(self.names):
            idx = np.arange(tile.absolute[name], tile.absolute[name] + shape[axis])
            part = np.zeros(len(idx), dtype=np.int64)
            rem = idx
            for sname, sext in self.dim_map[name]:
                part += (rem % sext) * self._strides[sname]
                rem = rem // sext
            bshape = [1] * len(shape)
            bshape[axis] = len(idx)
            total = total + part.reshape(bshape)
        return total.ravel(order="F")

    def load(self, buf, tile):
        return buf[self._flat_indices(tile)].astype(self.element_type, copy=False)

    def store(self, buf, tile, values):
        values = self._check_values(tile, values)
        buf[self._flat_indices(tile)] = values.astype(self.storage_dtype, copy=False)
