"""Tile algebra with named dimensions.

A tile is a rectangular region of an iteration space (or of a matrix/tensor)
described by named dimensions such as M, N, K.  Its position is split into a
``base`` and an ``offset`` whose component-wise sum is the absolute position;
the split mirrors how blocked kernels separate an entity-dependent base
address from a loop-dependent displacement.  Four operations cover everything
the GEMM engine needs: ``project`` drops dimensions, ``translate`` moves a
tile, ``linearise`` turns a coordinate into a flat column-major index, and
``parallelise`` subdivides a tile and deals the subtiles out to a set of
cooperating entities.

All values are immutable; every operation returns a new object.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator


@dataclass(frozen=True)
class Coord:
    """An integer component per named dimension (0-based, in elements)."""

    names: tuple[str, ...]
    values: tuple[int, ...]

    def __post_init__(self):
        if len(self.names) != len(self.values):
            raise ValueError("coordinate names/values length mismatch")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate dimension names in {self.names}")

    @classmethod
    def of(cls, **dims: int) -> "Coord":
        """Build a coordinate from keyword components, e.g. ``Coord.of(M=3, N=2)``."""
        return cls(tuple(dims), tuple(dims.values()))

    def __add__(self, other: "Coord") -> "Coord":
        self._require_same_names(other)
        return Coord(self.names, tuple(a + b for a, b in zip(self.values, other.values)))

    def __sub__(self, other: "Coord") -> "Coord":
        self._require_same_names(other)
        return Coord(self.names, tuple(a - b for a, b in zip(self.values, other.values)))

    def __getitem__(self, name: str) -> int:
        try:
            return self.values[self.names.index(name)]
        except ValueError:
            raise KeyError(f"unknown dimension {name!r} (have {self.names})") from None

    def select(self, names: tuple[str, ...]) -> "Coord":
        return Coord(tuple(names), tuple(self[n] for n in names))

    def zero_like(self) -> "Coord":
        return Coord(self.names, (0,) * len(self.names))

    def _require_same_names(self, other: "Coord") -> None:
        if self.names != other.names:
            raise ValueError(
                f"dimension mismatch: {self.names} vs {other.names}"
            )


@dataclass(frozen=True)
class Tile:
    """A named-dimension rectangular region: base + offset position and size.

    The absolute position is ``base + offset`` component-wise; the split is
    an addressing optimisation only and never changes which region the tile
    denotes.  Sizes are positive extents in elements.
    """

    base: Coord
    offset: Coord
    size: Coord

    def __post_init__(self):
        if not (self.base.names == self.offset.names == self.size.names):
            raise ValueError("tile base/offset/size must share dimension names")
        if any(s < 1 for s in self.size.values):
            raise ValueError(f"tile sizes must be >= 1, got {self.size.values}")

    @classmethod
    def of(cls, **size: int) -> "Tile":
        """A tile of the given size at the origin (zero base and offset)."""
        s = Coord.of(**size)
        return cls(s.zero_like(), s.zero_like(), s)

    @property
    def names(self) -> tuple[str, ...]:
        return self.size.names

    @property
    def absolute(self) -> Coord:
        return self.base + self.offset

    @property
    def volume(self) -> int:
        v = 1
        for s in self.size.values:
            v *= s
        return v


def project(tile: Tile, dims: tuple[str, ...]) -> Tile:
    """Keep only ``dims`` (in the given order), dropping the others."""
    for d in dims:
        if d not in tile.names:
            raise ValueError(f"cannot project: tile has no dimension {d!r}")
    return Tile(tile.base.select(dims), tile.offset.select(dims), tile.size.select(dims))


def translate(tile: Tile, dist: Coord) -> Tile:
    """Move the tile: the base grows by ``dist``; offset and size are untouched."""
    return Tile(tile.base + dist, tile.offset, tile.size)


def linearise(coord: Coord, parent_dims: Coord) -> int:
    """Column-major flat index of ``coord`` within a parent of extent ``parent_dims``.

    The first-listed dimension varies fastest (stride 1); a 2-D coordinate
    (m, n) in an M x N parent maps to ``n*M + m``.  Pure arithmetic: callers
    may pass offsets that lie outside the parent.
    """
    coord._require_same_names(parent_dims)
    index = 0
    stride = 1
    for c, d in zip(coord.values, parent_dims.values):
        index += c * stride
        stride *= d
    return index


@dataclass(frozen=True)
class TileIterator:
    """Subtiles of ``parent`` assigned to entity ``index`` out of ``count``.

    The subtile grid is enumerated in column-major rank order; entity i
    handles ranks i, i+count, i+2*count, ...  Yielded tiles keep the
    entity-dependent part in ``base`` and the iteration-dependent part in
    ``offset``.
    """

    parent: Tile
    subtile: Coord
    index: int
    count: int

    @property
    def grid(self) -> Coord:
        return Coord(
            self.parent.names,
            tuple(p // s for p, s in zip(self.parent.size.values, self.subtile.values)),
        )

    @property
    def iterations(self) -> int:
        q = 1
        for g in self.grid.values:
            q *= g
        return q // self.count

    def _position(self, rank: int) -> Coord:
        """Element position of the subtile with the given column-major grid rank."""
        comps = []
        for g, s in zip(self.grid.values, self.subtile.values):
            comps.append((rank % g) * s)
            rank //= g
        return Coord(self.parent.names, tuple(comps))

    def __len__(self) -> int:
        return self.iterations

    def __iter__(self) -> Iterator[Tile]:
        first = self._position(self.index)
        base = self.parent.base + first
        for k in range(self.iterations):
            disp = self._position(self.index + k * self.count) - first
            yield Tile(base, self.parent.offset + disp, self.subtile)


def parallelise(parent: Tile, subtile_size: Coord, index: int, count: int) -> TileIterator:
    """Subdivide ``parent`` into ``subtile_size`` tiles dealt out to ``count`` entities.

    Requires the subtile size to divide the parent in every dimension and the
    resulting grid cell count to be a multiple of ``count``, so each entity
    performs the same number of iterations.
    """
    parent.size._require_same_names(subtile_size)
    q = 1
    for name, p, s in zip(parent.names, parent.size.values, subtile_size.values):
        if s < 1:
            raise ValueError(f"subtile size must be >= 1 in {name}")
        if p % s != 0:
            raise ValueError(
                f"subtile does not divide parent in {name} ({p} % {s} != 0); "
                "zero-pad the problem to a divisible size"
            )
        q *= p // s
    if count < 1 or q % count != 0:
        raise ValueError(
            f"{q} subtiles cannot be dealt evenly to {count} entities; "
            "zero-pad the problem or adjust the entity count"
        )
    if not 0 <= index < count:
        raise ValueError(f"entity index {index} outside [0, {count})")
    return TileIterator(parent, subtile_size, index, count)
