"""Innermost compute contract: load fragments, multiply-accumulate, store.

An operator owns a fixed (M, N, K) shape and five functions: load_a, load_b,
load_c fetch operator-shaped tiles from a scratch buffer into register-like
fragments, mma computes D = A*B + C at that shape, and store_d writes a D
fragment back.  Three operators ship: a real fused-multiply-add operator, a
complex operator composed of four real block products, and a dual-number
operator composed of three (the eps*eps term vanishes).

Accumulation inside mma is fixed with k innermost and ascending, so results
are bit-identical across runs for a given configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layouts import Layout
from .tiling import Tile

# Array-of-structs element types for dual numbers (value, epsilon) pairs.
DUAL32 = np.dtype([("value", "<f4"), ("epsilon", "<f4")])
DUAL64 = np.dtype([("value", "<f8"), ("epsilon", "<f8")])


@dataclass(frozen=True)
class DualNumber:
    """Scalar dual number value + epsilon*e with e*e = 0."""

    value: float
    epsilon: float

    def __add__(self, other):
        return DualNumber(self.value + other.value, self.epsilon + other.epsilon)

    def __sub__(self, other):
        return DualNumber(self.value - other.value, self.epsilon - other.epsilon)

    def __mul__(self, other):
        return DualNumber(
            self.value * other.value,
            self.value * other.epsilon + self.epsilon * other.value,
        )


def dual_array(value, epsilon, dtype=DUAL64):
    """Pack value/epsilon arrays into an array-of-structs dual array."""
    value = np.asarray(value)
    epsilon = np.asarray(epsilon)
    if value.shape != epsilon.shape:
        raise ValueError("value/epsilon shapes differ")
    out = np.empty(value.shape, dtype=dtype)
    out["value"] = value
    out["epsilon"] = epsilon
    return out


@dataclass(frozen=True)
class OperatorShape:
    """Extents of one multiply-accumulate invocation."""

    m: int
    n: int
    k: int

    def __post_init__(self):
        if min(self.m, self.n, self.k) < 1:
            raise ValueError(f"operator shape must be positive, got {self}")


_ROLE_DIMS = {"A": ("m", "k"), "B": ("k", "n"), "C": ("m", "n"), "D": ("m", "n")}


@dataclass(frozen=True)
class Fragment:
    """Operator-shaped register-resident matrix piece with role A/B/C/D."""

    role: str
    shape: OperatorShape
    data: np.ndarray  # 2-D, (rows, cols) per role

    def __post_init__(self):
        rows, cols = (getattr(self.shape, d) for d in _ROLE_DIMS[self.role])
        if self.data.shape != (rows, cols):
            raise ValueError(
                f"fragment {self.role} expects {(rows, cols)}, got {self.data.shape}"
            )


def real_block_product(a: np.ndarray, b: np.ndarray, acc: np.ndarray) -> None:
    """acc += a @ b with per-element accumulation over k in ascending order."""
    for kk in range(a.shape[1]):
        acc += np.multiply.outer(a[:, kk], b[kk, :])


class FmaOperator:
    """Real multiply-accumulate at a fixed shape, fused accumulate loops.

    ``compute_dtype`` may be wider than the storage dtype of the scratch
    layouts (f32 storage with f64 accumulation stands in for the usual
    narrow-storage / wide-accumulate mixed precision).
    """

    def __init__(self, shape: OperatorShape, compute_dtype=np.float32):
        self.shape = shape
        self.compute_dtype = np.dtype(compute_dtype)

    def _load(self, role: str, layout: Layout, buf: np.ndarray, tile: Tile) -> Fragment:
        rows, cols = (getattr(self.shape, d) for d in _ROLE_DIMS[role])
        if tile.size.values != (rows, cols):
            raise ValueError(
                f"tile size {tile.size.values} does not match {role} fragment {(rows, cols)}"
            )
        values = layout.load(buf, tile)
        data = values.reshape((rows, cols), order="F").astype(self.compute_dtype, copy=False)
        return Fragment(role, self.shape, data)

    def load_a(self, layout, buf, tile):
        return self._load("A", layout, buf, tile)

    def load_b(self, layout, buf, tile):
        return self._load("B", layout, buf, tile)

    def load_c(self, layout, buf, tile):
        return self._load("C", layout, buf, tile)

    def mma(self, a: Fragment, b: Fragment, c: Fragment) -> Fragment:
        acc = c.data.astype(self.compute_dtype, copy=True)
        real_block_product(a.data, b.data, acc)
        return Fragment("D", self.shape, acc)

    def store_d(self, layout, buf, tile, d: Fragment) -> None:
        if tile.size.values != (self.shape.m, self.shape.n):
            raise ValueError("tile size does not match D fragment shape")
        layout.store(buf, tile, d.data.ravel(order="F"))


class ComplexOperator(FmaOperator):
    """Complex multiply-accumulate composed of four real block products.

    D.re = C.re + A.re*B.re - A.im*B.im, accumulated in that order;
    D.im = C.im + A.re*B.im + A.im*B.re.
    """

    def __init__(self, shape: OperatorShape, compute_dtype=np.complex64):
        super().__init__(shape, compute_dtype)
        if self.compute_dtype.kind != "c":
            raise ValueError("ComplexOperator needs a complex compute dtype")

    def mma(self, a: Fragment, b: Fragment, c: Fragment) -> Fragment:
        ar, ai = a.data.real.copy(), a.data.imag.copy()
        br, bi = b.data.real.copy(), b.data.imag.copy()
        re = c.data.real.copy()
        im = c.data.imag.copy()
        real_block_product(ar, br, re)
        neg = np.zeros_like(re)
        real_block_product(ai, bi, neg)
        re -= neg
        real_block_product(ar, bi, im)
        real_block_product(ai, br, im)
        return Fragment("D", self.shape, (re + 1j * im).astype(self.compute_dtype, copy=False))


class DualOperator(FmaOperator):
    """Dual-number multiply-accumulate: three real block products per call.

    value = C.value + A.value*B.value;
    epsilon = C.epsilon + A.value*B.epsilon + A.epsilon*B.value.
    The value*value term of the epsilon plane is absent because eps*eps = 0.
    """

    def __init__(self, shape: OperatorShape, compute_dtype=DUAL64):
        self.shape = shape
        self.compute_dtype = np.dtype(compute_dtype)
        if self.compute_dtype.names != ("value", "epsilon"):
            raise ValueError("DualOperator needs a (value, epsilon) record dtype")

    def mma(self, a: Fragment, b: Fragment, c: Fragment) -> Fragment:
        av, ae = a.data["value"].copy(), a.data["epsilon"].copy()
        bv, be = b.data["value"].copy(), b.data["epsilon"].copy()
        value = c.data["value"].copy()
        eps = c.data["epsilon"].copy()
        real_block_product(av, bv, value)
        real_block_product(av, be, eps)
        real_block_product(ae, bv, eps)
        return Fragment("D", self.shape, dual_array(value, eps, self.compute_dtype))
