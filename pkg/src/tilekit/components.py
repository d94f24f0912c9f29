"""Pluggable kernel pieces: params, transforms, epilogues, predicates.

``Params`` holds the resolved tiling sizes and worker counts; unspecified
fields are filled by ``resolve_params`` using the block-tile heuristic (the
largest square or 2NxN power-of-two tile whose A+B staging footprint fits the
scratch budget).  Transforms are plain callables over value tuples, applied
after every load and before every store on the global<->scratch streams.
Epilogues own the final scratch->global stage.  A predicate decides per
block-level K iteration whether the iteration runs or is skipped.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import layouts
from .tiling import Tile


class ConfigError(ValueError):
    """Raised for infeasible or inconsistent kernel configurations."""


DEFAULT_SCRATCH_BUDGET = 64 * 1024  # bytes per worker, shared-memory analog
DEFAULT_OPERATOR_SHAPE = (8, 8, 8)


@dataclass(frozen=True)
class Params:
    """Tiling sizes and worker counts for one GEMM launch.

    ``None`` fields are filled by ``resolve_params``.  Divisibility is
    double-sided: the operator shape divides the compute-warp tile, which
    divides the block tile, which divides the overall GEMM shape.
    """

    gemm_shape: tuple[int, int, int]
    block_tile: Optional[tuple[int, int, int]] = None
    compute_warp: Optional[tuple[int, int]] = None
    operator_shape: Optional[tuple[int, int, int]] = None
    workers_per_block: int = 1
    worker_threads: int = 1
    scratch_budget: int = DEFAULT_SCRATCH_BUDGET


# --- transforms -------------------------------------------------------------

def identity(values):
    return values


def relu(values):
    return np.maximum(values, 0)


def add_constant(c):
    def _add(values):
        return values + c

    return _add


def scale(s):
    """Multiply every element by ``s``; handles two-plane record dtypes too."""

    def _scale(values):
        if values.dtype.names:
            out = np.empty_like(values)
            for name in values.dtype.names:
                out[name] = values[name] * s
            return out
        return values * s

    return _scale


def widen(dtype):
    def _widen(values):
        return values.astype(dtype)

    return _widen


def compose(*fns):
    def _composed(values):
        for fn in fns:
            values = fn(values)
        return values

    return _composed


def apply_transform(t: Callable, values: np.ndarray) -> np.ndarray:
    """Apply an element-wise transform; the tuple length must be preserved."""
    out = t(values)
    out = np.asarray(out)
    if out.size != np.asarray(values).size:
        raise ValueError(
            f"transform changed the element count: {np.asarray(values).size} -> {out.size}"
        )
    return out


# --- epilogues ---------------------------------------------------------------

@dataclass(frozen=True)
class CopyEpilogue:
    """Copy the block result from scratch to its position in global memory."""

    def run(self, scratch_layout, scratch_buf, out_layout, out_buf, local_tile, out_tile,
            transform, counters):
        counters.scratch_loads += scratch_layout.load_count(local_tile)
        values = scratch_layout.load(scratch_buf, local_tile)
        values = apply_transform(transform, values)
        counters.global_stores += out_layout.store_count(out_tile)
        out_layout.store(out_buf, out_tile, values)


@dataclass(frozen=True)
class BiasEpilogue:
    """Add a bias vector to the block result in scratch, then copy out.

    ``axis='n'`` (default) broadcasts bias[j] across rows: out[i, j] =
    scratch[i, j] + bias[j].  ``axis='m'`` broadcasts bias[i] across columns
    instead; it is provided as an alternative orientation only.
    """

    bias: np.ndarray
    axis: str = "n"

    def __post_init__(self):
        if self.axis not in ("m", "n"):
            raise ValueError("bias axis must be 'm' or 'n'")

    def run(self, scratch_layout, scratch_buf, out_layout, out_buf, local_tile, out_tile,
            transform, counters):
        rows, cols = local_tile.size.values
        start = out_tile.absolute["N" if self.axis == "n" else "M"]
        span = cols if self.axis == "n" else rows
        if start + span > self.bias.size:
            raise ConfigError(
                f"bias vector of length {self.bias.size} too short for tile "
                f"[{start}, {start + span})"
            )
        counters.scratch_loads += scratch_layout.load_count(local_tile)
        values = scratch_layout.load(scratch_buf, local_tile)
        counters.global_loads += span
        slice_ = self.bias[start:start + span]
        grid = values.reshape((rows, cols), order="F")
        grid = grid + (slice_[np.newaxis, :] if self.axis == "n" else slice_[:, np.newaxis])
        values = apply_transform(transform, grid.ravel(order="F"))
        counters.global_stores += out_layout.store_count(out_tile)
        out_layout.store(out_buf, out_tile, values)


def run_epilogue(epilogue, scratch_layout, scratch_buf, out_layout, out_buf, local_tile,
                 out_tile, transform=identity, counters=None):
    """Run an epilogue over one block; thin dispatch kept for direct use in tests."""
    from .kernel import EventCounters

    counters = counters if counters is not None else EventCounters()
    epilogue.run(scratch_layout, scratch_buf, out_layout, out_buf, local_tile, out_tile,
                 transform, counters)
    return counters


# --- predicates --------------------------------------------------------------

def always_execute(tile: Tile) -> bool:
    return True


@dataclass(frozen=True)
class DiagonalPredicate:
    """Skip block-K iterations whose A tile lies entirely off the diagonal.

    The predicate sees the block-level (M, N, K) iteration tile; the A tile
    of that iteration intersects the diagonal iff the M and K index ranges
    overlap.
    """

    def __call__(self, tile: Tile) -> bool:
        pos = tile.absolute
        m0, k0 = pos["M"], pos["K"]
        m1 = m0 + tile.size["M"]
        k1 = k0 + tile.size["K"]
        return max(m0, k0) < min(m1, k1)


# --- parameter resolution ----------------------------------------------------

def _pow2_candidates(op_shape, block_k, gemm_shape):
    """Candidate (bm, bn, bk) block tiles: N x N and 2N x N, N a power of two."""
    m, n, k = gemm_shape
    om, on, _ = op_shape
    out = []
    bn = 1
    while bn <= n:
        if bn % on == 0 and n % bn == 0:
            for bm in (bn, 2 * bn):
                if bm <= m and bm % om == 0 and m % bm == 0:
                    out.append((bm, bn, block_k))
        bn *= 2
    return out


def _staging_footprint(block, config) -> int:
    """Bytes of A+B scratch staging for a candidate block, per shared layouts."""
    bm, bn, bk = block
    a = config.shared_a_layout(("M", "K"), (bm, bk))
    b = config.shared_b_layout(("K", "N"), (bk, bn))
    return (a.physical_size() * a.storage_dtype.itemsize
            + b.physical_size() * b.storage_dtype.itemsize)


def choose_block_tile(config) -> tuple[int, int, int]:
    """Largest candidate block tile whose staging footprint fits the budget."""
    params = config.params
    ok = params.operator_shape[2]
    block_k = ok
    m, n, k = params.gemm_shape
    if k % block_k != 0:
        raise ConfigError(
            f"K={k} is not divisible by the operator K={ok}; zero-pad the problem"
        )
    feasible = [
        cand
        for cand in _pow2_candidates(params.operator_shape, block_k, params.gemm_shape)
        if _staging_footprint(cand, config) <= params.scratch_budget
    ]
    if not feasible:
        raise ConfigError(
            f"no block tile >= operator shape {params.operator_shape} fits a scratch "
            f"budget of {params.scratch_budget} bytes"
        )
    return max(feasible, key=lambda c: (c[0] * c[1], c[0] == c[1]))


def _check_divides(small, large, what):
    for s, l, axis in zip(small, large, "MNK"):
        if l % s != 0:
            raise ConfigError(f"{what}: {axis} extent {s} does not divide {l}")


def resolve_params(config):
    """Fill unspecified config fields and re-check every divisibility invariant.

    Returns a completed copy; resolving an already-resolved config is the
    identity.  See the module docstring for the block-tile heuristic.
    """
    params = config.params

    if params.operator_shape is None:
        shape = config.operator.shape if config.operator is not None else None
        op_shape = (shape.m, shape.n, shape.k) if shape else DEFAULT_OPERATOR_SHAPE
        params = dataclasses.replace(params, operator_shape=op_shape)

    if config.global_b_layout is None:
        ga = config.global_a_layout
        if not isinstance(ga, (layouts.RowMajor, layouts.ColMajor)):
            raise ConfigError(
                "global B layout can only default from a dense ColMajor/RowMajor A layout"
            )
        _, n, k = params.gemm_shape
        config = dataclasses.replace(
            config, global_b_layout=type(ga)(ga.element_type, ("K", "N"), (k, n))
        )

    if params.block_tile is None:
        params = dataclasses.replace(params, block_tile=choose_block_tile(
            dataclasses.replace(config, params=params)))
    if params.compute_warp is None:
        params = dataclasses.replace(params, compute_warp=params.block_tile[:2])

    # divisibility: op | warp | block | gemm, and op_k | block_k | K
    op, warp, block, gemm = (params.operator_shape, params.compute_warp,
                             params.block_tile, params.gemm_shape)
    _check_divides(op[:2], warp, "operator shape must divide compute warp")
    _check_divides(warp, block[:2], "compute warp must divide block tile")
    _check_divides(block, gemm, "block tile must divide GEMM shape")
    if block[2] % op[2] != 0:
        raise ConfigError(f"block K {block[2]} not divisible by operator K {op[2]}")
    wq = (block[0] // warp[0]) * (block[1] // warp[1])
    if params.workers_per_block < 1 or wq % params.workers_per_block != 0:
        raise ConfigError(
            f"{wq} warp tiles cannot be dealt evenly to "
            f"{params.workers_per_block} workers per block"
        )
    if params.worker_threads < 1:
        raise ConfigError("worker_threads must be >= 1")
    footprint = _staging_footprint(params.block_tile, config)
    if footprint > params.scratch_budget:
        raise ConfigError(
            f"A+B staging needs {footprint} bytes but the scratch budget is "
            f"{params.scratch_budget}; raise scratch_budget or shrink the block tile"
        )
    return dataclasses.replace(config, params=params)
