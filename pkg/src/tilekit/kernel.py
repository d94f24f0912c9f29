"""Blocked GEMM engine: a fixed five-stage schedule over pluggable components.

Per output block the schedule is:

  1. C tile global -> scratch
  2. C tile scratch -> accumulator fragments (one per operator tile)
  3. loop over K in block-K strides; per iteration the predicate may skip the
     whole iteration, otherwise A and B tiles are staged global -> scratch and
     the inner loops run fragment loads + multiply-accumulates over the panel
  4. D fragments -> scratch
  5. epilogue: scratch -> global

Output blocks are dealt out to worker threads through the tiling module; each
worker owns preallocated scratch buffers reused across its blocks and writes
only its own disjoint D regions, so runs are bitwise deterministic for any
thread count.

Stage 3's fragment/multiply loops are the hot path.  When the configuration
allows (real FMA operator, dense unit-stride scratch) they are executed by a
compiled panel kernel (see _core.pyx) with event counters derived
arithmetically; otherwise the engine walks operator tiles generically.  Both
give identical results and identical counters.
"""

from __future__ import annotations

import contextlib
import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import components
from .components import ConfigError, apply_transform, identity
from .layouts import Layout, check_buffer
from .operators import FmaOperator, Fragment
from .tiling import Coord, Tile, parallelise, project, translate

try:
    from . import _core as _compiled
except ImportError:  # extension not built; numpy lane only
    _compiled = None
from . import _core_fallback as _fallback

_active = _compiled if _compiled is not None else _fallback


def active_lane() -> str:
    """Which inner-kernel lane is selected: 'compiled' or 'python'."""
    return _active.LANE


def available_lanes() -> tuple[str, ...]:
    return ("compiled", "python") if _compiled is not None else ("python",)


@contextlib.contextmanager
def force_lane(name: str):
    """Temporarily pin the inner-kernel lane (for lane-comparison benchmarks)."""
    global _active
    lanes = {"python": _fallback, "compiled": _compiled}
    if name not in lanes or lanes[name] is None:
        raise ValueError(f"lane {name!r} unavailable; have {available_lanes()}")
    prev = _active
    _active = lanes[name]
    try:
        yield
    finally:
        _active = prev


# --- allocation audit ---------------------------------------------------------

_audit_log: Optional[list] = None


@contextlib.contextmanager
def allocation_audit():
    """Collect (label, element_count) for every buffer the engine allocates."""
    global _audit_log
    prev = _audit_log
    _audit_log = log = []
    try:
        yield log
    finally:
        _audit_log = prev


def _alloc(label: str, shape, dtype, order="C") -> np.ndarray:
    if _audit_log is not None:
        count = int(np.prod(shape))
        _audit_log.append((label, count))
    return np.zeros(shape, dtype=dtype, order=order)


# --- counters -----------------------------------------------------------------

@dataclass
class EventCounters:
    """Exact, deterministic event counts for one kernel run.

    Loads and stores count buffer elements actually touched (a Zero layout
    touches none, a Diagonal layout only the diagonal); operator invocations
    and inner iterations are call counts.
    """

    global_loads: int = 0
    global_stores: int = 0
    scratch_loads: int = 0
    scratch_stores: int = 0
    operator_invocations: int = 0
    inner_iterations_executed: int = 0
    inner_iterations_skipped: int = 0

    def merge(self, other: "EventCounters") -> None:
        for f in dataclasses.fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))


def snapshot_counters(counters: EventCounters) -> EventCounters:
    """A frozen copy of a run's counters."""
    return dataclasses.replace(counters)


# --- configuration -------------------------------------------------------------

LayoutBuilder = Callable[[tuple, tuple], Layout]


@dataclass(frozen=True)
class KernelConfig:
    """Everything gemm_execute needs: params, layouts, transforms, operator,
    epilogue, predicate.

    Global layouts are instances over the full GEMM extents; shared (scratch)
    layouts are builders called with per-block extents.  The five transform
    slots cover the global->scratch streams of A, B and C, the
    registers->scratch stream of D, and the scratch->global stream of D.
    """

    params: components.Params
    operator: object
    global_a_layout: Layout
    global_c_layout: Layout
    global_d_layout: Layout
    global_b_layout: Optional[Layout] = None
    shared_a_layout: Optional[LayoutBuilder] = None
    shared_b_layout: Optional[LayoutBuilder] = None
    shared_c_layout: Optional[LayoutBuilder] = None
    shared_d_layout: Optional[LayoutBuilder] = None
    transform_g2s_a: Callable = identity
    transform_g2s_b: Callable = identity
    transform_g2s_c: Callable = identity
    transform_r2s_d: Callable = identity
    transform_s2g_d: Callable = identity
    epilogue: object = field(default_factory=components.CopyEpilogue)
    predicate: Optional[Callable[[Tile], bool]] = None


def _expect_layout(layout, names, extents, label):
    if layout.names != names:
        raise ConfigError(f"{label}: expected dims {names}, got {layout.names}")
    if tuple(layout.extents) != tuple(extents):
        raise ConfigError(f"{label}: expected extents {extents}, got {layout.extents}")


def _default_shared(config: KernelConfig) -> KernelConfig:
    from .layouts import col_major

    fills = {}
    for slot, global_layout in (
        ("shared_a_layout", config.global_a_layout),
        ("shared_b_layout", config.global_b_layout or config.global_a_layout),
        ("shared_c_layout", config.global_c_layout),
        ("shared_d_layout", config.global_d_layout),
    ):
        if getattr(config, slot) is None:
            fills[slot] = col_major(global_layout.element_type)
    return dataclasses.replace(config, **fills) if fills else config


def resolve_config(config: KernelConfig) -> KernelConfig:
    """Fill defaulted fields (shared layouts, B layout, tiling) and validate."""
    config = _default_shared(config)
    return components.resolve_params(config)


# --- engine --------------------------------------------------------------------

@dataclass
class _Plan:
    """Resolved geometry and per-run constants shared by all workers."""

    config: KernelConfig
    shared_a: Layout
    shared_b: Layout
    shared_c: Layout
    shared_d: Layout
    panel: Optional[Callable]
    compute_dtype: np.dtype


def _panel_view(layout, buf):
    """F-contiguous physical 2-D view of a scratch buffer, or None.

    Column padding only adds rows past the logical extent, so the panel
    kernels index the physical array directly and never read the padding.
    """
    from .layouts import ColMajor, Padded

    if isinstance(layout, Padded) and type(layout.inner) is ColMajor:
        return buf.reshape(layout._padded_extents(), order="F")
    if type(layout) is ColMajor:
        return buf.reshape(layout.extents, order="F")
    return None


def _select_panel(config, shared_a, shared_b):
    """Fast panel kernel for the current lane, or None when only the generic
    operator walk preserves the configuration's semantics."""
    op = config.operator
    if type(op) is not FmaOperator:
        return None
    storage = np.dtype(shared_a.storage_dtype)
    if storage != np.dtype(shared_b.storage_dtype):
        return None
    compute = np.dtype(op.compute_dtype)
    f4, f8 = np.dtype(np.float32), np.dtype(np.float64)
    if storage == compute and storage in (f4, f8):
        return _active.panel_fma
    if storage == f4 and compute == f8:
        return _active.panel_fma_wide
    return None


@dataclass
class _WorkerState:
    a_scratch: np.ndarray
    b_scratch: np.ndarray
    c_scratch: np.ndarray
    d_scratch: np.ndarray
    acc: np.ndarray
    a_panel: Optional[np.ndarray] = None
    b_panel: Optional[np.ndarray] = None


def _effective_workers(requested: int, blocks: int) -> int:
    return max(t for t in range(1, min(requested, blocks) + 1) if blocks % t == 0)


def gemm_execute(config: KernelConfig, a, b, c, d) -> EventCounters:
    """Run the staged GEMM; returns the merged event counters.

    Buffers are flat arrays sized by their layouts' physical_size().  All
    validation happens before anything is written.
    """
    config = resolve_config(config)
    p = config.params
    m, n, k = p.gemm_shape
    bm, bn, bk = p.block_tile
    op = config.operator
    if (op.shape.m, op.shape.n, op.shape.k) != p.operator_shape:
        raise ConfigError(
            f"operator shape {op.shape} disagrees with params {p.operator_shape}"
        )

    _expect_layout(config.global_a_layout, ("M", "K"), (m, k), "global A layout")
    _expect_layout(config.global_b_layout, ("K", "N"), (k, n), "global B layout")
    _expect_layout(config.global_c_layout, ("M", "N"), (m, n), "global C layout")
    _expect_layout(config.global_d_layout, ("M", "N"), (m, n), "global D layout")
    for layout, buf, label in (
        (config.global_a_layout, a, "A"),
        (config.global_b_layout, b, "B"),
        (config.global_c_layout, c, "C"),
        (config.global_d_layout, d, "D"),
    ):
        check_buffer(layout, buf, label)
        if buf.dtype != layout.storage_dtype:
            raise ConfigError(
                f"{label} buffer dtype {buf.dtype} != layout storage "
                f"{layout.storage_dtype}"
            )

    shared_a = config.shared_a_layout(("M", "K"), (bm, bk))
    shared_b = config.shared_b_layout(("K", "N"), (bk, bn))
    shared_c = config.shared_c_layout(("M", "N"), (bm, bn))
    shared_d = config.shared_d_layout(("M", "N"), (bm, bn))

    blocks = (m // bm) * (n // bn)
    workers = _effective_workers(p.worker_threads, blocks)
    panel = _select_panel(config, shared_a, shared_b)
    states = []
    for w in range(workers):
        state = _WorkerState(
            a_scratch=_alloc(f"scratch_a[{w}]", shared_a.physical_size(), shared_a.storage_dtype),
            b_scratch=_alloc(f"scratch_b[{w}]", shared_b.physical_size(), shared_b.storage_dtype),
            c_scratch=_alloc(f"scratch_c[{w}]", shared_c.physical_size(), shared_c.storage_dtype),
            d_scratch=_alloc(f"scratch_d[{w}]", shared_d.physical_size(), shared_d.storage_dtype),
            acc=_alloc(f"acc[{w}]", (bm, bn), op.compute_dtype, order="F"),
        )
        if panel is not None:
            state.a_panel = _panel_view(shared_a, state.a_scratch)
            state.b_panel = _panel_view(shared_b, state.b_scratch)
            if state.a_panel is None or state.b_panel is None:
                panel = None
        states.append(state)

    plan = _Plan(
        config=config,
        shared_a=shared_a,
        shared_b=shared_b,
        shared_c=shared_c,
        shared_d=shared_d,
        panel=panel,
        compute_dtype=np.dtype(op.compute_dtype),
    )

    if workers == 1:
        return _run_worker(plan, states[0], a, b, c, d, 0, 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_worker, plan, states[w], a, b, c, d, w, workers)
            for w in range(workers)
        ]
        total = EventCounters()
        for fut in futures:
            total.merge(fut.result())
    return total


def _run_worker(plan, state, a, b, c, d, index, count) -> EventCounters:
    p = plan.config.params
    m, n, _ = p.gemm_shape
    bm, bn, _ = p.block_tile
    counters = EventCounters()
    plane = Tile.of(M=m, N=n)
    for block in parallelise(plane, Coord.of(M=bm, N=bn), index, count):
        _run_block(plan, state, block, a, b, c, d, counters)
    return counters


def _operator_tiles(plan, local_plane):
    """Walk warp tiles per intra-block entity, then operator tiles, in the
    deterministic column-major order the schedule fixes."""
    p = plan.config.params
    wm, wn = p.compute_warp
    om, on = p.operator_shape[:2]
    for entity in range(p.workers_per_block):
        for warp_tile in parallelise(local_plane, Coord.of(M=wm, N=wn), entity,
                                     p.workers_per_block):
            for op_tile in parallelise(warp_tile, Coord.of(M=om, N=on), 0, 1):
                yield op_tile


def _run_block(plan, state, block, a, b, c, d, counters):
    config = plan.config
    p = config.params
    _, _, k = p.gemm_shape
    bm, bn, bk = p.block_tile
    om, on, ok = p.operator_shape
    op = config.operator
    shape = op.shape
    acc = state.acc
    local_mn = Tile.of(M=bm, N=bn)
    local_a = Tile.of(M=bm, K=bk)
    local_b = Tile.of(K=bk, N=bn)

    # stage 1: C tile global -> scratch
    counters.global_loads += config.global_c_layout.load_count(block)
    values = config.global_c_layout.load(c, block)
    values = apply_transform(config.transform_g2s_c, values)
    counters.scratch_stores += plan.shared_c.store_count(local_mn)
    plan.shared_c.store(state.c_scratch, local_mn, values)

    # stage 2: C scratch -> accumulator fragments.  On the fast path the
    # per-fragment loads collapse into one vectorised block load; values and
    # counters are identical either way (the loads are element-wise and the
    # fragments tile the block exactly).
    if plan.panel is not None:
        counters.scratch_loads += plan.shared_c.load_count(local_mn)
        values = plan.shared_c.load(state.c_scratch, local_mn)
        acc[:, :] = values.reshape((bm, bn), order="F").astype(plan.compute_dtype,
                                                               copy=False)
    else:
        for op_tile in _operator_tiles(plan, local_mn):
            counters.scratch_loads += plan.shared_c.load_count(op_tile)
            frag = op.load_c(plan.shared_c, state.c_scratch, op_tile)
            m0, n0 = op_tile.absolute.values
            acc[m0:m0 + om, n0:n0 + on] = frag.data

    # stage 3: march over K in block-K strides
    block3 = Tile(
        base=Coord.of(M=block.absolute["M"], N=block.absolute["N"], K=0),
        offset=Coord.of(M=0, N=0, K=0),
        size=Coord.of(M=bm, N=bn, K=bk),
    )
    for kb in range(k // bk):
        tile3 = translate(block3, Coord.of(M=0, N=0, K=kb * bk))
        if config.predicate is not None and not config.predicate(tile3):
            counters.inner_iterations_skipped += 1
            continue
        counters.inner_iterations_executed += 1

        tile_a = project(tile3, ("M", "K"))
        counters.global_loads += config.global_a_layout.load_count(tile_a)
        values = config.global_a_layout.load(a, tile_a)
        values = apply_transform(config.transform_g2s_a, values)
        counters.scratch_stores += plan.shared_a.store_count(local_a)
        plan.shared_a.store(state.a_scratch, local_a, values)

        tile_b = project(tile3, ("K", "N"))
        counters.global_loads += config.global_b_layout.load_count(tile_b)
        values = config.global_b_layout.load(b, tile_b)
        values = apply_transform(config.transform_g2s_b, values)
        counters.scratch_stores += plan.shared_b.store_count(local_b)
        plan.shared_b.store(state.b_scratch, local_b, values)

        if plan.panel is not None:
            plan.panel(state.a_panel, state.b_panel, acc, bk)
            invocations = (bm // om) * (bn // on) * (bk // ok)
            counters.operator_invocations += invocations
            counters.scratch_loads += invocations * (om * ok + ok * on)
        else:
            for entity in range(p.workers_per_block):
                for warp_tile in parallelise(local_mn, Coord.of(M=p.compute_warp[0],
                                                                N=p.compute_warp[1]),
                                             entity, p.workers_per_block):
                    for kk in range(bk // ok):
                        for op_tile in parallelise(warp_tile, Coord.of(M=om, N=on), 0, 1):
                            m0, n0 = op_tile.absolute.values
                            a_tile = Tile.of(M=om, K=ok)
                            a_tile = translate(a_tile, Coord.of(M=m0, K=kk * ok))
                            counters.scratch_loads += plan.shared_a.load_count(a_tile)
                            frag_a = op.load_a(plan.shared_a, state.a_scratch, a_tile)
                            b_tile = Tile.of(K=ok, N=on)
                            b_tile = translate(b_tile, Coord.of(K=kk * ok, N=n0))
                            counters.scratch_loads += plan.shared_b.load_count(b_tile)
                            frag_b = op.load_b(plan.shared_b, state.b_scratch, b_tile)
                            frag_c = Fragment("C", shape, acc[m0:m0 + om, n0:n0 + on])
                            frag_d = op.mma(frag_a, frag_b, frag_c)
                            counters.operator_invocations += 1
                            acc[m0:m0 + om, n0:n0 + on] = frag_d.data

    # stage 4: D fragments -> scratch (vectorised like stage 2 on the fast path;
    # the transform is element-wise, so block-at-once equals fragment-at-a-time)
    if plan.panel is not None:
        values = apply_transform(config.transform_r2s_d, acc.ravel(order="F"))
        counters.scratch_stores += plan.shared_d.store_count(local_mn)
        plan.shared_d.store(state.d_scratch, local_mn, values)
    else:
        for op_tile in _operator_tiles(plan, local_mn):
            m0, n0 = op_tile.absolute.values
            values = acc[m0:m0 + om, n0:n0 + on].ravel(order="F")
            values = apply_transform(config.transform_r2s_d, values)
            frag = Fragment("D", shape, values.reshape((om, on), order="F"))
            counters.scratch_stores += plan.shared_d.store_count(op_tile)
            op.store_d(plan.shared_d, state.d_scratch, op_tile, frag)

    # stage 5: epilogue scratch -> global
    config.epilogue.run(plan.shared_d, state.d_scratch, config.global_d_layout, d,
                        local_mn, block, config.transform_s2g_d, counters)
