"""tilekit: tiled CPU GEMM kernels built from composable components.

A tile algebra (project / translate / linearise / parallelise) expresses the
blocked schedule; layouts, transforms, operators, epilogues and predicates
plug into a fixed five-stage kernel.  See README.md for usage.
"""

from .api import (
    build_complex_config,
    build_dense_config,
    build_diagonal_config,
    build_dual_config,
    build_fused_config,
    build_tc_config,
    contract,
    gemm_ex,
    gemm_ex_cfunc,
    gemm_ex_raw,
    matmul,
)
from .components import Params
from .kernel import (
    EventCounters,
    KernelConfig,
    active_lane,
    allocation_audit,
    available_lanes,
    force_lane,
    gemm_execute,
    snapshot_counters,
)
from .operators import DUAL32, DUAL64, DualNumber, OperatorShape, dual_array
from .tiling import Coord, Tile, linearise, parallelise, project, translate

__version__ = "0.1.0"

__all__ = [
    "Coord",
    "DUAL32",
    "DUAL64",
    "DualNumber",
    "EventCounters",
    "KernelConfig",
    "OperatorShape",
    "Params",
    "Tile",
    "active_lane",
    "allocation_audit",
    "available_lanes",
    "build_complex_config",
    "build_dense_config",
    "build_diagonal_config",
    "build_dual_config",
    "build_fused_config",
    "build_tc_config",
    "contract",
    "dual_array",
    "force_lane",
    "gemm_execute",
    "gemm_ex",
    "gemm_ex_cfunc",
    "gemm_ex_raw",
    "linearise",
    "matmul",
    "parallelise",
    "project",
    "snapshot_counters",
    "translate",
]
