"""Command-line harness: correctness checks, timing sweeps, CSV reports.

Subcommands:

  check   run one variant against its brute-force oracle; print the max
          relative error and the event counters; exit 0 iff within tolerance
  bench   time one variant (warm-up excluded, best-of-R for GFLOP/s,
          mean +/- std reported) and emit one CSV row
  sweep   read a key=value config file (one key per line, comma-separated
          values sweep; keys are CSV column names) and emit one row per point

The CSV schema is fixed:
  variant,m,n,k,block_m,block_n,block_k,op_m,op_n,op_k,threads,reps,
  sec_mean,sec_std,gflops,max_rel_err,global_loads,global_stores,
  operator_invocations,iters_executed,iters_skipped
Counter columns are bit-stable across runs; the timing columns are the only
nondeterministic fields.  GFLOP/s uses 2*M*N*K flops over the best rep.

The 'naive' variant is the textbook triple loop (m, n outer, k innermost) on
column-major storage, the baseline the tiled kernels are compared against.
TILEKIT_THREADS provides the --threads default.
"""

from __future__ import annotations

import argparse
import contextlib
import itertools
import os
import statistics
import sys
import time

import numpy as np

from . import api, kernel, reference
from .components import ConfigError
from .kernel import EventCounters
from .operators import DUAL32, DUAL64, dual_array

CSV_COLUMNS = [
    "variant", "m", "n", "k", "block_m", "block_n", "block_k",
    "op_m", "op_n", "op_k", "threads", "reps", "sec_mean", "sec_std",
    "gflops", "max_rel_err", "global_loads", "global_stores",
    "operator_invocations", "iters_executed", "iters_skipped",
]

_DTYPES = {
    "f32": np.dtype(np.float32),
    "f64": np.dtype(np.float64),
    "c64": np.dtype(np.complex64),
    "c128": np.dtype(np.complex128),
    "dual32": DUAL32,
    "dual64": DUAL64,
}

_TOLERANCES = {
    "f32": 1e-5, "f64": 1e-12, "c64": 1e-5, "c128": 1e-12,
    "dual32": 0.0, "dual64": 0.0,
}


class RunCase:
    """One prepared run: buffers, a runner, and an oracle comparison."""

    def __init__(self, variant, gemm_shape, run, oracle_err, flops, tol,
                 block=(0, 0, 0), op=(0, 0, 0), extra_checks=None):
        self.variant = variant
        self.gemm_shape = gemm_shape
        self.run = run                    # () -> EventCounters
        self.oracle_err = oracle_err      # () -> float, after at least one run
        self.flops = flops
        self.tol = tol
        self.block = block
        self.op = op
        self.extra_checks = extra_checks or (lambda counters: [])


def _split3(text, flag):
    parts = tuple(int(p) for p in text.split(","))
    if len(parts) != 3:
        raise ConfigError(f"{flag} expects three comma-separated integers")
    return parts


def _resolved_tiling(config):
    config = kernel.resolve_config(config)
    return config, config.params.block_tile, config.params.operator_shape


def _rel_err(got, want):
    wide = np.complex128 if np.asarray(want).dtype.kind == "c" else np.float64
    got = np.asarray(got, dtype=wide)
    want = np.asarray(want, dtype=wide)
    denom = float(np.max(np.abs(want)))
    if denom == 0:
        return float(np.max(np.abs(got)))
    return float(np.max(np.abs(got - want)) / denom)


def _prepare_dense(args, rng):
    if args.dtype not in ("f32", "f64"):
        raise ConfigError("dense variant expects --dtype f32 or f64")
    dtype = _DTYPES[args.dtype]
    m, n, k = args.m, args.n, args.k
    trans_a = args.trans[0] == "t"
    trans_b = args.trans[1] == "t"
    config = api.build_dense_config(
        m, n, k, dtype, trans_a=trans_a, trans_b=trans_b, wide_accumulate=args.wide,
        block_tile=args.block, operator_shape=args.op, shared_pad=args.pad,
        worker_threads=args.threads)
    config, block, op = _resolved_tiling(config)
    a = rng.standard_normal((m, k)).astype(dtype)
    b = rng.standard_normal((k, n)).astype(dtype)
    c = rng.standard_normal((m, n)).astype(dtype)
    d = np.zeros(m * n, dtype)
    a_buf = (a.T if trans_a else a).copy(order="F").ravel(order="F")
    b_buf = (b.T if trans_b else b).copy(order="F").ravel(order="F")

    def run():
        return api.matmul(config, a_buf, b_buf, c.ravel(order="F"), d)

    def oracle_err():
        want = reference.oracle_gemm(a, b, c, beta=1.0)
        return _rel_err(d.reshape((m, n), order="F"), want)

    return RunCase("dense", (m, n, k), run, oracle_err, 2 * m * n * k,
                   _TOLERANCES[args.dtype], block, op)


def _prepare_diagonal(args, rng):
    n = args.n
    dtype = _DTYPES[args.dtype]
    config = api.build_diagonal_config(n, dtype, block_tile=args.block,
                                       operator_shape=args.op,
                                       worker_threads=args.threads)
    config, block, op = _resolved_tiling(config)
    diag = rng.standard_normal(n).astype(dtype)
    b = rng.standard_normal((n, n)).astype(dtype)
    c = rng.standard_normal((n, n)).astype(dtype)
    d = np.zeros(n * n, dtype)

    def run():
        return api.matmul(config, diag, b.ravel(order="F"), c.ravel(order="F"), d)

    def oracle_err():
        want = reference.oracle_gemm(np.diag(diag), b, c, beta=1.0)
        return _rel_err(d.reshape((n, n), order="F"), want)

    def extra_checks(counters):
        expect = expected_diagonal_counters((n, n, n), block)
        failures = []
        for name in ("inner_iterations_executed", "inner_iterations_skipped"):
            if getattr(counters, name) != expect[name]:
                failures.append(f"{name}: got {getattr(counters, name)}, "
                                f"expected {expect[name]}")
        # A loads = total minus the enumerated B loads and the dense C loads
        a_loads = counters.global_loads - expect["b_global_loads"] - n * n
        if a_loads != expect["a_global_loads"]:
            failures.append(f"A global_loads: got {a_loads}, "
                            f"expected {expect['a_global_loads']}")
        return failures

    return RunCase("diagonal", (n, n, n), run, oracle_err, 2 * n ** 3,
                   _TOLERANCES[args.dtype], block, op, extra_checks)


def expected_diagonal_counters(gemm_shape, block):
    """Enumerate block-K iterations intersecting the diagonal of A.

    Independent of the kernel: walks the block grid, intersects index ranges.
    Returns executed/skipped iteration counts, the diagonal elements loaded
    from A, and the B elements loaded (dense tiles of executed iterations).
    """
    m, n, k = gemm_shape
    bm, bn, bk = block
    executed = skipped = a_loads = b_loads = 0
    for i0 in range(0, m, bm):
        for j0 in range(0, n, bn):
            for k0 in range(0, k, bk):
                lo, hi = max(i0, k0), min(i0 + bm, k0 + bk)
                if lo < hi:
                    executed += 1
                    a_loads += hi - lo
                    b_loads += bk * bn
                else:
                    skipped += 1
    return {
        "inner_iterations_executed": executed,
        "inner_iterations_skipped": skipped,
        "a_global_loads": a_loads,
        "b_global_loads": b_loads,
    }


def _prepare_fused(args, rng):
    dtype = _DTYPES[args.dtype]
    m, n, k = args.m, args.n, args.k
    bias = rng.standard_normal(n).astype(dtype)
    config = api.build_fused_config(
        m, n, k, dtype, bias=bias, relu_on_c=True, relu_on_d=True,
        add_a=0.5, add_b=-0.25, block_tile=args.block, operator_shape=args.op,
        worker_threads=args.threads)
    config, block, op = _resolved_tiling(config)
    a = rng.standard_normal((m, k)).astype(dtype)
    b = rng.standard_normal((k, n)).astype(dtype)
    c = rng.standard_normal((m, n)).astype(dtype)
    d = np.zeros(m * n, dtype)

    def run():
        return api.matmul(config, a.ravel(order="F"), b.ravel(order="F"),
                          c.ravel(order="F"), d)

    def oracle_err():
        base = reference.oracle_gemm(a + 0.5, b - 0.25)
        want = np.maximum(base + np.maximum(c, 0) + bias[np.newaxis, :].astype(np.float64), 0)
        return _rel_err(d.reshape((m, n), order="F"), want)

    return RunCase("fused", (m, n, k), run, oracle_err, 2 * m * n * k,
                   _TOLERANCES[args.dtype], block, op)


def _prepare_complex(args, rng):
    args.dtype = args.dtype if args.dtype.startswith("c") else "c64"
    dtype = _DTYPES[args.dtype]
    m, n, k = args.m, args.n, args.k
    config = api.build_complex_config(m, n, k, dtype, block_tile=args.block,
                                      operator_shape=args.op,
                                      worker_threads=args.threads)
    config, block, op = _resolved_tiling(config)

    def cplx(shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)).astype(dtype)

    a, b, c = cplx((m, k)), cplx((k, n)), cplx((m, n))
    d = np.zeros(m * n, dtype)
    scalar = np.float32 if dtype == np.complex64 else np.float64

    def run():
        return api.matmul(config,
                          a.ravel(order="F").view(scalar), b.ravel(order="F").view(scalar),
                          c.ravel(order="F").view(scalar), d.view(scalar))

    def oracle_err():
        want = reference.oracle_complex(a, b, c, beta=1.0)
        return _rel_err(d.reshape((m, n), order="F"), want)

    # complex flops: 4 real products per element-level multiply-accumulate
    return RunCase("complex", (m, n, k), run, oracle_err, 8 * m * n * k,
                   _TOLERANCES["c64" if dtype == np.complex64 else "c128"], block, op)


def _prepare_dual(args, rng):
    args.dtype = args.dtype if args.dtype.startswith("dual") else "dual64"
    dtype = _DTYPES[args.dtype]
    m, n, k = args.m, args.n, args.k
    config = api.build_dual_config(m, n, k, dtype, block_tile=args.block,
                                   operator_shape=args.op, worker_threads=args.threads)
    config, block, op = _resolved_tiling(config)
    scalar = dtype["value"]
    ints = lambda shape: rng.integers(-4, 5, shape).astype(scalar)
    av, ae, bv, be = ints((m, k)), ints((m, k)), ints((k, n)), ints((k, n))
    a = dual_array(np.asfortranarray(av), np.asfortranarray(ae), dtype)
    b = dual_array(np.asfortranarray(bv), np.asfortranarray(be), dtype)
    c = dual_array(np.zeros((m, n), scalar, order="F"), np.zeros((m, n), scalar, order="F"), dtype)
    d = np.zeros(m * n, dtype)

    def run():
        return api.matmul(config, a.ravel(order="F").view(scalar),
                          b.ravel(order="F").view(scalar),
                          c.ravel(order="F").view(scalar), d.view(scalar))

    def oracle_err():
        # forward-mode identity: eps(A*B) = Av*Be + Ae*Bv, exact on integers
        want_v = reference.oracle_gemm(av, bv)
        want_e = reference.oracle_gemm(av, be) + reference.oracle_gemm(ae, bv)
        got = d.reshape((m, n), order="F")
        return max(_rel_err(got["value"], want_v), _rel_err(got["epsilon"], want_e))

    return RunCase("dual", (m, n, k), run, oracle_err, 6 * m * n * k, 0.0, block, op)


def _prepare_tc(args, rng):
    dtype = _DTYPES[args.dtype]
    na, nb, nc, nd = args.na, args.nb, args.nc, args.nd
    config = api.build_tc_config(na, nb, nc, nd, dtype, block_tile=args.block,
                                 operator_shape=args.op, worker_threads=args.threads)
    config, block, op = _resolved_tiling(config)
    m, n, k = config.params.gemm_shape
    a = np.asfortranarray(rng.standard_normal((nb, nd, na)).astype(dtype))
    b = np.asfortranarray(rng.standard_normal((nd, nc)).astype(dtype))
    d = np.zeros(m * n, dtype)

    def run():
        return api.matmul(config, a.ravel(order="F"), b.ravel(order="F"),
                          np.zeros(0, dtype), d)

    def oracle_err():
        want = reference.oracle_tc(a, b)
        return _rel_err(d.reshape((na, nb, nc), order="F"), want)

    def extra_checks(counters):
        # Zero C layout: global loads must be exactly the A and B tile loads
        iters = counters.inner_iterations_executed
        bm, bn, bk = block
        expect = iters * (bm * bk + bk * bn)
        if counters.global_loads != expect:
            return [f"global_loads: got {counters.global_loads}, expected {expect} "
                    "(C must contribute zero)"]
        return []

    return RunCase("tc", (m, n, k), run, oracle_err, 2 * m * n * k,
                   _TOLERANCES[args.dtype], block, op, extra_checks)


def _prepare_naive(args, rng):
    dtype = _DTYPES[args.dtype]
    if dtype.kind != "f":
        raise ConfigError("naive baseline supports f32/f64 only")
    m, n, k = args.m, args.n, args.k
    a = np.asfortranarray(rng.standard_normal((m, k)).astype(dtype))
    b = np.asfortranarray(rng.standard_normal((k, n)).astype(dtype))
    d = np.zeros((m, n), dtype, order="F")

    def run():
        kernel._active.naive_matmul(a, b, d)
        return EventCounters()

    def oracle_err():
        return _rel_err(d, reference.oracle_gemm(a, b))

    return RunCase("naive", (m, n, k), run, oracle_err, 2 * m * n * k,
                   _TOLERANCES[args.dtype])


_PREPARE = {
    "dense": _prepare_dense,
    "diagonal": _prepare_diagonal,
    "fused": _prepare_fused,
    "complex": _prepare_complex,
    "dual": _prepare_dual,
    "tc": _prepare_tc,
    "naive": _prepare_naive,
}


def _lane_context(lane):
    if lane in (None, "auto"):
        return contextlib.nullcontext()
    return kernel.force_lane(lane)


def _counters_row(counters):
    return [counters.global_loads, counters.global_stores,
            counters.operator_invocations, counters.inner_iterations_executed,
            counters.inner_iterations_skipped]


def cmd_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    case = _PREPARE[args.variant](args, rng)
    with _lane_context(args.lane):
        counters = case.run()
    err = case.oracle_err()
    m, n, k = case.gemm_shape
    print(f"variant={case.variant} m={m} n={n} k={k} dtype={args.dtype} "
          f"lane={kernel.active_lane() if args.lane in (None, 'auto') else args.lane}")
    print(f"max_rel_err = {err:.3e} (tolerance {case.tol:.0e})")
    print(f"counters: global_loads={counters.global_loads} "
          f"global_stores={counters.global_stores} "
          f"scratch_loads={counters.scratch_loads} "
          f"scratch_stores={counters.scratch_stores} "
          f"operator_invocations={counters.operator_invocations} "
          f"iters_executed={counters.inner_iterations_executed} "
          f"iters_skipped={counters.inner_iterations_skipped}")
    failures = case.extra_checks(counters)
    for f in failures:
        print(f"counter check FAILED: {f}")
    if err > case.tol or failures:
        print("FAIL")
        return 1
    print("PASS")
    return 0


def _bench_case(args, case, out):
    with _lane_context(args.lane):
        case.run()  # warm-up, excluded
        times = []
        counters = None
        for _ in range(args.reps):
            t0 = time.perf_counter()
            counters = case.run()
            times.append(time.perf_counter() - t0)
    err = case.oracle_err()
    best = min(times)
    mean = statistics.fmean(times)
    std = statistics.stdev(times) if len(times) > 1 else 0.0
    m, n, k = case.gemm_shape
    row = [case.variant, m, n, k, *case.block, *case.op, args.threads, args.reps,
           f"{mean:.6f}", f"{std:.6f}", f"{case.flops / best / 1e9:.3f}",
           f"{err:.3e}", *_counters_row(counters)]
    out.write(",".join(str(x) for x in row) + "\n")


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write(",".join(CSV_COLUMNS) + "\n")
        lanes = [args.lane]
        if args.lane == "both":
            lanes = list(kernel.available_lanes())
        for lane in lanes:
            args.lane = lane
            case = _PREPARE[args.variant](args, rng)
            _bench_case(args, case, out)
    finally:
        if args.out:
            out.close()
    return 0


def _parse_sweep_file(path):
    axes = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"sweep line is not key=value: {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in CSV_COLUMNS:
                raise ConfigError(f"unknown sweep key {key!r}; keys are CSV column names")
            axes[key] = [v.strip() for v in value.split(",") if v.strip()]
    return axes


def cmd_sweep(args) -> int:
    axes = _parse_sweep_file(args.config)
    variants = axes.pop("variant", ["dense"])
    reps = int(axes.pop("reps", ["3"])[0])
    keys = sorted(axes)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        out.write(",".join(CSV_COLUMNS) + "\n")
        for variant in variants:
            for values in itertools.product(*(axes[k] for k in keys)):
                point = dict(zip(keys, values))
                ns = _default_namespace(args)
                ns.variant = variant
                ns.reps = reps
                for key, value in point.items():
                    _apply_sweep_key(ns, key, value)
                for flag, val in (("--block", ns.block), ("--op", ns.op)):
                    if val is not None and 0 in val:
                        raise ConfigError(
                            f"sweep must set all three {flag[2:]}_* keys together")
                rng = np.random.default_rng(ns.seed)
                case = _PREPARE[variant](ns, rng)
                _bench_case(ns, case, out)
    finally:
        if args.out:
            out.close()
    return 0


def _apply_sweep_key(ns, key, value):
    if key in ("m", "n", "k", "threads"):
        setattr(ns, key, int(value))
    elif key.startswith("block_"):
        block = list(ns.block or (0, 0, 0))
        block["mnk".index(key[-1])] = int(value)
        ns.block = tuple(block)
    elif key.startswith("op_"):
        op = list(ns.op or (8, 8, 8))
        op["mnk".index(key[-1])] = int(value)
        ns.op = tuple(op)
    else:
        raise ConfigError(f"sweep key {key!r} is not sweepable")


def _default_namespace(args):
    ns = argparse.Namespace(
        m=256, n=256, k=256, na=8, nb=4, nc=16, nd=16, dtype="f32", trans="nn",
        wide=False, pad=0, block=None, op=None, threads=args.threads,
        seed=args.seed, lane=args.lane, reps=3, variant="dense")
    return ns


def _add_common(parser):
    parser.add_argument("--variant", required=True, choices=sorted(_PREPARE))
    parser.add_argument("--m", type=int, default=256)
    parser.add_argument("--n", type=int, default=256)
    parser.add_argument("--k", type=int, default=256)
    parser.add_argument("--na", type=int, default=8)
    parser.add_argument("--nb", type=int, default=4)
    parser.add_argument("--nc", type=int, default=16)
    parser.add_argument("--nd", type=int, default=16)
    parser.add_argument("--dtype", default="f32", choices=sorted(_DTYPES))
    parser.add_argument("--trans", default="nn", choices=["nn", "nt", "tn", "tt"],
                        help="transposition flags for A and B (dense variant)")
    parser.add_argument("--wide", action="store_true",
                        help="f32 storage with f64 accumulation (dense variant)")
    parser.add_argument("--pad", type=int, default=0,
                        help="pad scratch columns by this many elements (dense variant)")
    parser.add_argument("--block", type=lambda s: _split3(s, "--block"), default=None,
                        metavar="BM,BN,BK", help="block tile; default = heuristic")
    parser.add_argument("--op", type=lambda s: _split3(s, "--op"), default=None,
                        metavar="OM,ON,OK", help="operator shape; default 8,8,8")
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("TILEKIT_THREADS", "1")),
                        help="worker threads (default: TILEKIT_THREADS or 1)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--lane", default="auto",
                        choices=["auto", "compiled", "python", "both"],
                        help="inner-kernel lane ('both' is bench-only)")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tilekit", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="verify a variant against its oracle")
    _add_common(p_check)
    p_check.set_defaults(fn=cmd_check)

    p_bench = sub.add_parser("bench", help="time a variant, emit CSV")
    _add_common(p_bench)
    p_bench.add_argument("--reps", type=int, default=3)
    p_bench.add_argument("--out", default=None, help="CSV file (default stdout)")
    p_bench.set_defaults(fn=cmd_bench)

    p_sweep = sub.add_parser("sweep", help="run a sweep from a key=value config file")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--threads", type=int,
                         default=int(os.environ.get("TILEKIT_THREADS", "1")))
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--lane", default="auto",
                         choices=["auto", "compiled", "python"])
    p_sweep.set_defaults(fn=cmd_sweep)

    args = parser.parse_args(argv)
    if args.command in ("check",) and args.lane == "both":
        parser.error("--lane both is only valid for bench")
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
