"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py --K 4 --p 100 200 400 --repeats 5

Dense sweeps run on the routing tensor of an admitted fat-tree workload; the
branch-and-bound search runs the same node budget on each backend.  Compile
time is excluded by a warm-up call.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qnrsim import _kernels
from qnrsim.harness import admit
from qnrsim.qnr_solver import SolverConfig, solve_qnr
from qnrsim.topology import FatTreeParams, generate_fat_tree
from qnrsim.workload import WorkloadParams, generate_workload


def best_of(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def sweep_calls(kern, A, A0, demand, src, dst):
    return {
        "link_load": lambda: kern.link_load(A, demand),
        "into_node": lambda: kern.into_node(A, dst),
        "out_of_node": lambda: kern.out_of_node(A, src),
        "out_degree": lambda: kern.out_degree(A),
        "balance": lambda: kern.balance(A),
        "count_diff": lambda: kern.count_diff(A, A0),
    }


def bench_point(t, p, seed, repeats, max_nodes):
    prob = admit(t, generate_workload(t, WorkloadParams(p=p, seed=seed)), demand_scale=1.25).problem
    A = np.ascontiguousarray(prob.current.to_dense())
    A0 = np.roll(A, 1, axis=2)
    demand = prob.flows.demand_units
    src = np.array([f.src for f in prob.flows], dtype=np.int64)
    dst = np.array([f.dst for f in prob.flows], dtype=np.int64)
    backends = [k for k in (_kernels.numpy_impl, _kernels.numba_impl) if k is not None]
    rows = []
    timings = {k.name: {name: best_of(fn, repeats) for name, fn in sweep_calls(k, A, A0, demand, src, dst).items()}
               for k in backends}
    cfg = SolverConfig(max_nodes=max_nodes, time_budget_s=None)
    saved = _kernels.active
    try:
        for k in backends:
            _kernels.active = k
            timings[k.name]["bnb_run"] = best_of(lambda: solve_qnr(prob, cfg), repeats)
    finally:
        _kernels.active = saved
    for name in timings["numpy"]:
        base = timings["numpy"][name]
        fast = timings.get("numba", {}).get(name)
        speedup = base / fast if fast else float("nan")
        rows.append((prob.flows.p, name, base * 1e3, (fast or float("nan")) * 1e3, speedup))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--K", type=int, default=4, help="fat-tree order")
    ap.add_argument("--p", type=int, nargs="+", default=[100, 200, 400], help="offered flow counts")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--max-nodes", type=int, default=2000, help="search node budget per solve")
    args = ap.parse_args(argv)
    if _kernels.numba_impl is None:
        print("numba is not installed; only the numpy column is meaningful")
    t = generate_fat_tree(FatTreeParams(args.K))
    print(f"{'p':>5} {'kernel':<12} {'numpy_ms':>10} {'numba_ms':>10} {'speedup':>8}")
    for p in args.p:
        for row in bench_point(t, p, args.seed, args.repeats, args.max_nodes):
            print("{:>5} {:<12} {:>10.3f} {:>10.3f} {:>8.1f}".format(*row))


if __name__ == "__main__":
    main()
