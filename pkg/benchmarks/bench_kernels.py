"""Time the compiled and pure-numpy integration kernels on the same workloads.

    python3 benchmarks/bench_kernels.py [--agents 6] [--steps 2000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from partsync import kernels
from partsync.graph import Graph
from partsync.liegroup import random_rotation
from partsync.network import TimeVaryingRefs, generic_refs


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--agents", type=int, default=6)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()

    rng = np.random.default_rng(0)
    G = Graph.complete(args.agents)
    net = generic_refs(G, 3, rng)
    ei, ej = net.edge_arrays
    P = net.projectors()
    tv = TimeVaryingRefs.random(args.agents, 3, rng)
    Q0 = np.array([random_rotation(3, rng) for _ in range(args.agents)])
    workloads = {
        "fixed refs, cf4": lambda b: kernels.advance_fixed(Q0, ei, ej, P, 0.01, args.steps,
                                                            kernels.CF4, b),
        "fixed refs, euler": lambda b: kernels.advance_fixed(Q0, ei, ej, P, 0.01, args.steps,
                                                              kernels.EULER, b),
        "time-varying, cf4": lambda b: kernels.advance_anchors(
            Q0, ei, ej, tv.centers, tv.amplitudes, tv.frequencies, tv.phases, False, 0.0,
            0.01, args.steps, 1.0, kernels.CF4, b),
    }
    print(f"compiled backend available: {kernels.BACKEND == 'cython'}")
    print(f"{args.agents} agents, {G.num_edges} edges, {args.steps} steps, best of {args.repeat}\n")
    print(f"{'workload':<20} {'python us/step':>15} {'cython us/step':>15} {'speedup':>8} {'max diff':>10}")
    for name, run in workloads.items():
        tp, qp = best_of(lambda: run("python"), args.repeat)
        if kernels.BACKEND != "cython":
            print(f"{name:<20} {1e6 * tp / args.steps:>15.2f} {'n/a':>15}")
            continue
        tc, qc = best_of(lambda: run(None), args.repeat)
        diff = float(np.max(np.abs(qp - qc)))
        print(f"{name:<20} {1e6 * tp / args.steps:>15.2f} {1e6 * tc / args.steps:>15.2f} "
              f"{tp / tc:>8.1f} {diff:>10.1e}")


if __name__ == "__main__":
    main()
