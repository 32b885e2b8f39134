"""Timing comparison between the compiled kernels and the pure-Python
fallback.

Runs the same workloads through both backends and prints a small
table.  Invoke as a script:

    python3 benchmarks/bench_kernels.py [--iterations 2000] [--repeats 5]
"""

import argparse
import time

import numpy as np

from saddlekit import (
    DistributedAlgorithm,
    DistributedParams,
    EqualityConstrainedProblem,
    Method,
    QuadraticCost,
    SolverConfig,
    compiled_available,
    build_consensus_operators,
    make_multi_agent_problem,
    metropolis_weights,
    random_connected_network,
    run_distributed,
    run_solver,
)


def single_problem(rng, dim):
    G = rng.standard_normal((dim, dim))
    R = 0.5 * (G @ G.T) / dim + 0.5 * np.eye(dim)
    B = rng.standard_normal((max(1, dim // 3), dim))
    x = rng.standard_normal(dim)
    return EqualityConstrainedProblem(
        cost=QuadraticCost(R, rng.standard_normal(dim)),
        constraint_matrix=B,
        constraint_rhs=B @ x,
    )


def multi_agent(rng, node_count, block_dim):
    network = random_connected_network(node_count, 0.3, rng)
    ops = build_consensus_operators(metropolis_weights(network), block_dim)
    costs = [
        QuadraticCost(np.diag(rng.uniform(0.5, 3.0, block_dim)), rng.standard_normal(block_dim))
        for _ in range(node_count)
    ]
    return make_multi_agent_problem(network, costs, ops), ops


def best_of(repeats, fn):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--iterations", type=int, default=2000)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not compiled_available():
        print("compiled backend unavailable; timings below are python only")
    backends = ["python"] + (["compiled"] if compiled_available() else [])

    rng = np.random.default_rng(0)
    rows = []

    for dim in (10, 50):
        problem = single_problem(rng, dim)
        config = SolverConfig(
            mu_w=1e-3, mu_lambda=1e-3, rho=1.0,
            max_iterations=args.iterations, stop_tolerance=0.0,
        )
        label = f"incremental solve, dim {dim}, {args.iterations} iterations"
        timings = {
            b: best_of(args.repeats, lambda b=b: run_solver(problem, config, Method.INCREMENTAL, backend=b))
            for b in backends
        }
        rows.append((label, timings))

    for node_count, block_dim in ((10, 4), (30, 8)):
        problem, ops = multi_agent(rng, node_count, block_dim)
        params = DistributedParams(mu_w=1e-3, mu_lambda=1e-3, rho=1.0)
        label = f"distributed PD, {node_count} nodes x {block_dim}, {args.iterations} iterations"
        timings = {
            b: best_of(
                args.repeats,
                lambda b=b: run_distributed(
                    problem, ops, DistributedAlgorithm.PD, params,
                    max_iterations=args.iterations, stop_tolerance=0.0, backend=b,
                ),
            )
            for b in backends
        }
        rows.append((label, timings))

    width = max(len(label) for label, _ in rows)
    header = f"{'workload':<{width}}  python (s)"
    if "compiled" in backends:
        header += "  compiled (s)  speedup"
    print(header)
    print("-" * len(header))
    for label, timings in rows:
        line = f"{label:<{width}}  {timings['python']:10.4f}"
        if "compiled" in timings:
            speedup = timings["python"] / timings["compiled"]
            line += f"  {timings['compiled']:12.4f}  {speedup:6.1f}x"
        print(line)


if __name__ == "__main__":
    main()
