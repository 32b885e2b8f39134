"""Command-line entry points.

Three subcommands: ``run`` executes a benchmark scenario end to end,
``certify`` prints step-size bounds and the certified contraction
factor for a stored problem, ``solve`` runs a single solver on a
stored problem.  Exit codes: 0 success, 1 configuration error, 2 I/O
error.
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (
    AlgorithmSpec,
    ErdosRenyi,
    ExperimentConfig,
    FromFile,
    GridSpec,
    Scenario,
    ScenarioSpec,
    default_algorithms,
    emit_results,
    run_experiment,
)
from .problems import (
    load_problem,
    regularity_from_quadratic,
    solve_kkt_reference,
    spectral_quantities,
)
from .solvers import (
    Method,
    Regime,
    SolverConfig,
    default_steps,
    run_solver,
    step_size_bounds,
    theoretical_rate,
    write_trace_csv,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the contract reserves 2 for I/O
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _parse_algorithms(text: str) -> tuple:
    specs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            name, value = item.split(":", 1)
            specs.append(AlgorithmSpec(name.strip(), rho=float(value)))
        else:
            specs.append(AlgorithmSpec(item))
    if not specs:
        raise ValueError("the algorithm list is empty")
    return tuple(specs)


def _parse_grid(text: str) -> GridSpec:
    parts = text.split(":")
    if len(parts) != 2:
        raise ValueError("grid spec must look like POINTS_PER_DECADE:DECADES, e.g. 8:3")
    return GridSpec(points_per_decade=int(parts[0]), decades=float(parts[1]))


def _cmd_run(args) -> int:
    scenario = Scenario(args.scenario)
    if args.graph is not None:
        graph_model = FromFile(args.graph)
    else:
        graph_model = ErdosRenyi(edge_probability=args.edge_probability)
    spec = ScenarioSpec(
        scenario=scenario, K=args.K, M=args.M, seed=args.seed, graph_model=graph_model
    )
    algorithms = (
        _parse_algorithms(args.algorithms) if args.algorithms else default_algorithms()
    )
    grid = _parse_grid(args.grid) if args.grid else GridSpec()
    config = ExperimentConfig(
        scenario=spec,
        algorithms=algorithms,
        grid=grid,
        max_iterations=args.max_iterations,
        target_error=args.target,
    )
    records, summary = run_experiment(config)
    manifest = emit_results(records, args.out, metadata=summary["metadata"])
    for tag, info in summary["algorithms"].items():
        if info["verdict"] == "CONVERGED":
            pairs = ", ".join(f"{k}={v:.6g}" for k, v in info["parameters"].items())
            print(f"{tag}: CONVERGED in {info['iterations_to_target']} iterations ({pairs})")
        else:
            print(f"{tag}: {info['verdict']} (best final rel error {info['final_rel_error']:.3e})")
    print(f"wrote {len(manifest)} files to {args.out}")
    return 0


def _cmd_certify(args) -> int:
    if args.mu_w <= 0.0 or args.mu_lambda <= 0.0:
        raise ValueError("step sizes must be positive")
    if args.rho < 0.0:
        raise ValueError("the penalty weight cannot be negative")
    problem = load_problem(args.problem)
    constants = regularity_from_quadratic(
        problem.cost, problem.constraint_matrix, args.rho
    )
    spec_info = spectral_quantities(problem.constraint_matrix)
    bounds = step_size_bounds(constants, spec_info, Regime.INCREMENTAL)
    print(
        f"delta = {constants.delta:.12g}, nu = {constants.nu:.12g}, "
        f"delta_rho = {constants.delta_rho:.12g}, nu_rho = {constants.nu_rho:.12g}"
    )
    print(f"sigma_max(B) = {spec_info.sigma_max:.12g}, sigma_min_nonzero(B) = {spec_info.sigma_min_nonzero:.12g}")
    print(f"mu_w bound (strict)   : {bounds.mu_w_bound:.12g}")
    print(f"mu_lambda bound       : {bounds.mu_lambda_bound:.12g}")
    try:
        rate = theoretical_rate(constants, spec_info, args.mu_w, args.mu_lambda)
    except ValueError as exc:
        print("admissible: no")
        print(f"reason: {exc}")
        return 0
    print("admissible: yes")
    print(f"gamma = {rate.gamma:.12g} (primal {rate.gamma_primal:.12g}, dual {rate.gamma_dual:.12g})")
    print(f"c_w = {rate.c_w:.12g}, c_lambda = {rate.c_lambda:.12g}, kappa = {rate.kappa:.12g}")
    return 0


_METHODS = {
    "inc": Method.INCREMENTAL,
    "noninc": Method.NONINCREMENTAL,
    "fb": Method.FORWARD_BACKWARD,
}


def _default_solve_steps(problem, method: Method, rho: float, eta: float):
    spec_info = spectral_quantities(problem.constraint_matrix)
    if method is Method.NONINCREMENTAL and eta == 0.0:
        constants = regularity_from_quadratic(problem.cost, problem.constraint_matrix, 0.0)
        return default_steps(constants, spec_info, Regime.NONINCREMENTAL_ZERO_PENALTY)
    base_rho = rho if method is Method.INCREMENTAL else 0.0
    constants = regularity_from_quadratic(
        problem.cost, problem.constraint_matrix, base_rho
    )
    mu_w, mu_lambda = default_steps(constants, spec_info, Regime.INCREMENTAL)
    if method is Method.NONINCREMENTAL:
        # keep the equivalent penalty eta - mu_lambda nonnegative
        mu_lambda = min(mu_lambda, eta)
        if mu_lambda <= 0.0:
            raise ValueError(
                "cannot pick a default dual step for this penalty; pass --mu-lambda"
            )
        equiv = regularity_from_quadratic(
            problem.cost, problem.constraint_matrix, eta - mu_lambda
        )
        mu_w = 0.5 / equiv.delta_rho
    return mu_w, mu_lambda


def _cmd_solve(args) -> int:
    problem = load_problem(args.problem)
    method = _METHODS[args.method]
    if args.rho < 0.0 or args.eta < 0.0:
        raise ValueError("penalty weights cannot be negative")
    mu_w, mu_lambda = args.mu_w, args.mu_lambda
    if mu_w is None or mu_lambda is None:
        dw, dl = _default_solve_steps(problem, method, args.rho, args.eta)
        mu_w = dw if mu_w is None else mu_w
        mu_lambda = dl if mu_lambda is None else mu_lambda
    if mu_w <= 0.0 or mu_lambda <= 0.0:
        raise ValueError("step sizes must be positive")
    config = SolverConfig(
        mu_w=mu_w,
        mu_lambda=mu_lambda,
        rho=args.rho,
        eta=args.eta,
        max_iterations=args.iterations,
        stop_tolerance=args.tolerance,
    )
    try:
        reference = solve_kkt_reference(problem)
    except ValueError:
        reference = None
    trace = run_solver(problem, config, method, reference=reference)
    print(f"method: {args.method}  mu_w = {mu_w:.12g}  mu_lambda = {mu_lambda:.12g}")
    print(f"status: {trace.status.value} after {trace.iterations_run} iterations")
    if reference is not None:
        print(f"final relative error: {trace.rel_error[-1]:.6e}")
    else:
        print("no reference optimum available; stopping used iterate displacement")
    if args.trace:
        write_trace_csv(trace, args.trace)
        print(f"wrote trace to {args.trace}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="saddlekit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run_p = sub.add_parser("run", help="run a benchmark scenario")
    run_p.add_argument("--scenario", required=True, choices=[s.value for s in Scenario])
    run_p.add_argument("--K", type=int, default=20, help="number of agents")
    run_p.add_argument("--M", type=int, default=20, help="local dimension")
    run_p.add_argument("--seed", type=int, required=True)
    run_p.add_argument("--out", required=True, help="output directory")
    run_p.add_argument("--algorithms", default=None, help="comma list, e.g. PD_DIST,AL_PD_DIST:100,EXTRA")
    run_p.add_argument("--grid", default=None, help="POINTS_PER_DECADE:DECADES, default 8:3")
    run_p.add_argument("--graph", default=None, help="edge-list file instead of a random graph")
    run_p.add_argument("--edge-probability", type=float, default=0.3)
    run_p.add_argument("--max-iterations", type=int, default=100_000)
    run_p.add_argument("--target", type=float, default=1e-8)
    run_p.set_defaults(func=_cmd_run)

    cert_p = sub.add_parser("certify", help="print step bounds and the certified rate")
    cert_p.add_argument("--problem", required=True)
    cert_p.add_argument("--mu-w", type=float, required=True, dest="mu_w")
    cert_p.add_argument("--mu-lambda", type=float, required=True, dest="mu_lambda")
    cert_p.add_argument("--rho", type=float, default=0.0)
    cert_p.set_defaults(func=_cmd_certify)

    solve_p = sub.add_parser("solve", help="solve a stored problem")
    solve_p.add_argument("--problem", required=True)
    solve_p.add_argument("--method", required=True, choices=sorted(_METHODS))
    solve_p.add_argument("--mu-w", type=float, default=None, dest="mu_w")
    solve_p.add_argument("--mu-lambda", type=float, default=None, dest="mu_lambda")
    solve_p.add_argument("--rho", type=float, default=0.0)
    solve_p.add_argument("--eta", type=float, default=0.0)
    solve_p.add_argument("--iterations", type=int, default=10_000)
    solve_p.add_argument("--tolerance", type=float, default=1e-10)
    solve_p.add_argument("--trace", default=None, help="write the trace CSV here")
    solve_p.set_defaults(func=_cmd_solve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, KeyError) as exc:
        sys.stderr.write(f"saddlekit: configuration error: {exc}\n")
        return 1
    except OSError as exc:
        sys.stderr.write(f"saddlekit: i/o error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
