"""Primal-dual saddle-point solvers with certified linear rates.

Equality-constrained strongly convex problems, incremental and
non-incremental primal-dual gradient iterations with certified
step-size bounds and contraction factors, and a consensus layer that
runs the same machinery over a network of agents alongside the
classical decentralized algorithms it subsumes.
"""

from .problems import (
    EqualityConstrainedProblem,
    QuadraticCost,
    RegularityConstants,
    RegularityReport,
    SaddleReference,
    SpectralInfo,
    check_gradient,
    load_problem,
    problem_from_json,
    problem_to_json,
    range_projector,
    range_space_dual,
    regularity_from_quadratic,
    save_problem,
    solve_kkt_reference,
    spectral_quantities,
    verify_regularity,
)
from .solvers import (
    IncrementalEquivalent,
    Method,
    RateReport,
    Regime,
    SolverConfig,
    SolverState,
    StepSizeBounds,
    TerminationStatus,
    Trace,
    TRACE_CSV_HEADER,
    default_steps,
    fold_penalty_into_quadratic,
    forward_backward_step,
    incremental_step,
    nonincremental_step,
    penalized_gradient,
    run_solver,
    step_size_bounds,
    theoretical_rate,
    to_incremental_equivalent,
    write_trace_csv,
)
from .network import (
    CombinationMatrix,
    ConsensusOperators,
    DistributedAlgorithm,
    DistributedParams,
    DistributedState,
    MultiAgentProblem,
    Network,
    NuRhoEstimate,
    build_consensus_operators,
    consensus_reference,
    distributed_pd_step,
    distributed_rate_report,
    dual_reference,
    make_multi_agent_problem,
    metropolis_weights,
    nu_rho_estimate,
    random_connected_network,
    run_distributed,
    save_network,
    stack_costs,
    variant_step,
)
from .experiments import (
    AlgorithmSpec,
    ErdosRenyi,
    ExperimentConfig,
    FromFile,
    GridSpec,
    RunRecord,
    Scenario,
    ScenarioSpec,
    default_algorithms,
    emit_results,
    generate_scenario,
    run_experiment,
    summarize,
)
from .kernels import active_backend, compiled_available

__version__ = "0.1.0"
