"""Benchmark scenarios, step-size grid search, and result emission.

Three seeded random multi-agent quadratic families exercise the
networked solvers: a well-conditioned one (diagonal curvatures 6..8),
an ill-conditioned one (each agent strongly curved in its own
coordinate only), and a locally non-convex one (a sign-flipped
curvature chain whose aggregate stays positive definite).  Hand tuning
of step sizes is mechanized as a geometric grid search selecting the
fewest iterations to a target relative error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .network import (
    CombinationMatrix,
    ConsensusOperators,
    DistributedAlgorithm,
    DistributedParams,
    MultiAgentProblem,
    Network,
    build_consensus_operators,
    consensus_reference,
    make_multi_agent_problem,
    metropolis_weights,
    nu_rho_estimate,
    random_connected_network,
    run_distributed,
)
from .problems import QuadraticCost, RegularityConstants, SpectralInfo, spectral_quantities
from .solvers import TerminationStatus, theoretical_rate, write_trace_csv

__all__ = [
    "Scenario",
    "ErdosRenyi",
    "FromFile",
    "ScenarioSpec",
    "AlgorithmSpec",
    "GridSpec",
    "ExperimentConfig",
    "RunRecord",
    "default_algorithms",
    "generate_scenario",
    "run_experiment",
    "summarize",
    "emit_results",
]

SCENARIO_RETRY_LIMIT = 64


class Scenario(Enum):
    WELL_CONDITIONED = "well"
    ILL_CONDITIONED = "ill"
    NONCONVEX_LOCAL = "nonconvex"


@dataclass(frozen=True)
class ErdosRenyi:
    """Independent-edge random graph model."""

    edge_probability: float = 0.3


@dataclass(frozen=True)
class FromFile:
    """Graph read from an edge-list file."""

    path: str


@dataclass(frozen=True)
class ScenarioSpec:
    """Declarative description of one benchmark instance."""

    scenario: Scenario
    K: int = 20
    M: int = 20
    seed: int = 0
    graph_model: object = ErdosRenyi()

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("at least two agents are required")
        if self.M < 1:
            raise ValueError("the local dimension must be at least one")
        if not isinstance(self.graph_model, (ErdosRenyi, FromFile)):
            raise ValueError("graph model must be ErdosRenyi or FromFile")


def _draw_costs(scenario: Scenario, K: int, M: int, rng) -> list:
    diags = []
    lins = []
    for k in range(K):
        if scenario is Scenario.WELL_CONDITIONED:
            d = rng.integers(6, 9, size=M).astype(float)
        else:
            d = rng.uniform(0.0, 1.0, size=M)
            d[k % M] = rng.uniform(2.0, 8.0)
        diags.append(d)
        lins.append(rng.uniform(0.0, 2.0, size=M))
    if scenario is Scenario.NONCONVEX_LOCAL:
        # sign-flipped half-curvature chain: agent k overwrites the
        # coordinate owned by agent k-1
        for a in range(1, K):
            idx = (a - 1) % M
            diags[a][idx] = -0.5 * diags[a - 1][idx]
    return [QuadraticCost(np.diag(d), r) for d, r in zip(diags, lins)]


def generate_scenario(spec: ScenarioSpec) -> MultiAgentProblem:
    """Deterministically build the networked problem for a spec.

    The locally non-convex family can draw an indefinite aggregate at
    small sizes; such draws are rejected and redrawn with an
    incremented seed, a bounded number of times.
    """
    if isinstance(spec.graph_model, FromFile):
        network = Network.from_file(spec.graph_model.path)
        if network.node_count != spec.K:
            raise ValueError(
                f"graph file has {network.node_count} nodes, spec says {spec.K}"
            )
    else:
        rng_graph = np.random.default_rng([spec.seed, 0])
        network = random_connected_network(
            spec.K, spec.graph_model.edge_probability, rng_graph
        )
    weights = metropolis_weights(network)
    ops = build_consensus_operators(weights, spec.M)
    last_low = np.inf
    for attempt in range(SCENARIO_RETRY_LIMIT):
        rng = np.random.default_rng([spec.seed + attempt, 1])
        costs = _draw_costs(spec.scenario, spec.K, spec.M, rng)
        if spec.scenario is not Scenario.NONCONVEX_LOCAL:
            return make_multi_agent_problem(network, costs, ops)
        low = float(np.linalg.eigvalsh(sum(c.hessian() for c in costs))[0])
        if low > 0.0:
            return make_multi_agent_problem(network, costs, ops)
        last_low = low
    raise RuntimeError(
        f"aggregate curvature stayed indefinite after {SCENARIO_RETRY_LIMIT} draws "
        f"(last smallest eigenvalue {last_low:.3e}); try another seed or larger K"
    )


_KINDS = (
    "PD_DIST",
    "AL_PD_DIST",
    "EXTRA",
    "EXACT_DIFFUSION",
    "DIFFUSION",
    "DIGING",
    "DLM",
)


@dataclass(frozen=True)
class AlgorithmSpec:
    """One algorithm entry of an experiment; the augmented variant
    carries its penalty weight."""

    kind: str
    rho: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown algorithm kind '{self.kind}'")
        if self.kind == "AL_PD_DIST":
            if self.rho <= 0.0:
                raise ValueError("the augmented variant needs a positive penalty weight")
        elif self.rho != 0.0:
            raise ValueError(f"{self.kind} takes no penalty weight")

    @property
    def tag(self) -> str:
        if self.kind == "AL_PD_DIST":
            return f"AL_PD_DIST_rho{self.rho:g}"
        return self.kind


def default_algorithms(rho_sweep=(1.0, 10.0, 100.0)) -> tuple:
    out = [AlgorithmSpec("PD_DIST")]
    out += [AlgorithmSpec("AL_PD_DIST", rho=float(r)) for r in rho_sweep]
    out += [
        AlgorithmSpec(k)
        for k in ("EXTRA", "EXACT_DIFFUSION", "DIFFUSION", "DIGING", "DLM")
    ]
    return tuple(out)


@dataclass(frozen=True)
class GridSpec:
    """Geometric step grids, descending from a curvature-based anchor.

    Primal-dual entries pair every primal step with dual steps chosen
    as fractions of the stability ceiling 1/(mu_w sigma_max^2); the
    linearized multiplier method spans factor grids on its dual weight
    and damping.
    """

    points_per_decade: int = 8
    decades: float = 3.0
    dual_fractions: tuple = (0.9, 0.5, 0.25, 0.1, 0.03)
    dlm_weight_factors: tuple = (1.0, 0.3, 0.1)
    dlm_damping_factors: tuple = (0.6, 1.0, 2.0)

    def __post_init__(self):
        if self.points_per_decade < 1 or self.decades <= 0:
            raise ValueError("grid extents must be positive")
        for name in ("dual_fractions", "dlm_weight_factors", "dlm_damping_factors"):
            vals = tuple(float(v) for v in getattr(self, name))
            if not vals or min(vals) <= 0.0:
                raise ValueError(f"{name} must be nonempty and positive")
            object.__setattr__(self, name, vals)


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioSpec
    algorithms: tuple = field(default_factory=default_algorithms)
    grid: GridSpec = field(default_factory=GridSpec)
    max_iterations: int = 100_000
    target_error: float = 1e-8

    def __post_init__(self):
        algs = tuple(self.algorithms)
        if not algs:
            raise ValueError("at least one algorithm is required")
        object.__setattr__(self, "algorithms", algs)
        if self.max_iterations < 1 or self.target_error <= 0.0:
            raise ValueError("iteration budget and target must be positive")


@dataclass
class RunRecord:
    """Outcome of one (algorithm, grid point) run.

    ``iterations_to_target`` is an integer for converged runs and the
    string ``"DIVERGED"`` or ``"NOT_REACHED"`` otherwise.  ``budget``
    is the iteration cap this particular run was given: once some grid
    point of the same algorithm has converged, later points get twice
    the best-known count instead of the full experiment budget.
    """

    algorithm_tag: str
    parameters: dict
    status: TerminationStatus
    iterations_to_target: object
    final_rel_error: float
    theoretical_gamma: float | None
    budget: int
    trace_path: str | None = None
    trace: object = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        return {
            "algorithm": self.algorithm_tag,
            "parameters": self.parameters,
            "status": self.status.value,
            "iterations_to_target": self.iterations_to_target,
            "final_rel_error": self.final_rel_error,
            "theoretical_gamma": self.theoretical_gamma,
            "budget": self.budget,
            "trace_path": self.trace_path,
        }


def _descending_grid(anchor: float, grid: GridSpec) -> list:
    count = int(round(grid.points_per_decade * grid.decades))
    return [anchor * 10.0 ** (-(j / grid.points_per_decade)) for j in range(count + 1)]


def _step_key(record: RunRecord) -> tuple:
    p = record.parameters
    primary = p.get("mu_w", p.get("mu", 1.0 / p["d"] if "d" in p else np.inf))
    secondary = p.get("mu_lambda", p.get("c", 0.0))
    return (primary, secondary)


class _Budget:
    """Shrinking per-algorithm iteration budget."""

    def __init__(self, cap: int):
        self.cap = cap
        self.best = None

    def current(self) -> int:
        if self.best is None:
            return self.cap
        return min(self.cap, max(2 * self.best, self.best + 50))

    def observe(self, iterations: int):
        if self.best is None or iterations < self.best:
            self.best = iterations


def _one_run(
    tag, algorithm, d_params, parameters, problem, ops, reference, config, budget, gamma
) -> RunRecord:
    allowed = budget.current()
    trace = run_distributed(
        problem,
        ops,
        algorithm,
        d_params,
        max_iterations=allowed,
        stop_tolerance=config.target_error,
        reference=reference,
    )
    if trace.status is TerminationStatus.CONVERGED:
        iters = trace.iterations_run
        budget.observe(iters)
    elif trace.status is TerminationStatus.DIVERGED:
        iters = "DIVERGED"
    else:
        iters = "NOT_REACHED"
    return RunRecord(
        algorithm_tag=tag,
        parameters=parameters,
        status=trace.status,
        iterations_to_target=iters,
        final_rel_error=float(trace.rel_error[-1]),
        theoretical_gamma=gamma,
        budget=allowed,
        trace=trace,
    )


def _pd_family_records(
    alg, problem, ops, reference, config, delta, smax_sq, spec_info, betas
) -> list:
    rho = alg.rho if alg.kind == "AL_PD_DIST" else 0.0
    delta_rho = delta + rho * smax_sq
    records = []
    budget = _Budget(config.max_iterations)

    # certification constants for this penalty, when they exist
    constants = None
    if rho == 0.0:
        if min(betas) > 0.0:
            constants = RegularityConstants(
                delta=delta, nu=min(betas), rho=0.0, delta_rho=delta, nu_rho=min(betas)
            )
    else:
        beta_bar = _aggregate_beta(problem)
        if beta_bar > 0.0:
            est = nu_rho_estimate(beta_bar, delta, spec_info.sigma_min_nonzero**2, rho)
            constants = RegularityConstants(
                delta=delta,
                nu=max(min(betas), 0.0),
                rho=rho,
                delta_rho=delta_rho,
                nu_rho=est.nu_rho,
            )

    for f in config.grid.dual_fractions:
        for mu_w in _descending_grid(0.95 / delta_rho, config.grid):
            mu_lambda = f / (mu_w * smax_sq)
            gamma = None
            if constants is not None:
                try:
                    gamma = theoretical_rate(constants, spec_info, mu_w, mu_lambda).gamma
                except ValueError:
                    gamma = None
            params = DistributedParams(mu_w=mu_w, mu_lambda=mu_lambda, rho=rho)
            records.append(
                _one_run(
                    alg.tag,
                    DistributedAlgorithm.PD,
                    params,
                    {"mu_w": mu_w, "mu_lambda": mu_lambda, "rho": rho},
                    problem,
                    ops,
                    reference,
                    config,
                    budget,
                    gamma,
                )
            )
    return records


def _aggregate_beta(problem: MultiAgentProblem) -> float:
    H = sum(c.hessian() for c in problem.agent_costs) / len(problem.agent_costs)
    return float(np.linalg.eigvalsh(0.5 * (H + H.T))[0])


def _single_step_records(
    alg, problem, ops, reference, config, delta, smax_sq, spec_info, betas
) -> list:
    algorithm = DistributedAlgorithm[alg.kind]
    records = []
    budget = _Budget(config.max_iterations)
    beta_bar = _aggregate_beta(problem)
    for mu in _descending_grid(1.2 / delta, config.grid):
        gamma = None
        if alg.kind == "EXTRA" and beta_bar > 0.0:
            # same recursion as the augmented pair (mu, 1/(2mu), 1/(2mu))
            rho_eq = 0.5 / mu
            try:
                est = nu_rho_estimate(beta_bar, delta, spec_info.sigma_min_nonzero**2, rho_eq)
                constants = RegularityConstants(
                    delta=delta,
                    nu=max(min(betas), 0.0),
                    rho=rho_eq,
                    delta_rho=delta + rho_eq * smax_sq,
                    nu_rho=est.nu_rho,
                )
                gamma = theoretical_rate(constants, spec_info, mu, rho_eq).gamma
            except ValueError:
                gamma = None
        records.append(
            _one_run(
                alg.tag,
                algorithm,
                DistributedParams(mu=mu),
                {"mu": mu},
                problem,
                ops,
                reference,
                config,
                budget,
                gamma,
            )
        )
    return records


def _dlm_records(alg, problem, ops, reference, config, delta, lap_max) -> list:
    records = []
    budget = _Budget(config.max_iterations)
    for cf in config.grid.dlm_weight_factors:
        c = cf * delta / (2.0 * lap_max)
        for df in config.grid.dlm_damping_factors:
            d = df * (delta + 2.0 * c * lap_max)
            records.append(
                _one_run(
                    alg.tag,
                    DistributedAlgorithm.DLM,
                    DistributedParams(c=c, d=d),
                    {"c": c, "d": d},
                    problem,
                    ops,
                    reference,
                    config,
                    budget,
                    None,
                )
            )
    return records


def run_experiment(config: ExperimentConfig):
    """Grid-search every configured algorithm on the scenario problem.

    Returns ``(records, summary)``.  Runs are pure and ordered
    deterministically; results do not depend on wall clock.  Use
    emit_results to write traces and the summary to disk.
    """
    problem = generate_scenario(config.scenario)
    weights = metropolis_weights(problem.network)
    ops = build_consensus_operators(weights, config.scenario.M)
    reference = consensus_reference(problem, ops)

    K = config.scenario.K
    ia_eigs = np.linalg.eigvalsh(np.eye(K) - weights.weights)
    smax_sq = float(np.clip(ia_eigs[-1], 0.0, None))
    hessians = [c.hessian() for c in problem.agent_costs]
    delta = max(float(np.linalg.norm(H, 2)) for H in hessians)
    betas = [float(np.linalg.eigvalsh(H)[0]) for H in hessians]
    M = config.scenario.M
    lap_K = np.ascontiguousarray(ops.laplacian[::M, ::M])
    lap_max = float(np.linalg.eigvalsh(lap_K)[-1])
    spec_info = spectral_quantities(ops.B_op)

    records = []
    for alg in config.algorithms:
        if alg.kind in ("PD_DIST", "AL_PD_DIST"):
            records += _pd_family_records(
                alg, problem, ops, reference, config, delta, smax_sq, spec_info, betas
            )
        elif alg.kind == "DLM":
            records += _dlm_records(alg, problem, ops, reference, config, delta, lap_max)
        else:
            records += _single_step_records(
                alg, problem, ops, reference, config, delta, smax_sq, spec_info, betas
            )
    meta = {
        "scenario": config.scenario.scenario.value,
        "K": config.scenario.K,
        "M": config.scenario.M,
        "seed": config.scenario.seed,
        "target_error": config.target_error,
        "max_iterations": config.max_iterations,
    }
    return records, summarize(records, meta)


def summarize(records, metadata=None) -> dict:
    """Per-algorithm verdicts and best grid points.

    Best means fewest iterations to target, ties broken toward smaller
    steps.  An algorithm with no converged run is DIVERGED when every
    grid point diverged, NOT_REACHED otherwise.
    """
    by_tag = {}
    for i, rec in enumerate(records):
        by_tag.setdefault(rec.algorithm_tag, []).append(i)
    algorithms = {}
    for tag, idxs in by_tag.items():
        conv = [i for i in idxs if isinstance(records[i].iterations_to_target, int)]
        if conv:
            best = min(
                conv,
                key=lambda i: (records[i].iterations_to_target, _step_key(records[i])),
            )
            algorithms[tag] = {
                "verdict": "CONVERGED",
                "best_record": best,
                "iterations_to_target": records[best].iterations_to_target,
                "parameters": records[best].parameters,
                "theoretical_gamma": records[best].theoretical_gamma,
                "final_rel_error": records[best].final_rel_error,
            }
        else:
            all_diverged = all(
                records[i].status is TerminationStatus.DIVERGED for i in idxs
            )
            verdict = "DIVERGED" if all_diverged else "NOT_REACHED"
            algorithms[tag] = {
                "verdict": verdict,
                "best_record": None,
                "iterations_to_target": verdict,
                "parameters": None,
                "theoretical_gamma": None,
                "final_rel_error": min(records[i].final_rel_error for i in idxs),
            }
    return {
        "metadata": metadata or {},
        "algorithms": algorithms,
        "records": [r.to_json_dict() for r in records],
    }


def emit_results(records, out_dir, metadata=None) -> list:
    """Write one trace CSV per record, a summary JSON, and a long-format
    CSV of the best runs; returns the list of paths written.

    Output bytes are a pure function of the records, so reruns are
    idempotent.
    """
    records = list(records)
    if not records:
        raise ValueError("at least one record is required")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = []
    counters = {}
    for rec in records:
        n = counters.get(rec.algorithm_tag, 0)
        counters[rec.algorithm_tag] = n + 1
        path = out / f"trace_{rec.algorithm_tag}_{n:03d}.csv"
        write_trace_csv(rec.trace, path)
        rec.trace_path = str(path)
        manifest.append(str(path))

    summary = summarize(records, metadata)
    spath = out / "summary.json"
    spath.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest.append(str(spath))

    lines = ["algorithm,iter,rel_error"]
    for tag in dict.fromkeys(r.algorithm_tag for r in records):
        info = summary["algorithms"][tag]
        if info["best_record"] is None:
            continue
        tr = records[info["best_record"]].trace
        for i, v in enumerate(tr.rel_error):
            lines.append(f"{tag},{i},{v:.17g}")
    lpath = out / "convergence_long.csv"
    lpath.write_text("\n".join(lines) + "\n")
    manifest.append(str(lpath))
    return manifest
