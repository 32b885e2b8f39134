"""Consensus networks and networked primal-dual recursions.

A connected undirected graph with a symmetric doubly stochastic
combination matrix ``A`` induces the consensus constraint operator
``((I - A)^{1/2} kron I)``, turning multi-agent minimization of a sum
of local costs into an equality-constrained saddle-point problem.  This
module builds those operators, provides the networked primal-dual step
and the classical variants that reduce to it (EXTRA, exact diffusion,
diffusion, gradient tracking, linearized-method-of-multipliers), and
compares certified rates with and without the augmenting penalty.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import _kernels_py, kernels
from .problems import (
    EqualityConstrainedProblem,
    QuadraticCost,
    RegularityConstants,
    SaddleReference,
    range_space_dual,
    spectral_quantities,
)
from .solvers import (
    RateReport,
    SolverState,
    TerminationStatus,
    Trace,
    _STATUS_FROM_CODE,
    theoretical_rate,
)

__all__ = [
    "Network",
    "CombinationMatrix",
    "ConsensusOperators",
    "MultiAgentProblem",
    "DistributedState",
    "DistributedAlgorithm",
    "DistributedParams",
    "NuRhoEstimate",
    "random_connected_network",
    "save_network",
    "metropolis_weights",
    "build_consensus_operators",
    "stack_costs",
    "make_multi_agent_problem",
    "consensus_reference",
    "dual_reference",
    "distributed_pd_step",
    "variant_step",
    "nu_rho_estimate",
    "distributed_rate_report",
    "run_distributed",
]

# combination-matrix validation tolerances
STOCHASTIC_TOL = 1e-12
PSD_TOL = 1e-10
CONNECTIVITY_TOL = 1e-12


@dataclass(frozen=True)
class Network:
    """Connected undirected graph without self-loops."""

    node_count: int
    edges: tuple
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.shape != (self.node_count, self.node_count):
            raise ValueError("adjacency shape must match the node count")
        if adj.diagonal().any():
            raise ValueError("self-loops are not allowed")
        if not np.array_equal(adj, adj.T):
            raise ValueError("adjacency must be symmetric")
        if not _connected(adj):
            raise ValueError("network must be connected")
        frozen = adj.copy()
        frozen.setflags(write=False)
        object.__setattr__(self, "adjacency", frozen)
        object.__setattr__(self, "edges", tuple(sorted(tuple(e) for e in self.edges)))

    @classmethod
    def from_edges(cls, node_count: int, edges) -> "Network":
        adj = np.zeros((node_count, node_count), dtype=bool)
        clean = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < node_count and 0 <= v < node_count):
                raise ValueError(f"edge ({u}, {v}) is out of range")
            if u == v:
                raise ValueError("self-loops are not allowed")
            clean.add((min(u, v), max(u, v)))
            adj[u, v] = adj[v, u] = True
        return cls(node_count=node_count, edges=tuple(sorted(clean)), adjacency=adj)

    @classmethod
    def from_file(cls, path) -> "Network":
        """Read the edge-list format: first line node count, then one
        ``u v`` pair (0-indexed) per line."""
        lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
        if not lines:
            raise ValueError("network file is empty")
        node_count = int(lines[0])
        edges = []
        for ln in lines[1:]:
            parts = ln.split()
            if len(parts) != 2:
                raise ValueError(f"malformed edge line: '{ln}'")
            edges.append((int(parts[0]), int(parts[1])))
        return cls.from_edges(node_count, edges)

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)


def _connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    if n == 0:
        return False
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        u = stack.pop()
        for v in np.nonzero(adj[u])[0]:
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return bool(seen.all())


def save_network(network: Network, path) -> None:
    lines = [str(network.node_count)]
    lines += [f"{u} {v}" for u, v in network.edges]
    Path(path).write_text("\n".join(lines) + "\n")


def random_connected_network(
    node_count: int, edge_probability: float, rng, max_attempts: int = 100
) -> Network:
    """Independent-edge random graph, redrawn until connected."""
    if not (0.0 < edge_probability <= 1.0):
        raise ValueError("edge probability must lie in (0, 1]")
    for _ in range(max_attempts):
        edges = [
            (i, j)
            for i in range(node_count)
            for j in range(i + 1, node_count)
            if rng.random() < edge_probability
        ]
        try:
            return Network.from_edges(node_count, edges)
        except ValueError:
            continue
    raise RuntimeError(
        f"failed to draw a connected graph in {max_attempts} attempts"
    )


@dataclass(frozen=True)
class CombinationMatrix:
    """Symmetric doubly stochastic primitive averaging weights.

    Construction validates symmetry, nonnegativity, unit row/column
    sums, primitivity (some power is entrywise positive), and that
    ``I - A`` is positive semidefinite with a simple zero eigenvalue.
    """

    weights: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.weights, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 2:
            raise ValueError("weights must form a square matrix of size >= 2")
        if not np.all(np.isfinite(A)):
            raise ValueError("weights must be finite")
        if np.abs(A - A.T).max() > STOCHASTIC_TOL:
            raise ValueError("weights must be symmetric")
        if A.min() < -1e-14:
            raise ValueError("weights must be nonnegative")
        ones = np.ones(A.shape[0])
        if np.abs(A @ ones - ones).max() > STOCHASTIC_TOL:
            raise ValueError("rows must sum to one")
        if not _primitive(A):
            raise ValueError("weights matrix is not primitive (graph effects never mix)")
        eigs = np.linalg.eigvalsh(np.eye(A.shape[0]) - 0.5 * (A + A.T))
        if eigs[0] < -PSD_TOL:
            raise ValueError("averaging penalty is indefinite; invalid combination matrix")
        if eigs[1] <= CONNECTIVITY_TOL:
            raise ValueError("averaging penalty has a repeated zero eigenvalue; graph is disconnected")
        frozen = A.copy()
        frozen.setflags(write=False)
        object.__setattr__(self, "weights", frozen)

    @property
    def node_count(self) -> int:
        return self.weights.shape[0]


def _primitive(A: np.ndarray) -> bool:
    n = A.shape[0]
    P = A.copy()
    for _ in range(n):
        if (P > 0).all():
            return True
        P = P @ A
    return False


def metropolis_weights(network: Network) -> CombinationMatrix:
    """Degree-based weights: ``1 / (1 + max(d_u, d_v))`` per edge,
    diagonal filled to make rows sum to one."""
    K = network.node_count
    d = network.degrees
    A = np.zeros((K, K))
    for u, v in network.edges:
        w = 1.0 / (1.0 + max(d[u], d[v]))
        A[u, v] = A[v, u] = w
    for k in range(K):
        A[k, k] = 1.0 - A[k].sum()
    return CombinationMatrix(weights=A)


@dataclass(frozen=True)
class ConsensusOperators:
    """Dense consensus operators for a combination matrix.

    ``B_op`` is the symmetric square root of ``(I - A) kron I``; its
    square ``B_sq`` penalizes deviation from the per-node average,
    ``A_bar = I - B_sq / 2`` is the half-averaging operator, and
    ``laplacian`` is the graph Laplacian lifted to block form.
    """

    B_op: np.ndarray
    B_sq: np.ndarray
    A_bar: np.ndarray
    laplacian: np.ndarray
    block_dim: int

    def __post_init__(self):
        for name in ("B_op", "B_sq", "A_bar", "laplacian"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def node_count(self) -> int:
        return self.B_sq.shape[0] // self.block_dim


def build_consensus_operators(weights: CombinationMatrix, block_dim: int) -> ConsensusOperators:
    """Build the dense block operators for ``block_dim`` coordinates per node.

    Eigenvalues of ``I - A`` in ``[-1e-10, 0)`` are clipped to zero
    before the square root; anything more negative raises.
    """
    if block_dim < 1:
        raise ValueError("block dimension must be at least one")
    A = weights.weights
    K = A.shape[0]
    IA = np.eye(K) - A
    IA = 0.5 * (IA + IA.T)
    evals, evecs = np.linalg.eigh(IA)
    if evals[0] < -PSD_TOL:
        raise ValueError("averaging penalty is indefinite; invalid combination matrix")
    # the consensus direction is an exact null direction; eigenvalues
    # inside the tolerance band are noise and must become exact zeros,
    # or downstream rank decisions see spurious tiny singular values
    clipped = np.where(evals < PSD_TOL, 0.0, evals)
    root = (evecs * np.sqrt(clipped)) @ evecs.T
    root = 0.5 * (root + root.T)
    eye_m = np.eye(block_dim)
    B_op = np.kron(root, eye_m)
    B_sq = np.kron(IA, eye_m)
    A_bar = np.eye(K * block_dim) - 0.5 * B_sq
    adjacency = (A > 0) & ~np.eye(K, dtype=bool)
    lap = np.diag(adjacency.sum(axis=1).astype(float)) - adjacency.astype(float)
    laplacian = np.kron(lap, eye_m)
    return ConsensusOperators(
        B_op=B_op, B_sq=B_sq, A_bar=A_bar, laplacian=laplacian, block_dim=block_dim
    )


def stack_costs(agent_costs) -> QuadraticCost:
    """Block-diagonal quadratic cost summing the per-agent costs."""
    costs = list(agent_costs)
    if not costs:
        raise ValueError("at least one agent cost is required")
    dims = {c.dim for c in costs}
    if len(dims) != 1:
        raise ValueError("agent costs must share one dimension")
    M = dims.pop()
    K = len(costs)
    R = np.zeros((K * M, K * M))
    r = np.zeros(K * M)
    for k, c in enumerate(costs):
        R[k * M : (k + 1) * M, k * M : (k + 1) * M] = c.quadratic_term
        r[k * M : (k + 1) * M] = c.linear_term
    return QuadraticCost(quadratic_term=R, linear_term=r)


@dataclass(frozen=True)
class MultiAgentProblem:
    """Local costs on a network plus their stacked consensus problem."""

    network: Network
    agent_costs: tuple
    stacked_problem: EqualityConstrainedProblem
    block_dim: int

    def __post_init__(self):
        object.__setattr__(self, "agent_costs", tuple(self.agent_costs))


def make_multi_agent_problem(
    network: Network, agent_costs, ops: ConsensusOperators
) -> MultiAgentProblem:
    costs = tuple(agent_costs)
    if len(costs) != network.node_count:
        raise ValueError("one cost per node is required")
    for c in costs:
        if not isinstance(c, QuadraticCost):
            raise TypeError("agent costs must be quadratic")
        if c.dim != ops.block_dim:
            raise ValueError("agent cost dimension must match the operator block size")
    stacked = EqualityConstrainedProblem(
        cost=stack_costs(costs),
        constraint_matrix=ops.B_op,
        constraint_rhs=np.zeros(ops.B_op.shape[0]),
    )
    return MultiAgentProblem(
        network=network,
        agent_costs=costs,
        stacked_problem=stacked,
        block_dim=ops.block_dim,
    )


@dataclass
class DistributedState:
    """Node-by-coordinate primal and dual iterates."""

    primal: np.ndarray
    dual: np.ndarray
    iteration: int = 0


class DistributedAlgorithm(Enum):
    PD = "PD"
    EXTRA = "EXTRA"
    EXACT_DIFFUSION = "EXACT_DIFFUSION"
    DIFFUSION = "DIFFUSION"
    DIGING = "DIGING"
    DLM = "DLM"


@dataclass(frozen=True)
class DistributedParams:
    """Scalars of a networked algorithm.

    ``PD`` uses ``mu_w`` / ``mu_lambda`` / ``rho``; EXTRA, exact
    diffusion, diffusion, and gradient tracking use the single step
    ``mu``; the linearized multiplier method uses the dual weight ``c``
    and damping ``d``.
    """

    mu_w: float | None = None
    mu_lambda: float | None = None
    rho: float = 0.0
    mu: float | None = None
    c: float | None = None
    d: float | None = None

    def require(self, algorithm: "DistributedAlgorithm"):
        if algorithm is DistributedAlgorithm.PD:
            if not (self.mu_w and self.mu_w > 0 and self.mu_lambda and self.mu_lambda > 0):
                raise ValueError("networked primal-dual needs positive mu_w and mu_lambda")
            if self.rho < 0:
                raise ValueError("penalty weight cannot be negative")
        elif algorithm is DistributedAlgorithm.DLM:
            if not (self.c and self.c > 0 and self.d and self.d > 0):
                raise ValueError("linearized multiplier method needs positive c and d")
        else:
            if not (self.mu and self.mu > 0):
                raise ValueError(f"{algorithm.value} needs a positive step mu")


def _weights_from_ops(ops: ConsensusOperators) -> np.ndarray:
    # recover node-level combination weights from the block operator
    M = ops.block_dim
    IA = np.ascontiguousarray(ops.B_sq[::M, ::M])
    return np.eye(IA.shape[0]) - IA


def _laplacian_from_ops(ops: ConsensusOperators) -> np.ndarray:
    M = ops.block_dim
    return np.ascontiguousarray(ops.laplacian[::M, ::M])


def _agent_gradients(problem: MultiAgentProblem, W: np.ndarray) -> np.ndarray:
    return np.stack([c.gradient(W[k]) for k, c in enumerate(problem.agent_costs)])


def _averaging_deviation(A: np.ndarray, network: Network, X: np.ndarray) -> np.ndarray:
    # u_k = x_k - sum_{s in N_k union {k}} a_sk x_s, per node, neighbors only
    out = np.empty_like(X)
    for k in range(X.shape[0]):
        acc = A[k, k] * X[k]
        for s in np.nonzero(network.adjacency[k])[0]:
            acc = acc + A[k, s] * X[s]
        out[k] = X[k] - acc
    return out


def _laplacian_apply(network: Network, X: np.ndarray) -> np.ndarray:
    d = network.degrees
    out = np.empty_like(X)
    for k in range(X.shape[0]):
        acc = d[k] * X[k]
        for s in np.nonzero(network.adjacency[k])[0]:
            acc = acc - X[s]
        out[k] = acc
    return out


def distributed_pd_step(
    problem: MultiAgentProblem,
    ops: ConsensusOperators,
    mu_w: float,
    mu_lambda: float,
    rho: float,
    state: DistributedState,
) -> DistributedState:
    """One networked primal-dual update, computed agent-locally.

    Each node combines only its own and its neighbors' blocks: the
    averaging deviation acts as the constraint residual, the dual
    ascent sees the freshly updated primal blocks.
    """
    A = _weights_from_ops(ops)
    net = problem.network
    W, Y = state.primal, state.dual
    G = _agent_gradients(problem, W)
    U = _averaging_deviation(A, net, W)
    W_new = W - mu_w * (G + rho * U + Y)
    U_new = _averaging_deviation(A, net, W_new)
    Y_new = Y + mu_lambda * U_new
    return DistributedState(primal=W_new, dual=Y_new, iteration=state.iteration + 1)


def variant_step(
    algorithm: DistributedAlgorithm,
    problem: MultiAgentProblem,
    ops: ConsensusOperators,
    params: DistributedParams,
    state: DistributedState,
) -> DistributedState:
    """One update of a classical consensus-optimization algorithm.

    All variants are written agent-locally.  EXTRA and exact diffusion
    carry the dual recursion ``y += (1/(2 mu)) u_new``; gradient
    tracking applies the averaging operator twice per step with dual
    weight ``1/mu``; the linearized multiplier method uses the graph
    Laplacian with damping ``1/d`` (Laplacian evaluated at the previous
    primal block in the primal update).
    """
    params.require(algorithm)
    if algorithm is DistributedAlgorithm.PD:
        return distributed_pd_step(problem, ops, params.mu_w, params.mu_lambda, params.rho, state)
    A = _weights_from_ops(ops)
    net = problem.network
    W, Y = state.primal, state.dual
    G = _agent_gradients(problem, W)
    it = state.iteration + 1

    if algorithm is DistributedAlgorithm.EXTRA:
        mu = params.mu
        U = _averaging_deviation(A, net, W)
        W_new = W - 0.5 * U - mu * (G + Y)
        Y_new = Y + (0.5 / mu) * _averaging_deviation(A, net, W_new)
        return DistributedState(W_new, Y_new, it)
    if algorithm is DistributedAlgorithm.EXACT_DIFFUSION:
        mu = params.mu
        phi = W - mu * G
        W_new = phi - 0.5 * _averaging_deviation(A, net, phi) - mu * Y
        Y_new = Y + (0.5 / mu) * _averaging_deviation(A, net, W_new)
        return DistributedState(W_new, Y_new, it)
    if algorithm is DistributedAlgorithm.DIFFUSION:
        mu = params.mu
        z = W - mu * G
        W_new = z - _averaging_deviation(A, net, z)
        return DistributedState(W_new, Y.copy(), it)
    if algorithm is DistributedAlgorithm.DIGING:
        mu = params.mu
        once = W - _averaging_deviation(A, net, W)
        twice = once - _averaging_deviation(A, net, once)
        W_new = twice - mu * G - mu * _averaging_deviation(A, net, Y)
        Y_new = Y + (1.0 / mu) * _averaging_deviation(A, net, W_new)
        return DistributedState(W_new, Y_new, it)
    # linearized multiplier method
    c, d = params.c, params.d
    W_new = W - (1.0 / d) * (G + c * _laplacian_apply(net, W) + Y)
    Y_new = Y + c * _laplacian_apply(net, W_new)
    return DistributedState(W_new, Y_new, it)


def consensus_reference(problem: MultiAgentProblem, ops: ConsensusOperators) -> SaddleReference:
    """Stacked saddle reference via the aggregate minimizer.

    The consensus optimum replicates the minimizer of the summed cost;
    the dual certificate is the minimum-norm solution of the stacked
    stationarity system.
    """
    costs = problem.agent_costs
    M = problem.block_dim
    K = len(costs)
    H = np.zeros((M, M))
    r = np.zeros(M)
    for c in costs:
        H = H + c.hessian()
        r = r + c.linear_term
    eigs = np.linalg.eigvalsh(0.5 * (H + H.T))
    if eigs[0] <= 0.0:
        raise ValueError("aggregate cost is not strongly convex; no unique consensus optimum")
    w_agg = np.linalg.solve(H, -r)
    w_star = np.tile(w_agg, K)
    grad = np.concatenate([c.gradient(w_agg) for c in costs])
    lam_star = range_space_dual(grad, ops.B_op)
    stat = float(np.linalg.norm(grad + ops.B_op.T @ lam_star))
    feas = float(np.linalg.norm(ops.B_op @ w_star))
    return SaddleReference(
        w_star=w_star,
        lambda_star=lam_star,
        kkt_stationarity_residual=stat,
        kkt_feasibility_residual=feas,
    )


def dual_reference(
    algorithm: DistributedAlgorithm,
    problem: MultiAgentProblem,
    ops: ConsensusOperators,
    reference: SaddleReference,
) -> np.ndarray | None:
    """Fixed-point dual blocks of an algorithm at the consensus optimum.

    The networked primal-dual recursion, EXTRA, and the linearized
    multiplier method share ``y* = -grad``; exact diffusion averages it
    once; gradient tracking solves the averaging-deviation system; the
    bias-prone diffusion recursion has no dual (None).
    """
    K = problem.network.node_count
    M = problem.block_dim
    Wst = reference.w_star.reshape(K, M)
    grads = np.stack(
        [c.gradient(Wst[k]) for k, c in enumerate(problem.agent_costs)]
    )
    if algorithm is DistributedAlgorithm.DIFFUSION:
        return None
    if algorithm in (
        DistributedAlgorithm.PD,
        DistributedAlgorithm.EXTRA,
        DistributedAlgorithm.DLM,
    ):
        return -grads
    if algorithm is DistributedAlgorithm.EXACT_DIFFUSION:
        IA = np.ascontiguousarray(ops.B_sq[:: M, :: M])
        return -(grads - 0.5 * (IA @ grads))
    # gradient tracking: minimum-norm solve of the averaging-deviation system
    IA = np.ascontiguousarray(ops.B_sq[:: M, :: M])
    return -np.linalg.pinv(IA) @ grads


class NuRhoEstimate(NamedTuple):
    """Strong-convexity estimate of the penalized aggregate cost.

    ``limit_gap`` reports the distance to the large-penalty limit (the
    aggregate constant ``beta_bar``); the estimate is nondecreasing in
    the penalty and approaches ``beta_bar`` as it grows.
    """

    nu_rho: float
    eta_star: float
    limit_gap: float


def nu_rho_estimate(
    beta_bar: float, delta: float, sigma_underbar_sq: float, rho: float
) -> NuRhoEstimate:
    """Maximize ``min(beta_bar - 2 delta t, rho s t^2 / (4 (t^2 + 1)))``
    over the auxiliary parameter ``t`` in ``(0, beta_bar / (2 delta))``.

    Golden-section search to an interval width of 1e-10; the maximized
    value is a valid strong-convexity constant for the penalized
    aggregate cost when every local cost is convex and delta-smooth.
    """
    if not (beta_bar > 0.0 and delta > 0.0 and sigma_underbar_sq > 0.0 and rho > 0.0):
        raise ValueError("all inputs must be positive")

    def g(t: float) -> float:
        return min(beta_bar - 2.0 * delta * t, rho * sigma_underbar_sq * t * t / (4.0 * (t * t + 1.0)))

    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    lo, hi = 0.0, beta_bar / (2.0 * delta)
    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    fc, fd = g(c), g(d)
    while hi - lo > 1e-10:
        if fc < fd:
            lo, c, fc = c, d, fd
            d = lo + inv_phi * (hi - lo)
            fd = g(d)
        else:
            hi, d, fd = d, c, fc
            c = hi - inv_phi * (hi - lo)
            fc = g(c)
    t_star = 0.5 * (lo + hi)
    val = g(t_star)
    return NuRhoEstimate(nu_rho=float(val), eta_star=float(t_star), limit_gap=float(beta_bar - val))


def distributed_rate_report(
    problem: MultiAgentProblem,
    ops: ConsensusOperators,
    rho: float,
    mu_w: float,
    mu_lambda: float,
) -> RateReport:
    """Certified rate of the networked primal-dual recursion.

    Without a penalty the strong-convexity constant is the worst local
    one (every local cost must be strongly convex); with a penalty it is
    the maximized estimate for the penalized aggregate cost, which can
    be far larger when local curvatures are unbalanced.  The reported
    ``kappa`` is the corresponding condition number.
    """
    hessians = [c.hessian() for c in problem.agent_costs]
    delta = max(float(np.linalg.norm(H, 2)) for H in hessians)
    spec = spectral_quantities(ops.B_op)
    if rho == 0.0:
        betas = [float(np.linalg.eigvalsh(H)[0]) for H in hessians]
        worst = int(np.argmin(betas))
        if betas[worst] <= 0.0:
            raise ValueError(
                f"agent {worst} cost is not strongly convex; the zero-penalty "
                "rate requires every local cost strongly convex"
            )
        nu0 = min(betas)
        constants = RegularityConstants(
            delta=delta, nu=nu0, rho=0.0, delta_rho=delta, nu_rho=nu0
        )
        return theoretical_rate(constants, spec, mu_w, mu_lambda)
    K = len(hessians)
    H_bar = sum(hessians) / K
    beta_bar = float(np.linalg.eigvalsh(0.5 * (H_bar + H_bar.T))[0])
    if beta_bar <= 0.0:
        raise ValueError("aggregate cost is not strongly convex; no penalized rate exists")
    est = nu_rho_estimate(beta_bar, delta, spec.sigma_min_nonzero**2, rho)
    nu_ind = min(float(np.linalg.eigvalsh(H)[0]) for H in hessians)
    constants = RegularityConstants(
        delta=delta,
        nu=max(nu_ind, 0.0),
        rho=rho,
        delta_rho=delta + rho * spec.sigma_max**2,
        nu_rho=est.nu_rho,
    )
    return theoretical_rate(constants, spec, mu_w, mu_lambda)


_ALG_CODE = {
    DistributedAlgorithm.PD: kernels.ALG_PD,
    DistributedAlgorithm.EXTRA: kernels.ALG_EXTRA,
    DistributedAlgorithm.EXACT_DIFFUSION: kernels.ALG_EXACT_DIFFUSION,
    DistributedAlgorithm.DIFFUSION: kernels.ALG_DIFFUSION,
    DistributedAlgorithm.DIGING: kernels.ALG_DIGING,
    DistributedAlgorithm.DLM: kernels.ALG_DLM,
}


def _all_diagonal(costs) -> bool:
    for c in costs:
        if not isinstance(c, QuadraticCost):
            return False
        R = c.quadratic_term
        if np.count_nonzero(R - np.diag(np.diag(R))):
            return False
    return True


def _kernel_scalars(algorithm: DistributedAlgorithm, params: DistributedParams):
    if algorithm is DistributedAlgorithm.PD:
        return params.mu_w, params.mu_lambda, params.rho, 0.0, 0.0
    if algorithm is DistributedAlgorithm.DLM:
        return 0.0, 0.0, 0.0, params.c, params.d
    mu = params.mu
    if algorithm in (DistributedAlgorithm.EXTRA, DistributedAlgorithm.EXACT_DIFFUSION):
        return mu, 0.5 / mu, 0.0, 0.0, 0.0
    if algorithm is DistributedAlgorithm.DIGING:
        return mu, 1.0 / mu, 0.0, 0.0, 0.0
    return mu, 0.0, 0.0, 0.0, 0.0  # diffusion: no dual step


def run_distributed(
    problem: MultiAgentProblem,
    ops: ConsensusOperators,
    algorithm: DistributedAlgorithm,
    params: DistributedParams,
    *,
    max_iterations: int = 1000,
    divergence_threshold: float = 1e8,
    stop_tolerance: float = 1e-10,
    primal_init: np.ndarray | None = None,
    dual_init: np.ndarray | None = None,
    reference: SaddleReference | None = None,
    backend: str | None = None,
) -> Trace:
    """Run a networked algorithm and record the per-iteration trace.

    Diagonal quadratic local costs run through the kernel backend;
    anything else runs through the pure agent-local steps.  Trace
    columns follow the single-problem convention; the dual error is
    measured against the algorithm's own fixed-point dual, and the
    range residual measures the per-coordinate mean of the dual blocks
    (the component invisible to the consensus constraint).  The
    weighted-energy column is populated for the primal-dual recursion
    only.
    """
    params.require(algorithm)
    K = problem.network.node_count
    M = problem.block_dim
    W0 = np.zeros((K, M)) if primal_init is None else np.array(primal_init, dtype=float)
    Y0 = np.zeros((K, M)) if dual_init is None else np.array(dual_init, dtype=float)
    if W0.shape != (K, M) or Y0.shape != (K, M):
        raise ValueError("initial iterates have the wrong dimensions")

    Wstar = Ystar = None
    wns = 0.0
    cw = clam = 0.0
    if reference is not None:
        Wstar = np.array(reference.w_star, dtype=float).reshape(K, M)
        wns = float(np.sum(Wstar * Wstar))
        Ydual = dual_reference(algorithm, problem, ops, reference)
        Ystar = None if Ydual is None else np.array(Ydual, dtype=float)
        if algorithm is DistributedAlgorithm.PD:
            IA = np.ascontiguousarray(ops.B_sq[::M, ::M])
            smax_sq = float(np.clip(np.linalg.eigvalsh(IA)[-1], 0.0, None))
            cw = 1.0 - params.mu_w * params.mu_lambda * smax_sq
            clam = params.mu_w / params.mu_lambda

    if _all_diagonal(problem.agent_costs):
        hess_diag = np.stack([2.0 * np.diag(c.quadratic_term) for c in problem.agent_costs])
        lin = np.stack([np.array(c.linear_term, dtype=float) for c in problem.agent_costs])
        A = _weights_from_ops(ops)
        lap = _laplacian_from_ops(ops)
        mu_w, mu_lambda, rho, dlm_c, dlm_d = _kernel_scalars(algorithm, params)
        rows, code, W, Y, steps = kernels.run_distributed_diag(
            _ALG_CODE[algorithm],
            hess_diag,
            lin,
            A,
            lap,
            mu_w,
            mu_lambda,
            rho,
            dlm_c,
            dlm_d,
            W0,
            Y0,
            max_iterations,
            divergence_threshold,
            stop_tolerance,
            Wstar,
            Ystar,
            cw,
            clam,
            wns,
            backend=backend,
        )
    else:
        rows, code, W, Y, steps = _run_distributed_generic(
            problem,
            ops,
            algorithm,
            params,
            W0,
            Y0,
            max_iterations,
            divergence_threshold,
            stop_tolerance,
            Wstar,
            Ystar,
            cw,
            clam,
            wns,
        )

    return Trace(
        iterations=np.arange(rows.shape[0]),
        primal_err_sq=rows[:, 0].copy(),
        dual_err_sq=rows[:, 1].copy(),
        lyapunov=rows[:, 2].copy(),
        range_residual=rows[:, 3].copy(),
        rel_error=rows[:, 4].copy(),
        status=_STATUS_FROM_CODE[code],
        final_state=DistributedState(primal=np.asarray(W), dual=np.asarray(Y), iteration=steps),
    )


def _run_distributed_generic(
    problem, ops, algorithm, params, W0, Y0, max_iterations,
    divergence_threshold, stop_tolerance, Wstar, Ystar, cw, clam, wns
):
    K = W0.shape[0]
    state = DistributedState(primal=W0, dual=Y0, iteration=0)
    rows = np.empty((max_iterations + 1, 5))
    rows[0] = _kernels_py._distributed_row(state.primal, state.dual, Wstar, Ystar, cw, clam, wns, K)
    if Wstar is not None and stop_tolerance > 0.0 and rows[0, 4] <= stop_tolerance:
        return rows[:1].copy(), kernels.STATUS_CONVERGED, state.primal, state.dual, 0

    status = kernels.STATUS_MAX_ITER
    steps = 0
    for i in range(1, max_iterations + 1):
        new = variant_step(algorithm, problem, ops, params, state)
        if not (np.all(np.isfinite(new.primal)) and np.all(np.isfinite(new.dual))):
            status = kernels.STATUS_DIVERGED
            break
        disp = np.linalg.norm(new.primal - state.primal)
        state = new
        steps = i
        rows[i] = _kernels_py._distributed_row(state.primal, state.dual, Wstar, Ystar, cw, clam, wns, K)
        if (
            np.linalg.norm(state.primal) > divergence_threshold
            or np.linalg.norm(state.dual) > divergence_threshold
        ):
            status = kernels.STATUS_DIVERGED
            break
        if stop_tolerance > 0.0:
            if Wstar is not None:
                if rows[i, 4] <= stop_tolerance:
                    status = kernels.STATUS_CONVERGED
                    break
            elif disp / (1.0 + np.linalg.norm(state.primal)) <= stop_tolerance:
                status = kernels.STATUS_CONVERGED
                break
    return rows[: steps + 1].copy(), status, state.primal, state.dual, steps
