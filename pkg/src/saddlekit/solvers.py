"""Primal-dual gradient recursions with certified step sizes.

Three recursions are provided for ``min_w J(w) s.t. B w = b``:

* incremental: the dual ascent uses the freshly updated primal iterate,
  and the primal gradient may carry an augmenting penalty ``rho``;
* non-incremental: the dual ascent uses the previous primal iterate,
  with a penalty weight ``eta`` in the cost;
* forward-backward: a reflected dual update ``lam += mu_lambda *
  B (2 w_new - w_old)`` for problems with zero right-hand side.

``step_size_bounds`` and ``theoretical_rate`` certify admissible step
sizes and the linear contraction factor of the weighted error energy
``V = c_w ||w - w*||^2 + c_lam ||lam - lam*||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import _kernels_py, kernels
from .problems import (
    EqualityConstrainedProblem,
    QuadraticCost,
    RegularityConstants,
    SaddleReference,
    SpectralInfo,
    range_projector,
    spectral_quantities,
)

__all__ = [
    "Method",
    "Regime",
    "TerminationStatus",
    "SolverConfig",
    "SolverState",
    "StepSizeBounds",
    "RateReport",
    "Trace",
    "IncrementalEquivalent",
    "incremental_step",
    "nonincremental_step",
    "forward_backward_step",
    "penalized_gradient",
    "step_size_bounds",
    "default_steps",
    "theoretical_rate",
    "to_incremental_equivalent",
    "fold_penalty_into_quadratic",
    "run_solver",
    "write_trace_csv",
]


class Method(Enum):
    INCREMENTAL = "incremental"
    NONINCREMENTAL = "nonincremental"
    FORWARD_BACKWARD = "forward_backward"


class Regime(Enum):
    """Which admissibility bounds apply.

    ``INCREMENTAL`` covers the penalized incremental recursion;
    ``NONINCREMENTAL_ZERO_PENALTY`` covers the non-incremental recursion
    without a penalty, whose bounds come from the substituted constants
    ``delta' = delta - mu_lambda sigma_min^2`` and ``nu' = nu -
    mu_lambda sigma_max^2``.
    """

    INCREMENTAL = "incremental"
    NONINCREMENTAL_ZERO_PENALTY = "nonincremental_zero_penalty"


class TerminationStatus(Enum):
    CONVERGED = "CONVERGED"
    MAX_ITER = "MAX_ITER"
    DIVERGED = "DIVERGED"


_STATUS_FROM_CODE = {
    kernels.STATUS_CONVERGED: TerminationStatus.CONVERGED,
    kernels.STATUS_MAX_ITER: TerminationStatus.MAX_ITER,
    kernels.STATUS_DIVERGED: TerminationStatus.DIVERGED,
}


@dataclass
class SolverConfig:
    """Step sizes, penalty weights, and run limits.

    ``rho`` is the penalty of the incremental recursion, ``eta`` the
    penalty of the non-incremental one; the forward-backward recursion
    uses neither.  ``stop_tolerance`` applies to the squared relative
    primal error when a reference is supplied, otherwise to the relative
    displacement between consecutive iterates; set it to 0 to disable.
    """

    mu_w: float
    mu_lambda: float
    rho: float = 0.0
    eta: float = 0.0
    max_iterations: int = 1000
    divergence_threshold: float = 1e8
    stop_tolerance: float = 1e-10
    w_init: np.ndarray | None = None
    lambda_init: np.ndarray | None = None

    def __post_init__(self):
        if not (self.mu_w > 0.0 and self.mu_lambda > 0.0):
            raise ValueError("step sizes must be positive")
        if self.rho < 0.0 or self.eta < 0.0:
            raise ValueError("penalty weights cannot be negative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least one")
        if self.divergence_threshold <= 0.0:
            raise ValueError("divergence threshold must be positive")


@dataclass
class SolverState:
    """Primal / dual iterates; ``iteration`` counts applied updates."""

    w: np.ndarray
    lam: np.ndarray
    iteration: int = 0


@dataclass(frozen=True)
class StepSizeBounds:
    """Admissible step-size bounds for a regime.

    ``mu_w_bound`` is strict, ``mu_lambda_bound`` inclusive.  In the
    zero-penalty non-incremental regime the substituted constants used
    to evaluate the primal bound are reported as ``delta_prime`` and
    ``nu_prime`` (both None otherwise).
    """

    mu_w_bound: float
    mu_lambda_bound: float
    regime: Regime
    delta_prime: float | None = None
    nu_prime: float | None = None


@dataclass(frozen=True)
class RateReport:
    """Certified linear rate and energy weights for admissible steps."""

    gamma: float
    gamma_primal: float
    gamma_dual: float
    c_w: float
    c_lambda: float
    kappa: float


@dataclass
class Trace:
    """Per-iteration error record of a solver run.

    Row ``i`` describes the state after ``i`` updates (row 0 is the
    initial state).  Error columns are nan when no reference was given;
    ``lyapunov`` is nan when the energy weight ``c_w`` is not positive.
    ``range_residual`` is the norm of the dual component outside the
    range of the constraint matrix, scaled by ``1 / (1 + ||lam||)``.
    """

    iterations: np.ndarray
    primal_err_sq: np.ndarray
    dual_err_sq: np.ndarray
    lyapunov: np.ndarray
    range_residual: np.ndarray
    rel_error: np.ndarray
    status: TerminationStatus
    final_state: SolverState

    @property
    def iterations_run(self) -> int:
        return int(self.iterations[-1])


def penalized_gradient(problem: EqualityConstrainedProblem, penalty: float, w: np.ndarray) -> np.ndarray:
    """Gradient of the cost plus ``penalty * B'(B w - b)``."""
    g = np.asarray(problem.cost.gradient(w), dtype=float)
    if penalty != 0.0:
        B = problem.constraint_matrix
        g = g + penalty * (B.T @ (B @ w - problem.constraint_rhs))
    return g


def incremental_step(
    problem: EqualityConstrainedProblem, config: SolverConfig, state: SolverState
) -> SolverState:
    """One update where the dual ascent sees the new primal iterate."""
    B = problem.constraint_matrix
    b = problem.constraint_rhs
    grad = penalized_gradient(problem, config.rho, state.w)
    w_new = state.w - config.mu_w * (grad + B.T @ state.lam)
    lam_new = state.lam + config.mu_lambda * (B @ w_new - b)
    return SolverState(w=w_new, lam=lam_new, iteration=state.iteration + 1)


def nonincremental_step(
    problem: EqualityConstrainedProblem, config: SolverConfig, state: SolverState
) -> SolverState:
    """One update where the dual ascent sees the old primal iterate."""
    B = problem.constraint_matrix
    b = problem.constraint_rhs
    grad = penalized_gradient(problem, config.eta, state.w)
    w_new = state.w - config.mu_w * (grad + B.T @ state.lam)
    lam_new = state.lam + config.mu_lambda * (B @ state.w - b)
    return SolverState(w=w_new, lam=lam_new, iteration=state.iteration + 1)


def forward_backward_step(
    problem: EqualityConstrainedProblem, config: SolverConfig, state: SolverState
) -> SolverState:
    """One reflected-dual update; needs a zero right-hand side."""
    if np.any(problem.constraint_rhs != 0.0):
        raise ValueError("forward-backward requires a homogeneous constraint (zero right-hand side)")
    B = problem.constraint_matrix
    grad = np.asarray(problem.cost.gradient(state.w), dtype=float)
    w_new = state.w - config.mu_w * (grad + B.T @ state.lam)
    lam_new = state.lam + config.mu_lambda * (B @ (2.0 * w_new - state.w))
    return SolverState(w=w_new, lam=lam_new, iteration=state.iteration + 1)


def step_size_bounds(
    constants: RegularityConstants, spectral: SpectralInfo, regime: Regime
) -> StepSizeBounds:
    """Admissible step-size bounds for the requested regime.

    Incremental regime: ``mu_w < 1 / delta_rho`` and ``mu_lambda <=
    nu_rho / sigma_max^2``.  Zero-penalty non-incremental regime:
    ``mu_lambda <= nu / (2 sigma_max^2)`` and ``mu_w < 1 / (delta -
    mu_lambda sigma_min^2)`` evaluated at the returned dual bound; the
    substituted constants are reported alongside.
    """
    smax_sq = spectral.sigma_max**2
    if regime is Regime.INCREMENTAL:
        return StepSizeBounds(
            mu_w_bound=1.0 / constants.delta_rho,
            mu_lambda_bound=constants.nu_rho / smax_sq,
            regime=regime,
        )
    if constants.nu <= 0.0:
        raise ValueError(
            "strong convexity required: the zero-penalty bounds need nu > 0"
        )
    mu_lambda_bound = constants.nu / (2.0 * smax_sq)
    delta_prime = constants.delta - mu_lambda_bound * spectral.sigma_min**2
    nu_prime = constants.nu - mu_lambda_bound * smax_sq
    return StepSizeBounds(
        mu_w_bound=1.0 / delta_prime,
        mu_lambda_bound=mu_lambda_bound,
        regime=regime,
        delta_prime=delta_prime,
        nu_prime=nu_prime,
    )


def default_steps(
    constants: RegularityConstants,
    spectral: SpectralInfo,
    regime: Regime = Regime.INCREMENTAL,
) -> tuple[float, float]:
    """Safe default steps: half the primal bound, the full dual bound."""
    bounds = step_size_bounds(constants, spectral, regime)
    return 0.5 * bounds.mu_w_bound, bounds.mu_lambda_bound


def theoretical_rate(
    constants: RegularityConstants,
    spectral: SpectralInfo,
    mu_w: float,
    mu_lambda: float,
) -> RateReport:
    """Certified contraction factor of the weighted error energy.

    For admissible steps the energy ``V = c_w ||w - w*||^2 + (mu_w /
    mu_lambda) ||lam - lam*||^2`` contracts by

    ``gamma = max(1 - mu_w nu_rho (1 - mu_w delta_rho),
                  1 - mu_w mu_lambda sigma_min_nonzero^2) < 1``

    per iteration, provided the dual is initialized in the range of the
    constraint matrix.  Raises on inadmissible steps, naming the bound.
    """
    if not (mu_w > 0.0 and mu_lambda > 0.0):
        raise ValueError("step sizes must be positive")
    smax_sq = spectral.sigma_max**2
    if mu_w >= 1.0 / constants.delta_rho:
        raise ValueError(
            f"inadmissible steps: mu_w = {mu_w:g} exceeds the strict primal "
            f"bound 1/delta_rho = {1.0 / constants.delta_rho:g}"
        )
    if mu_lambda > constants.nu_rho / smax_sq:
        raise ValueError(
            f"inadmissible steps: mu_lambda = {mu_lambda:g} exceeds the dual "
            f"bound nu_rho/sigma_max^2 = {constants.nu_rho / smax_sq:g}"
        )
    gamma_primal = 1.0 - mu_w * constants.nu_rho * (1.0 - mu_w * constants.delta_rho)
    gamma_dual = 1.0 - mu_w * mu_lambda * spectral.sigma_min_nonzero**2
    gamma = max(gamma_primal, gamma_dual)
    c_w = 1.0 - mu_w * mu_lambda * smax_sq
    c_lambda = mu_w / mu_lambda
    if not (0.0 < gamma < 1.0 and c_w > 0.0):
        raise ValueError("certified rate is degenerate; constants are inconsistent")
    return RateReport(
        gamma=gamma,
        gamma_primal=gamma_primal,
        gamma_dual=gamma_dual,
        c_w=c_w,
        c_lambda=c_lambda,
        kappa=constants.delta_rho / constants.nu_rho,
    )


@dataclass(frozen=True)
class IncrementalEquivalent:
    """Incremental-form parameters matching a non-incremental run.

    ``negative_penalty`` flags ``eta < mu_lambda``; the equivalent
    penalty is then negative and must be folded into the cost (see
    ``fold_penalty_into_quadratic``) instead of passed as ``rho``.
    """

    rho: float
    lambda_init: np.ndarray
    negative_penalty: bool


def to_incremental_equivalent(
    eta: float,
    mu_lambda: float,
    w_init: np.ndarray,
    lambda_prime_init: np.ndarray,
    problem: EqualityConstrainedProblem,
) -> IncrementalEquivalent:
    """Map a non-incremental run to its equivalent incremental run.

    With ``rho = eta - mu_lambda`` and the dual initialized as
    ``lambda_prime + mu_lambda (B w - b)``, the incremental recursion
    reproduces the non-incremental primal trajectory exactly.
    """
    B = problem.constraint_matrix
    b = problem.constraint_rhs
    w_init = np.asarray(w_init, dtype=float)
    lam_p = np.asarray(lambda_prime_init, dtype=float)
    rho = eta - mu_lambda
    lam0 = lam_p + mu_lambda * (B @ w_init - b)
    return IncrementalEquivalent(rho=float(rho), lambda_init=lam0, negative_penalty=rho < 0.0)


def fold_penalty_into_quadratic(
    problem: EqualityConstrainedProblem, penalty: float
) -> EqualityConstrainedProblem:
    """New problem whose quadratic cost absorbs ``(penalty/2)||Bw - b||^2``.

    The constraint is unchanged; ``penalty`` may be negative.  Gradients
    of the new cost equal the penalized gradients of the original one.
    """
    cost = problem.cost
    if not isinstance(cost, QuadraticCost):
        raise TypeError("penalty folding requires a quadratic cost")
    B = problem.constraint_matrix
    b = problem.constraint_rhs
    R_new = cost.quadratic_term + (penalty / 2.0) * (B.T @ B)
    r_new = cost.linear_term - penalty * (B.T @ b)
    return EqualityConstrainedProblem(
        cost=QuadraticCost(quadratic_term=R_new, linear_term=r_new),
        constraint_matrix=B,
        constraint_rhs=b,
    )


_MODE_FROM_METHOD = {
    Method.INCREMENTAL: kernels.MODE_INCREMENTAL,
    Method.NONINCREMENTAL: kernels.MODE_NONINCREMENTAL,
    Method.FORWARD_BACKWARD: kernels.MODE_FORWARD_BACKWARD,
}

_STEP_FROM_METHOD = {
    Method.INCREMENTAL: incremental_step,
    Method.NONINCREMENTAL: nonincremental_step,
    Method.FORWARD_BACKWARD: forward_backward_step,
}


def _run_generic(problem, config, method, w0, lam0, wstar, lamstar, cw, clam, P, wns):
    # oracle-cost path; mirrors the kernel control flow step by step
    step = _STEP_FROM_METHOD[method]
    state = SolverState(w=w0, lam=lam0, iteration=0)
    rows = np.empty((config.max_iterations + 1, 5))
    rows[0] = _kernels_py._single_row(state.w, state.lam, wstar, lamstar, cw, clam, P, wns)
    if wstar is not None and config.stop_tolerance > 0.0 and rows[0, 4] <= config.stop_tolerance:
        return rows[:1].copy(), kernels.STATUS_CONVERGED, state.w, state.lam, 0

    status = kernels.STATUS_MAX_ITER
    steps = 0
    for i in range(1, config.max_iterations + 1):
        new = step(problem, config, state)
        if not (np.all(np.isfinite(new.w)) and np.all(np.isfinite(new.lam))):
            status = kernels.STATUS_DIVERGED
            break
        disp = np.linalg.norm(new.w - state.w)
        state = new
        steps = i
        rows[i] = _kernels_py._single_row(state.w, state.lam, wstar, lamstar, cw, clam, P, wns)
        if (
            np.linalg.norm(state.w) > config.divergence_threshold
            or np.linalg.norm(state.lam) > config.divergence_threshold
        ):
            status = kernels.STATUS_DIVERGED
            break
        if config.stop_tolerance > 0.0:
            if wstar is not None:
                if rows[i, 4] <= config.stop_tolerance:
                    status = kernels.STATUS_CONVERGED
                    break
            elif disp / (1.0 + np.linalg.norm(state.w)) <= config.stop_tolerance:
                status = kernels.STATUS_CONVERGED
                break
    return rows[: steps + 1].copy(), status, state.w, state.lam, steps


def run_solver(
    problem: EqualityConstrainedProblem,
    config: SolverConfig,
    method: Method,
    reference: SaddleReference | None = None,
    backend: str | None = None,
) -> Trace:
    """Run a recursion and record the per-iteration error trace.

    Quadratic costs run through the selected kernel backend; other cost
    oracles run through the pure step functions.  With a reference the
    run stops once the squared relative primal error drops to
    ``stop_tolerance``; without one, once the relative displacement
    does.  States whose norm exceeds the divergence threshold (or turn
    non-finite) terminate the run with ``DIVERGED``; the trace keeps the
    last finite state.
    """
    B = problem.constraint_matrix
    b = problem.constraint_rhs
    M = problem.dim_primal
    E = problem.dim_constraints
    if method is Method.FORWARD_BACKWARD and np.any(b != 0.0):
        raise ValueError("forward-backward requires a homogeneous constraint (zero right-hand side)")

    spectral = spectral_quantities(B)
    P = range_projector(B)
    cw = 1.0 - config.mu_w * config.mu_lambda * spectral.sigma_max**2
    clam = config.mu_w / config.mu_lambda

    w0 = np.zeros(M) if config.w_init is None else np.array(config.w_init, dtype=float)
    lam0 = np.zeros(E) if config.lambda_init is None else np.array(config.lambda_init, dtype=float)
    if w0.shape != (M,) or lam0.shape != (E,):
        raise ValueError("initial iterates have the wrong dimensions")

    wstar = lamstar = None
    wns = 0.0
    if reference is not None:
        wstar = np.array(reference.w_star, dtype=float)
        lamstar = np.array(reference.lambda_star, dtype=float)
        wns = float(wstar @ wstar)

    if isinstance(problem.cost, QuadraticCost):
        penalty = {
            Method.INCREMENTAL: config.rho,
            Method.NONINCREMENTAL: config.eta,
            Method.FORWARD_BACKWARD: 0.0,
        }[method]
        rows, code, w, lam, steps = kernels.run_single(
            _MODE_FROM_METHOD[method],
            problem.cost.hessian(),
            np.array(problem.cost.linear_term, dtype=float),
            np.array(B, dtype=float),
            np.array(b, dtype=float),
            config.mu_w,
            config.mu_lambda,
            penalty,
            w0,
            lam0,
            config.max_iterations,
            config.divergence_threshold,
            config.stop_tolerance,
            wstar,
            lamstar,
            cw,
            clam,
            P,
            wns,
            backend=backend,
        )
    else:
        rows, code, w, lam, steps = _run_generic(
            problem, config, method, w0, lam0, wstar, lamstar, cw, clam, P, wns
        )

    return Trace(
        iterations=np.arange(rows.shape[0]),
        primal_err_sq=rows[:, 0].copy(),
        dual_err_sq=rows[:, 1].copy(),
        lyapunov=rows[:, 2].copy(),
        range_residual=rows[:, 3].copy(),
        rel_error=rows[:, 4].copy(),
        status=_STATUS_FROM_CODE[code],
        final_state=SolverState(w=np.asarray(w), lam=np.asarray(lam), iteration=steps),
    )


TRACE_CSV_HEADER = "iter,primal_err_sq,dual_err_sq,lyapunov,range_residual,rel_error"


def write_trace_csv(trace: Trace, path) -> None:
    """Write the trace in the fixed CSV layout (deterministic bytes)."""
    lines = [TRACE_CSV_HEADER]
    for i in range(trace.iterations.shape[0]):
        lines.append(
            f"{int(trace.iterations[i])},{trace.primal_err_sq[i]:.17g},"
            f"{trace.dual_err_sq[i]:.17g},{trace.lyapunov[i]:.17g},"
            f"{trace.range_residual[i]:.17g},{trace.rel_error[i]:.17g}"
        )
    Path(path).write_text("\n".join(lines) + "\n")
