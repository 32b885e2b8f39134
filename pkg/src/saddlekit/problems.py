"""Equality-constrained problems and their reference saddle points.

Provides the problem containers (quadratic costs, linear equality
constraints), spectral quantities of the constraint matrix, regularity
constants (smoothness / strong convexity, with and without an augmenting
penalty), a dense KKT reference solve with a minimum-norm dual, and a
sampling-based regularity verifier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "QuadraticCost",
    "EqualityConstrainedProblem",
    "SpectralInfo",
    "RegularityConstants",
    "SaddleReference",
    "RegularityReport",
    "spectral_quantities",
    "range_projector",
    "solve_kkt_reference",
    "range_space_dual",
    "regularity_from_quadratic",
    "verify_regularity",
    "check_gradient",
    "problem_to_json",
    "problem_from_json",
    "save_problem",
    "load_problem",
]

# residual budget for accepting a KKT reference solution
KKT_TOL = 1e-9
# least-squares residual budget for constraint attainability and stationarity
CONSISTENCY_TOL = 1e-8


def _frozen_array(values) -> np.ndarray:
    out = np.array(values, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class QuadraticCost:
    """Cost ``J(w) = w' R w + r' w`` with a symmetrized quadratic term.

    The stored quadratic term is ``(R + R') / 2``, which leaves the cost
    value unchanged and makes the gradient ``2 R w + r`` exact for the
    stored matrix.  Arrays are copied and marked read-only.
    """

    quadratic_term: np.ndarray
    linear_term: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.quadratic_term, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("quadratic term must be a square matrix")
        if not np.all(np.isfinite(R)):
            raise ValueError("quadratic term entries must be finite")
        r = np.asarray(self.linear_term, dtype=float).reshape(-1)
        if r.shape[0] != R.shape[0]:
            raise ValueError("linear term length must match the quadratic term size")
        if not np.all(np.isfinite(r)):
            raise ValueError("linear term entries must be finite")
        # 0.5*(R[i,j]+R[j,i]) is bitwise symmetric: float addition commutes
        object.__setattr__(self, "quadratic_term", _frozen_array(0.5 * (R + R.T)))
        object.__setattr__(self, "linear_term", _frozen_array(r))

    @property
    def dim(self) -> int:
        return self.quadratic_term.shape[0]

    def value(self, w: np.ndarray) -> float:
        w = np.asarray(w, dtype=float)
        return float(w @ (self.quadratic_term @ w) + self.linear_term @ w)

    def gradient(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return 2.0 * (self.quadratic_term @ w) + self.linear_term

    def hessian(self) -> np.ndarray:
        """Constant Hessian ``2 R``."""
        return 2.0 * self.quadratic_term


@dataclass(frozen=True)
class EqualityConstrainedProblem:
    """Problem ``min_w J(w)  subject to  B w = b``.

    ``cost`` is any oracle exposing ``value(w)`` and ``gradient(w)``.
    Construction checks shapes, finiteness, and attainability of the
    right-hand side (least-squares residual of ``B x = b`` below
    tolerance).  Arrays are copied and marked read-only.
    """

    cost: object
    constraint_matrix: np.ndarray
    constraint_rhs: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.constraint_matrix, dtype=float)
        if B.ndim != 2:
            raise ValueError("constraint matrix must be two-dimensional")
        if not np.all(np.isfinite(B)):
            raise ValueError("constraint matrix entries must be finite")
        b = np.asarray(self.constraint_rhs, dtype=float).reshape(-1)
        if b.shape[0] != B.shape[0]:
            raise ValueError("right-hand side length must match the constraint row count")
        if not np.all(np.isfinite(b)):
            raise ValueError("right-hand side entries must be finite")
        for attr in ("value", "gradient"):
            if not callable(getattr(self.cost, attr, None)):
                raise TypeError("cost oracle must provide value(w) and gradient(w)")
        cost_dim = getattr(self.cost, "dim", None)
        if cost_dim is not None and int(cost_dim) != B.shape[1]:
            raise ValueError(
                "constraint matrix column count must match the cost dimension"
            )
        x, *_ = np.linalg.lstsq(B, b, rcond=None)
        if np.linalg.norm(B @ x - b) > CONSISTENCY_TOL * (1.0 + np.linalg.norm(b)):
            raise ValueError(
                "right-hand side is not attainable: it lies outside the range "
                "of the constraint matrix"
            )
        object.__setattr__(self, "constraint_matrix", _frozen_array(B))
        object.__setattr__(self, "constraint_rhs", _frozen_array(b))

    @property
    def dim_primal(self) -> int:
        return self.constraint_matrix.shape[1]

    @property
    def dim_constraints(self) -> int:
        return self.constraint_matrix.shape[0]


@dataclass(frozen=True)
class SpectralInfo:
    """Singular-value summary of a constraint matrix.

    ``sigma_min_nonzero`` is the smallest singular value above the rank
    tolerance ``sigma_max * max(shape) * machine_eps``; for a full
    row-rank matrix it coincides with the smallest singular value.
    """

    sigma_max: float
    sigma_min: float
    sigma_min_nonzero: float
    rank: int
    singular_values: np.ndarray
    rank_tolerance: float

    def __post_init__(self):
        object.__setattr__(self, "singular_values", _frozen_array(self.singular_values))
        if self.rank < 1:
            raise ValueError("rank must be at least one")
        if not (self.sigma_max >= self.sigma_min_nonzero > self.rank_tolerance >= 0.0):
            raise ValueError("singular values inconsistent with the rank tolerance")
        if self.sigma_min > self.sigma_min_nonzero:
            raise ValueError("smallest singular value cannot exceed the smallest nonzero one")


def spectral_quantities(matrix: np.ndarray) -> SpectralInfo:
    """Singular values, rank, and extreme nonzero singular value of a matrix.

    Raises
    ------
    ValueError
        If the matrix is zero (no nonzero singular value exists) or has
        non-finite entries.
    """
    B = np.asarray(matrix, dtype=float)
    if B.ndim != 2:
        raise ValueError("matrix must be two-dimensional")
    if not np.all(np.isfinite(B)):
        raise ValueError("matrix entries must be finite")
    if not B.any():
        raise ValueError("zero matrix has no smallest nonzero singular value")
    s = np.linalg.svd(B, compute_uv=False)
    tol = float(s[0]) * max(B.shape) * np.finfo(float).eps
    rank = int(np.count_nonzero(s > tol))
    return SpectralInfo(
        sigma_max=float(s[0]),
        sigma_min=float(s[-1]),
        sigma_min_nonzero=float(s[rank - 1]),
        rank=rank,
        singular_values=s,
        rank_tolerance=tol,
    )


def range_projector(matrix: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the column space of ``matrix``.

    Returned as a dense symmetric matrix ``U_r U_r'`` built from the left
    singular vectors associated with singular values above the rank
    tolerance.
    """
    B = np.asarray(matrix, dtype=float)
    info = spectral_quantities(B)
    U, _, _ = np.linalg.svd(B)
    Ur = U[:, : info.rank]
    P = Ur @ Ur.T
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class RegularityConstants:
    """Smoothness and strong-convexity constants, plain and penalized.

    ``delta_rho = delta + rho * sigma_max(B)^2`` is the smoothness of the
    penalized cost; ``nu_rho`` its strong-convexity constant relative to
    the optimum.  Construction enforces ``0 < nu_rho <= delta_rho``.
    """

    delta: float
    nu: float
    rho: float
    delta_rho: float
    nu_rho: float

    def __post_init__(self):
        if not (self.delta > 0.0):
            raise ValueError("smoothness constant must be positive")
        if self.nu < 0.0:
            raise ValueError("strong-convexity constant cannot be negative")
        if self.rho < 0.0:
            raise ValueError("penalty weight cannot be negative")
        if not (0.0 < self.nu_rho <= self.delta_rho):
            raise ValueError(
                "penalized strong convexity must satisfy 0 < nu_rho <= delta_rho"
            )


def regularity_from_quadratic(
    cost: QuadraticCost, constraint_matrix: np.ndarray, rho: float
) -> RegularityConstants:
    """Tight constants for a quadratic cost under a quadratic penalty.

    ``delta`` is the largest eigenvalue of ``2R``, ``nu`` the smallest
    clipped at zero, and ``nu_rho`` the smallest eigenvalue of
    ``2R + rho B'B`` (which must be positive).
    """
    if rho < 0.0:
        raise ValueError("penalty weight cannot be negative")
    H = cost.hessian()
    eigs = np.linalg.eigvalsh(0.5 * (H + H.T))
    delta = float(eigs[-1])
    nu = float(max(eigs[0], 0.0))
    B = np.asarray(constraint_matrix, dtype=float)
    info = spectral_quantities(B)
    delta_rho = delta + rho * info.sigma_max**2
    Hrho = H + rho * (B.T @ B)
    nu_rho = float(np.linalg.eigvalsh(0.5 * (Hrho + Hrho.T))[0])
    if nu_rho <= 0.0:
        raise ValueError(
            "penalized cost is not strongly convex: smallest curvature is "
            f"{nu_rho:.3e}; the regularity assumptions fail"
        )
    return RegularityConstants(delta=delta, nu=nu, rho=float(rho), delta_rho=delta_rho, nu_rho=nu_rho)


@dataclass(frozen=True)
class SaddleReference:
    """Primal optimum and the minimum-norm (range-space) dual certificate."""

    w_star: np.ndarray
    lambda_star: np.ndarray
    kkt_stationarity_residual: float
    kkt_feasibility_residual: float

    def __post_init__(self):
        object.__setattr__(self, "w_star", _frozen_array(self.w_star))
        object.__setattr__(self, "lambda_star", _frozen_array(self.lambda_star))


def range_space_dual(gradient_at_optimum: np.ndarray, matrix: np.ndarray) -> np.ndarray:
    """Minimum-norm dual solving ``B' lam = -gradient``.

    The minimum-norm least-squares solution automatically lies in the
    column space of ``B``.  Raises if the stationarity system is
    inconsistent, i.e. the point is not a constrained optimum.
    """
    g = np.asarray(gradient_at_optimum, dtype=float).reshape(-1)
    B = np.asarray(matrix, dtype=float)
    lam, *_ = np.linalg.lstsq(B.T, -g, rcond=None)
    if np.linalg.norm(B.T @ lam + g) > CONSISTENCY_TOL * (1.0 + np.linalg.norm(g)):
        raise ValueError(
            "stationarity system is inconsistent: the gradient is not in the "
            "range of the constraint transpose, so the point is not a "
            "constrained optimum"
        )
    return lam


def solve_kkt_reference(problem: EqualityConstrainedProblem) -> SaddleReference:
    """Dense KKT solve returning the unique primal optimum and min-norm dual.

    Requires a quadratic cost whose Hessian is positive definite on the
    null space of the constraint matrix (unique minimizer).  The dual is
    the minimum-norm solution of the stationarity system, hence lies in
    the range of the constraint matrix.

    Raises
    ------
    ValueError
        With message ``problem violates the regularity assumptions`` when
        the reduced Hessian is not positive definite or the KKT residuals
        exceed tolerance.
    """
    cost = problem.cost
    if not isinstance(cost, QuadraticCost):
        raise TypeError("reference solve requires a quadratic cost")
    B = problem.constraint_matrix
    b = problem.constraint_rhs
    M = problem.dim_primal
    E = problem.dim_constraints
    H = cost.hessian()

    # unique minimizer needs positive curvature along the constraint null space
    _, s, Vt = np.linalg.svd(B)
    tol = float(s[0]) * max(B.shape) * np.finfo(float).eps if s[0] > 0 else 0.0
    rank = int(np.count_nonzero(s > tol))
    null_basis = Vt[rank:].T
    if null_basis.shape[1] > 0:
        reduced = null_basis.T @ H @ null_basis
        min_curv = float(np.linalg.eigvalsh(0.5 * (reduced + reduced.T))[0])
        if min_curv <= 1e-10 * (1.0 + float(np.abs(H).max())):
            raise ValueError(
                "problem violates the regularity assumptions: the cost is not "
                "positive definite on the constraint null space"
            )

    kkt = np.block([[H, B.T], [B, np.zeros((E, E))]])
    rhs = np.concatenate([-cost.linear_term, b])
    sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    w_star = sol[:M]
    grad = cost.gradient(w_star)
    lam_star = range_space_dual(grad, B)
    stat = float(np.linalg.norm(grad + B.T @ lam_star))
    feas = float(np.linalg.norm(B @ w_star - b))
    if stat > KKT_TOL * (1.0 + np.linalg.norm(grad)) or feas > KKT_TOL * (
        1.0 + np.linalg.norm(b)
    ):
        raise ValueError(
            "problem violates the regularity assumptions: KKT residuals "
            f"(stationarity {stat:.3e}, feasibility {feas:.3e}) exceed tolerance"
        )
    return SaddleReference(
        w_star=w_star,
        lambda_star=lam_star,
        kkt_stationarity_residual=stat,
        kkt_feasibility_residual=feas,
    )


@dataclass(frozen=True)
class RegularityReport:
    """Per-sample outcome of the sampling-based regularity check."""

    strong_convexity_ok: np.ndarray
    smoothness_ok: np.ndarray
    sample_scales: np.ndarray
    eigen_delta: float | None
    eigen_nu: float | None
    delta_consistent: bool | None
    nu_consistent: bool | None

    def __post_init__(self):
        object.__setattr__(self, "strong_convexity_ok", _frozen_array(self.strong_convexity_ok).astype(bool))
        object.__setattr__(self, "smoothness_ok", _frozen_array(self.smoothness_ok).astype(bool))
        object.__setattr__(self, "sample_scales", _frozen_array(self.sample_scales))

    @property
    def all_passed(self) -> bool:
        ok = bool(self.strong_convexity_ok.all()) and bool(self.smoothness_ok.all())
        for flag in (self.delta_consistent, self.nu_consistent):
            if flag is not None:
                ok = ok and flag
        return ok


def verify_regularity(
    problem: EqualityConstrainedProblem,
    rho: float,
    claimed: RegularityConstants,
    sample_count: int,
    seed: int = 0,
    reference: SaddleReference | None = None,
) -> RegularityReport:
    """Sample-test claimed regularity constants around the optimum.

    Draws ``sample_count`` points ``x = w* + scale * n`` with standard
    normal ``n`` and scales cycling through ``1, 10, 0.1``, and checks

    * strong convexity relative to the optimum:
      ``(x - w*)'(g_rho(x) - g_rho(w*)) >= nu_rho ||x - w*||^2``,
    * smoothness on sampled pairs:
      ``||g_rho(x) - g_rho(y)|| <= delta_rho ||x - y||``,

    where ``g_rho`` is the gradient of the penalized cost.  For a
    quadratic cost the claims are also checked one-sidedly against the
    tight eigenvalues: claimed smoothness constants must be at least
    the largest eigenvalue, claimed strong-convexity constants at most
    the smallest.  Conservative claims pass; inflated ones do not.
    """
    if sample_count < 1:
        raise ValueError("sample count must be at least one")
    if reference is None:
        reference = solve_kkt_reference(problem)
    B = problem.constraint_matrix
    b = problem.constraint_rhs
    cost = problem.cost

    def grad_pen(w):
        g = cost.gradient(w)
        if rho != 0.0:
            g = g + rho * (B.T @ (B @ w - b))
        return g

    w_star = reference.w_star
    g_star = grad_pen(w_star)
    rng = np.random.default_rng(seed)
    scales = np.array([1.0, 10.0, 0.1])
    M = problem.dim_primal

    sc_ok = np.zeros(sample_count, dtype=bool)
    sm_ok = np.zeros(sample_count, dtype=bool)
    used = np.zeros(sample_count)
    for i in range(sample_count):
        scale = scales[i % 3]
        used[i] = scale
        d = scale * rng.standard_normal(M)
        x = w_star + d
        lhs = float(d @ (grad_pen(x) - g_star))
        rhs = claimed.nu_rho * float(d @ d)
        sc_ok[i] = lhs >= rhs - 1e-9 * (1.0 + abs(lhs) + abs(rhs))
        y = w_star + scale * rng.standard_normal(M)
        gap = float(np.linalg.norm(grad_pen(x) - grad_pen(y)))
        bound = claimed.delta_rho * float(np.linalg.norm(x - y))
        sm_ok[i] = gap <= bound + 1e-9 * (1.0 + gap + bound)

    eigen_delta = eigen_nu = None
    delta_ok = nu_ok = None
    if isinstance(cost, QuadraticCost):
        eigs = np.linalg.eigvalsh(cost.hessian())
        eigen_delta = float(eigs[-1])
        eigen_nu = float(max(eigs[0], 0.0))
        pen_eigs = np.linalg.eigvalsh(cost.hessian() + rho * (B.T @ B))
        pen_delta = float(pen_eigs[-1])
        pen_nu = float(max(pen_eigs[0], 0.0))
        tol = 1e-8
        delta_ok = (
            claimed.delta >= eigen_delta - tol * (1.0 + abs(eigen_delta))
            and claimed.delta_rho >= pen_delta - tol * (1.0 + abs(pen_delta))
        )
        nu_ok = (
            claimed.nu <= eigen_nu + tol * (1.0 + abs(eigen_nu))
            and claimed.nu_rho <= pen_nu + tol * (1.0 + abs(pen_nu))
        )

    return RegularityReport(
        strong_convexity_ok=sc_ok,
        smoothness_ok=sm_ok,
        sample_scales=used,
        eigen_delta=eigen_delta,
        eigen_nu=eigen_nu,
        delta_consistent=delta_ok,
        nu_consistent=nu_ok,
    )


def check_gradient(
    cost,
    dim: int,
    seed: int = 0,
    num_points: int = 10,
    scale: float = 1.0,
) -> float:
    """Largest relative central-difference error of the gradient oracle.

    Uses step ``1e-6 * (1 + ||w||)`` at ``num_points`` random points.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_points):
        w = scale * rng.standard_normal(dim)
        g = np.asarray(cost.gradient(w), dtype=float)
        h = 1e-6 * (1.0 + np.linalg.norm(w))
        fd = np.zeros(dim)
        for j in range(dim):
            e = np.zeros(dim)
            e[j] = h
            fd[j] = (cost.value(w + e) - cost.value(w - e)) / (2.0 * h)
        err = np.linalg.norm(fd - g) / (1.0 + np.linalg.norm(g))
        worst = max(worst, float(err))
    return worst


# --- JSON problem interchange -------------------------------------------------
# document layout: {"M": int, "E": int, "R": [[...]], "r": [...],
#                   "B": [[...]], "b": [...]}, row-major doubles


def problem_to_json(problem: EqualityConstrainedProblem) -> str:
    cost = problem.cost
    if not isinstance(cost, QuadraticCost):
        raise TypeError("only quadratic-cost problems have a JSON form")
    doc = {
        "M": problem.dim_primal,
        "E": problem.dim_constraints,
        "R": cost.quadratic_term.tolist(),
        "r": cost.linear_term.tolist(),
        "B": problem.constraint_matrix.tolist(),
        "b": problem.constraint_rhs.tolist(),
    }
    return json.dumps(doc)


def problem_from_json(text: str) -> EqualityConstrainedProblem:
    doc = json.loads(text)
    for key in ("M", "E", "R", "r", "B", "b"):
        if key not in doc:
            raise ValueError(f"problem document is missing field '{key}'")
    M = int(doc["M"])
    E = int(doc["E"])
    R = np.asarray(doc["R"], dtype=float)
    r = np.asarray(doc["r"], dtype=float)
    B = np.asarray(doc["B"], dtype=float)
    b = np.asarray(doc["b"], dtype=float)
    if R.shape != (M, M) or r.shape != (M,):
        raise ValueError("cost dimensions disagree with the declared primal size")
    if B.shape != (E, M) or b.shape != (E,):
        raise ValueError("constraint dimensions disagree with the declared sizes")
    return EqualityConstrainedProblem(
        cost=QuadraticCost(quadratic_term=R, linear_term=r),
        constraint_matrix=B,
        constraint_rhs=b,
    )


def save_problem(problem: EqualityConstrainedProblem, path) -> None:
    Path(path).write_text(problem_to_json(problem))


def load_problem(path) -> EqualityConstrainedProblem:
    return problem_from_json(Path(path).read_text())
