"""Shared generators for randomized test problems."""

import numpy as np

from saddlekit import EqualityConstrainedProblem, QuadraticCost


def random_spd_quadratic(rng, dim, nu_floor=0.5, spread=4.0):
    """Random strongly convex quadratic with curvature in [nu_floor, nu_floor + spread]."""
    Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eigs = nu_floor + spread * rng.random(dim)
    R = 0.5 * (Q * eigs) @ Q.T
    R = 0.5 * (R + R.T)
    r = rng.standard_normal(dim)
    return QuadraticCost(R, r)


def random_problem(rng, dim=None, n_constraints=None, rank_deficient=False):
    """Strongly convex quadratic with a feasible linear constraint.

    With ``rank_deficient`` the constraint matrix gets a repeated row,
    so its row rank drops below the row count.
    """
    if dim is None:
        dim = int(rng.integers(2, 11))
    if n_constraints is None:
        n_constraints = int(rng.integers(1, min(dim, 6) + 1))
    cost = random_spd_quadratic(rng, dim)
    B = rng.standard_normal((n_constraints, dim))
    if rank_deficient and n_constraints >= 2:
        B[-1] = B[0]
    # consistent right-hand side by construction
    b = B @ rng.standard_normal(dim)
    return EqualityConstrainedProblem(
        cost=cost, constraint_matrix=B, constraint_rhs=b
    )
