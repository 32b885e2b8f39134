"""Backend selection and compiled-versus-numpy kernel agreement."""

import numpy as np
import pytest

from saddlekit import (
    DistributedAlgorithm,
    DistributedParams,
    EqualityConstrainedProblem,
    Method,
    QuadraticCost,
    SolverConfig,
    active_backend,
    build_consensus_operators,
    compiled_available,
    consensus_reference,
    make_multi_agent_problem,
    metropolis_weights,
    random_connected_network,
    run_distributed,
    run_solver,
    solve_kkt_reference,
)
from saddlekit.kernels import backend_module
from conftest import random_problem

needs_compiled = pytest.mark.skipif(
    not compiled_available(), reason="compiled kernel extension not built"
)


def small_distributed_setup(seed, node_count=5, block_dim=3):
    rng = np.random.default_rng(seed)
    network = random_connected_network(node_count, 0.5, rng)
    weights = metropolis_weights(network)
    ops = build_consensus_operators(weights, block_dim)
    costs = [
        QuadraticCost(
            np.diag(rng.uniform(0.5, 2.0, block_dim)),
            rng.standard_normal(block_dim),
        )
        for _ in range(node_count)
    ]
    problem = make_multi_agent_problem(network, costs, ops)
    return rng, ops, problem


class TestBackendSelection:
    def test_active_backend_is_a_known_name(self):
        assert active_backend() in ("compiled", "python")

    def test_environment_override_forces_fallback(self, monkeypatch):
        monkeypatch.setenv("SADDLEKIT_PURE_PYTHON", "1")
        assert active_backend() == "python"
        monkeypatch.setenv("SADDLEKIT_PURE_PYTHON", "0")
        expected = "compiled" if compiled_available() else "python"
        assert active_backend() == expected

    def test_backend_modules_report_their_names(self):
        assert backend_module("python").BACKEND_NAME == "python"
        if compiled_available():
            assert backend_module("compiled").BACKEND_NAME == "compiled"

    def test_unknown_backend_name_rejected(self):
        with pytest.raises(ValueError, match="unknown backend"):
            backend_module("fortran")

    def test_run_solver_rejects_unknown_backend(self):
        rng = np.random.default_rng(1)
        problem = random_problem(rng, dim=2, n_constraints=1)
        config = SolverConfig(mu_w=0.01, mu_lambda=0.01, max_iterations=2)
        with pytest.raises(ValueError, match="unknown backend"):
            run_solver(problem, config, Method.INCREMENTAL, backend="fortran")


@needs_compiled
class TestSingleProblemAgreement:
    def test_traces_match_across_backends(self):
        """Both backends produce the same rows, status, and final state."""
        for seed in range(6):
            rng = np.random.default_rng(100 + seed)
            problem = random_problem(rng)
            reference = solve_kkt_reference(problem)
            config = SolverConfig(
                mu_w=0.02, mu_lambda=0.05, rho=0.5, eta=0.5,
                max_iterations=80, stop_tolerance=0.0,
                w_init=rng.standard_normal(problem.dim_primal),
            )
            for method in (Method.INCREMENTAL, Method.NONINCREMENTAL):
                t_c = run_solver(problem, config, method, reference=reference, backend="compiled")
                t_p = run_solver(problem, config, method, reference=reference, backend="python")
                assert t_c.status is t_p.status
                np.testing.assert_allclose(
                    t_c.primal_err_sq, t_p.primal_err_sq, rtol=1e-10, atol=1e-13
                )
                np.testing.assert_allclose(
                    t_c.lyapunov, t_p.lyapunov, rtol=1e-10, atol=1e-13
                )
                np.testing.assert_allclose(
                    t_c.range_residual, t_p.range_residual, rtol=1e-8, atol=1e-13
                )
                np.testing.assert_allclose(
                    t_c.final_state.w, t_p.final_state.w, rtol=0, atol=1e-12
                )
                np.testing.assert_allclose(
                    t_c.final_state.lam, t_p.final_state.lam, rtol=0, atol=1e-12
                )

    def test_forward_backward_agreement(self):
        rng = np.random.default_rng(7)
        cost = QuadraticCost(np.eye(4) + 0.2 * np.ones((4, 4)), rng.standard_normal(4))
        problem = EqualityConstrainedProblem(
            cost=cost,
            constraint_matrix=rng.standard_normal((2, 4)),
            constraint_rhs=np.zeros(2),
        )
        config = SolverConfig(
            mu_w=0.05, mu_lambda=0.1, max_iterations=60, stop_tolerance=0.0,
            w_init=rng.standard_normal(4),
        )
        t_c = run_solver(problem, config, Method.FORWARD_BACKWARD, backend="compiled")
        t_p = run_solver(problem, config, Method.FORWARD_BACKWARD, backend="python")
        np.testing.assert_allclose(t_c.final_state.w, t_p.final_state.w, atol=1e-12)
        np.testing.assert_allclose(t_c.final_state.lam, t_p.final_state.lam, atol=1e-12)

    def test_divergence_detected_at_the_same_step(self):
        problem = EqualityConstrainedProblem(
            cost=QuadraticCost(np.array([[-1.0]]), np.array([0.0])),
            constraint_matrix=np.array([[1.0]]),
            constraint_rhs=np.array([0.0]),
        )
        config = SolverConfig(
            mu_w=0.3, mu_lambda=0.1, max_iterations=2000,
            divergence_threshold=1e5, stop_tolerance=0.0,
            w_init=np.array([1.0]),
        )
        t_c = run_solver(problem, config, Method.INCREMENTAL, backend="compiled")
        t_p = run_solver(problem, config, Method.INCREMENTAL, backend="python")
        assert t_c.status is t_p.status
        assert t_c.iterations_run == t_p.iterations_run
        np.testing.assert_allclose(t_c.final_state.w, t_p.final_state.w, rtol=1e-12)


@needs_compiled
class TestDistributedAgreement:
    def test_all_algorithms_match_across_backends(self):
        rng, ops, problem = small_distributed_setup(seed=200)
        reference = consensus_reference(problem, ops)
        runs = [
            (DistributedAlgorithm.PD, DistributedParams(mu_w=0.05, mu_lambda=0.05, rho=1.0)),
            (DistributedAlgorithm.EXTRA, DistributedParams(mu=0.05)),
            (DistributedAlgorithm.EXACT_DIFFUSION, DistributedParams(mu=0.05)),
            (DistributedAlgorithm.DIFFUSION, DistributedParams(mu=0.05)),
            (DistributedAlgorithm.DIGING, DistributedParams(mu=0.05)),
            (DistributedAlgorithm.DLM, DistributedParams(c=0.5, d=6.0)),
        ]
        W0 = rng.standard_normal((problem.network.node_count, problem.block_dim))
        for algorithm, params in runs:
            t_c = run_distributed(
                problem, ops, algorithm, params, max_iterations=120,
                stop_tolerance=0.0, primal_init=W0, reference=reference,
                backend="compiled",
            )
            t_p = run_distributed(
                problem, ops, algorithm, params, max_iterations=120,
                stop_tolerance=0.0, primal_init=W0, reference=reference,
                backend="python",
            )
            assert t_c.status is t_p.status
            np.testing.assert_allclose(
                t_c.rel_error, t_p.rel_error, rtol=1e-9, atol=1e-14,
                err_msg=algorithm.value,
            )
            np.testing.assert_allclose(
                t_c.dual_err_sq, t_p.dual_err_sq, rtol=1e-9, atol=1e-12, equal_nan=True,
                err_msg=algorithm.value,
            )
            np.testing.assert_allclose(
                t_c.final_state.primal, t_p.final_state.primal, rtol=0, atol=1e-12,
                err_msg=algorithm.value,
            )
            np.testing.assert_allclose(
                t_c.final_state.dual, t_p.final_state.dual, rtol=0, atol=1e-12,
                err_msg=algorithm.value,
            )

    def test_early_stopping_agreement(self):
        _, ops, problem = small_distributed_setup(seed=201)
        reference = consensus_reference(problem, ops)
        params = DistributedParams(mu_w=0.1, mu_lambda=0.1, rho=1.0)
        t_c = run_distributed(
            problem, ops, DistributedAlgorithm.PD, params,
            max_iterations=50000, stop_tolerance=1e-9, reference=reference,
            backend="compiled",
        )
        t_p = run_distributed(
            problem, ops, DistributedAlgorithm.PD, params,
            max_iterations=50000, stop_tolerance=1e-9, reference=reference,
            backend="python",
        )
        assert t_c.status.value == "CONVERGED"
        assert t_c.iterations_run == t_p.iterations_run
