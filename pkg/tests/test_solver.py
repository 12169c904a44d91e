import numpy as np
import pytest
import scipy.sparse as sp

from dgtwophase.solver import (LinearSolverError, LinearSystem, NewtonConfig,
                               NonlinearSolverError, linear_solve, newton_solve)


@pytest.mark.parametrize("sparse", [False, True])
def test_identity(sparse):
    b = np.arange(1.0, 6.0)
    A = sp.identity(5, format="csr") if sparse else np.eye(5)
    assert np.allclose(linear_solve(LinearSystem(A, b)), b)


@pytest.mark.parametrize("sparse", [False, True])
def test_two_by_two(sparse):
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    A = sp.csr_matrix(A) if sparse else A
    assert np.allclose(linear_solve(LinearSystem(A, np.array([3.0, 3.0]))), [1.0, 1.0])


@pytest.mark.parametrize("sparse", [False, True])
def test_singular_matrix_raises(sparse):
    A = sp.csr_matrix((3, 3)) if sparse else np.zeros((3, 3))
    with pytest.raises(LinearSolverError):
        linear_solve(LinearSystem(A, np.ones(3)))


def test_iterative_path_matches_direct():
    rng = np.random.default_rng(0)
    n = 300
    A = sp.random(n, n, density=0.02, random_state=1, format="csr") + 10 * sp.identity(n)
    b = rng.normal(size=n)
    x_direct = linear_solve(LinearSystem(A, b))
    x_krylov = linear_solve(LinearSystem(A, b), tol=1e-12, direct_threshold=10)
    assert np.allclose(x_direct, x_krylov, rtol=1e-8, atol=1e-10)


def test_linear_solve_deterministic():
    rng = np.random.default_rng(3)
    A = sp.random(200, 200, density=0.05, random_state=2, format="csr") + 5 * sp.identity(200)
    b = rng.normal(size=200)
    assert np.array_equal(linear_solve(LinearSystem(A, b)), linear_solve(LinearSystem(A, b)))


def test_newton_affine_one_step():
    A = np.array([[4.0, 1.0], [2.0, 3.0]])
    b = np.array([1.0, 2.0])
    u, its = newton_solve(lambda u: (A @ u - b, A), np.zeros(2))
    assert its == 1 and np.allclose(A @ u, b)


def test_newton_scalar_square_root():
    iterates = []

    def provider(u):
        iterates.append(u[0])
        return np.array([u[0] ** 2 - 4.0]), np.array([[2.0 * u[0]]])

    u, its = newton_solve(provider, np.array([3.0]), NewtonConfig(atol=1e-10))
    assert iterates[1] == pytest.approx(3 - 5 / 6, abs=1e-15)
    assert its <= 5 and abs(u[0] - 2.0) < 1e-10
    err = np.abs(np.array(iterates) - 2.0)
    err = err[err > 1e-14]
    assert np.all(err[1:] / err[:-1] ** 2 < 10)  # quadratic convergence


def test_singular_jacobian_is_a_nonlinear_failure():
    with pytest.raises(NonlinearSolverError):
        newton_solve(lambda u: (np.array([u[0] ** 2 + 1.0]), np.array([[2.0 * u[0]]])),
                     np.array([0.0]))


def test_divergence_detected():
    # Newton on arctan from far away overshoots with growing residuals
    f = lambda u: (np.arctan(u), np.array([[1.0 / (1.0 + u[0] ** 2)]]))
    with pytest.raises(NonlinearSolverError) as err:
        newton_solve(f, np.array([3.0]))
    assert err.value.last is not None


def test_line_search_rescues_arctan():
    f = lambda u: (np.arctan(u), np.array([[1.0 / (1.0 + u[0] ** 2)]]))
    u, _ = newton_solve(f, np.array([3.0]), NewtonConfig(atol=1e-12, rtol=1e-14, line_search=True))
    assert abs(u[0]) < 1e-9


def test_post_step_maps_every_iterate():
    seen = []

    def clamp(u):
        seen.append(u.copy())
        return np.maximum(u, 1.0)

    u, _ = newton_solve(lambda u: (np.array([u[0] ** 2 - 4.0]), np.array([[2.0 * u[0]]])),
                        np.array([3.0]), post_step=clamp)
    assert len(seen) >= 3 and abs(u[0] - 2.0) < 1e-10


def test_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(atol=0)
    with pytest.raises(ValueError):
        NewtonConfig(max_iter=0)
