"""Direct linear solver and Newton iteration tests."""

from __future__ import annotations

import numpy as np
import pytest
import scipy.sparse as sp

from bfdarcy import (
    PhysicalParams,
    SingularSystemError,
    SolverError,
    generate_stacked_rect,
    manufactured_problem,
    newton_solve,
    sparse_lu_solve,
)
from bfdarcy.solver import NewtonOptions, nonlinear_residual

RECT_B = (-0.5, 0.5, 0.5, 1.5)
RECT_D = (-0.5, 0.5, -0.5, 0.5)


def manufactured(nx=4, forchheimer=10.0, power=3.0):
    params = PhysicalParams(
        mu=1.0, forchheimer=forchheimer, power=power, K_B=1.0, K_D=0.1
    )
    exact, data = manufactured_problem(params)
    mesh = generate_stacked_rect(RECT_B, RECT_D, nx, nx, nx)
    return mesh, params, data


# ------------------------------------------------------------- sparse LU


def test_lu_solves_the_identity():
    A = sp.eye(5, format="csr")
    b = np.arange(5.0)
    np.testing.assert_allclose(sparse_lu_solve(A, b), b, atol=1e-15)


def test_lu_handles_a_zero_diagonal():
    # requires pivoting: the matrix swaps the two unknowns
    A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    x = sparse_lu_solve(A, np.array([1.0, 2.0]))
    np.testing.assert_allclose(x, [2.0, 1.0], atol=1e-15)


def test_lu_matches_dense_solve_on_a_saddle_block():
    rng = np.random.default_rng(42)
    n, m = 160, 40
    K = rng.normal(size=(n, n))
    K = K @ K.T + n * np.eye(n)  # SPD leading block
    B = rng.normal(size=(m, n))
    A = np.block([[K, B.T], [B, np.zeros((m, m))]])
    b = rng.normal(size=n + m)

    x = sparse_lu_solve(sp.csr_matrix(A), b)
    np.testing.assert_allclose(x, np.linalg.solve(A, b), atol=1e-8)


def test_lu_rejects_singular_matrices():
    A = sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 4.0]]))
    with pytest.raises(SingularSystemError):
        sparse_lu_solve(A, np.ones(2))
    # a structurally empty row as well
    A = sp.lil_matrix((3, 3))
    A[0, 0] = 1.0
    A[1, 1] = 1.0
    with pytest.raises(SingularSystemError):
        sparse_lu_solve(A.tocsr(), np.ones(3))


def test_lu_error_is_a_solver_error():
    assert issubclass(SingularSystemError, SolverError)


# ---------------------------------------------------------------- Newton


def test_linear_problem_needs_one_iteration():
    mesh, params, data = manufactured(forchheimer=0.0)
    fields, report = newton_solve(mesh, params, data)
    assert report.converged
    assert report.iterations == 1
    assert report.increments == [0.0]
    assert "converged in 1 iterations" in str(report)


def test_newton_converges_quadratically_fast():
    mesh, params, data = manufactured(forchheimer=10.0)
    fields, report = newton_solve(mesh, params, data)
    assert report.converged
    assert 3 <= report.iterations <= 4
    assert report.increments[-1] <= 1.0e-6
    # increments fall strictly after the first correction
    assert all(b < a for a, b in zip(report.increments[1:], report.increments[2:]))


def test_newton_respects_the_tolerance_option():
    mesh, params, data = manufactured(forchheimer=10.0)
    _, loose = newton_solve(mesh, params, data, NewtonOptions(tol=1e-2))
    _, tight = newton_solve(mesh, params, data, NewtonOptions(tol=1e-10))
    assert loose.iterations < tight.iterations
    assert tight.increments[-1] <= 1e-10


def test_newton_reports_failure_when_iterations_run_out():
    mesh, params, data = manufactured(forchheimer=1.0e3)
    fields, report = newton_solve(mesh, params, data, NewtonOptions(max_iter=2))
    assert not report.converged
    assert report.iterations == 2
    assert "NOT converged" in str(report)


def test_newton_rejects_bad_pressure_mode():
    mesh, params, data = manufactured()
    with pytest.raises(ValueError, match="pressure mode"):
        newton_solve(mesh, params, data, NewtonOptions(pressure_mode="lagrange"))


def test_newton_solution_zeroes_the_nonlinear_residual():
    mesh, params, data = manufactured(forchheimer=10.0, power=3.5)
    fields, report = newton_solve(mesh, params, data, NewtonOptions(tol=1e-12))
    assert report.converged
    assert nonlinear_residual(fields, params, data) < 1e-10


def test_newton_solution_is_initial_guess_independent():
    mesh, params, data = manufactured(forchheimer=100.0)
    f1, r1 = newton_solve(mesh, params, data, NewtonOptions(initial=(0.1, 0.0)))
    f2, r2 = newton_solve(mesh, params, data, NewtonOptions(initial=(-0.4, 0.2)))
    assert r1.converged and r2.converged
    nv = f1.dofmap.n_uB + f1.dofmap.n_uD
    # both runs end in the same basin: velocities agree to solver tolerance
    assert np.abs(f1.x[:nv] - f2.x[:nv]).max() < 1e-7


def test_report_dof_counts_free_field_unknowns():
    mesh, params, data = manufactured()
    fields, report = newton_solve(mesh, params, data)
    dofmap = fields.dofmap
    assert report.dof == dofmap.n_free
    assert report.dof == dofmap.n_fields - dofmap.constrained.size


def test_solution_fields_split_views():
    mesh, params, data = manufactured()
    fields, _ = newton_solve(mesh, params, data)
    dofmap = fields.dofmap
    assert fields.u_B.size == dofmap.n_uB
    assert fields.u_D.size == dofmap.n_uD
    assert fields.p.size == mesh.num_triangles
    assert fields.lam.size == fields.interface.num_nodes
    np.testing.assert_array_equal(fields.u_B, fields.x[: dofmap.n_uB])
