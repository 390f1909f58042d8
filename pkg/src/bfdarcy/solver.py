"""Newton linearization of the coupled problem and the direct linear solve.

Each Newton step solves for the new iterate directly: the left-hand side
carries the Gateaux derivative at the current iterate, the right-hand
side the load functional plus the correction F (p-2)(|w|^(p-2) w, v_B).
The iteration stops when the relative l2 increment of the coefficient
vector drops to the tolerance; with a vanishing Forchheimer coefficient
the operator is affine and a single solve is the exact discrete solution.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import assembly as asm
from .elements import interpolate_br
from .mesh import build_interface


class SolverError(RuntimeError):
    """Linear or nonlinear solve failed."""


class SingularSystemError(SolverError):
    """The factorization hit an exactly singular pivot."""


# Normalized-residual bound the direct solve must meet (backward-error
# style: ||Ax-b||_inf / (||A||_inf ||x||_inf + ||b||_inf)).
LU_RESIDUAL_TOL = 1.0e-10


def _normalized_residual(A, x, b):
    num = np.abs(A @ x - b).max() if b.size else 0.0
    den = (
        np.abs(A).sum(axis=1).max() * np.abs(x).max() + np.abs(b).max()
        if b.size
        else 1.0
    )
    return num / den if den > 0.0 else num


def sparse_lu_solve(A, b):
    """Solve A x = b by sparse LU with partial pivoting.

    Raises SingularSystemError on an exactly singular pivot and
    SolverError if the normalized residual stays above LU_RESIDUAL_TOL
    even after one step of iterative refinement.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    try:
        lu = splu(A)
    except RuntimeError as exc:
        raise SingularSystemError(f"sparse LU factorization failed: {exc}") from exc
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("sparse LU produced non-finite values")
    res = _normalized_residual(A, x, b)
    if res > LU_RESIDUAL_TOL:
        x = x + lu.solve(b - A @ x)
        res = _normalized_residual(A, x, b)
        if res > LU_RESIDUAL_TOL:
            raise SolverError(f"direct solve residual {res:g} exceeds {LU_RESIDUAL_TOL:g}")
    return x


@dataclass
class NewtonOptions:
    tol: float = 1.0e-6
    max_iter: int = 50
    initial: tuple = (0.1, 0.0)
    pressure_mode: str = "constraint"
    quad_degree: int = 6


@dataclass
class SolutionFields:
    """Solution vector together with its layout and mesh context."""

    x: np.ndarray
    dofmap: asm.DofMap
    mesh: object
    interface: object

    @property
    def u_B(self):
        return self.dofmap.split(self.x)[0]

    @property
    def u_D(self):
        return self.dofmap.split(self.x)[1]

    @property
    def p(self):
        return self.dofmap.split(self.x)[2]

    @property
    def lam(self):
        return self.dofmap.split(self.x)[3]


@dataclass
class SolveReport:
    """Outcome of one nonlinear solve."""

    iterations: int
    increments: list
    linear_residuals: list
    converged: bool
    dof: int
    tol: float

    def __str__(self):
        state = "converged" if self.converged else "NOT converged"
        return (
            f"{state} in {self.iterations} iterations "
            f"(dof={self.dof}, last increment={self.increments[-1]:.3e})"
        )


def newton_solve(mesh, params, data, options=None):
    """Solve the coupled nonlinear problem on a mesh.

    Returns (SolutionFields, SolveReport).  The iteration count equals
    the number of linear solves performed.
    """
    opts = options or NewtonOptions()
    if opts.pressure_mode not in ("constraint", "penalty"):
        raise ValueError(f"pressure mode must be constraint|penalty, got {opts.pressure_mode!r}")
    asm.check_permeabilities(params, mesh, opts.quad_degree)
    interface = build_interface(mesh)
    dofmap = asm.build_dofmap(mesh, interface, data)
    ws = asm.Workspace(mesh, interface, dofmap, degree=opts.quad_degree)

    x = np.zeros(dofmap.n_total)
    init = np.asarray(opts.initial, dtype=float)
    x[: dofmap.n_uB] = interpolate_br(
        lambda pts: np.broadcast_to(init, (len(pts), 2)).copy(), mesh, space=dofmap.br
    )
    if dofmap.constrained.size:
        x[dofmap.constrained] = dofmap.constrained_values

    static = asm.SparseSystem(dofmap.n_total)
    loc_B, loc_D = asm._velocity_linear_local(params, ws)
    asm._scatter_square(static, dofmap.br.l2g, loc_B)
    asm._scatter_square(static, dofmap.off_uD + dofmap.rt.l2g, loc_D)
    asm._add_b_triplets(static, ws)
    base_rhs = asm.assemble_rhs(data, params, mesh, workspace=ws)

    affine = params.forchheimer == 0.0
    # The Newton map feeds back only through the velocity iterate, so the
    # Cauchy test runs on the velocity coefficient block.
    nv = dofmap.n_uB + dofmap.n_uD
    increments = []
    residuals = []
    converged = False

    max_iter = 1 if affine else opts.max_iter
    for it in range(1, max_iter + 1):
        system = asm.SparseSystem(dofmap.n_total)
        system._rows = list(static._rows)
        system._cols = list(static._cols)
        system._vals = list(static._vals)
        rhs = base_rhs
        if not affine:
            loc_F = asm._forchheimer_local(x[: dofmap.n_uB], params, ws)
            asm._scatter_square(system, dofmap.br.l2g, loc_F)
            rhs = asm.assemble_rhs(data, params, mesh, workspace=ws, w=x)
        system.rhs[:] = rhs

        A, b = asm.apply_constraints(system, dofmap, opts.pressure_mode, mesh)
        try:
            x_new = sparse_lu_solve(A, b)
        except SolverError as exc:
            raise SolverError(f"linear solve failed at Newton iteration {it}: {exc}") from exc
        residuals.append(_normalized_residual(A, x_new, b))

        if affine:
            increments.append(0.0)
            x = x_new
            converged = True
            break

        num = np.linalg.norm(x_new[:nv] - x[:nv])
        den = np.linalg.norm(x_new[:nv])
        inc = num / den if den > 0.0 else num
        increments.append(inc)
        x = x_new
        if inc <= opts.tol:
            converged = True
            break

    fields = SolutionFields(x=x, dofmap=dofmap, mesh=mesh, interface=interface)
    report = SolveReport(
        iterations=len(increments),
        increments=increments,
        linear_residuals=residuals,
        converged=converged,
        dof=dofmap.n_free,
        tol=opts.tol,
    )
    return fields, report


def nonlinear_residual(fields, params, data, workspace=None):
    """Max-norm of the nonlinear first-row residual on free velocity DOFs.

    Evaluates [a(u), v] + [b(v), (p, lam)] - [rhs, v] for every
    unconstrained velocity test function of the converged solution.
    """
    dofmap, mesh = fields.dofmap, fields.mesh
    ws = workspace or asm.Workspace(mesh, fields.interface, dofmap)
    act = asm.assemble_a_nonlinear(fields.x, params, mesh, workspace=ws)
    bsys = asm.SparseSystem(dofmap.n_total)
    asm._add_b_triplets(bsys, ws)
    act += bsys.to_csr() @ fields.x
    act -= asm.assemble_rhs(data, params, mesh, workspace=ws)
    vel = np.zeros(dofmap.n_total, dtype=bool)
    vel[: dofmap.n_uB + dofmap.n_uD] = True
    vel[dofmap.constrained] = False
    return np.abs(act[vel]).max()
