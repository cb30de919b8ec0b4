"""
Projection of a force estimate onto a gradient.

Solves the weighted Poisson problem div(psi grad A) = div(psi F) on the
periodic grid with conjugate gradients. The operator is applied matrix-free
as L_psi = divergence o (psi * gradient), which with the collocated centered
stencils equals -G^T diag(psi) G and is symmetric negative semidefinite.
Iterates, right-hand side and operator output are kept mean-zero, which
removes the constant nullspace. The Jacobi preconditioner output is cleared
of the odd-even modes of the centered gradient as well, so CG started in the
range of the operator stays there and returns the minimum-norm potential.
"""

import logging
import math

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.sparse.linalg import LinearOperator, cg

from pabf.errors import ProjectionPreconditionError, ProjectionSolverError
from pabf.rcgrid import (
    ScalarField,
    VectorField,
    divergence,
    divergence_array,
    gradient,
    gradient_array,
    integrate,
)

logger = logging.getLogger(__name__)


class ProjectionResult(BaseModel):
    """Mean-zero potential A with its gradient and solver statistics."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    A: ScalarField
    gradA: VectorField
    residual_div: float
    iterations: int


def apply_weighted_laplacian(psi, a):
    """
    Apply L_psi to a (n2, n1) array.

    Args:
        psi: ScalarField of weights.
        a: Node values of shape (n2, n1).

    Returns:
        div(psi * grad a) as a (n2, n1) array.
    """
    g = psi.grid
    d1, d2 = gradient_array(a, g.h1, g.h2)
    weight = psi.array
    return divergence_array(weight * d1, weight * d2, g.h1, g.h2)


def jacobi_diagonal(psi):
    """Diagonal of -L_psi as a (n2, n1) array; needs n1, n2 >= 3."""
    g = psi.grid
    w = psi.array
    along1 = (np.roll(w, -1, axis=1) + np.roll(w, 1, axis=1)) / (4.0 * g.h1 * g.h1)
    along2 = (np.roll(w, -1, axis=0) + np.roll(w, 1, axis=0)) / (4.0 * g.h2 * g.h2)
    return along1 + along2


def null_basis(grid):
    """Orthonormal rows spanning the kernel of the centered gradient: constants and parity modes."""
    modes1 = [np.ones(grid.n1)]
    if grid.n1 % 2 == 0:
        modes1.append((-1.0) ** np.arange(grid.n1))
    modes2 = [np.ones(grid.n2)]
    if grid.n2 % 2 == 0:
        modes2.append((-1.0) ** np.arange(grid.n2))
    basis = np.array([np.outer(b, a).ravel() for b in modes2 for a in modes1])
    return basis / math.sqrt(grid.size)


def _remove_null(basis, x):
    return x - basis.T @ (basis @ x)


def project(F, psi, tol=1e-8, max_iter=None, x0=None, jacobi=True):
    """
    Gradient part of F in the psi-weighted Helmholtz-Hodge decomposition.

    Args:
        F: VectorField to project.
        psi: Strictly positive ScalarField weight on the same grid.
        tol: Relative residual tolerance of CG.
        max_iter: Iteration cap, 10*n1*n2 by default.
        x0: Optional ScalarField initial guess (warm start).
        jacobi: Precondition CG with the diagonal of -L_psi.

    Returns:
        ProjectionResult with the unique mean-zero A and gradA = gradient(A).

    Raises:
        ProjectionPreconditionError: If min(psi) <= 0.
        ProjectionSolverError: If CG stops before reaching tol.
    """
    g = F.grid
    if psi.grid != g:
        raise ValueError("force and density live on different grids")
    if np.min(psi.values) <= 0.0:
        raise ProjectionPreconditionError(f"density must be positive, min is {np.min(psi.values):.3e}")
    if max_iter is None:
        max_iter = 10 * g.size

    f1, f2 = F.arrays
    weight = psi.array
    # -L_psi is positive semidefinite, so solve -L_psi A = -div(psi F)
    rhs = -divergence_array(weight * f1, weight * f2, g.h1, g.h2).ravel()
    rhs -= rhs.mean()
    rhs_norm = float(np.linalg.norm(rhs))

    if rhs_norm == 0.0:
        zero = ScalarField(grid=g, values=np.zeros(g.size))
        return ProjectionResult(A=zero, gradA=VectorField.zeros(g), residual_div=0.0, iterations=0)

    def matvec(x):
        x = np.ravel(x)
        x = x - x.mean()
        out = -apply_weighted_laplacian(psi, x.reshape(g.shape)).ravel()
        return out - out.mean()

    operator = LinearOperator((g.size, g.size), matvec=matvec, rmatvec=matvec, dtype=float)
    basis = null_basis(g)

    preconditioner = None
    if jacobi:
        inverse_diagonal = 1.0 / jacobi_diagonal(psi).ravel()

        def precondition(r):
            return _remove_null(basis, inverse_diagonal * np.ravel(r))

        preconditioner = LinearOperator((g.size, g.size), matvec=precondition, rmatvec=precondition, dtype=float)

    iterations = 0

    def count(_):
        nonlocal iterations
        iterations += 1

    start = None
    if x0 is not None:
        start = _remove_null(basis, x0.values)

    solution, info = cg(
        operator, rhs, x0=start, rtol=tol, atol=0.0, maxiter=max_iter, M=preconditioner, callback=count
    )
    solution = _remove_null(basis, solution)
    residual = float(np.linalg.norm(rhs - matvec(solution)) / rhs_norm)

    if info != 0:
        logger.error(f"Projection solver failed: info={info}, residual={residual:.3e}, iterations={iterations}")
        raise ProjectionSolverError(residual, iterations)

    logger.debug(f"Projection converged in {iterations} iterations, residual {residual:.3e}")
    A = ScalarField(grid=g, values=solution)
    return ProjectionResult(A=A, gradA=gradient(A), residual_div=residual, iterations=iterations)


def projection_defect(F, psi, result):
    """
    Integrate-norm of div(R) with R = psi F - psi gradA.

    Args:
        F: The projected VectorField.
        psi: The weight used in the projection.
        result: ProjectionResult of project(F, psi).

    Returns:
        sqrt(integrate(div(R)^2)).
    """
    g = F.grid
    w = psi.values
    residual_field = VectorField(
        grid=g,
        comp1=w * (F.comp1 - result.gradA.comp1),
        comp2=w * (F.comp2 - result.gradA.comp2),
    )
    div_r = divergence(residual_field)
    return math.sqrt(integrate(ScalarField(grid=g, values=div_r.values**2)))


def uniform_weight(grid):
    """Weight reducing the projection to the unweighted Poisson problem."""
    return ScalarField(grid=grid, values=np.full(grid.size, 1.0 / grid.area))
