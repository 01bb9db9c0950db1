"""Trusted discrete solutions: Q1 finite-element assembly and conjugate gradients.

Bilinear (Q1) elements keep the operator symmetric positive definite for
tensor diffusion, including the mixed-derivative terms. Reference solutions
are produced on a finer nested grid and restricted back, standing in for
the exact solution wherever no manufactured solution exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import CoercivityError, IterationError, ParameterError
from .field import ScalarField, SPDTensorField, TensorGrid, restrict
from .problems import EllipticProblem, regenerate

_GAUSS_1D = ((0.5 - 0.5 / np.sqrt(3.0), 0.5), (0.5 + 0.5 / np.sqrt(3.0), 0.5))


@dataclass(frozen=True)
class SparseOperator:
    """CSR-backed symmetric operator on the interior unknowns."""

    n: int
    matrix: sp.csr_matrix
    symmetric: bool = True

    @property
    def row_offsets(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def values(self) -> np.ndarray:
        return self.matrix.data

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x


def _ref_basis_1d():
    pts = np.array([g[0] for g in _GAUSS_1D])
    w = np.array([g[1] for g in _GAUSS_1D])
    phi = np.stack([1.0 - pts, pts], axis=1)        # (gauss, basis)
    dphi = np.array([[-1.0, 1.0]] * len(pts))       # (gauss, basis)
    return pts, w, phi, dphi


def _assemble_1d(problem: EllipticProblem):
    grid = problem.grid
    n = grid.nodes_per_axis
    h = grid.spacings[0]
    _, w, phi, dphi = _ref_basis_1d()
    a = problem.a.values
    b = problem.b_sq.values
    f = problem.f.values

    corners = np.stack([a[:-1], a[1:]])             # (2, cells)
    a_g = phi @ corners                              # (gauss, cells)
    b_g = phi @ np.stack([b[:-1], b[1:]])
    f_g = phi @ np.stack([f[:-1], f[1:]])

    # stiffness: sum_g w_g a(g) dphi_p dphi_q / h ; mass: h sum_g w_g b(g) phi_p phi_q
    ke = np.einsum("g,gc,gp,gq->pqc", w / h, a_g, dphi, dphi)
    ke += h * np.einsum("g,gc,gp,gq->pqc", w, b_g, phi, phi)
    fe = h * np.einsum("g,gc,gp->pc", w, f_g, phi)

    cells = np.arange(n - 1)
    loc = np.stack([cells, cells + 1])              # (2, cells)
    rows = np.repeat(loc[:, None, :], 2, axis=1).ravel()
    cols = np.repeat(loc[None, :, :], 2, axis=0).ravel()
    A = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    rhs = np.zeros(n)
    np.add.at(rhs, loc.ravel(), fe.ravel())
    return A, rhs


def _ref_basis_2d():
    pts1, w1, _, _ = _ref_basis_1d()
    gx, gy = np.meshgrid(pts1, pts1, indexing="ij")
    gx, gy = gx.ravel(), gy.ravel()
    w = np.multiply.outer(w1, w1).ravel()
    # local node order: (0,0), (1,0), (0,1), (1,1)
    phi = np.stack(
        [(1 - gx) * (1 - gy), gx * (1 - gy), (1 - gx) * gy, gx * gy], axis=1
    )
    dphi_x = np.stack([-(1 - gy), (1 - gy), -gy, gy], axis=1)
    dphi_y = np.stack([-(1 - gx), -gx, (1 - gx), gx], axis=1)
    return w, phi, np.stack([dphi_x, dphi_y], axis=-1)  # (g,), (g, 4), (g, 4, 2)


def _corner_values(v: np.ndarray) -> np.ndarray:
    # (4, cells) in the local node order above, cells raveled row-major
    return np.stack(
        [
            v[:-1, :-1].ravel(),
            v[1:, :-1].ravel(),
            v[:-1, 1:].ravel(),
            v[1:, 1:].ravel(),
        ]
    )


def _assemble_2d(problem: EllipticProblem):
    grid = problem.grid
    n = grid.nodes_per_axis
    h = grid.spacings[0]
    w, phi, dphi = _ref_basis_2d()

    if isinstance(problem.a, SPDTensorField):
        a11_g = phi @ _corner_values(problem.a.a11.values)
        a12_g = phi @ _corner_values(problem.a.a12.values)
        a22_g = phi @ _corner_values(problem.a.a22.values)
    else:
        a_g = phi @ _corner_values(problem.a.values)
        a11_g = a22_g = a_g
        a12_g = np.zeros_like(a_g)
    b_g = phi @ _corner_values(problem.b_sq.values)
    f_g = phi @ _corner_values(problem.f.values)

    dx, dy = dphi[:, :, 0], dphi[:, :, 1]
    # |J| = h^2 and each reference gradient carries 1/h, so stiffness has no h
    ke = (
        np.einsum("g,gc,gp,gq->pqc", w, a11_g, dx, dx)
        + np.einsum("g,gc,gp,gq->pqc", w, a12_g, dx, dy)
        + np.einsum("g,gc,gp,gq->pqc", w, a12_g, dy, dx)
        + np.einsum("g,gc,gp,gq->pqc", w, a22_g, dy, dy)
    )
    ke += h * h * np.einsum("g,gc,gp,gq->pqc", w, b_g, phi, phi)
    fe = h * h * np.einsum("g,gc,gp->pc", w, f_g, phi)

    ci, cj = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="ij")
    base = (ci * n + cj).ravel()
    loc = np.stack([base, base + n, base + 1, base + n + 1])  # (4, cells)
    rows = np.repeat(loc[:, None, :], 4, axis=1).ravel()
    cols = np.repeat(loc[None, :, :], 4, axis=0).ravel()
    A = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n * n, n * n)).tocsr()
    rhs = np.zeros(n * n)
    np.add.at(rhs, np.broadcast_to(loc, (4, loc.shape[1])).ravel(), fe.ravel())
    return A, rhs


def interior_mask(grid: TensorGrid) -> np.ndarray:
    return ~grid.boundary_mask().ravel()


def assemble_elliptic(problem: EllipticProblem) -> tuple[SparseOperator, np.ndarray]:
    """Assemble the Q1 bilinear form and load vector, Dirichlet rows eliminated.

    Coefficients are evaluated at 2x2 Gauss points per cell through their
    nodal interpolants. The returned operator acts on interior unknowns only.
    """
    if problem.grid.space_time:
        raise ParameterError("elliptic assembly needs a spatial grid")
    if problem.grid.naxes == 1:
        A, rhs = _assemble_1d(problem)
    else:
        A, rhs = _assemble_2d(problem)
    keep = interior_mask(problem.grid)
    A_int = A[keep][:, keep].tocsr()
    A_int.sum_duplicates()
    A_int.sort_indices()
    # duplicate-summation order can leave 1-ulp asymmetry; force exactness
    A_int = ((A_int + A_int.T) * 0.5).tocsr()
    return SparseOperator(n=int(keep.sum()), matrix=A_int), rhs[keep]


def solve_spd(
    A: SparseOperator,
    rhs: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
) -> np.ndarray:
    """Conjugate gradients with diagonal (Jacobi) preconditioning.

    Returns x with ||rhs - A x|| <= tol * ||rhs||, or raises IterationError
    carrying the final residual.
    """
    mat = A.matrix
    n = A.n
    if max_iter is None:
        max_iter = max(200, 20 * n)
    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros(n)
    diag = mat.diagonal()
    if np.min(diag) <= 0.0:
        raise CoercivityError("operator diagonal not positive; not SPD")
    inv_diag = 1.0 / diag

    x = np.zeros(n)
    r = rhs.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, max_iter + 1):
        Ap = mat @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = float(np.linalg.norm(r))
        if res <= tol * rhs_norm:
            return x
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise IterationError(
        f"CG did not reach tol {tol:g} in {max_iter} iterations",
        residual=res / rhs_norm,
        iterations=max_iter,
    )


def solve_elliptic(problem: EllipticProblem, tol: float = 1e-10, max_iter: int | None = None) -> ScalarField:
    """Solve the problem on its own grid; zero at the boundary nodes."""
    A, rhs = assemble_elliptic(problem)
    x = solve_spd(A, rhs, tol=tol, max_iter=max_iter)
    full = np.zeros(problem.grid.shape).ravel()
    full[interior_mask(problem.grid)] = x
    return ScalarField(problem.grid, full.reshape(problem.grid.shape))


def solve_elliptic_fd(problem: EllipticProblem) -> ScalarField:
    """Solve the nested finite-difference discretization of the problem.

    This is the discrete operator the grid-mode losses and the majorant are
    built from (first differences composed twice), so the majorant saturates
    on its solution. The composed operator is nonsymmetric, so it is solved
    by sparse LU rather than CG. Intended for desk-scale grids.
    """
    grid = problem.grid
    if grid.space_time:
        raise ParameterError("elliptic FD solve needs a spatial grid")
    from .field import diff_matrix

    n = grid.nodes_per_axis
    size = int(np.prod(grid.shape))
    D = diff_matrix(n, grid.spacings[0])
    eye = sp.identity(n, format="csr")
    if grid.naxes == 1:
        ops = [sp.csr_matrix(D)]
    else:
        ops = [sp.kron(D, eye, format="csr"), sp.kron(eye, D, format="csr")]

    if isinstance(problem.a, SPDTensorField):
        entries = [
            [problem.a.a11.values, problem.a.a12.values],
            [problem.a.a12.values, problem.a.a22.values],
        ]
    else:
        zero = np.zeros(grid.shape)
        if grid.naxes == 1:
            entries = [[problem.a.values]]
        else:
            entries = [[problem.a.values, zero], [zero, problem.a.values]]

    A = sp.csr_matrix((size, size))
    for i, Di in enumerate(ops):
        flux = sp.csr_matrix((size, size))
        for j, Dj in enumerate(ops):
            flux = flux + sp.diags(entries[i][j].ravel()) @ Dj
        A = A - Di @ flux
    A = A + sp.diags(problem.b_sq.values.ravel())

    bnd = grid.boundary_mask().ravel()
    A = A.tolil()
    idx = np.where(bnd)[0]
    A[idx, :] = 0.0
    A[idx, idx] = 1.0
    rhs = problem.f.values.ravel().copy()
    rhs[idx] = 0.0
    u = sp.linalg.splu(A.tocsc()).solve(rhs)
    return ScalarField(grid, u.reshape(grid.shape))


def reference_solution(problem: EllipticProblem, J_ref: int = 7, tol: float = 1e-10) -> ScalarField:
    """Reference solution on the problem grid.

    Manufactured problems return their analytic solution directly. Otherwise
    the problem is regenerated from its provenance at level J_ref, solved
    there, and restricted back by injection.
    """
    if problem.exact_solution is not None:
        return problem.exact_solution
    if J_ref <= problem.grid.level:
        raise ParameterError("J_ref must exceed the problem grid level")
    fine = regenerate(problem, J_ref)
    u_fine = solve_elliptic(fine, tol=tol)
    return restrict(u_fine, problem.grid.level)
