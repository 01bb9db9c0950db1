"""Norms of nodal fields: L2, weighted flux norms, and the energy norm.

All norms use trapezoid quadrature on the field's own grid so that bound
and error evaluations share one quadrature error.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .field import (
    ScalarField,
    SPDTensorField,
    VectorField,
    deriv_fd,
    grad_fd,
    tensor_quadratic_form,
    trapz,
)


def l2_norm(field: ScalarField) -> float:
    """sqrt of the integral of the squared field."""
    return float(np.sqrt(max(trapz(field.values ** 2, field.grid), 0.0)))


def weighted_flux_norm(
    w: VectorField, a: SPDTensorField | ScalarField, inverse: bool = False
) -> float:
    """sqrt(int w^T a^{+-1} w) with pointwise tensor inversion when asked."""
    q = tensor_quadratic_form(a, w, inverse=inverse)
    return float(np.sqrt(max(trapz(q, w.grid), 0.0)))


def energy_norm(
    e: ScalarField,
    a: SPDTensorField | ScalarField,
    b_sq: ScalarField | None = None,
) -> float:
    """sqrt(int grad(e)^T a grad(e) + b_sq e^2), gradients by grad_fd."""
    g = grad_fd(e)
    density = tensor_quadratic_form(a, g)
    if b_sq is not None:
        density = density + b_sq.values * e.values ** 2
    return float(np.sqrt(max(trapz(density, e.grid), 0.0)))


def cd_error_norm(e: ScalarField) -> float:
    """Space-time error measure for the convection-diffusion bound.

    Returns sqrt( int dx dt (de/dx)^2 + 1/2 int dx e^2 at the final time ).
    """
    grid = e.grid
    if not grid.space_time:
        raise ParameterError("cd_error_norm needs a space-time field")
    ex = deriv_fd(e, axis=0).values
    bulk = trapz(ex ** 2, grid)
    h = grid.spacings[0]
    wx = np.full(grid.nodes_per_axis, h)
    wx[0] = wx[-1] = h / 2.0
    final = float(np.sum(wx * e.values[:, -1] ** 2))
    return float(np.sqrt(max(bulk + 0.5 * final, 0.0)))


def l2_from_energy(energy_err: float, lambda_min_op: float, inf_b_sq: float = 0.0) -> float:
    """Upper bound on the L2 error from the energy error.

    Uses <e, A e> >= lambda_min ||e||_2^2 for the operator eigenvalue, so the
    bound is energy_err / sqrt(lambda_min + inf b^2).
    """
    denom = lambda_min_op + inf_b_sq
    if denom <= 0.0:
        raise ParameterError("need lambda_min_op > 0 or inf_b_sq > 0")
    return float(energy_err / np.sqrt(denom))


def dirichlet_lambda_min_lower(a: SPDTensorField | ScalarField, dim: int) -> float:
    """Lower bound dim*pi^2*inf lambda_min(a) for the first Dirichlet eigenvalue."""
    from .field import lambda_min_field

    lam = lambda_min_field(a)
    return float(dim * np.pi ** 2 * np.min(lam.values))
