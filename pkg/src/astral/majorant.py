"""Loss functionals: guaranteed error majorants plus residual, variational,
data-fit, and boundary-penalized training losses.

The elliptic majorant bounds the squared energy norm of the error for every
admissible certificate (flux field y, positive beta):

    total = int w(x) R^2 dx + (1+beta)/beta * ||a grad v - y||^2_{a^{-1}},
    R = f - b_sq v + div y,
    w(x) = C^2 (1+beta) / (C^2 b_sq(x) (1+beta) + 1),

where C is a constant with ||u||_2 <= C ||grad u||_a on the domain. Two
constant modes are provided: "safe" uses the first Dirichlet eigenvalue of
the unit cube, C = 1/(pi sqrt(D) sqrt(inf lambda_min(a))), which makes the
bound provably valid; "paper" uses 1/(pi D sqrt(inf lambda_min(a))) (and
sup a / pi in the 1D sum-of-norms variant), which is smaller in 2D and can
undershoot the true error. Default is safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CoercivityError, DataError, ParameterError
from .field import (
    Gauss,
    MonteCarlo,
    ScalarField,
    Trapezoid,
    TensorGrid,
    VectorField,
    deriv_fd,
    div_fd,
    grad_fd,
    integrate,
    interpolate,
    lambda_min_field,
    tensor_apply,
    tensor_quadratic_form,
    trapz,
)
from .norms import l2_norm
from .problems import ConvDiffProblem, EllipticProblem

SAFE = "safe"
PAPER = "paper"


@dataclass(frozen=True)
class Certificate:
    """Free variables of the majorant: flux field y and positive beta."""

    y: VectorField
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ParameterError(f"beta must be positive, got {self.beta}")


@dataclass(frozen=True)
class MajorantReport:
    """Decomposed bound: weighted residual part, flux part, and their sum."""

    residual_term: float
    flux_term: float
    total: float
    friedrichs_C: float
    constant_mode: str

    def __post_init__(self):
        if self.residual_term < 0 or self.flux_term < 0:
            raise DataError("majorant parts must be non-negative")


def residual_weight(C, b_sq, beta):
    """Pointwise residual weight C^2(1+beta) / (C^2 b_sq (1+beta) + 1).

    Plain arithmetic, so it accepts numpy arrays and torch tensors alike.
    For b_sq = 0 it reduces to C^2 (1+beta) exactly; for beta -> inf it
    approaches 1/b_sq.
    """
    num = C ** 2 * (1.0 + beta)
    return num / (num * b_sq + 1.0)


def flux_factor(beta):
    """(1 + beta) / beta, the weight of the flux mismatch term."""
    return (1.0 + beta) / beta


def friedrichs_constant(
    a: "ScalarField | object", dim: int, mode: str = SAFE
) -> float:
    """Constant C in ||u||_2 <= C ||grad u||_a for u vanishing on the boundary.

    safe mode: 1 / (pi sqrt(dim) sqrt(inf lambda_min(a))), from the first
    Dirichlet eigenvalue dim*pi^2 of the unit cube. paper mode:
    1 / (pi dim sqrt(inf lambda_min(a))). The modes agree for dim = 1.
    """
    if mode not in (SAFE, PAPER):
        raise ParameterError(f"unknown constant mode {mode!r}")
    lam = lambda_min_field(a)
    inf_lam = float(np.min(lam.values))
    if inf_lam <= 0:
        raise CoercivityError("diffusion not coercive")
    if mode == PAPER:
        return 1.0 / (np.sqrt(inf_lam) * np.pi * dim)
    return 1.0 / (np.sqrt(inf_lam) * np.pi * np.sqrt(dim))


def astral_elliptic(
    v: ScalarField,
    cert: Certificate,
    problem: EllipticProblem,
    mode: str = SAFE,
) -> MajorantReport:
    """Energy-norm error majorant for the elliptic problem (any dimension).

    Valid for v vanishing on the boundary; callers training non-conforming
    approximations must go through astral_training_loss, which carries the
    boundary penalty. Derivatives are the package finite differences and the
    quadrature is trapezoid on the problem grid.
    """
    if cert.y.grid != problem.grid or v.grid != problem.grid:
        raise DataError("solution and certificate must live on the problem grid")
    C = friedrichs_constant(problem.a, problem.grid.dim, mode)
    w = residual_weight(C, problem.b_sq.values, cert.beta)
    R = problem.f.values - problem.b_sq.values * v.values + div_fd(cert.y).values
    residual_term = trapz(w * R ** 2, problem.grid)

    mismatch_comps = tuple(
        ScalarField(problem.grid, ag.values - yc.values)
        for ag, yc in zip(tensor_apply(problem.a, grad_fd(v)).components, cert.y.components)
    )
    mismatch = VectorField(problem.grid, mismatch_comps)
    q = tensor_quadratic_form(problem.a, mismatch, inverse=True)
    flux_term = flux_factor(cert.beta) * trapz(q, problem.grid)

    return MajorantReport(
        residual_term=float(residual_term),
        flux_term=float(flux_term),
        total=float(residual_term + flux_term),
        friedrichs_C=C,
        constant_mode=mode,
    )


def astral_scalar(
    v: ScalarField,
    cert: Certificate,
    problem: EllipticProblem,
    mode: str = SAFE,
) -> MajorantReport:
    """Simplified majorant for scalar diffusion and zero reaction.

    (1+beta) * int [ (f + div y)^2 / (pi^2 D^2 inf a)  +  sum_i (a dv/dx_i - y_i)^2 / (beta a) ]

    with the denominator pi^2 D^2 inf a in paper mode and pi^2 D inf a in
    safe mode. Algebraically identical to astral_elliptic for this problem
    class, specialization kept as an independent code path.
    """
    if not problem.scalar_diffusion:
        raise ParameterError("scalar majorant needs scalar diffusion")
    if float(np.max(problem.b_sq.values)) != 0.0:
        raise ParameterError("scalar majorant assumes zero reaction")
    a = problem.a.values
    inf_a = float(np.min(a))
    if inf_a <= 0:
        raise CoercivityError("diffusion not positive")
    dim = problem.grid.dim
    denom = np.pi ** 2 * dim ** 2 * inf_a if mode == PAPER else np.pi ** 2 * dim * inf_a
    if mode not in (SAFE, PAPER):
        raise ParameterError(f"unknown constant mode {mode!r}")

    beta = cert.beta
    R = problem.f.values + div_fd(cert.y).values
    residual_term = (1.0 + beta) * trapz(R ** 2, problem.grid) / denom

    g = grad_fd(v)
    mism = sum(
        (a * gc.values - yc.values) ** 2
        for gc, yc in zip(g.components, cert.y.components)
    )
    flux_term = (1.0 + beta) / beta * trapz(mism / a, problem.grid)

    C = 1.0 / np.sqrt(denom)
    return MajorantReport(
        residual_term=float(residual_term),
        flux_term=float(flux_term),
        total=float(residual_term + flux_term),
        friedrichs_C=C,
        constant_mode=mode,
    )


def friedrichs_1d(a: ScalarField, mode: str = SAFE) -> float:
    """Constant in the 1D sum-of-norms bound.

    paper mode: sup a / pi. safe mode: 1 / (pi sqrt(inf a)), which follows
    from ||w||_2 <= ||w'||_2 / pi <= ||w'||_a / (pi sqrt(inf a)).
    """
    if mode == PAPER:
        return float(np.max(a.values) / np.pi)
    if mode == SAFE:
        inf_a = float(np.min(a.values))
        if inf_a <= 0:
            raise CoercivityError("diffusion not positive")
        return float(1.0 / (np.pi * np.sqrt(inf_a)))
    raise ParameterError(f"unknown constant mode {mode!r}")


def astral_1d(
    v: ScalarField,
    y: ScalarField,
    problem: EllipticProblem,
    mode: str = SAFE,
) -> float:
    """Sum-of-norms bound on ||v - u||_a for 1D problems (no beta):

    sqrt( int (y - a v')^2 / a ) + C_F ||f + y' - b_sq v||_2.
    """
    grid = problem.grid
    if grid.naxes != 1:
        raise ParameterError("astral_1d needs a 1D problem")
    a = problem.a.values
    if float(np.min(a)) <= 0:
        raise CoercivityError("diffusion not positive")
    C = friedrichs_1d(problem.a, mode)
    dv = deriv_fd(v, 0).values
    flux_part = np.sqrt(max(trapz((y.values - a * dv) ** 2 / a, grid), 0.0))
    R = problem.f.values + deriv_fd(y, 0).values - problem.b_sq.values * v.values
    res_part = C * np.sqrt(max(trapz(R ** 2, grid), 0.0))
    return float(flux_part + res_part)


def astral_convdiff(
    v: ScalarField,
    y: ScalarField,
    problem: ConvDiffProblem,
    dv_dx: ScalarField | None = None,
    dv_dt: ScalarField | None = None,
    dy_dx: ScalarField | None = None,
) -> float:
    """Space-time majorant value (squared scale) for convection-diffusion:

    int dx dt [ (y - dv/dx)^2 + (1/pi) (f - dv/dt - a dv/dx + dy/dx)^2 ].

    Derivatives default to finite differences on the grid; callers holding
    analytic derivatives may pass them explicitly.
    """
    grid = problem.grid
    if v.grid != grid or y.grid != grid:
        raise DataError("fields must live on the problem grid")
    vx = (dv_dx if dv_dx is not None else deriv_fd(v, 0)).values
    vt = (dv_dt if dv_dt is not None else deriv_fd(v, 1)).values
    yx = (dy_dx if dy_dx is not None else deriv_fd(y, 0)).values
    first = (y.values - vx) ** 2
    R = problem.f.values - vt - problem.a * vx + yx
    return float(trapz(first + R ** 2 / np.pi, grid))


def residual_loss(
    v: ScalarField,
    problem: EllipticProblem,
    points: np.ndarray | None = None,
) -> float:
    """Squared strong residual: nested finite differences on the grid.

    With collocation points, the nodal residual field is interpolated there
    and averaged; otherwise the trapezoid integral over the grid is returned.
    """
    flux = tensor_apply(problem.a, grad_fd(v))
    res = div_fd(flux).values + problem.f.values - problem.b_sq.values * v.values
    if points is None:
        return float(trapz(res ** 2, problem.grid))
    res_field = ScalarField(problem.grid, res)
    return float(np.mean(interpolate(res_field, points) ** 2))


def variational_loss(
    v: ScalarField,
    problem: EllipticProblem,
    rule: Trapezoid | Gauss | MonteCarlo = Trapezoid(),
) -> float:
    """Energy functional int ( a |grad v|^2 / 2 - f v ) under the chosen rule."""
    if float(np.max(problem.b_sq.values)) != 0.0:
        raise ParameterError("variational loss is stated for zero reaction")
    density = 0.5 * tensor_quadratic_form(problem.a, grad_fd(v)) - problem.f.values * v.values
    return integrate(ScalarField(problem.grid, density), rule)


def boundary_mean_sq(v: ScalarField) -> float:
    """Mean of v^2 over the spatial boundary nodes."""
    mask = v.grid.boundary_mask()
    return float(np.mean(v.values[mask] ** 2))


def pino_loss(
    v: ScalarField,
    u_exact: ScalarField,
    problem: EllipticProblem,
    alpha: float = 1.0,
    gamma: float = 1.0,
) -> float:
    """Data loss + weighted residual + boundary term (supervised baseline)."""
    data = l2_norm(ScalarField(v.grid, v.values - u_exact.values))
    res = np.sqrt(max(residual_loss(v, problem), 0.0))
    bc = np.sqrt(boundary_mean_sq(v))
    return float(data + alpha * res + gamma * bc)


def astral_training_loss(
    v: ScalarField,
    cert: Certificate,
    problem: EllipticProblem,
    lam: float = 1.0,
    mode: str = SAFE,
) -> float:
    """Majorant-based training loss with a boundary penalty.

    2D (and general nD): sqrt(majorant total) + lam * sqrt(mean boundary v^2).
    1D uses the sum-of-norms bound, which is already on the norm scale.
    """
    if lam < 0:
        raise ParameterError("lambda must be non-negative")
    if problem.grid.naxes == 1:
        base = astral_1d(v, cert.y[0], problem, mode)
    else:
        base = float(np.sqrt(astral_elliptic(v, cert, problem, mode).total))
    return base + lam * float(np.sqrt(boundary_mean_sq(v)))


def optimal_alpha(P: ScalarField, Q: ScalarField) -> tuple[ScalarField, ScalarField]:
    """Pointwise minimizer of int( alpha^2 P + (1-alpha)^2 Q ).

    Returns alpha_hat = Q/(P+Q) and the minimum density PQ/(P+Q); nodes
    where both vanish take alpha_hat = 0 by convention.
    """
    p, q = P.values, Q.values
    if np.min(p) < 0 or np.min(q) < 0:
        raise DataError("P and Q must be non-negative")
    denom = p + q
    with np.errstate(invalid="ignore", divide="ignore"):
        alpha = np.where(denom > 0, q / np.where(denom > 0, denom, 1.0), 0.0)
        upsilon = np.where(denom > 0, p * q / np.where(denom > 0, denom, 1.0), 0.0)
    return ScalarField(P.grid, alpha), ScalarField(P.grid, upsilon)
