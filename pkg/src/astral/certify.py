"""Tighten the majorant over certificates for a fixed approximate solution.

For fixed beta the majorant is a convex quadratic in the flux field y, so the
default scheme alternates an exact CG solve of the y-subproblem with a beta
update (closed form when the reaction vanishes, golden section otherwise).
An Adam path over y is kept for parity with gradient-based training.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DataError, ParameterError
from .field import (
    ScalarField,
    VectorField,
    apply_axis,
    diff_matrix,
    div_fd,
    grad_fd,
    tensor_apply,
    tensor_apply_inverse,
    trapezoid_weights,
)
from .majorant import (
    SAFE,
    Certificate,
    MajorantReport,
    astral_elliptic,
    flux_factor,
    friedrichs_constant,
    residual_weight,
)
from .problems import EllipticProblem

BETA_CAP = 1e8
BETA_FLOOR = 1e-8


@dataclass(frozen=True)
class CertifyConfig:
    max_outer_iters: int = 20
    y_solver: str = "quadratic"          # "quadratic" (CG) or "adam"
    beta_solver: str = "closed_form"     # "closed_form" or "golden_section"
    tol: float = 1e-8                    # stop on relative total decrease
    cg_tol: float = 1e-8
    cg_max_iter: int = 400
    adam_lr: float = 1e-2
    adam_steps: int = 50
    golden_bracket: tuple[float, float] = (BETA_FLOOR, BETA_CAP)
    golden_tol: float = 1e-10
    constant_mode: str = SAFE

    def __post_init__(self):
        if self.max_outer_iters < 1 or self.cg_max_iter < 1 or self.adam_steps < 1:
            raise ParameterError("iteration caps must be at least 1")
        if self.tol <= 0 or self.cg_tol <= 0 or self.golden_tol <= 0:
            raise ParameterError("tolerances must be positive")
        if self.y_solver not in ("quadratic", "adam"):
            raise ParameterError(f"unknown y solver {self.y_solver!r}")
        if self.beta_solver not in ("closed_form", "golden_section"):
            raise ParameterError(f"unknown beta solver {self.beta_solver!r}")


@dataclass(frozen=True)
class BoundMetrics:
    """Per-sample bound quality: ratios bound/error and their correlation."""

    errors: np.ndarray
    bounds: np.ndarray
    ratios: np.ndarray
    mean_ratio: float
    correlation: float | None


@dataclass(frozen=True)
class CertifyResult:
    certificate: Certificate
    report: MajorantReport
    totals: list[float] = dc_field(default_factory=list)


def optimal_beta(A_res: float, B_flux: float) -> float:
    """Minimizer of (1+beta) A + (1+beta)/beta B over beta > 0.

    The optimum is sqrt(B/A) with value (sqrt(A) + sqrt(B))^2. Degenerate
    inputs clamp to [1e-8, 1e8]: A = 0 favors beta -> inf (cap), B = 0
    favors beta -> 0 (floor).
    """
    if A_res < 0 or B_flux < 0:
        raise ParameterError("majorant parts must be non-negative")
    if A_res == 0.0:
        return BETA_CAP
    if B_flux == 0.0:
        return BETA_FLOOR
    return float(np.clip(np.sqrt(B_flux / A_res), BETA_FLOOR, BETA_CAP))


def majorant_grad_y(
    v: ScalarField,
    cert: Certificate,
    problem: EllipticProblem,
    mode: str = SAFE,
) -> VectorField:
    """Gradient of the discrete majorant with respect to the nodal values of y.

    Consistent with astral_elliptic: per component c,
        2 D_c^T (q w R) + 2 (1+beta)/beta q (a^{-1}(y - a grad v))_c,
    with q the trapezoid weights and D_c the differentiation matrix.
    """
    grid = problem.grid
    q = trapezoid_weights(grid)
    C = friedrichs_constant(problem.a, grid.dim, mode)
    w = residual_weight(C, problem.b_sq.values, cert.beta)
    R = problem.f.values - problem.b_sq.values * v.values + div_fd(cert.y).values

    weighted = q * w * R
    grads = []
    naive = tensor_apply(problem.a, grad_fd(v))
    defect = VectorField(
        grid,
        tuple(
            ScalarField(grid, yc.values - nc.values)
            for yc, nc in zip(cert.y.components, naive.components)
        ),
    )
    a_inv_defect = tensor_apply_inverse(problem.a, defect)
    c = flux_factor(cert.beta)
    for ax in range(grid.dim):
        d = diff_matrix(grid.nodes_per_axis, grid.spacings[ax])
        part = 2.0 * apply_axis(d.T.tocsr(), weighted, ax)
        part = part + 2.0 * c * q * a_inv_defect.components[ax].values
        grads.append(ScalarField(grid, part))
    return VectorField(grid, tuple(grads))


def _pack(vf: VectorField) -> np.ndarray:
    return np.concatenate([c.values.ravel() for c in vf.components])


def _unpack(vec: np.ndarray, like: VectorField) -> VectorField:
    grid = like.grid
    size = int(np.prod(grid.shape))
    comps = tuple(
        ScalarField(grid, vec[i * size : (i + 1) * size].reshape(grid.shape))
        for i in range(len(like.components))
    )
    return VectorField(grid, comps)


def _solve_y_quadratic(v, problem, beta, y0: VectorField, config, mode) -> VectorField:
    """Exact minimization over y at fixed beta by matrix-free CG.

    The gradient is affine in y, so H d = grad(y0 + d) - grad(y0) gives the
    Hessian action. CG from zero decreases the quadratic monotonically.
    """
    def grad_at(yvec: np.ndarray) -> np.ndarray:
        cert = Certificate(_unpack(yvec, y0), beta)
        return _pack(majorant_grad_y(v, cert, problem, mode))

    x0 = _pack(y0)
    g0 = grad_at(x0)
    b = -g0
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return y0

    def hess_apply(d: np.ndarray) -> np.ndarray:
        return grad_at(x0 + d) - g0

    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(r @ r)
    for _ in range(config.cg_max_iter):
        Hp = hess_apply(p)
        pHp = float(p @ Hp)
        if pHp <= 0.0:
            break
        alpha = rr / pHp
        x += alpha * p
        r -= alpha * Hp
        rr_new = float(r @ r)
        if np.sqrt(rr_new) <= config.cg_tol * bnorm:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return _unpack(x0 + x, y0)


def _solve_y_adam(v, problem, beta, y0: VectorField, config, mode) -> VectorField:
    """Adam descent over y, mirroring how a network would optimize the bound."""
    x = _pack(y0)
    m = np.zeros_like(x)
    s = np.zeros_like(x)
    b1, b2, eps = 0.9, 0.999, 1e-8
    best_x, best_total = x.copy(), _total_at(v, problem, beta, y0, mode)
    for t in range(1, config.adam_steps + 1):
        cert = Certificate(_unpack(x, y0), beta)
        g = _pack(majorant_grad_y(v, cert, problem, mode))
        m = b1 * m + (1 - b1) * g
        s = b2 * s + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        sh = s / (1 - b2 ** t)
        x = x - config.adam_lr * mh / (np.sqrt(sh) + eps)
        total = _total_at(v, problem, beta, _unpack(x, y0), mode)
        if total < best_total:
            best_total, best_x = total, x.copy()
    return _unpack(best_x, y0)


def _total_at(v, problem, beta, y: VectorField, mode) -> float:
    return astral_elliptic(v, Certificate(y, beta), problem, mode).total


def _golden_beta(v, problem, y, bracket, tol, mode) -> float:
    """Golden-section search for beta on a log scale."""
    lo, hi = np.log(bracket[0]), np.log(bracket[1])
    phi = (np.sqrt(5.0) - 1.0) / 2.0

    def val(t: float) -> float:
        return _total_at(v, problem, float(np.exp(t)), y, mode)

    c = hi - phi * (hi - lo)
    d = lo + phi * (hi - lo)
    fc, fd = val(c), val(d)
    while hi - lo > tol:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - phi * (hi - lo)
            fc = val(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + phi * (hi - lo)
            fd = val(d)
    return float(np.exp((lo + hi) / 2.0))


def certify_direct(
    v: ScalarField,
    problem: EllipticProblem,
    config: CertifyConfig = CertifyConfig(),
) -> CertifyResult:
    """Alternating minimization of the majorant over (y, beta).

    y starts at the naive flux a grad v. Each outer iteration solves the
    quadratic y-subproblem exactly (or runs Adam), then updates beta. The
    recorded totals are non-increasing.
    """
    mode = config.constant_mode
    y = tensor_apply(problem.a, grad_fd(v))
    beta = 1.0
    b_zero = float(np.max(problem.b_sq.values)) == 0.0

    report = astral_elliptic(v, Certificate(y, beta), problem, mode)
    totals = [report.total]
    for _ in range(config.max_outer_iters):
        # y step at fixed beta
        if config.y_solver == "quadratic":
            y_new = _solve_y_quadratic(v, problem, beta, y, config, mode)
        else:
            y_new = _solve_y_adam(v, problem, beta, y, config, mode)
        if _total_at(v, problem, beta, y_new, mode) <= _total_at(v, problem, beta, y, mode):
            y = y_new

        # beta step at fixed y
        report = astral_elliptic(v, Certificate(y, beta), problem, mode)
        if b_zero and config.beta_solver == "closed_form":
            A_res = report.residual_term / (1.0 + beta)
            B_flux = report.flux_term * beta / (1.0 + beta)
            beta_new = optimal_beta(A_res, B_flux)
        else:
            beta_new = _golden_beta(
                v, problem, y, config.golden_bracket, config.golden_tol, mode
            )
        if _total_at(v, problem, beta_new, y, mode) <= report.total:
            beta = beta_new

        report = astral_elliptic(v, Certificate(y, beta), problem, mode)
        totals.append(report.total)
        prev = totals[-2]
        if prev > 0 and (prev - report.total) / prev < config.tol:
            break

    return CertifyResult(Certificate(y, beta), report, totals)


def bound_metrics(errors, bounds) -> BoundMetrics:
    """Per-sample ratios bound/error, their mean, and the Pearson correlation.

    The correlation is reported as None (absent, not NaN) when fewer than two
    samples are given or either input has zero variance.
    """
    e = np.asarray(errors, dtype=np.float64)
    b = np.asarray(bounds, dtype=np.float64)
    if e.shape != b.shape or e.ndim != 1 or e.size < 1:
        raise DataError("errors and bounds must be 1D arrays of equal length >= 1")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(e > 0, b / np.where(e > 0, e, 1.0), np.inf)
    corr = None
    if e.size >= 2 and np.std(e) > 0 and np.std(b) > 0:
        corr = float(np.corrcoef(e, b)[0, 1])
    return BoundMetrics(
        errors=e,
        bounds=b,
        ratios=ratios,
        mean_ratio=float(np.mean(ratios[np.isfinite(ratios)])) if np.any(np.isfinite(ratios)) else float("inf"),
        correlation=corr,
    )
