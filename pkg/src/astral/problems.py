"""Problem definitions and random problem generators.

Coefficient fields are random trigonometric polynomials evaluated
analytically at grid nodes, so a problem regenerated at a finer level
agrees bit-exactly with the coarse one at shared nodes. Each problem
carries its generator provenance (family, seeds, parameters) for exactly
that purpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import CoercivityError, DataError, ParameterError
from .field import ScalarField, SPDTensorField, TensorGrid, deriv_fd, grad_fd, lambda_min_field
from .rng import field_stream, substream, ROLES

COERCIVITY_FLOOR = 1e-3
MAX_RESAMPLE = 16

FAMILIES_2D = ("smooth_b", "disc_o", "disc_b", "smooth_o")
FAMILIES_1D = ("1d_1", "1d_2", "1d_3")


@dataclass(frozen=True)
class TrigPolySpec:
    """Random trigonometric polynomial: modes (m, n) up to (N1, N2),
    complex normal coefficients damped by (1 + m + n)^alpha.

    N2 is None for the one-dimensional variant.
    """

    N1: int
    N2: int | None
    alpha: float
    seed: int

    def __post_init__(self):
        if self.N1 < 0 or (self.N2 is not None and self.N2 < 0):
            raise ParameterError("mode counts must be non-negative")


def sample_trig_poly(spec: TrigPolySpec, grid: TensorGrid, rng: np.random.Generator | None = None) -> ScalarField:
    """Draw one random trigonometric polynomial and evaluate it at the nodes.

    The coefficients depend only on the stream, not on the grid, so the same
    seed yields the same continuous function at every resolution.
    """
    if rng is None:
        rng = substream(spec.seed)
    if spec.N2 is None:
        if grid.naxes != 1:
            raise ParameterError("1D spec needs a 1D grid")
        re = rng.standard_normal(spec.N1 + 1)
        im = rng.standard_normal(spec.N1 + 1)
        m = np.arange(spec.N1 + 1)
        c = (re + 1j * im) / (1.0 + m) ** spec.alpha
        x = grid.axis_coords(0)
        basis = np.exp(2j * np.pi * np.outer(x, m))
        return ScalarField(grid, np.real(basis @ c))
    if grid.naxes != 2 or grid.space_time:
        raise ParameterError("2D spec needs a 2D spatial grid")
    shape = (spec.N1 + 1, spec.N2 + 1)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    m = np.arange(spec.N1 + 1)
    n = np.arange(spec.N2 + 1)
    decay = (1.0 + m[:, None] + n[None, :]) ** spec.alpha
    c = (re + 1j * im) / decay
    x1 = grid.axis_coords(0)
    x2 = grid.axis_coords(1)
    e1 = np.exp(2j * np.pi * np.outer(x1, m))
    e2 = np.exp(2j * np.pi * np.outer(x2, n))
    return ScalarField(grid, np.real(e1 @ c @ e2.T))


def _trig(grid: TensorGrid, rng: np.random.Generator, N1=5, N2=5, alpha=2.0) -> ScalarField:
    spec = TrigPolySpec(N1, N2 if grid.naxes == 2 else None, alpha, 0)
    return sample_trig_poly(spec, grid, rng=rng)


@dataclass(frozen=True)
class EllipticProblem:
    """-div(a grad u) + b_sq u = f on the unit interval/square, u = 0 on the boundary.

    ``a`` is either a ScalarField (scalar diffusion a(x) I) or an
    SPDTensorField. ``b_sq`` stores the reaction coefficient itself (the
    square in the operator), so it is non-negative pointwise.
    """

    grid: TensorGrid
    a: SPDTensorField | ScalarField
    b_sq: ScalarField
    f: ScalarField
    exact_solution: ScalarField | None = None
    family: str = "custom"
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if np.min(self.b_sq.values) < 0:
            raise DataError("reaction coefficient b_sq must be non-negative")
        lam = lambda_min_field(self.a)  # raises CoercivityError if indefinite
        del lam

    @property
    def scalar_diffusion(self) -> bool:
        return isinstance(self.a, ScalarField)


@dataclass(frozen=True)
class ConvDiffProblem:
    """u_t - u_xx + a u_x = f on [0,1] x [0,T]; u(x,0) = phi, u(0,t) = u(1,t) = 0.

    The exact solution is always known (manufactured spectral form).
    """

    grid: TensorGrid
    a: float
    f: ScalarField
    phi: ScalarField
    exact_solution: ScalarField
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if not self.grid.space_time:
            raise ParameterError("convection-diffusion needs a space-time grid")
        if not np.allclose(self.exact_solution.values[:, 0], self.phi.values, atol=1e-12):
            raise DataError("exact solution must match the initial condition")


# ---------------------------------------------------------------------------
# 2D elliptic families


def _sample_smooth_tensor(grid, master_seed, sample_index, retry):
    alpha = 0.1 * _trig(grid, field_stream(master_seed, sample_index, "alpha", retry)).values + 1.0
    beta = 0.1 * _trig(grid, field_stream(master_seed, sample_index, "beta", retry)).values + 1.0
    gamma = _trig(grid, field_stream(master_seed, sample_index, "gamma", retry)).values
    # a = L L^T with L = [[alpha, 0], [gamma, beta]]
    a11 = alpha ** 2
    a12 = alpha * gamma
    a22 = gamma ** 2 + beta ** 2
    a = SPDTensorField(
        grid,
        ScalarField(grid, a11),
        ScalarField(grid, a12),
        ScalarField(grid, a22),
    )
    return a


def _sample_disc_scalar(grid, master_seed, sample_index, retry):
    p1 = _trig(grid, field_stream(master_seed, sample_index, "p1", retry)).values
    return ScalarField(grid, np.where(p1 >= 0.0, 10.0, 1.0))


def _coercive(a) -> bool:
    try:
        lam = lambda_min_field(a)
    except CoercivityError:
        return False
    return float(np.min(lam.values)) >= COERCIVITY_FLOOR


def gen_elliptic_2d(family: str, seed: int, grid: TensorGrid, sample_index: int = 0) -> EllipticProblem:
    """One random 2D problem from the named family.

    smooth families build a = L L^T from random trigonometric factors; disc
    families switch the scalar diffusion between 1 and 10 on the sign of a
    random polynomial. Coefficients failing the coercivity floor are
    resampled from the next substream, with a bounded number of retries.
    """
    if family not in FAMILIES_2D:
        raise ParameterError(f"unknown 2D family {family!r}")
    if grid.naxes != 2 or grid.space_time:
        raise ParameterError("2D families need a 2D spatial grid")

    a = None
    for retry in range(MAX_RESAMPLE):
        if family in ("smooth_b", "smooth_o"):
            cand = _sample_smooth_tensor(grid, seed, sample_index, retry)
        else:
            cand = _sample_disc_scalar(grid, seed, sample_index, retry)
        if _coercive(cand):
            a = cand
            break
    if a is None:
        raise CoercivityError(
            f"could not sample a coercive coefficient in {MAX_RESAMPLE} tries"
        )

    zeros = ScalarField.constant(grid, 0.0)
    if family == "smooth_b":
        b = _trig(grid, field_stream(seed, sample_index, "b"))
        b_sq = ScalarField(grid, b.values ** 2)
        f = _trig(grid, field_stream(seed, sample_index, "f"))
    elif family == "disc_o":
        b_sq = zeros
        f = ScalarField.constant(grid, 1.0)
    elif family == "disc_b":
        b = _trig(grid, field_stream(seed, sample_index, "b"))
        b_sq = ScalarField(grid, b.values ** 2)
        f = _trig(grid, field_stream(seed, sample_index, "f"))
    else:  # smooth_o
        b_sq = zeros
        f = _trig(grid, field_stream(seed, sample_index, "f"))

    return EllipticProblem(
        grid=grid,
        a=a,
        b_sq=b_sq,
        f=f,
        family=family,
        provenance={"kind": "elliptic_2d", "family": family, "seed": seed, "sample_index": sample_index},
    )


# ---------------------------------------------------------------------------
# 1D elliptic families


def _trig_1d(grid, rng, N=5, alpha=0.0):
    spec = TrigPolySpec(N, None, alpha, 0)
    return sample_trig_poly(spec, grid, rng=rng)


def gen_elliptic_1d(family: int, seed: int, grid: TensorGrid, sample_index: int = 0) -> EllipticProblem:
    """One random 1D problem from family 1, 2, or 3.

    Families 1 and 2 use a = 0.1 p^2 + 1 with random trigonometric p; family
    3 jumps between 1 and 10 on a random interval and shares one right-hand
    side across all samples drawn with the same seed.
    """
    if family not in (1, 2, 3):
        raise ParameterError(f"1D family must be 1, 2 or 3, got {family}")
    if grid.naxes != 1:
        raise ParameterError("1D families need a 1D grid")

    zeros = ScalarField.constant(grid, 0.0)
    if family in (1, 2):
        p = _trig_1d(grid, field_stream(seed, sample_index, "alpha"))
        a = ScalarField(grid, 0.1 * p.values ** 2 + 1.0)
        f = _trig_1d(grid, field_stream(seed, sample_index, "f"))
        if family == 1:
            b = _trig_1d(grid, field_stream(seed, sample_index, "b"))
            b_sq = ScalarField(grid, (0.2 * b.values) ** 2)
        else:
            b_sq = zeros
        fam_tag = f"1d_{family}"
    else:
        rng = field_stream(seed, sample_index, "jump")
        ab = rng.random(2)
        lo, hi = float(min(ab)), float(max(ab))
        x = grid.axis_coords(0)
        a = ScalarField(grid, np.where((x >= lo) & (x <= hi), 10.0, 1.0))
        # shared right-hand side: keyed by the master seed only
        f = _trig_1d(grid, substream(seed, ROLES["shared_f"]))
        b_sq = zeros
        fam_tag = "1d_3"

    return EllipticProblem(
        grid=grid,
        a=a,
        b_sq=b_sq,
        f=f,
        family=fam_tag,
        provenance={"kind": "elliptic_1d", "family": family, "seed": seed, "sample_index": sample_index},
    )


# ---------------------------------------------------------------------------
# Manufactured 2D problem for physics-informed runs


def bubble_solution(grid: TensorGrid) -> ScalarField:
    """u(x) = x1 (1 - x1) x2 (1 - x2) sampled at the nodes."""
    x1, x2 = grid.meshgrid()
    return ScalarField(grid, x1 * (1 - x1) * x2 * (1 - x2))


def manufactured_rhs(a: ScalarField) -> ScalarField:
    """Right-hand side f = -grad(a) . grad(u) - a lap(u) for the bubble solution.

    grad(a) is taken by finite differences; the solution derivatives are
    analytic.
    """
    grid = a.grid
    x1, x2 = grid.meshgrid()
    ux = (1 - 2 * x1) * x2 * (1 - x2)
    uy = x1 * (1 - x1) * (1 - 2 * x2)
    lap = -2.0 * (x2 * (1 - x2) + x1 * (1 - x1))
    ga = grad_fd(a)
    f = -(ga[0].values * ux + ga[1].values * uy) - a.values * lap
    return ScalarField(grid, f)


def _grf_inv_lap_sq(grid: TensorGrid, rng: np.random.Generator, n_modes: int = 16) -> np.ndarray:
    """Real draw from the N(0, (I - lap)^{-2}) field on the periodic square.

    Truncated spectral sampling: modes m, n in [-n_modes, n_modes] with
    complex normal coefficients damped by (1 + 4 pi^2 (m^2 + n^2))^2.
    """
    modes = np.arange(-n_modes, n_modes + 1)
    mm, nn = np.meshgrid(modes, modes, indexing="ij")
    xi = rng.standard_normal(mm.shape)
    eta = rng.standard_normal(mm.shape)
    coef = (xi + 1j * eta) / (1.0 + 4.0 * np.pi ** 2 * (mm ** 2 + nn ** 2)) ** 2
    x1 = grid.axis_coords(0)
    x2 = grid.axis_coords(1)
    e1 = np.exp(2j * np.pi * np.outer(x1, modes))
    e2 = np.exp(2j * np.pi * np.outer(x2, modes))
    return np.real(e1 @ coef @ e2.T)


def gen_pinn_problem(seed: int, grid: TensorGrid) -> EllipticProblem:
    """Manufactured problem with random positive diffusion of widely varying scale.

    The diffusion draw is rescaled affinely to [1, 6] and then divided by a
    sample from an exponential distribution with mean 100. The exact solution
    is the bubble x1(1-x1)x2(1-x2) and f follows from it.
    """
    if grid.naxes != 2 or grid.space_time:
        raise ParameterError("needs a 2D spatial grid")
    g = _grf_inv_lap_sq(grid, field_stream(seed, 0, "grf"))
    gmin, gmax = float(np.min(g)), float(np.max(g))
    if gmax - gmin < 1e-12:
        scaled = np.full(grid.shape, 1.0)
    else:
        scaled = 1.0 + 5.0 * (g - gmin) / (gmax - gmin)
    s = float(field_stream(seed, 0, "scale").exponential(100.0))
    a = ScalarField(grid, scaled / s)
    u = bubble_solution(grid)
    f = manufactured_rhs(a)
    return EllipticProblem(
        grid=grid,
        a=a,
        b_sq=ScalarField.constant(grid, 0.0),
        f=f,
        exact_solution=u,
        family="pinn_manufactured",
        provenance={"kind": "pinn", "seed": seed, "scale": s},
    )


# ---------------------------------------------------------------------------
# Convection-diffusion (manufactured)


def _convdiff_coeffs(seed: int, N: int) -> tuple[np.ndarray, float]:
    rng = field_stream(seed, 0, "coeffs")
    k = np.arange(N + 1)
    re = rng.standard_normal(N + 1)
    im = rng.standard_normal(N + 1)
    c = (re + 1j * im) / (1.0 + (np.pi * k / 5.0) ** 2) ** 2
    speed = float(0.01 * field_stream(seed, 0, "speed").standard_normal())
    return c, speed


def _convdiff_modes(c: np.ndarray, speed: float, x: np.ndarray, t: np.ndarray):
    """Spectral part w(x,t) = sum_k c_k exp(-(2 pi k)^2 t - 2 pi k a i t + 2 pi k x i)
    and its x-derivative, evaluated on the (x, t) product grid."""
    k = np.arange(len(c))
    decay = np.exp(-np.outer((2.0 * np.pi * k) ** 2, t) - 1j * np.outer(2.0 * np.pi * k * speed, t))
    waves = np.exp(1j * 2.0 * np.pi * np.outer(x, k))
    w = waves @ (c[:, None] * decay)
    wx = (waves * (1j * 2.0 * np.pi * k)[None, :]) @ (c[:, None] * decay)
    return np.real(w), np.real(wx)


def gen_convdiff(seed: int, grid: TensorGrid, N: int = 150) -> ConvDiffProblem:
    """Manufactured convection-diffusion problem on a space-time grid.

    The exact solution is a damped random wave packet times sin(pi x); the
    source term follows from it in closed form.
    """
    if not grid.space_time:
        raise ParameterError("needs a space-time grid")
    c, speed = _convdiff_coeffs(seed, N)
    x = grid.axis_coords(0)
    t = grid.axis_coords(1)
    w, wx = _convdiff_modes(c, speed, x, t)
    sin = np.sin(np.pi * x)[:, None]
    cos = np.cos(np.pi * x)[:, None]
    u = w * sin
    f = w * (np.pi ** 2 * sin + speed * np.pi * cos) - 2.0 * np.pi * wx * cos
    phi = ScalarField(TensorGrid(dim=1, level=grid.level), u[:, 0])
    return ConvDiffProblem(
        grid=grid,
        a=speed,
        f=ScalarField(grid, f),
        phi=phi,
        exact_solution=ScalarField(grid, u),
        provenance={"kind": "convdiff", "seed": seed, "N": N},
    )


def _modes_scattered(c: np.ndarray, speed: float, x: np.ndarray, t: np.ndarray):
    """Spectral part w and w_x at scattered (x, t) points."""
    k = np.arange(len(c))
    lam = (2.0 * np.pi * k) ** 2
    decay = np.exp(-np.outer(t, lam))                      # (pts, modes)
    theta = 2.0 * np.pi * (np.outer(x, k) - speed * np.outer(t, k))
    re, im = c.real[None, :], c.imag[None, :]
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    w = np.sum(decay * (re * cos_t - im * sin_t), axis=1)
    wx = np.sum(decay * 2.0 * np.pi * k[None, :] * (-re * sin_t - im * cos_t), axis=1)
    return w, wx


def convdiff_source_at(problem: ConvDiffProblem, points: np.ndarray) -> np.ndarray:
    """Analytic source term at scattered space-time points."""
    c, speed = _convdiff_coeffs(problem.provenance["seed"], problem.provenance["N"])
    pts = np.atleast_2d(points)
    x, t = pts[:, 0], pts[:, 1]
    w, wx = _modes_scattered(c, speed, x, t)
    sin, cos = np.sin(np.pi * x), np.cos(np.pi * x)
    return w * (np.pi ** 2 * sin + speed * np.pi * cos) - 2.0 * np.pi * wx * cos


def convdiff_initial_jets(problem: ConvDiffProblem, x: np.ndarray):
    """Initial condition phi and its first two derivatives at scattered x."""
    c, speed = _convdiff_coeffs(problem.provenance["seed"], problem.provenance["N"])
    k = np.arange(len(c))
    theta = 2.0 * np.pi * np.outer(x, k)
    re, im = c.real[None, :], c.imag[None, :]
    w = np.sum(re * np.cos(theta) - im * np.sin(theta), axis=1)
    wx = np.sum(2.0 * np.pi * k[None, :] * (-re * np.sin(theta) - im * np.cos(theta)), axis=1)
    wxx = np.sum((2.0 * np.pi * k[None, :]) ** 2 * (-re * np.cos(theta) + im * np.sin(theta)), axis=1)
    sin, cos = np.sin(np.pi * x), np.cos(np.pi * x)
    phi = w * sin
    dphi = wx * sin + w * np.pi * cos
    ddphi = wxx * sin + 2.0 * np.pi * wx * cos - w * np.pi ** 2 * sin
    return phi, dphi, ddphi


def convdiff_exact_flux(problem: ConvDiffProblem) -> ScalarField:
    """Analytic x-derivative of the exact solution, from the stored provenance."""
    seed = problem.provenance["seed"]
    N = problem.provenance["N"]
    c, speed = _convdiff_coeffs(seed, N)
    grid = problem.grid
    x = grid.axis_coords(0)
    t = grid.axis_coords(1)
    w, wx = _convdiff_modes(c, speed, x, t)
    sin = np.sin(np.pi * x)[:, None]
    cos = np.cos(np.pi * x)[:, None]
    return ScalarField(grid, wx * sin + w * np.pi * cos)


# ---------------------------------------------------------------------------
# Regeneration from provenance (used for fine-grid reference solutions)


def regenerate(problem: EllipticProblem, level: int) -> EllipticProblem:
    """Re-sample the same problem (same seeds) on a grid at the given level."""
    prov = problem.provenance
    if not prov:
        raise ParameterError("problem carries no provenance; cannot regenerate")
    kind = prov["kind"]
    if kind == "elliptic_2d":
        grid = TensorGrid(dim=2, level=level)
        return gen_elliptic_2d(prov["family"], prov["seed"], grid, prov["sample_index"])
    if kind == "elliptic_1d":
        grid = TensorGrid(dim=1, level=level)
        return gen_elliptic_1d(prov["family"], prov["seed"], grid, prov["sample_index"])
    if kind == "pinn":
        grid = TensorGrid(dim=2, level=level)
        return gen_pinn_problem(prov["seed"], grid)
    raise ParameterError(f"cannot regenerate problems of kind {kind!r}")
