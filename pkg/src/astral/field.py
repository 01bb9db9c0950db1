"""Uniform tensor grids, nodal fields, quadrature, and discrete calculus.

Grids cover the unit interval/square, or [0,1] x [0,T] for space-time
problems, with 2^J + 1 nodes per axis. Fields store one float64 value per
node, row-major with axis order (x1, x2) or (x, t). All types are immutable
after construction and every operation is a pure function of its inputs.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import CoercivityError, DataError, ParameterError
from .rng import counter_points

MIN_LEVEL = 3
MAX_LEVEL = 12


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True, order="C")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TensorGrid:
    """Uniform node grid: 2^level + 1 nodes per axis.

    ``dim`` counts spatial axes; with ``space_time`` a trailing time axis on
    [0, time_extent] is appended. Spatial spacing is 1/2^level, which is a
    dyadic rational, so node coordinates i*h are bit-exact and nested grids
    share node coordinates exactly.
    """

    dim: int
    level: int
    space_time: bool = False
    time_extent: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ParameterError(f"dim must be 1 or 2, got {self.dim}")
        if not (MIN_LEVEL <= self.level <= MAX_LEVEL):
            raise ParameterError(
                f"level must be in [{MIN_LEVEL}, {MAX_LEVEL}], got {self.level}"
            )
        if self.space_time:
            if self.dim != 1:
                raise ParameterError("space-time grids support one spatial axis")
            if not self.time_extent > 0:
                raise ParameterError("time_extent must be positive")

    @property
    def nodes_per_axis(self) -> int:
        return 2 ** self.level + 1

    @property
    def naxes(self) -> int:
        return self.dim + (1 if self.space_time else 0)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.nodes_per_axis,) * self.naxes

    @property
    def extents(self) -> tuple[float, ...]:
        ext = [1.0] * self.dim
        if self.space_time:
            ext.append(float(self.time_extent))
        return tuple(ext)

    @property
    def spacings(self) -> tuple[float, ...]:
        n_cells = 2 ** self.level
        return tuple(e / n_cells for e in self.extents)

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))

    def axis_coords(self, axis: int) -> np.ndarray:
        h = self.spacings[axis]
        return np.arange(self.nodes_per_axis) * h

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        coords = [self.axis_coords(ax) for ax in range(self.naxes)]
        return tuple(np.meshgrid(*coords, indexing="ij"))

    def boundary_mask(self) -> np.ndarray:
        """True at nodes on the spatial boundary (time axis excluded)."""
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            idx_lo = [slice(None)] * self.naxes
            idx_lo[ax] = 0
            idx_hi = [slice(None)] * self.naxes
            idx_hi[ax] = -1
            mask[tuple(idx_lo)] = True
            mask[tuple(idx_hi)] = True
        return mask


def make_grid(dim: int, J: int, time_extent: float | None = None) -> TensorGrid:
    """Grid on [0,1]^dim, or [0,1] x [0,time_extent] when time_extent is given."""
    if time_extent is not None:
        return TensorGrid(dim=dim, level=J, space_time=True, time_extent=time_extent)
    return TensorGrid(dim=dim, level=J)


@dataclass(frozen=True)
class ScalarField:
    """One float64 value per grid node, row-major over axes."""

    grid: TensorGrid
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values)
        if arr.shape != self.grid.shape:
            raise DataError(
                f"field shape {arr.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise DataError("field contains non-finite values")
        object.__setattr__(self, "values", arr)

    @staticmethod
    def from_function(grid: TensorGrid, fn) -> "ScalarField":
        return ScalarField(grid, fn(*grid.meshgrid()))

    @staticmethod
    def constant(grid: TensorGrid, value: float) -> "ScalarField":
        return ScalarField(grid, np.full(grid.shape, float(value)))


@dataclass(frozen=True)
class VectorField:
    """One ScalarField per spatial axis, all on the same grid."""

    grid: TensorGrid
    components: tuple[ScalarField, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        for c in comps:
            if c.grid != self.grid:
                raise DataError("vector components must share one grid")
        object.__setattr__(self, "components", comps)

    def __getitem__(self, i: int) -> ScalarField:
        return self.components[i]

    def __len__(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class SPDTensorField:
    """Symmetric 2x2 tensor field (a21 = a12 by construction)."""

    grid: TensorGrid
    a11: ScalarField
    a12: ScalarField
    a22: ScalarField

    def __post_init__(self):
        for c in (self.a11, self.a12, self.a22):
            if c.grid != self.grid:
                raise DataError("tensor entries must share one grid")


# ---------------------------------------------------------------------------
# Quadrature


@dataclass(frozen=True)
class Trapezoid:
    pass


@dataclass(frozen=True)
class Gauss:
    n: int = 16


@dataclass(frozen=True)
class MonteCarlo:
    m: int
    seed: int


@functools.lru_cache(maxsize=None)
def _trapezoid_axis_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = h / 2.0
    w.setflags(write=False)
    return w

def trapezoid_weights(grid: TensorGrid) -> np.ndarray:
    """Tensor-product trapezoid weights, one per node."""
    w = _trapezoid_axis_weights(grid.nodes_per_axis, grid.spacings[0])
    for ax in range(1, grid.naxes):
        w = np.multiply.outer(w, _trapezoid_axis_weights(grid.nodes_per_axis, grid.spacings[ax]))
    return w


def trapz(values: np.ndarray, grid: TensorGrid) -> float:
    return float(np.sum(trapezoid_weights(grid) * values))


@functools.lru_cache(maxsize=None)
def gauss_axis_nodes(n: int, length: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights mapped from [-1,1] to [0, length]."""
    if not 1 <= n <= 64:
        raise ParameterError(f"gauss order must be in [1, 64], got {n}")
    t, w = np.polynomial.legendre.leggauss(n)
    nodes = (t + 1.0) * (length / 2.0)
    weights = w * (length / 2.0)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_nodes(grid: TensorGrid, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product Gauss nodes (k, naxes) and weights (k,) on the domain."""
    per_axis = [gauss_axis_nodes(n, e) for e in grid.extents]
    mesh = np.meshgrid(*[p[0] for p in per_axis], indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    w = per_axis[0][1]
    for _, wa in per_axis[1:]:
        w = np.multiply.outer(w, wa)
    return pts, w.ravel()


def interpolate(field: ScalarField, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of a nodal field at arbitrary points.

    Points outside the domain are clamped to the boundary.
    """
    grid = field.grid
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] != grid.naxes:
        raise DataError(f"points must have {grid.naxes} coordinates")
    n = grid.nodes_per_axis
    vals = field.values
    idx = []
    frac = []
    for ax in range(grid.naxes):
        h = grid.spacings[ax]
        t = np.clip(pts[:, ax] / h, 0.0, n - 1.0)
        i0 = np.minimum(t.astype(np.int64), n - 2)
        idx.append(i0)
        frac.append(t - i0)
    if grid.naxes == 1:
        i0 = idx[0]
        s = frac[0]
        return (1 - s) * vals[i0] + s * vals[i0 + 1]
    i0, j0 = idx
    s, t = frac
    return (
        (1 - s) * (1 - t) * vals[i0, j0]
        + s * (1 - t) * vals[i0 + 1, j0]
        + (1 - s) * t * vals[i0, j0 + 1]
        + s * t * vals[i0 + 1, j0 + 1]
    )


def integrate(field: ScalarField, rule: Trapezoid | Gauss | MonteCarlo = Trapezoid()) -> float:
    """Integral of the field over its domain under the given rule.

    Trapezoid sums nodal values against tensor-product weights. Gauss
    evaluates the multilinear interpolant at tensor-product Gauss-Legendre
    nodes. Monte Carlo averages the interpolant at uniform points from a
    counter-based stream, deterministic for a fixed seed.
    """
    if isinstance(rule, Trapezoid):
        return trapz(field.values, field.grid)
    if isinstance(rule, Gauss):
        pts, w = gauss_nodes(field.grid, rule.n)
        return float(np.sum(w * interpolate(field, pts)))
    if isinstance(rule, MonteCarlo):
        if rule.m < 1:
            raise ParameterError("monte_carlo needs at least one point")
        pts = counter_points(rule.seed, rule.m, field.grid.naxes)
        pts = pts * np.asarray(field.grid.extents)
        return field.grid.volume * float(np.mean(interpolate(field, pts)))
    raise ParameterError(f"unknown quadrature rule {rule!r}")


# ---------------------------------------------------------------------------
# Finite differences

@functools.lru_cache(maxsize=None)
def diff_matrix(n: int, h: float) -> sp.csr_matrix:
    """First-derivative matrix: central interior, 3-point one-sided at ends.

    Both stencils are second order, so the operator is exact for quadratics.
    """
    rows, cols, vals = [], [], []
    inv2h = 1.0 / (2.0 * h)
    rows += [0, 0, 0]
    cols += [0, 1, 2]
    vals += [-3.0 * inv2h, 4.0 * inv2h, -1.0 * inv2h]
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-inv2h, inv2h]
    rows += [n - 1, n - 1, n - 1]
    cols += [n - 1, n - 2, n - 3]
    vals += [3.0 * inv2h, -4.0 * inv2h, 1.0 * inv2h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def apply_axis(matrix: sp.csr_matrix, values: np.ndarray, axis: int) -> np.ndarray:
    """Apply a (n x n) matrix along one axis of a nodal value array."""
    if values.ndim == 1:
        return matrix @ values
    if axis == 0:
        return matrix @ values
    return (matrix @ values.T).T


def deriv_fd(u: ScalarField, axis: int) -> ScalarField:
    """Second-order finite-difference derivative along one axis."""
    grid = u.grid
    d = diff_matrix(grid.nodes_per_axis, grid.spacings[axis])
    return ScalarField(grid, apply_axis(d, u.values, axis))


def grad_fd(u: ScalarField) -> VectorField:
    """Gradient over the spatial axes (time axis, if any, is excluded)."""
    comps = tuple(deriv_fd(u, ax) for ax in range(u.grid.dim))
    return VectorField(u.grid, comps)


def div_fd(y: VectorField) -> ScalarField:
    """Divergence: sum over components of the derivative along their own axis."""
    grid = y.grid
    total = np.zeros(grid.shape)
    for ax, comp in enumerate(y.components):
        d = diff_matrix(grid.nodes_per_axis, grid.spacings[ax])
        total = total + apply_axis(d, comp.values, ax)
    return ScalarField(grid, total)


def restrict(field: ScalarField, target_level: int) -> ScalarField:
    """Pointwise injection onto the nested coarser grid at target_level."""
    grid = field.grid
    if target_level >= grid.level:
        raise ParameterError(
            f"target level {target_level} must be below field level {grid.level}"
        )
    stride = 2 ** (grid.level - target_level)
    coarse = TensorGrid(
        dim=grid.dim,
        level=target_level,
        space_time=grid.space_time,
        time_extent=grid.time_extent,
    )
    sl = (slice(None, None, stride),) * grid.naxes
    return ScalarField(coarse, field.values[sl])


def lambda_min_field(a: SPDTensorField | ScalarField) -> ScalarField:
    """Pointwise smaller eigenvalue of the diffusion tensor.

    For scalar diffusion this is the coefficient itself. Raises
    CoercivityError if the result is not strictly positive everywhere.
    """
    if isinstance(a, ScalarField):
        lam = a.values
        grid = a.grid
    else:
        tr = a.a11.values + a.a22.values
        det = a.a11.values * a.a22.values - a.a12.values ** 2
        disc = np.sqrt(np.maximum(tr ** 2 - 4.0 * det, 0.0))
        lam = (tr - disc) / 2.0
        grid = a.grid
    if np.min(lam) <= 0.0:
        raise CoercivityError(
            f"diffusion coefficient has min eigenvalue {np.min(lam):.3e} <= 0"
        )
    return ScalarField(grid, lam)


def tensor_quadratic_form(
    a: SPDTensorField | ScalarField,
    w: VectorField,
    inverse: bool = False,
) -> np.ndarray:
    """Pointwise w^T a^{+-1} w for scalar or 2x2 symmetric tensor weights."""
    if isinstance(a, ScalarField):
        coef = 1.0 / a.values if inverse else a.values
        if np.min(a.values) <= 0.0 and inverse:
            raise CoercivityError("scalar diffusion not positive")
        return coef * sum(c.values ** 2 for c in w.components)
    if len(w) != 2:
        raise DataError("tensor weight needs a 2-component field")
    w1, w2 = w.components[0].values, w.components[1].values
    a11, a12, a22 = a.a11.values, a.a12.values, a.a22.values
    if inverse:
        det = a11 * a22 - a12 ** 2
        if np.min(det) <= 0.0 or np.min(a11) <= 0.0:
            raise CoercivityError("tensor diffusion not positive definite")
        b11, b12, b22 = a22 / det, -a12 / det, a11 / det
    else:
        b11, b12, b22 = a11, a12, a22
    return b11 * w1 ** 2 + 2.0 * b12 * w1 * w2 + b22 * w2 ** 2


def tensor_apply(a: SPDTensorField | ScalarField, w: VectorField) -> VectorField:
    """Pointwise matrix-vector product a w."""
    if isinstance(a, ScalarField):
        comps = tuple(ScalarField(w.grid, a.values * c.values) for c in w.components)
        return VectorField(w.grid, comps)
    w1, w2 = w.components[0].values, w.components[1].values
    r1 = a.a11.values * w1 + a.a12.values * w2
    r2 = a.a12.values * w1 + a.a22.values * w2
    return VectorField(w.grid, (ScalarField(w.grid, r1), ScalarField(w.grid, r2)))


def tensor_apply_inverse(a: SPDTensorField | ScalarField, w: VectorField) -> VectorField:
    """Pointwise matrix-vector product a^{-1} w."""
    if isinstance(a, ScalarField):
        comps = tuple(ScalarField(w.grid, c.values / a.values) for c in w.components)
        return VectorField(w.grid, comps)
    w1, w2 = w.components[0].values, w.components[1].values
    a11, a12, a22 = a.a11.values, a.a12.values, a.a22.values
    det = a11 * a22 - a12 ** 2
    if np.min(det) <= 0.0:
        raise CoercivityError("tensor diffusion singular at a node")
    r1 = (a22 * w1 - a12 * w2) / det
    r2 = (-a12 * w1 + a11 * w2) / det
    return VectorField(w.grid, (ScalarField(w.grid, r1), ScalarField(w.grid, r2)))
