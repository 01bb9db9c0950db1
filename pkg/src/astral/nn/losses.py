"""Torch-side loss builders for physics-informed training.

Each builder precomputes everything that does not depend on network
parameters (quadrature nodes, coefficient values at those nodes, exact
initial data) with numpy, and returns a closure producing a differentiable
torch scalar. The majorant weights are shared with the grid-side module, so
both paths evaluate the same formulas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import ParameterError
from ..field import ScalarField, gauss_nodes, grad_fd, interpolate
from ..majorant import SAFE, PAPER, flux_factor, residual_weight
from ..problems import (
    ConvDiffProblem,
    EllipticProblem,
    convdiff_initial_jets,
    convdiff_source_at,
)
from ..rng import substream, ROLES
from .nets import DTYPE, input_jet

_PI = float(np.pi)


def _t(arr) -> torch.Tensor:
    return torch.as_tensor(np.asarray(arr, dtype=np.float64), dtype=DTYPE)


def boundary_points(grid, per_edge: int = 64) -> np.ndarray:
    """Uniform points on the spatial boundary (2D edges or 1D endpoints)."""
    if grid.dim == 1 and not grid.space_time:
        return np.array([[0.0], [1.0]])
    s = np.linspace(0.0, 1.0, per_edge)
    zeros, ones = np.zeros_like(s), np.ones_like(s)
    return np.concatenate(
        [
            np.stack([s, zeros], axis=1),
            np.stack([s, ones], axis=1),
            np.stack([zeros, s], axis=1),
            np.stack([ones, s], axis=1),
        ]
    )


@dataclass
class EllipticPack:
    """Fixed quadrature data for one scalar-diffusion elliptic problem."""

    problem: EllipticProblem
    pts: np.ndarray
    w: torch.Tensor
    a: torch.Tensor
    grad_a: tuple[torch.Tensor, ...]
    b_sq: torch.Tensor
    f: torch.Tensor
    inf_a: float
    u_exact: torch.Tensor | None
    bdry: torch.Tensor


def make_elliptic_pack(problem: EllipticProblem, n_gauss: int = 16) -> EllipticPack:
    if not problem.scalar_diffusion:
        raise ParameterError("network losses support scalar diffusion")
    grid = problem.grid
    pts, w = gauss_nodes(grid, n_gauss)
    a_vals = interpolate(problem.a, pts)
    ga = grad_fd(problem.a)
    grad_a = tuple(_t(interpolate(c, pts)) for c in ga.components)
    u_ex = None
    if problem.exact_solution is not None:
        u_ex = _t(interpolate(problem.exact_solution, pts))
    return EllipticPack(
        problem=problem,
        pts=pts,
        w=_t(w),
        a=_t(a_vals),
        grad_a=grad_a,
        b_sq=_t(interpolate(problem.b_sq, pts)),
        f=_t(interpolate(problem.f, pts)),
        inf_a=float(np.min(problem.a.values)),
        u_exact=u_ex,
        bdry=_t(boundary_points(grid)),
    )


def _boundary_term(unet, bdry: torch.Tensor) -> torch.Tensor:
    vals = unet(bdry)
    return torch.sqrt(torch.mean(vals ** 2))


def astral_loss_fn(unet, ynets, log_beta, pack: EllipticPack, mode: str = SAFE, bc_lambda: float | None = None):
    """Majorant loss at Gauss nodes; optionally adds a boundary penalty."""
    dim = pack.problem.grid.dim
    denom = _PI ** 2 * (dim ** 2 if mode == PAPER else dim) * pack.inf_a
    C = 1.0 / np.sqrt(denom)

    def closure() -> torch.Tensor:
        beta = torch.exp(log_beta)
        u, gu = input_jet(unet, pack.pts, 1)
        div_y = 0.0
        ys = []
        for ax, ynet in enumerate(ynets):
            yv, gy = input_jet(ynet, pack.pts, 1)
            ys.append(yv)
            div_y = div_y + gy[:, ax]
        R = pack.f - pack.b_sq * u + div_y
        wgt = residual_weight(C, pack.b_sq, beta)
        total = torch.sum(pack.w * wgt * R ** 2)
        mism = sum((pack.a * gu[:, ax] - ys[ax]) ** 2 for ax in range(dim))
        total = total + flux_factor(beta) * torch.sum(pack.w * mism / pack.a)
        if bc_lambda is not None:
            return torch.sqrt(total) + bc_lambda * _boundary_term(unet, pack.bdry)
        return total

    return closure


def residual_loss_fn(unet, pack: EllipticPack, points: np.ndarray):
    """Mean squared strong residual at collocation points."""
    a = _t(interpolate(pack.problem.a, points))
    ga = grad_fd(pack.problem.a)
    grad_a = tuple(_t(interpolate(c, points)) for c in ga.components)
    f = _t(interpolate(pack.problem.f, points))
    b_sq = _t(interpolate(pack.problem.b_sq, points))

    def closure() -> torch.Tensor:
        u, gu, su = input_jet(unet, points, 2)
        res = f - b_sq * u
        for ax in range(points.shape[1]):
            res = res + grad_a[ax] * gu[:, ax] + a * su[:, ax]
        return torch.mean(res ** 2)

    return closure


def variational_loss_fn(
    unet,
    pack: EllipticPack,
    mc_seed: int | None = None,
    mc_points: int = 4096,
    fixed_epoch: int | None = None,
):
    """Energy functional, Gauss nodes by default or fresh Monte Carlo points.

    In Monte Carlo mode each call resamples points from the seeded stream
    (the call counter is part of the key), mirroring stochastic training.
    ``fixed_epoch`` pins the stream to one epoch's points, which makes the
    loss a fixed quadrature (used by the gradient checks).
    """
    state = {"epoch": 0}

    def closure() -> torch.Tensor:
        if mc_seed is None:
            pts, w, a, f = pack.pts, pack.w, pack.a, pack.f
        else:
            epoch = state["epoch"] if fixed_epoch is None else fixed_epoch
            rng = substream(mc_seed, ROLES["points"], epoch)
            state["epoch"] += 1
            pts = rng.random((mc_points, pack.problem.grid.dim))
            vol = pack.problem.grid.volume
            w = _t(np.full(len(pts), vol / len(pts)))
            a = _t(interpolate(pack.problem.a, pts))
            f = _t(interpolate(pack.problem.f, pts))
        u, gu = input_jet(unet, pts, 1)
        dens = 0.5 * a * torch.sum(gu ** 2, dim=1) - f * u
        return torch.sum(w * dens)

    return closure


def l2_loss_fn(unet, pack: EllipticPack):
    if pack.u_exact is None:
        raise ParameterError("supervised loss needs an exact solution")

    def closure() -> torch.Tensor:
        (u,) = input_jet(unet, pack.pts, 0)
        return torch.sqrt(torch.sum(pack.w * (u - pack.u_exact) ** 2))

    return closure


def pino_loss_fn(unet, pack: EllipticPack, points: np.ndarray, alpha: float = 1.0, gamma: float = 1.0):
    """Data L2 distance + alpha * residual norm + gamma * boundary term."""
    if pack.u_exact is None:
        raise ParameterError("pino loss needs an exact solution")
    res_closure = residual_loss_fn(unet, pack, points)

    def closure() -> torch.Tensor:
        (u,) = input_jet(unet, pack.pts, 0)
        data = torch.sqrt(torch.sum(pack.w * (u - pack.u_exact) ** 2))
        res = torch.sqrt(res_closure())
        return data + alpha * res + gamma * _boundary_term(unet, pack.bdry)

    return closure


# ---------------------------------------------------------------------------
# Convection-diffusion (space-time) losses


@dataclass
class ConvDiffPack:
    problem: ConvDiffProblem
    pts: np.ndarray
    w: torch.Tensor
    f: torch.Tensor
    phi: torch.Tensor
    dphi: torch.Tensor
    ddphi: torch.Tensor


def make_convdiff_pack(problem: ConvDiffProblem, n_gauss: int = 16) -> ConvDiffPack:
    pts, w = gauss_nodes(problem.grid, n_gauss)
    f = convdiff_source_at(problem, pts)
    phi, dphi, ddphi = convdiff_initial_jets(problem, pts[:, 0])
    return ConvDiffPack(
        problem=problem,
        pts=pts,
        w=_t(w),
        f=_t(f),
        phi=_t(phi),
        dphi=_t(dphi),
        ddphi=_t(ddphi),
    )


def _composed_jets(unet, pack_pts, phi, dphi, ddphi, order=1):
    """Jets of v(x,t) = phi(x) + t sin(pi x) net(x,t).

    The representation matches the initial condition at t = 0 and vanishes
    at x in {0, 1} exactly.
    """
    x = _t(pack_pts[:, 0])
    t = _t(pack_pts[:, 1])
    sin, cos = torch.sin(_PI * x), torch.cos(_PI * x)
    if order >= 2:
        n, gn, sn = input_jet(unet, pack_pts, 2)
    else:
        n, gn = input_jet(unet, pack_pts, 1)
    v = phi + t * sin * n
    v_x = dphi + t * (_PI * cos * n + sin * gn[:, 0])
    v_t = sin * n + t * sin * gn[:, 1]
    if order < 2:
        return v, v_x, v_t
    v_xx = ddphi + t * (-_PI ** 2 * sin * n + 2.0 * _PI * cos * gn[:, 0] + sin * sn[:, 0])
    return v, v_x, v_t, v_xx


def astral_convdiff_loss_fn(unet, ynet, pack: ConvDiffPack):
    a = pack.problem.a

    def closure() -> torch.Tensor:
        v, v_x, v_t = _composed_jets(unet, pack.pts, pack.phi, pack.dphi, pack.ddphi, 1)
        y, gy = input_jet(ynet, pack.pts, 1)
        R = pack.f - v_t - a * v_x + gy[:, 0]
        dens = (y - v_x) ** 2 + R ** 2 / _PI
        return torch.sum(pack.w * dens)

    return closure


def residual_convdiff_loss_fn(unet, problem: ConvDiffProblem, points: np.ndarray):
    f = _t(convdiff_source_at(problem, points))
    phi, dphi, ddphi = (_t(z) for z in convdiff_initial_jets(problem, points[:, 0]))
    a = problem.a

    def closure() -> torch.Tensor:
        v, v_x, v_t, v_xx = _composed_jets(unet, points, phi, dphi, ddphi, 2)
        res = v_t - v_xx + a * v_x - f
        return torch.mean(res ** 2)

    return closure
