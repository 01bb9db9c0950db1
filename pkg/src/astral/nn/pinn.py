"""Physics-informed training of coordinate networks on one problem.

Supports the majorant loss (solution net, one flux net per axis, and a
log-parameterized beta), the collocation residual loss, the variational
energy loss under Gauss or Monte Carlo integration, and the supervised
baselines. The trace records the loss and the energy error against the
manufactured solution at a fixed logging period.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import torch

from ..errors import ParameterError, TrainingError
from ..field import ScalarField
from ..norms import cd_error_norm, energy_norm
from ..problems import ConvDiffProblem, EllipticProblem
from ..rng import substream, ROLES
from .losses import (
    ConvDiffPack,
    EllipticPack,
    astral_convdiff_loss_fn,
    astral_loss_fn,
    l2_loss_fn,
    make_convdiff_pack,
    make_elliptic_pack,
    pino_loss_fn,
    residual_convdiff_loss_fn,
    residual_loss_fn,
    variational_loss_fn,
)
from .nets import DTYPE, DenseNet, param_grad
from .optim import OptimizerConfig, OptimizerState, apply_state, optimizer_step

LOSS_KINDS = (
    "residual",
    "variational_gauss",
    "variational_mc",
    "astral",
    "astral_bc",
    "pino",
    "l2_supervised",
)


@dataclass
class TrainConfig:
    loss: str = "astral"
    optimizer: OptimizerConfig = dc_field(
        default_factory=lambda: OptimizerConfig(
            kind="lion", lr=1e-3, beta1=0.9, beta2=0.99,
            weight_decay=0.0, decay_factor=0.5, decay_period=1000,
        )
    )
    epochs: int = 2000
    gauss_n: int = 16
    mc_points: int = 4096
    collocation_points: int = 1024
    seed: int = 0
    log_period: int = 100
    lam: float = 1.0
    pino_alpha: float = 1.0
    pino_gamma: float = 1.0
    learn_beta: bool = True
    beta_init: float = 1.0
    fourier_sigma: float = 1.0
    features: int = 50
    width: int = 50
    depth: int = 3

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ParameterError(f"unknown loss kind {self.loss!r}")
        if self.epochs < 0:
            raise ParameterError("epochs must be non-negative")


@dataclass
class PinnResult:
    nets: dict
    trace: list[dict]
    config: TrainConfig

    @property
    def final(self) -> dict:
        return self.trace[-1]


def _collocation(problem, n_points: int, seed: int) -> np.ndarray:
    rng = substream(seed, ROLES["points"])
    grid = problem.grid
    pts = rng.random((n_points, grid.naxes))
    return pts * np.asarray(grid.extents)


def _grid_points(grid) -> np.ndarray:
    mesh = grid.meshgrid()
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _elliptic_setup(problem: EllipticProblem, config: TrainConfig):
    pack = make_elliptic_pack(problem, config.gauss_n)
    dim = problem.grid.dim
    masked = config.loss not in ("astral_bc", "pino")
    unet = DenseNet(
        dim, features=config.features, width=config.width, depth=config.depth,
        sigma=config.fourier_sigma, boundary_mask=masked, seed=config.seed,
    )
    nets = {"u": unet}
    params = list(unet.parameters())
    log_beta = torch.tensor(float(np.log(config.beta_init)), dtype=DTYPE, requires_grad=True)

    if config.loss in ("astral", "astral_bc"):
        ynets = [
            DenseNet(
                dim, features=config.features, width=config.width, depth=config.depth,
                sigma=config.fourier_sigma, boundary_mask=False, seed=config.seed + 1 + ax,
            )
            for ax in range(dim)
        ]
        for ax, ynet in enumerate(ynets):
            nets[f"y{ax}"] = ynet
            params += list(ynet.parameters())
        if config.learn_beta:
            params.append(log_beta)
        lam = config.lam if config.loss == "astral_bc" else None
        closure = astral_loss_fn(unet, ynets, log_beta, pack, bc_lambda=lam)
    elif config.loss == "residual":
        pts = _collocation(problem, config.collocation_points, config.seed)
        closure = residual_loss_fn(unet, pack, pts)
    elif config.loss == "variational_gauss":
        closure = variational_loss_fn(unet, pack)
    elif config.loss == "variational_mc":
        closure = variational_loss_fn(unet, pack, mc_seed=config.seed, mc_points=config.mc_points)
    elif config.loss == "pino":
        pts = _collocation(problem, config.collocation_points, config.seed)
        closure = pino_loss_fn(unet, pack, pts, config.pino_alpha, config.pino_gamma)
    else:  # l2_supervised
        closure = l2_loss_fn(unet, pack)
    nets["log_beta"] = log_beta
    return nets, params, closure


def _convdiff_setup(problem: ConvDiffProblem, config: TrainConfig):
    pack = make_convdiff_pack(problem, config.gauss_n)
    unet = DenseNet(
        2, features=config.features, width=config.width, depth=config.depth,
        sigma=config.fourier_sigma, boundary_mask=False, seed=config.seed,
    )
    nets = {"u": unet}
    params = list(unet.parameters())
    if config.loss == "astral":
        ynet = DenseNet(
            2, features=config.features, width=config.width, depth=config.depth,
            sigma=config.fourier_sigma, boundary_mask=False, seed=config.seed + 1,
        )
        nets["y0"] = ynet
        params += list(ynet.parameters())
        closure = astral_convdiff_loss_fn(unet, ynet, pack)
    elif config.loss == "residual":
        pts = _collocation(problem, config.collocation_points, config.seed)
        closure = residual_convdiff_loss_fn(unet, problem, pts)
    else:
        raise ParameterError(
            f"loss {config.loss!r} is not available for convection-diffusion"
        )
    return nets, params, closure


def sample_solution(nets: dict, problem) -> ScalarField:
    """Evaluate the trained solution representation at the grid nodes."""
    grid = problem.grid
    pts = _grid_points(grid)
    with torch.no_grad():
        raw = nets["u"](torch.as_tensor(pts, dtype=DTYPE)).numpy()
    if isinstance(problem, ConvDiffProblem):
        x = pts[:, 0]
        t = pts[:, 1]
        phi = np.tile(problem.phi.values[:, None], (1, grid.nodes_per_axis)).ravel()
        vals = phi + t * np.sin(np.pi * x) * raw
    else:
        vals = raw
    return ScalarField(grid, vals.reshape(grid.shape))


def _error_metrics(nets, problem) -> tuple[float, float]:
    v = sample_solution(nets, problem)
    if isinstance(problem, ConvDiffProblem):
        exact = problem.exact_solution
        err = cd_error_norm(ScalarField(v.grid, v.values - exact.values))
        ref = cd_error_norm(exact)
    else:
        exact = problem.exact_solution
        if exact is None:
            return float("nan"), float("nan")
        err = energy_norm(ScalarField(v.grid, v.values - exact.values), problem.a, problem.b_sq)
        ref = energy_norm(exact, problem.a, problem.b_sq)
    rel = err / ref if ref > 0 else float("inf")
    return float(err), float(rel)


def train_pinn(problem, config: TrainConfig = TrainConfig()) -> PinnResult:
    """Train networks on one problem with the configured loss.

    The trace holds one row per logged epoch: epoch, loss, bound (sqrt of the
    loss for majorant kinds), energy error against the exact solution, and
    the relative energy error.
    """
    if isinstance(problem, ConvDiffProblem):
        nets, params, closure = _convdiff_setup(problem, config)
    elif isinstance(problem, EllipticProblem):
        if problem.exact_solution is None and config.loss in ("pino", "l2_supervised"):
            raise ParameterError("supervised losses need an exact solution")
        nets, params, closure = _elliptic_setup(problem, config)
    else:
        raise ParameterError(f"unsupported problem type {type(problem).__name__}")

    modules = [m for m in nets.values() if isinstance(m, torch.nn.Module)]
    state = OptimizerState.init(params)
    trace: list[dict] = []

    def log(epoch: int):
        # the closures differentiate with respect to inputs internally, so
        # they must run with grad enabled even for plain evaluation
        loss_val = float(closure().detach())
        err, rel = _error_metrics(nets, problem)
        bound = float(np.sqrt(loss_val)) if config.loss in ("astral", "astral_bc") and loss_val >= 0 else None
        trace.append(
            {"epoch": epoch, "loss": loss_val, "bound": bound, "energy_error": err, "rel_energy_error": rel}
        )
        if not np.isfinite(loss_val):
            raise TrainingError(f"loss diverged at epoch {epoch}", trace=trace)

    log(0)
    for epoch in range(config.epochs):
        grads = param_grad(params, closure)
        lr = config.optimizer.lr_at(epoch)
        state = optimizer_step(state, grads, config.optimizer, lr=lr)
        # copy new parameter values into the live tensors
        with torch.no_grad():
            for p, q in zip(params, state.params):
                p.copy_(q)
        state = OptimizerState(params=params, m=state.m, v=state.v, step=state.step)
        if (epoch + 1) % config.log_period == 0 or epoch + 1 == config.epochs:
            log(epoch + 1)

    return PinnResult(nets=nets, trace=trace, config=config)
