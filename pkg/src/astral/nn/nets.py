"""Coordinate networks and operator networks (torch, float64 throughout).

DenseNet maps domain coordinates through fixed Fourier features and a small
GELU stack; an optional boundary mask multiplies the output by
sin(pi x1) sin(pi x2) (or sin(pi x) in 1D) so it vanishes on the boundary
exactly. OperatorMLP maps flattened, per-field normalized coefficient
arrays to output field arrays with a ReLU stack.
"""

from __future__ import annotations

import math

import numpy as np
import torch

from ..errors import ParameterError
from ..rng import substream

DTYPE = torch.float64


def _init_linear(rng: np.random.Generator, fan_in: int, fan_out: int) -> tuple[torch.Tensor, torch.Tensor]:
    bound = 1.0 / math.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
    b = rng.uniform(-bound, bound, size=(fan_out,))
    return (
        torch.nn.Parameter(torch.tensor(w, dtype=DTYPE)),
        torch.nn.Parameter(torch.tensor(b, dtype=DTYPE)),
    )


class DenseNet(torch.nn.Module):
    """Fourier-feature coordinate network with an optional boundary mask."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int = 1,
        features: int = 50,
        width: int = 50,
        depth: int = 3,
        sigma: float = 1.0,
        boundary_mask: bool = False,
        mask_axes: int | None = None,
        seed: int = 0,
    ):
        super().__init__()
        if depth < 1:
            raise ParameterError("depth must be at least 1")
        rng = substream(seed, 14)  # net_init role
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.boundary_mask = boundary_mask
        # with a mask on a space-time domain only the spatial axes are masked
        self.mask_axes = in_dim if mask_axes is None else mask_axes
        B = rng.normal(0.0, sigma, size=(features, in_dim))
        self.register_buffer("fourier", torch.tensor(B, dtype=DTYPE))
        dims = [2 * features] + [width] * depth + [out_dim]
        self.weights = torch.nn.ParameterList()
        self.biases = torch.nn.ParameterList()
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w, b = _init_linear(rng, fan_in, fan_out)
            self.weights.append(w)
            self.biases.append(b)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim == 1:
            x = x.unsqueeze(0)
        z = 2.0 * math.pi * x @ self.fourier.T
        h = torch.cat([torch.sin(z), torch.cos(z)], dim=-1)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = torch.nn.functional.gelu(h @ w.T + b)
        out = h @ self.weights[-1].T + self.biases[-1]
        if self.boundary_mask:
            mask = torch.ones(x.shape[0], dtype=x.dtype, device=x.device)
            for ax in range(self.mask_axes):
                mask = mask * torch.sin(math.pi * x[:, ax])
            out = out * mask.unsqueeze(-1)
        return out.squeeze(-1) if self.out_dim == 1 else out


def input_jet(net, points: np.ndarray | torch.Tensor, order: int = 2):
    """Exact derivatives of a scalar network with respect to its inputs.

    Returns (value,), (value, gradient) or (value, gradient, seconds) where
    seconds holds the pure second derivatives along each axis. All outputs
    stay connected to the parameter graph, so losses built from them can be
    differentiated in turn.
    """
    if order not in (0, 1, 2):
        raise ParameterError("jet order must be 0, 1 or 2")
    x = torch.as_tensor(np.asarray(points, dtype=np.float64), dtype=DTYPE)
    if x.ndim == 1:
        x = x.unsqueeze(0)
    x = x.clone().requires_grad_(order > 0)
    u = net(x)
    if u.ndim != 1:
        raise ParameterError("input_jet expects a scalar-output network")
    if order == 0:
        return (u,)
    grad = torch.autograd.grad(u.sum(), x, create_graph=True)[0]
    if order == 1:
        return u, grad
    seconds = []
    for ax in range(x.shape[1]):
        g2 = torch.autograd.grad(grad[:, ax].sum(), x, create_graph=True)[0][:, ax]
        seconds.append(g2)
    return u, grad, torch.stack(seconds, dim=1)


def param_grad(params, loss_closure) -> list[torch.Tensor]:
    """Gradient of a scalar loss closure with respect to the parameters.

    ``params`` is an iterable of tensors (e.g. net.parameters()) or a module.
    Parameters that do not influence the loss get zero gradients.
    """
    if isinstance(params, torch.nn.Module):
        params = list(params.parameters())
    else:
        params = list(params)
    loss = loss_closure()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return [
        g if g is not None else torch.zeros_like(p)
        for g, p in zip(grads, params)
    ]


class OperatorMLP(torch.nn.Module):
    """ReLU network from flattened coefficient fields to output field arrays.

    Input normalization (per feature, from the training set) is stored in
    the module so checkpoints carry it. ``out_slices`` names the segments of
    the output vector, e.g. {"u": (0, n), "y0": (n, 2n)}.
    """

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        out_slices: dict[str, tuple[int, int]],
        width: int = 64,
        depth: int = 4,
        seed: int = 0,
        activation: str = "gelu",
    ):
        super().__init__()
        rng = substream(seed, 14)
        self.out_slices = dict(out_slices)
        if activation not in ("gelu", "relu", "tanh"):
            raise ParameterError(f"unknown activation {activation!r}")
        self.activation = activation
        self.register_buffer("in_mean", torch.zeros(in_dim, dtype=DTYPE))
        self.register_buffer("in_std", torch.ones(in_dim, dtype=DTYPE))
        dims = [in_dim] + [width] * depth + [out_dim]
        self.weights = torch.nn.ParameterList()
        self.biases = torch.nn.ParameterList()
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            w, b = _init_linear(rng, fan_in, fan_out)
            self.weights.append(w)
            self.biases.append(b)

    def set_normalization(self, mean: np.ndarray, std: np.ndarray) -> None:
        self.in_mean = torch.tensor(mean, dtype=DTYPE)
        self.in_std = torch.tensor(np.where(std > 0, std, 1.0), dtype=DTYPE)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        act = {
            "gelu": torch.nn.functional.gelu,
            "relu": torch.relu,
            "tanh": torch.tanh,
        }[self.activation]
        h = (x - self.in_mean) / self.in_std
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            h = act(h @ w.T + b)
        return h @ self.weights[-1].T + self.biases[-1]

    def head(self, out: torch.Tensor, name: str) -> torch.Tensor:
        lo, hi = self.out_slices[name]
        return out[..., lo:hi]
