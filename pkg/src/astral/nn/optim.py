"""Optimizer steps as pure functions over parameter tensor lists.

Adam uses bias-corrected moments; Lion updates by the sign of an
interpolated momentum. Both apply decoupled weight decay
(theta <- theta - lr * wd * theta, independent of the gradient path).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import torch

from ..errors import ParameterError


@dataclass
class OptimizerConfig:
    kind: str = "adam"            # "adam" or "lion"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decay_factor: float = 1.0     # multiplicative lr decay
    decay_period: int = 0         # epochs between decays; 0 disables
    decay_start: int = 0          # epochs at the base rate before decaying

    def __post_init__(self):
        if self.lr <= 0:
            raise ParameterError("learning rate must be positive")
        if self.kind not in ("adam", "lion"):
            raise ParameterError(f"unknown optimizer {self.kind!r}")

    def lr_at(self, epoch: int) -> float:
        if self.decay_period <= 0 or self.decay_factor == 1.0:
            return self.lr
        if epoch < self.decay_start:
            return self.lr
        return self.lr * self.decay_factor ** ((epoch - self.decay_start) // self.decay_period + (1 if self.decay_start > 0 else 0))


@dataclass
class OptimizerState:
    params: list[torch.Tensor]
    m: list[torch.Tensor] = dc_field(default_factory=list)
    v: list[torch.Tensor] = dc_field(default_factory=list)
    step: int = 0

    @staticmethod
    def init(params) -> "OptimizerState":
        params = [p for p in params]
        return OptimizerState(
            params=params,
            m=[torch.zeros_like(p) for p in params],
            v=[torch.zeros_like(p) for p in params],
            step=0,
        )


def optimizer_step(
    state: OptimizerState,
    grads: list[torch.Tensor],
    config: OptimizerConfig,
    lr: float | None = None,
) -> OptimizerState:
    """One update; returns a new state, inputs are not mutated."""
    if len(grads) != len(state.params):
        raise ParameterError("gradient list does not match parameter list")
    lr = config.lr if lr is None else lr
    t = state.step + 1
    new_p, new_m, new_v = [], [], []
    with torch.no_grad():
        for p, g, m, v in zip(state.params, grads, state.m, state.v):
            if config.kind == "adam":
                m1 = config.beta1 * m + (1 - config.beta1) * g
                v1 = config.beta2 * v + (1 - config.beta2) * g * g
                m_hat = m1 / (1 - config.beta1 ** t)
                v_hat = v1 / (1 - config.beta2 ** t)
                update = m_hat / (torch.sqrt(v_hat) + config.eps)
            else:  # lion
                c = config.beta1 * m + (1 - config.beta1) * g
                update = torch.sign(c)
                m1 = config.beta2 * m + (1 - config.beta2) * g
                v1 = v
            p1 = p - lr * (update + config.weight_decay * p)
            new_p.append(p1)
            new_m.append(m1)
            new_v.append(v1)
    return OptimizerState(params=new_p, m=new_m, v=new_v, step=t)


def apply_state(modules: list[torch.nn.Module], state: OptimizerState) -> None:
    """Copy optimizer-state parameters back into the modules, in order."""
    flat = [p for mod in modules for p in mod.parameters()]
    if len(flat) != len(state.params):
        raise ParameterError("state does not match module parameters")
    with torch.no_grad():
        for p, q in zip(flat, state.params):
            p.copy_(q)
