"""Networks, exact gradients, optimizers, and the training regimes."""

from .nets import DenseNet, OperatorMLP, input_jet, param_grad
from .optim import OptimizerConfig, OptimizerState, optimizer_step
from .pinn import LOSS_KINDS, PinnResult, TrainConfig, sample_solution, train_pinn
from .operator import (
    OperatorResult,
    OperatorSample,
    OperatorTrainConfig,
    SchemeMetrics,
    build_dataset,
    train_operator,
)
