"""Operator training on datasets of parametric problems.

Three schemes:

* unsupervised: one network maps coefficient fields to solution and
  certificate fields; the loss is the majorant-based training loss, so no
  reference solutions are consumed.
* supervised: stage 1 trains a solution network on reference solutions with
  an L2 loss; stage 2 certifies each prediction by direct optimization;
  stage 3 trains a certificate network on those certificates; stage 4
  evaluates the bounds the two networks produce together.
* pino: data L2 loss plus residual and boundary terms (supervised baseline).

Networks are plain MLPs over flattened, per-field normalized inputs.
Bounds reported in the metrics are always recomputed with the grid-side
majorant, so they are exactly what the guarantee suite checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import torch

from ..certify import CertifyConfig, bound_metrics, certify_direct
from ..errors import ParameterError, TrainingError
from ..field import ScalarField, VectorField, diff_matrix, trapezoid_weights
from ..majorant import (
    SAFE,
    Certificate,
    astral_1d,
    astral_elliptic,
    flux_factor,
    friedrichs_1d,
    friedrichs_constant,
    residual_weight,
)
from ..norms import energy_norm
from ..problems import EllipticProblem
from ..solver import reference_solution
from .nets import DTYPE, OperatorMLP, param_grad
from .optim import OptimizerConfig, OptimizerState, optimizer_step

SCHEMES = ("unsupervised", "supervised", "pino")


@dataclass
class OperatorSample:
    problem: EllipticProblem
    u_ref: ScalarField | None = None


@dataclass
class OperatorTrainConfig:
    scheme: str = "unsupervised"
    epochs: int = 2000
    optimizer: OptimizerConfig = dc_field(
        default_factory=lambda: OptimizerConfig(
            kind="adam", lr=1e-2, weight_decay=0.0,
            decay_factor=0.5, decay_period=300, decay_start=1200,
        )
    )
    width: int = 64
    depth: int = 4
    activation: str = "gelu"
    lam: float = 1.0
    beta: float = 1.0
    learn_beta: bool = False
    seed: int = 0
    constant_mode: str = SAFE
    n2_epochs: int | None = None       # defaults to epochs
    certify_iters: int = 20
    pino_alpha: float = 1.0
    pino_gamma: float = 1.0
    log_period: int = 50

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ParameterError(f"unknown scheme {self.scheme!r}")


@dataclass
class SchemeMetrics:
    e_train: float
    e_test: float
    e_ub_train: float
    e_ub_test: float
    ratio_train: float
    ratio_test: float
    corr_train: float | None
    corr_test: float | None
    train_errors: np.ndarray
    train_bounds: np.ndarray
    test_errors: np.ndarray
    test_bounds: np.ndarray


@dataclass
class OperatorResult:
    nets: dict
    metrics: SchemeMetrics
    loss_trace: list[float]
    config: OperatorTrainConfig


def build_dataset(
    generator, n: int, master_seed: int, with_refs: bool = True, J_ref: int = 7
) -> list[OperatorSample]:
    """Generate n samples with generator(master_seed, index) and solve references."""
    samples = []
    for i in range(n):
        p = generator(master_seed, i)
        u = reference_solution(p, J_ref=J_ref) if with_refs else None
        samples.append(OperatorSample(problem=p, u_ref=u))
    return samples


def _field_list(p: EllipticProblem) -> list[np.ndarray]:
    if p.scalar_diffusion:
        return [p.a.values, p.b_sq.values, p.f.values]
    return [p.a.a11.values, p.a.a12.values, p.a.a22.values, p.b_sq.values, p.f.values]


def _input_matrix(samples: list[OperatorSample]) -> np.ndarray:
    rows = [np.concatenate([f.ravel() for f in _field_list(s.problem)]) for s in samples]
    return np.stack(rows)


def _field_normalization(samples: list[OperatorSample]) -> tuple[np.ndarray, np.ndarray]:
    """Per-field mean/std, broadcast over the flattened feature vector."""
    fields = [_field_list(s.problem) for s in samples]
    n_fields = len(fields[0])
    sizes = [f.size for f in fields[0]]
    mean, std = [], []
    for k in range(n_fields):
        stacked = np.stack([fl[k] for fl in fields])
        mean.append(np.full(sizes[k], float(np.mean(stacked))))
        std.append(np.full(sizes[k], float(np.std(stacked))))
    return np.concatenate(mean), np.concatenate(std)


class _GridOps:
    """Torch copies of the differentiation matrices and quadrature weights."""

    def __init__(self, grid):
        self.grid = grid
        self.naxes = grid.naxes
        self.n = grid.nodes_per_axis
        self.D = torch.tensor(
            diff_matrix(self.n, grid.spacings[0]).toarray(), dtype=DTYPE
        )
        self.q = torch.tensor(trapezoid_weights(grid), dtype=DTYPE)

    def dx(self, fields: torch.Tensor) -> torch.Tensor:
        # fields: (batch, n) or (batch, n, n); derivative along axis 0
        if fields.ndim == 2:
            return fields @ self.D.T
        return torch.einsum("ij,bjk->bik", self.D, fields)

    def dy(self, fields: torch.Tensor) -> torch.Tensor:
        return torch.einsum("ij,bkj->bki", self.D, fields)

    def integral(self, density: torch.Tensor) -> torch.Tensor:
        dims = tuple(range(1, density.ndim))
        return torch.sum(self.q * density, dim=dims)


def _boundary_mean_sq_t(v: torch.Tensor, grid) -> torch.Tensor:
    if grid.naxes == 1:
        return (v[:, 0] ** 2 + v[:, -1] ** 2) / 2.0
    edge = torch.cat([v[:, 0, :], v[:, -1, :], v[:, :, 0], v[:, :, -1]], dim=1)
    return torch.mean(edge ** 2, dim=1)


class _UnsupervisedLoss:
    """Batched majorant training loss over a dataset of problems."""

    def __init__(self, samples, config: OperatorTrainConfig):
        probs = [s.problem for s in samples]
        grid = probs[0].grid
        self.grid = grid
        self.ops = _GridOps(grid)
        self.lam = config.lam
        self.mode = config.constant_mode
        shape = (len(probs),) + grid.shape
        self.f = torch.tensor(np.stack([p.f.values for p in probs]), dtype=DTYPE)
        self.b_sq = torch.tensor(np.stack([p.b_sq.values for p in probs]), dtype=DTYPE)
        if grid.naxes == 1:
            self.a = torch.tensor(np.stack([p.a.values for p in probs]), dtype=DTYPE)
            self.CF = torch.tensor(
                [friedrichs_1d(p.a, self.mode) for p in probs], dtype=DTYPE
            )
        else:
            if probs[0].scalar_diffusion:
                a = np.stack([p.a.values for p in probs])
                self.a11 = torch.tensor(a, dtype=DTYPE)
                self.a22 = torch.tensor(a, dtype=DTYPE)
                self.a12 = torch.zeros(shape, dtype=DTYPE)
            else:
                self.a11 = torch.tensor(np.stack([p.a.a11.values for p in probs]), dtype=DTYPE)
                self.a12 = torch.tensor(np.stack([p.a.a12.values for p in probs]), dtype=DTYPE)
                self.a22 = torch.tensor(np.stack([p.a.a22.values for p in probs]), dtype=DTYPE)
            self.C = torch.tensor(
                [friedrichs_constant(p.a, 2, self.mode) for p in probs], dtype=DTYPE
            )

    def __call__(self, v, y_comps, beta) -> torch.Tensor:
        ops = self.ops
        if self.grid.naxes == 1:
            y = y_comps[0]
            dv = ops.dx(v)
            flux = ops.integral((y - self.a * dv) ** 2 / self.a)
            res = ops.integral((self.f + ops.dx(y) - self.b_sq * v) ** 2)
            loss = torch.sqrt(flux + 1e-30) + self.CF * torch.sqrt(res + 1e-30)
        else:
            y1, y2 = y_comps
            dvx, dvy = ops.dx(v), ops.dy(v)
            R = self.f - self.b_sq * v + ops.dx(y1) + ops.dy(y2)
            w = residual_weight(self.C.reshape(-1, 1, 1), self.b_sq, beta)
            m1 = self.a11 * dvx + self.a12 * dvy - y1
            m2 = self.a12 * dvx + self.a22 * dvy - y2
            det = self.a11 * self.a22 - self.a12 ** 2
            qform = (self.a22 * m1 ** 2 - 2 * self.a12 * m1 * m2 + self.a11 * m2 ** 2) / det
            total = ops.integral(w * R ** 2) + flux_factor(beta) * ops.integral(qform)
            loss = torch.sqrt(total + 1e-30)
        loss = loss + self.lam * torch.sqrt(_boundary_mean_sq_t(v, self.grid) + 1e-30)
        return torch.mean(loss)


def _reshape_fields(out_flat: torch.Tensor, grid, n_fields: int):
    shape = (out_flat.shape[0],) + grid.shape
    size = int(np.prod(grid.shape))
    return [
        out_flat[:, k * size : (k + 1) * size].reshape(shape) for k in range(n_fields)
    ]


def _train_loop(net, params, closure, config, epochs=None) -> list[float]:
    epochs = config.epochs if epochs is None else epochs
    state = OptimizerState.init(params)
    trace = []
    for epoch in range(epochs):
        grads = param_grad(params, closure)
        state = optimizer_step(state, grads, config.optimizer, lr=config.optimizer.lr_at(epoch))
        with torch.no_grad():
            for p, q in zip(params, state.params):
                p.copy_(q)
        state = OptimizerState(params=params, m=state.m, v=state.v, step=state.step)
        if epoch % config.log_period == 0 or epoch == epochs - 1:
            val = float(closure().detach())
            trace.append(val)
            if not np.isfinite(val):
                raise TrainingError(f"operator loss diverged at epoch {epoch}", trace=trace)
    return trace


def _predict_fields(net: OperatorMLP, X: torch.Tensor, grid, names: list[str]):
    with torch.no_grad():
        out = net(X)
    size = int(np.prod(grid.shape))
    fields = {}
    for name in names:
        lo, hi = net.out_slices[name]
        fields[name] = out[:, lo:hi].reshape((X.shape[0],) + grid.shape).numpy()
    return fields


def _sample_bound(problem, v: ScalarField, y_fields, beta, mode) -> float:
    grid = problem.grid
    if grid.naxes == 1:
        return astral_1d(v, y_fields[0], problem, mode)
    cert = Certificate(VectorField(grid, tuple(y_fields)), beta)
    return float(np.sqrt(astral_elliptic(v, cert, problem, mode).total))


def _evaluate(samples, v_arr, y_arrs, beta, mode):
    errors, bounds, refs = [], [], []
    for i, s in enumerate(samples):
        grid = s.problem.grid
        v = ScalarField(grid, v_arr[i])
        ys = [ScalarField(grid, y[i]) for y in y_arrs]
        bounds.append(_sample_bound(s.problem, v, ys, beta, mode))
        err = energy_norm(
            ScalarField(grid, v.values - s.u_ref.values), s.problem.a, s.problem.b_sq
        )
        errors.append(err)
        refs.append(energy_norm(s.u_ref, s.problem.a, s.problem.b_sq))
    return np.array(errors), np.array(bounds), np.array(refs)


def _scheme_metrics(train_eval, test_eval) -> SchemeMetrics:
    def pack(ev):
        errors, bounds, refs = ev
        bm = bound_metrics(errors, bounds)
        rel_e = float(np.mean(errors / refs))
        rel_ub = float(np.mean(bounds / refs))
        return rel_e, rel_ub, bm

    e_tr, ub_tr, bm_tr = pack(train_eval)
    e_te, ub_te, bm_te = pack(test_eval)
    return SchemeMetrics(
        e_train=e_tr,
        e_test=e_te,
        e_ub_train=ub_tr,
        e_ub_test=ub_te,
        ratio_train=bm_tr.mean_ratio,
        ratio_test=bm_te.mean_ratio,
        corr_train=bm_tr.correlation,
        corr_test=bm_te.correlation,
        train_errors=train_eval[0],
        train_bounds=train_eval[1],
        test_errors=test_eval[0],
        test_bounds=test_eval[1],
    )


def _zero_boundary(arr: np.ndarray, grid) -> np.ndarray:
    """Zero the boundary nodes (leading batch axis allowed)."""
    out = arr.copy()
    mask = grid.boundary_mask()
    if arr.ndim == len(grid.shape):
        out[mask] = 0.0
    else:
        out[:, mask] = 0.0
    return out


def train_operator(
    train_samples: list[OperatorSample],
    test_samples: list[OperatorSample],
    config: OperatorTrainConfig = OperatorTrainConfig(),
) -> OperatorResult:
    """Train the configured scheme and report the table metrics.

    Metrics: mean relative energy error (train/test), mean relative bound,
    mean bound/error ratio, and the Pearson correlation between per-sample
    errors and bounds.
    """
    if not train_samples:
        raise ParameterError("empty training set")
    grid = train_samples[0].problem.grid
    dim = grid.dim
    size = int(np.prod(grid.shape))
    mode = config.constant_mode

    X_train = torch.tensor(_input_matrix(train_samples), dtype=DTYPE)
    X_test = torch.tensor(_input_matrix(test_samples), dtype=DTYPE)
    mean, std = _field_normalization(train_samples)

    if config.scheme == "unsupervised":
        names = ["u"] + [f"y{ax}" for ax in range(dim)]
        slices = {nm: (k * size, (k + 1) * size) for k, nm in enumerate(names)}
        out_dim = len(names) * size + (1 if config.learn_beta else 0)
        if config.learn_beta:
            slices["log_beta"] = (len(names) * size, len(names) * size + 1)
        net = OperatorMLP(X_train.shape[1], out_dim, slices, config.width, config.depth, config.seed, config.activation)
        net.set_normalization(mean, std)
        loss = _UnsupervisedLoss(train_samples, config)

        def closure():
            out = net(X_train)
            v = net.head(out, "u").reshape((-1,) + grid.shape)
            ys = [net.head(out, f"y{ax}").reshape((-1,) + grid.shape) for ax in range(dim)]
            if config.learn_beta:
                beta = torch.exp(torch.mean(net.head(out, "log_beta")))
            else:
                beta = config.beta
            return loss(v, ys, beta)

        trace = _train_loop(net, list(net.parameters()), closure, config)
        evals = []
        for X, samples in ((X_train, train_samples), (X_test, test_samples)):
            fields = _predict_fields(net, X, grid, names)
            evals.append(
                _evaluate(samples, fields["u"], [fields[f"y{ax}"] for ax in range(dim)], config.beta, mode)
            )
        return OperatorResult({"net": net}, _scheme_metrics(*evals), trace, config)

    if config.scheme == "pino":
        _require_refs(train_samples)
        slices = {"u": (0, size)}
        net = OperatorMLP(X_train.shape[1], size, slices, config.width, config.depth, config.seed, config.activation)
        net.set_normalization(mean, std)
        U_ref = torch.tensor(
            np.stack([s.u_ref.values for s in train_samples]), dtype=DTYPE
        )
        ops = _GridOps(grid)
        probs = [s.problem for s in train_samples]
        f_t = torch.tensor(np.stack([p.f.values for p in probs]), dtype=DTYPE)
        b_t = torch.tensor(np.stack([p.b_sq.values for p in probs]), dtype=DTYPE)
        if probs[0].scalar_diffusion:
            a_stack = np.stack([p.a.values for p in probs])
            a11 = a22 = torch.tensor(a_stack, dtype=DTYPE)
            a12 = torch.zeros_like(a11)
        else:
            a11 = torch.tensor(np.stack([p.a.a11.values for p in probs]), dtype=DTYPE)
            a12 = torch.tensor(np.stack([p.a.a12.values for p in probs]), dtype=DTYPE)
            a22 = torch.tensor(np.stack([p.a.a22.values for p in probs]), dtype=DTYPE)

        def closure():
            v = net(X_train).reshape((-1,) + grid.shape)
            data = torch.sqrt(ops.integral((v - U_ref) ** 2) + 1e-30)
            if grid.naxes == 1:
                dv = ops.dx(v)
                res = ops.dx(a11 * dv) + f_t - b_t * v
            else:
                dvx, dvy = ops.dx(v), ops.dy(v)
                res = (
                    ops.dx(a11 * dvx + a12 * dvy)
                    + ops.dy(a12 * dvx + a22 * dvy)
                    + f_t
                    - b_t * v
                )
            res_term = torch.sqrt(ops.integral(res ** 2) + 1e-30)
            bc = torch.sqrt(_boundary_mean_sq_t(v, grid) + 1e-30)
            return torch.mean(data + config.pino_alpha * res_term + config.pino_gamma * bc)

        trace = _train_loop(net, list(net.parameters()), closure, config)
        evals = []
        for X, samples in ((X_train, train_samples), (X_test, test_samples)):
            v_arr = _predict_fields(net, X, grid, ["u"])["u"]
            evals.append(_certified_eval(samples, v_arr, config))
        return OperatorResult({"net": net}, _scheme_metrics(*evals), trace, config)

    # supervised: stages
    _require_refs(train_samples)
    slices = {"u": (0, size)}
    n1 = OperatorMLP(X_train.shape[1], size, slices, config.width, config.depth, config.seed, config.activation)
    n1.set_normalization(mean, std)
    U_ref = torch.tensor(np.stack([s.u_ref.values for s in train_samples]), dtype=DTYPE)
    ops = _GridOps(grid)

    def l2_closure():
        v = n1(X_train).reshape((-1,) + grid.shape)
        return torch.mean(ops.integral((v - U_ref) ** 2))

    trace = _train_loop(n1, list(n1.parameters()), l2_closure, config)

    # stage 2: certify every training prediction by direct optimization
    v_train = _predict_fields(n1, X_train, grid, ["u"])["u"]
    v_train = _zero_boundary(v_train, grid)
    cert_cfg = CertifyConfig(max_outer_iters=config.certify_iters, constant_mode=mode)
    y_targets = [np.zeros((len(train_samples),) + grid.shape) for _ in range(dim)]
    logbeta_targets = np.zeros(len(train_samples))
    for i, s in enumerate(train_samples):
        res = certify_direct(ScalarField(grid, v_train[i]), s.problem, cert_cfg)
        for ax in range(dim):
            y_targets[ax][i] = res.certificate.y[ax].values
        logbeta_targets[i] = np.log(res.certificate.beta)

    # stage 3: certificate network on (coefficients, prediction) -> certificate
    names2 = [f"y{ax}" for ax in range(dim)]
    slices2 = {nm: (k * size, (k + 1) * size) for k, nm in enumerate(names2)}
    slices2["log_beta"] = (dim * size, dim * size + 1)
    X2_train = torch.cat([X_train, torch.tensor(v_train.reshape(len(train_samples), -1), dtype=DTYPE)], dim=1)
    n2 = OperatorMLP(X2_train.shape[1], dim * size + 1, slices2, config.width, config.depth, config.seed + 1, config.activation)
    mean2 = np.concatenate([mean, np.full(size, float(np.mean(v_train)))])
    std2 = np.concatenate([std, np.full(size, float(np.std(v_train)) or 1.0)])
    n2.set_normalization(mean2, std2)
    Y_t = [torch.tensor(y.reshape(len(train_samples), -1), dtype=DTYPE) for y in y_targets]
    LB_t = torch.tensor(logbeta_targets, dtype=DTYPE)

    def cert_closure():
        out = n2(X2_train)
        loss = torch.mean((net_head(out, slices2["log_beta"]).squeeze(-1) - LB_t) ** 2)
        for ax in range(dim):
            loss = loss + torch.mean((net_head(out, slices2[f"y{ax}"]) - Y_t[ax]) ** 2)
        return loss

    n2_epochs = config.n2_epochs or config.epochs
    trace += _train_loop(n2, list(n2.parameters()), cert_closure, config, epochs=n2_epochs)

    # stage 4: bounds from the two networks on train and test data
    evals = []
    for X, samples in ((X_train, train_samples), (X_test, test_samples)):
        v_arr = _zero_boundary(_predict_fields(n1, X, grid, ["u"])["u"], grid)
        X2 = torch.cat([X, torch.tensor(v_arr.reshape(len(samples), -1), dtype=DTYPE)], dim=1)
        fields2 = _predict_fields(n2, X2, grid, names2)
        with torch.no_grad():
            lb = n2(X2)[:, slices2["log_beta"][0]]
        errors, bounds, refs = [], [], []
        for i, s in enumerate(samples):
            v = ScalarField(grid, v_arr[i])
            ys = [ScalarField(grid, fields2[f"y{ax}"][i]) for ax in range(dim)]
            beta = float(np.exp(float(lb[i])))
            bounds.append(_sample_bound(s.problem, v, ys, max(beta, 1e-8), mode))
            errors.append(
                energy_norm(ScalarField(grid, v.values - s.u_ref.values), s.problem.a, s.problem.b_sq)
            )
            refs.append(energy_norm(s.u_ref, s.problem.a, s.problem.b_sq))
        evals.append((np.array(errors), np.array(bounds), np.array(refs)))
    return OperatorResult({"n1": n1, "n2": n2}, _scheme_metrics(*evals), trace, config)


def net_head(out: torch.Tensor, sl: tuple[int, int]) -> torch.Tensor:
    return out[..., sl[0] : sl[1]]


def _require_refs(samples):
    if any(s.u_ref is None for s in samples):
        raise ParameterError("this scheme needs reference solutions in the dataset")


def _certified_eval(samples, v_arr, config):
    """Errors plus directly-certified bounds (used for the pino baseline)."""
    grid = samples[0].problem.grid
    v_arr = _zero_boundary(v_arr, grid)
    cfg = CertifyConfig(max_outer_iters=config.certify_iters, constant_mode=config.constant_mode)
    errors, bounds, refs = [], [], []
    for i, s in enumerate(samples):
        v = ScalarField(grid, v_arr[i])
        res = certify_direct(v, s.problem, cfg)
        bounds.append(float(np.sqrt(res.report.total)))
        errors.append(
            energy_norm(ScalarField(grid, v.values - s.u_ref.values), s.problem.a, s.problem.b_sq)
        )
        refs.append(energy_norm(s.u_ref, s.problem.a, s.problem.b_sq))
    return np.array(errors), np.array(bounds), np.array(refs)
