"""Guaranteed functional error majorants for elliptic and convection-diffusion
problems, certificate optimization, and majorant-based network training."""

from .errors import (
    AstralError,
    CoercivityError,
    DataError,
    FormatError,
    IterationError,
    ParameterError,
    TrainingError,
)
from .field import (
    Gauss,
    MonteCarlo,
    ScalarField,
    SPDTensorField,
    TensorGrid,
    Trapezoid,
    VectorField,
    div_fd,
    grad_fd,
    integrate,
    lambda_min_field,
    make_grid,
    restrict,
)
from .problems import (
    ConvDiffProblem,
    EllipticProblem,
    TrigPolySpec,
    gen_convdiff,
    gen_elliptic_1d,
    gen_elliptic_2d,
    gen_pinn_problem,
    sample_trig_poly,
)
from .solver import SparseOperator, assemble_elliptic, reference_solution, solve_elliptic, solve_spd
from .norms import cd_error_norm, energy_norm, l2_from_energy, l2_norm, weighted_flux_norm
from .majorant import (
    Certificate,
    MajorantReport,
    astral_1d,
    astral_convdiff,
    astral_elliptic,
    astral_scalar,
    astral_training_loss,
    friedrichs_constant,
    optimal_alpha,
    pino_loss,
    residual_loss,
    variational_loss,
)
from .certify import (
    BoundMetrics,
    CertifyConfig,
    CertifyResult,
    bound_metrics,
    certify_direct,
    majorant_grad_y,
    optimal_beta,
)

__version__ = "0.1.0"
