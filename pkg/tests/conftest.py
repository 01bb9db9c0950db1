import numpy as np
import pytest

from astral.field import ScalarField, TensorGrid, make_grid
from astral.problems import EllipticProblem, bubble_solution


def manufactured_problem(J: int) -> EllipticProblem:
    """-lap u = f with u = x1(1-x1)x2(1-x2), a = 1, b = 0."""
    g = make_grid(2, J)
    a = ScalarField.constant(g, 1.0)
    f = ScalarField.from_function(g, lambda x, y: 2.0 * (x * (1 - x) + y * (1 - y)))
    return EllipticProblem(
        grid=g,
        a=a,
        b_sq=ScalarField.constant(g, 0.0),
        f=f,
        exact_solution=bubble_solution(g),
        family="pinn_manufactured",
        provenance={"kind": "manufactured_bubble"},
    )


def sine_problem(J: int, with_exact: bool = True) -> EllipticProblem:
    """-lap u = f with u = sin(pi x1) sin(pi x2), a = 1, b = 0."""
    g = make_grid(2, J)
    a = ScalarField.constant(g, 1.0)
    f = ScalarField.from_function(
        g, lambda x, y: 2.0 * np.pi ** 2 * np.sin(np.pi * x) * np.sin(np.pi * y)
    )
    exact = (
        ScalarField.from_function(g, lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y))
        if with_exact
        else None
    )
    return EllipticProblem(
        grid=g,
        a=a,
        b_sq=ScalarField.constant(g, 0.0),
        f=f,
        exact_solution=exact,
        family="pinn_manufactured",
        provenance={"kind": "manufactured_sine"},
    )


def bubble_flux(grid: TensorGrid):
    """Analytic gradient of the bubble solution, sampled at the nodes."""
    x, y = grid.meshgrid()
    return (
        ScalarField(grid, (1 - 2 * x) * y * (1 - y)),
        ScalarField(grid, x * (1 - x) * (1 - 2 * y)),
    )


@pytest.fixture(scope="session")
def bubble_j6():
    return manufactured_problem(6)


@pytest.fixture(scope="session")
def bubble_j7():
    return manufactured_problem(7)
