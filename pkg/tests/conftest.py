import numpy as np
import pytest

from sdheat.parametrix import Coefficients, ParametrixSolver
from sdheat.quadrature import TimeQuadrature
from sdheat.verify import ac6_coefficients


@pytest.fixture(scope="session")
def ac6_coeffs() -> Coefficients:
    """The reference variable-coefficient configuration (dx=1/16, radius 64)."""
    return ac6_coefficients()


@pytest.fixture(scope="session")
def ac6_solver(ac6_coeffs) -> ParametrixSolver:
    """One 96-node solver shared by the oracle-equivalence checks."""
    return ParametrixSolver(ac6_coeffs, TimeQuadrature(nodes=96), tol=1e-8)


@pytest.fixture(scope="session")
def small_var_coeffs() -> Coefficients:
    """A cheap variable-coefficient setup for unit-level parametrix tests."""
    from sdheat.lattice import GridSpec
    grid = GridSpec(dx=0.125, dim=1, radius=24)
    return Coefficients.from_function(grid, lambda x: 1.0 + 0.3 * np.sin(2.0 * np.pi * x / 6.125))
