import pytest

from helpers import make_spec
from regrowth.bellman import IncomeGrid, StopRule, solve_value_function
from regrowth.shock import QuadratureRule


@pytest.fixture(scope="session")
def default_spec():
    return make_spec()


@pytest.fixture(scope="session")
def default_rule():
    return QuadratureRule()


@pytest.fixture(scope="session")
def coarse_rule():
    return QuadratureRule(n_intervals=8)


@pytest.fixture(scope="session")
def coarse_solution(default_spec, coarse_rule):
    """Default three-regime economy on a small grid, iterated to a loose tolerance."""
    grid = IncomeGrid.linear(10.0, 41)
    V, policy, report = solve_value_function(default_spec, grid, 20, coarse_rule, StopRule(max_iters=400, tol_w=1e-6))
    return grid, V, policy, report


@pytest.fixture(scope="session")
def log_grid_solution(default_spec, coarse_rule):
    grid = IncomeGrid.log_linear(10.0, 41, x_min=1e-6)
    V, policy, report = solve_value_function(default_spec, grid, 20, coarse_rule, StopRule(max_iters=400, tol_w=1e-6))
    return grid, V, policy, report
