"""End-to-end properties of the default economy. Minutes, not seconds: run with ``-m slow``."""
import numpy as np
import pytest
from numpy.testing import assert_allclose

from regrowth.bellman import GriddedFunction, IncomeGrid, StopRule, solve_value_function, validate_value_field
from regrowth.euler import envelope_check, euler_profile, euler_residual, near_boundary
from regrowth.markov import stationary_distribution
from regrowth.model import baseline_spec, check_assumptions, utility, weight
from regrowth.shock import QuadratureRule
from regrowth.stationary import SimulationConfig, drift_check, empirical_distribution, lyapunov, simulate_chain, total_variation

pytestmark = pytest.mark.slow

GRID = IncomeGrid.linear(10.0, 121)
FINE_GRID = IncomeGrid.linear(10.0, 241)
RULE = QuadratureRule()
STOP = StopRule(max_iters=500, tol_w=1e-8)
MIDDLE = 1


def solve(spec, grid=GRID, y_count=30, refine=False):
    V, policy, report = solve_value_function(spec, grid, y_count, RULE, STOP, refine=refine)
    assert report.converged
    return V, policy, report


@pytest.fixture(scope="module")
def solutions(default_spec):
    """Default economy keyed by y_count."""
    return {y_count: solve(default_spec, y_count=y_count) for y_count in (30, 60, 120)}


@pytest.fixture(scope="module")
def baseline(default_spec):
    return solve(baseline_spec(default_spec, MIDDLE), y_count=120)


def invest_ratio(policy, x, theta):
    return float(policy.evaluate(x, theta)) / x


class TestInvestmentOrderings:

    @pytest.mark.parametrize("x", [2.0, 5.0, 8.0])
    def test_ratio_rises_with_regime(self, solutions, x):
        _, policy, _ = solutions[120]
        ratios = [invest_ratio(policy, x, theta) for theta in range(3)]
        assert ratios[2] > ratios[1] > ratios[0]

    @pytest.mark.parametrize("theta", range(3))
    def test_ratio_falls_with_income(self, solutions, theta):
        _, policy, _ = solutions[120]
        ratios = [invest_ratio(policy, x, theta) for x in (2.0, 5.0, 8.0)]
        assert ratios[0] >= ratios[1] >= ratios[2]

    @pytest.mark.parametrize("x", [2.0, 5.0, 8.0])
    def test_middle_regime_saves_more_than_baseline(self, solutions, baseline, x):
        _, policy, _ = solutions[120]
        _, single, _ = baseline
        assert invest_ratio(policy, x, MIDDLE) > invest_ratio(single, x, 0)


class TestValueOrderings:

    def test_high_regime_is_worth_more_at_high_income(self, solutions):
        V, _, _ = solutions[120]
        at_eight = [float(V.evaluate(8.0, theta)) for theta in range(3)]
        assert at_eight[2] >= at_eight[1] >= at_eight[0]

    def test_ordering_inverts_at_low_income(self, solutions):
        V, _, _ = solutions[120]
        low = (GRID.nodes > 0) & (GRID.nodes < 1)
        values = V.values[low]
        ordered = (values[:, 2] >= values[:, 1]) & (values[:, 1] >= values[:, 0])
        assert not ordered.all()


def test_solution_bounds(default_spec, solutions):
    alpha_beta = check_assumptions(default_spec).alpha_beta
    V, policy, _ = solutions[30]
    nodes = GRID.nodes[:, None]
    assert np.all(V.values[0] == 0.0)
    assert np.all(V.values >= utility(default_spec, nodes) - 1e-12)
    assert np.all(V.values <= weight(default_spec, nodes) / (1 - alpha_beta))
    validate_value_field(V)


def test_iteration_contracts_at_alpha_beta(default_spec, solutions):
    alpha_beta = check_assumptions(default_spec).alpha_beta
    for _, _, report in solutions.values():
        assert max(report.ratios) <= alpha_beta * (1 + 1e-9)


class TestEulerEquation:

    def test_residuals_shrink_as_the_search_grid_refines(self, default_spec, solutions):
        medians = []
        for y_count in (30, 60, 120):
            V, policy, _ = solutions[y_count]
            profile = euler_profile(V, policy, default_spec, RULE, y_count=y_count)
            medians.append(float(np.median(profile.relative_residuals())))
        assert medians[0] > medians[1] > medians[2]

    def test_perturbed_policy_has_larger_residuals(self, default_spec, solutions):
        V, policy, _ = solutions[120]
        nodes = GRID.nodes[:, None]
        perturbed = GriddedFunction(GRID, np.minimum(1.1 * policy.values, nodes * (1 - 1e-9)), kind="policy")

        wins = total = 0
        for theta in range(3):
            for i in range(1, GRID.count):
                x = float(GRID.nodes[i])
                if near_boundary(x, float(policy.values[i, theta]), 120):
                    continue
                optimal = abs(euler_residual(V, policy, default_spec, x, theta, RULE))
                moved = abs(euler_residual(V, perturbed, default_spec, x, theta, RULE))
                total += 1
                wins += moved > optimal
        assert total > 0
        assert wins >= 0.9 * total

    def test_envelope_gap_halves_with_the_income_grid(self, default_spec):
        coarse = solve(default_spec, GRID, refine=True)
        fine = solve(default_spec, FINE_GRID, refine=True)
        gap_coarse = envelope_check(coarse[0], coarse[1], default_spec, GRID, x_floor=1.0).max()
        gap_fine = envelope_check(fine[0], fine[1], default_spec, FINE_GRID, x_floor=1.0).max()
        assert gap_fine <= 0.625 * gap_coarse


class TestDrift:

    def test_drift_condition_holds(self, default_spec, solutions):
        V, policy, _ = solutions[30]
        report = drift_check(V, policy, default_spec, GRID, RULE, y_count=30)
        assert report.satisfied
        assert report.lambda_hat < 1

    def test_lyapunov_mean_is_stable_along_a_long_path(self, default_spec, solutions):
        V, policy, _ = solutions[30]
        config = SimulationConfig(horizon=200_000, burn_in=1000, seed=20240601, x0=1.0, theta0=MIDDLE)
        path = simulate_chain(policy, default_spec, config)
        W = lyapunov(V, policy, default_spec, path.incomes, path.regimes)
        assert np.all(np.isfinite(W[config.burn_in:]))

        half = config.horizon // 2
        first, second = W[half: half + half // 2].mean(), W[half + half // 2:].mean()
        assert abs(second - first) <= 0.1 * first


def test_empirical_distribution_is_stable_across_halves(default_spec, solutions):
    _, policy, _ = solutions[30]
    config = SimulationConfig(horizon=200_000, burn_in=1000, seed=20240601, x0=1.0, theta0=MIDDLE)
    path = simulate_chain(policy, default_spec, config)
    whole = empirical_distribution(path, config.burn_in, 40, n_states=3)

    middle = config.burn_in + (config.horizon - config.burn_in) // 2
    first = empirical_distribution(path.window(0, middle), config.burn_in, 40, 3, whole.bin_edges)
    second = empirical_distribution(path.window(middle), 0, 40, 3, whole.bin_edges)
    assert total_variation(first, second) < 0.05
    assert_allclose(whole.regime_marginals, stationary_distribution(default_spec.chain), atol=0.02)
