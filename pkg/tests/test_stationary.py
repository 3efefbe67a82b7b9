import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from core.errors import BoundaryPolicy, ConfigError, EmptySample
from helpers import concave_field, point_mass_spec
from regrowth.bellman import GriddedFunction, IncomeGrid
from regrowth.markov import stationary_distribution
from regrowth.shock import QuadratureRule
from regrowth.stationary import (
    LAMBDA_SCAN,
    SimulationConfig,
    SimulationPath,
    drift_check,
    empirical_distribution,
    lyapunov,
    simulate_chain,
    simulate_replicates,
    total_variation,
)

GRID = IncomeGrid.linear(4.0, 41)


def fraction_policy(grid, fraction, n_states):
    return GriddedFunction(grid, fraction * np.tile(grid.nodes[:, None], (1, n_states)), kind="policy")


def config(horizon=200, burn_in=0, seed=7, x0=3.0, theta0=0):
    return SimulationConfig(horizon=horizon, burn_in=burn_in, seed=seed, x0=x0, theta0=theta0)


class TestSimulateChain:

    def test_point_mass_orbit(self):
        spec = point_mass_spec()
        path = simulate_chain(fraction_policy(GRID, 0.5, 1), spec, config())
        assert len(path) == 200
        assert path.incomes[0] == 3.0
        assert_allclose(path.incomes[1:], np.sqrt(path.incomes[:-1] / 2), rtol=1e-12)
        assert path.incomes[-1] == pytest.approx(0.5, abs=1e-12)
        assert_array_equal(path.regimes, 0)

    def test_same_seed_same_path(self, default_spec):
        policy = fraction_policy(GRID, 0.3, 3)
        first = simulate_chain(policy, default_spec, config(seed=11))
        second = simulate_chain(policy, default_spec, config(seed=11))
        assert_array_equal(first.incomes, second.incomes)
        assert_array_equal(first.regimes, second.regimes)

        other = simulate_chain(policy, default_spec, config(seed=12))
        assert not np.array_equal(first.incomes, other.incomes)

    def test_regime_frequencies_match_stationary_law(self, default_spec):
        path = simulate_chain(fraction_policy(GRID, 0.3, 3), default_spec, config(horizon=100_000, seed=3))
        distribution = empirical_distribution(path, burn_in=1000, n_bins=20, n_states=3)
        assert_allclose(distribution.regime_marginals, stationary_distribution(default_spec.chain), atol=0.02)

    def test_incomes_stay_non_negative(self, default_spec):
        path = simulate_chain(fraction_policy(GRID, 0.9, 3), default_spec, config(horizon=2000, seed=5))
        assert np.all(path.incomes >= 0)
        assert np.all(np.isfinite(path.incomes))
        assert set(np.unique(path.regimes)) <= {0, 1, 2}

    def test_starting_regime_out_of_range(self, default_spec):
        with pytest.raises(ConfigError) as info:
            simulate_chain(fraction_policy(GRID, 0.3, 3), default_spec, config(theta0=3))
        assert "simulation.theta0" in info.value.details

    def test_window(self):
        path = simulate_chain(fraction_policy(GRID, 0.5, 1), point_mass_spec(), config())
        tail = path.window(150)
        assert len(tail) == 50
        assert_array_equal(tail.incomes, path.incomes[150:])


@pytest.mark.parametrize("kwargs, field", [
    ({"horizon": 0}, "simulation.T"),
    ({"burn_in": 200}, "simulation.burn_in"),
    ({"seed": -1}, "simulation.seed"),
    ({"seed": 2 ** 64}, "simulation.seed"),
    ({"x0": 0.0}, "simulation.x0"),
])
def test_invalid_simulation_config(kwargs, field):
    with pytest.raises(ConfigError) as info:
        config(**kwargs)
    assert field in info.value.details


class TestReplicates:

    def test_replicates_are_reproducible_and_distinct(self, default_spec):
        policy = fraction_policy(GRID, 0.3, 3)
        first = simulate_replicates(policy, default_spec, config(horizon=500), 4, threads=1)
        second = simulate_replicates(policy, default_spec, config(horizon=500), 4, threads=4)
        assert len(first) == 4
        for a, b in zip(first, second):
            assert a.seed == b.seed
            assert_array_equal(a.incomes, b.incomes)
        assert len({path.seed for path in first}) == 4
        assert not np.array_equal(first[0].incomes, first[1].incomes)


class TestEmpiricalDistribution:

    def test_constant_path_fills_one_bin(self):
        path = simulate_chain(fraction_policy(GRID, 0.5, 1), point_mass_spec(), config(x0=0.5))
        distribution = empirical_distribution(path, burn_in=10, n_bins=10)
        assert distribution.counts.sum() == 190
        assert np.count_nonzero(distribution.counts) == 1
        assert_array_equal(distribution.regime_marginals, [1.0])
        assert distribution.histograms.sum() == pytest.approx(1.0)

    def test_empty_after_burn_in(self):
        path = SimulationPath(np.ones(5), np.zeros(5, dtype=np.int64), seed=0)
        with pytest.raises(EmptySample):
            empirical_distribution(path, burn_in=5, n_bins=4)

    def test_unvisited_regime_has_empty_histogram(self):
        path = SimulationPath(np.array([1.0, 2.0, 3.0]), np.array([0, 0, 0]), seed=0)
        distribution = empirical_distribution(path, burn_in=0, n_bins=3, n_states=2)
        assert_array_equal(distribution.regime_marginals, [1.0, 0.0])
        assert_array_equal(distribution.histograms[1], 0.0)

    def test_shared_edges(self):
        path = SimulationPath(np.linspace(0, 1, 11), np.zeros(11, dtype=np.int64), seed=0)
        distribution = empirical_distribution(path, 0, 5, bin_edges=[0.0, 0.5, 1.0])
        assert_array_equal(distribution.bin_edges, [0.0, 0.5, 1.0])
        assert distribution.counts.tolist() == [[5, 6]]


class TestTotalVariation:

    def test_identical(self):
        path = SimulationPath(np.linspace(0, 1, 11), np.zeros(11, dtype=np.int64), seed=0)
        d = empirical_distribution(path, 0, 4)
        assert total_variation(d, d) == 0.0

    def test_disjoint(self):
        edges = [0.0, 1.0, 2.0]
        a = empirical_distribution(SimulationPath(np.full(4, 0.5), np.zeros(4, dtype=np.int64), 0), 0, 2, bin_edges=edges)
        b = empirical_distribution(SimulationPath(np.full(4, 1.5), np.zeros(4, dtype=np.int64), 0), 0, 2, bin_edges=edges)
        assert total_variation(a, b) == pytest.approx(1.0)

    def test_partial_overlap(self):
        edges = [0.0, 1.0, 2.0]
        a = empirical_distribution(SimulationPath(np.array([0.5, 0.5, 1.5, 1.5]), np.zeros(4, dtype=np.int64), 0), 0, 2, bin_edges=edges)
        b = empirical_distribution(SimulationPath(np.array([0.5, 1.5, 1.5, 1.5]), np.zeros(4, dtype=np.int64), 0), 0, 2, bin_edges=edges)
        assert total_variation(a, b) == pytest.approx(0.25)


class TestLyapunov:

    def test_dominates_income(self, default_spec, coarse_solution):
        grid, V, policy, _ = coarse_solution
        for theta in range(3):
            W = lyapunov(V, policy, default_spec, grid.nodes, theta)
            finite = np.isfinite(W)
            assert np.all(W[finite] >= grid.nodes[finite])

    def test_infinite_without_consumption(self, default_spec):
        V = GriddedFunction(GRID, np.zeros((GRID.count, 3)))
        W = lyapunov(V, fraction_policy(GRID, 1.0, 3), default_spec, GRID.nodes, 0)
        assert np.all(np.isinf(W))

    def test_closed_form(self):
        spec = point_mass_spec(gamma=2.0)
        V = GriddedFunction(GRID, np.sqrt(GRID.nodes)[:, None])
        W = lyapunov(V, fraction_policy(GRID, 0.5, 1), spec, 2.0, 0)
        expected = math.sqrt(0.5 * 1.0 ** -0.5 * math.exp(-2.0 * math.sqrt(2.0))) + 2.0
        assert float(W) == pytest.approx(expected, rel=1e-12)

    def test_coercive(self, default_spec, log_grid_solution):
        grid, V, policy, _ = log_grid_solution
        for theta in range(3):
            W = lyapunov(V, policy, default_spec, grid.nodes[1:], theta)
            # large near zero income through u'(c), large at high income through x
            assert W[0] > W[grid.count // 2]
            assert W[-1] >= grid.x_max


class TestDriftCheck:

    def test_fit_is_consistent(self, default_spec, coarse_rule, coarse_solution):
        grid, V, policy, _ = coarse_solution
        report = drift_check(V, policy, default_spec, grid, coarse_rule, y_count=20)
        assert report.lambda_hat in LAMBDA_SCAN
        assert report.nodes

        W = np.array([node.lyapunov for node in report.nodes])
        E = np.array([node.expectation for node in report.nodes])
        finite = np.isfinite(W) & np.isfinite(E)
        assert report.kappa_hat == pytest.approx(max(0.0, np.max(E[finite] - report.lambda_hat * W[finite])))
        for node in report.nodes:
            assert node.bound == pytest.approx(report.lambda_hat * node.lyapunov + report.kappa_hat)
        if report.satisfied:
            assert all(node.expectation <= node.bound * (1 + 1e-12) + 1e-12 for node in report.nodes)
        assert report.worst_node in {(node.x, node.regime) for node in report.nodes}

    def test_point_mass_expectation_is_next_value(self):
        spec = point_mass_spec()
        V = GriddedFunction(GRID, concave_field(np.random.default_rng(0), GRID.nodes, 1))
        policy = fraction_policy(GRID, 0.5, 1)
        report = drift_check(V, policy, spec, GRID, QuadratureRule(), y_count=30)
        for node in report.nodes:
            following = lyapunov(V, policy, spec, math.sqrt(0.5 * node.x), 0)
            assert node.expectation == pytest.approx(float(following), rel=1e-12)

    def test_boundary_policy(self, default_spec, coarse_rule):
        V = GriddedFunction(GRID, np.zeros((GRID.count, 3)))
        with pytest.raises(BoundaryPolicy):
            drift_check(V, fraction_policy(GRID, 0.0, 3), default_spec, GRID, coarse_rule, y_count=20)

    def test_point_mass_takes_the_first_scanned_lambda(self):
        spec = point_mass_spec()
        V = GriddedFunction(GRID, concave_field(np.random.default_rng(1), GRID.nodes, 1))
        policy = fraction_policy(GRID, 0.5, 1)
        report = drift_check(V, policy, spec, GRID, QuadratureRule(), y_count=30)

        xs = np.array([node.x for node in report.nodes])
        W = lyapunov(V, policy, spec, xs, 0)
        following = lyapunov(V, policy, spec, np.sqrt(0.5 * xs), 0)
        assert report.lambda_hat == LAMBDA_SCAN[0] == 0.5
        assert report.kappa_hat == pytest.approx(max(0.0, float(np.max(following - 0.5 * W))), rel=1e-12)
        assert report.satisfied
