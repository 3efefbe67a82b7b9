"""Simulation of the optimally controlled (income, regime) chain and drift checks."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from core.errors import BoundaryPolicy, ConfigError, EmptySample, _raise_error
from core.metrics import SIMULATED_STEPS, increment_counter
from core.settings import settings
from regrowth.bellman import GriddedFunction, IncomeGrid
from regrowth.euler import near_boundary
from regrowth.model import ModelSpec, production, utility_derivative
from regrowth.shock import QuadratureRule, inverse_cdf

logger = logging.getLogger(__name__)

__all__ = (
    "SimulationConfig",
    "SimulationPath",
    "EmpiricalDistribution",
    "DriftReport",
    "simulate_chain",
    "simulate_replicates",
    "empirical_distribution",
    "total_variation",
    "lyapunov",
    "drift_check",
    "LAMBDA_SCAN",
)

# uniforms are kept off {0, 1} before the quantile transform
UNIFORM_CLAMP = 1e-12

LAMBDA_SCAN = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95)


@dataclass(frozen=True)
class SimulationConfig:
    horizon: int
    burn_in: int
    seed: int
    x0: float
    theta0: int

    def __post_init__(self):
        errors = {}
        if self.horizon < 1:
            errors["simulation.T"] = ["must be positive"]
        if not 0 <= self.burn_in < self.horizon:
            errors["simulation.burn_in"] = ["must lie in [0, T)"]
        if not 0 <= self.seed < 2 ** 64:
            errors["simulation.seed"] = ["must be a 64-bit unsigned integer"]
        if not self.x0 > 0:
            errors["simulation.x0"] = ["must be positive"]
        if errors:
            _raise_error(ConfigError, error_details=errors)


@dataclass(frozen=True)
class SimulationPath:
    incomes: NDArray[np.float64]
    regimes: NDArray[np.int64]
    seed: int

    def __len__(self) -> int:
        return self.incomes.size

    def window(self, start: int, stop: Optional[int] = None) -> "SimulationPath":
        return SimulationPath(self.incomes[start:stop], self.regimes[start:stop], self.seed)


@dataclass(frozen=True)
class EmpiricalDistribution:
    bin_edges: NDArray[np.float64]
    counts: NDArray[np.int64]
    regime_marginals: NDArray[np.float64]

    @property
    def joint(self) -> NDArray[np.float64]:
        return self.counts / self.counts.sum()

    @property
    def histograms(self) -> NDArray[np.float64]:
        """Per-regime income histogram, each row summing to 1 (0 if never visited)."""
        totals = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, totals, out=np.zeros(self.counts.shape), where=totals > 0)


@dataclass(frozen=True)
class DriftNode:
    x: float
    regime: int
    lyapunov: float
    expectation: float
    bound: float


@dataclass
class DriftReport:
    lambda_hat: float
    kappa_hat: float
    satisfied: bool
    worst_node: Tuple[float, int]
    nodes: List[DriftNode] = field(default_factory=list)


def _regime_streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator]:
    """Stream 0 drives regime transitions, stream 1 drives shocks."""
    regime_seq, shock_seq = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(regime_seq), np.random.default_rng(shock_seq)


def simulate_chain(policy: GriddedFunction, spec: ModelSpec, config: SimulationConfig) -> SimulationPath:
    if not 0 <= config.theta0 < spec.n_states:
        _raise_error(ConfigError, error_details={"simulation.theta0": [f"must lie in 1..{spec.n_states}"]})

    steps = config.horizon - 1
    regime_rng, shock_rng = _regime_streams(config.seed)
    transitions = regime_rng.random(steps)
    levels = np.clip(shock_rng.random(steps), UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP)
    shocks = np.atleast_1d(inverse_cdf(spec.shock, levels)) if steps else np.empty(0)

    cumulative = np.cumsum(spec.chain.transition, axis=1)
    nodes = policy.grid.nodes
    columns = [policy.column(s) for s in range(spec.n_states)]
    last_slopes = [(c[-1] - c[-2]) / (nodes[-1] - nodes[-2]) for c in columns]
    omega = spec.omega

    incomes = np.empty(config.horizon)
    regimes = np.empty(config.horizon, dtype=np.int64)
    x, theta = float(config.x0), int(config.theta0)
    incomes[0], regimes[0] = x, theta

    for k in range(steps):
        if x > nodes[-1]:
            invest = columns[theta][-1] + last_slopes[theta] * (x - nodes[-1])
        else:
            invest = float(np.interp(x, nodes, columns[theta]))
        invest = min(max(invest, 0.0), x)
        x = invest ** omega[theta] * shocks[k]
        theta = min(int(np.searchsorted(cumulative[theta], transitions[k], side="right")), spec.n_states - 1)
        incomes[k + 1], regimes[k + 1] = x, theta

    increment_counter(SIMULATED_STEPS, steps)
    return SimulationPath(incomes, regimes, config.seed)


def simulate_replicates(
    policy: GriddedFunction,
    spec: ModelSpec,
    config: SimulationConfig,
    n: int,
    threads: Optional[int] = None,
) -> List[SimulationPath]:
    """Independent paths; replicate seeds are drawn from ``config.seed``."""
    seeds = np.random.SeedSequence(config.seed).generate_state(n, dtype=np.uint64)
    configs = [
        SimulationConfig(config.horizon, config.burn_in, int(seed), config.x0, config.theta0)
        for seed in seeds
    ]
    workers = max(1, min(threads or settings.REGROWTH_THREADS, n))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: simulate_chain(policy, spec, c), configs))


def empirical_distribution(
    path: SimulationPath,
    burn_in: int,
    n_bins: int,
    n_states: Optional[int] = None,
    bin_edges: Optional[ArrayLike] = None,
) -> EmpiricalDistribution:
    if len(path) <= burn_in:
        _raise_error(EmptySample)

    incomes = path.incomes[burn_in:]
    regimes = path.regimes[burn_in:]
    n_states = n_states or int(regimes.max()) + 1
    edges = np.histogram_bin_edges(incomes, bins=n_bins) if bin_edges is None else np.asarray(bin_edges)

    counts = np.stack([
        np.histogram(incomes[regimes == s], bins=edges)[0] for s in range(n_states)
    ])
    marginals = np.bincount(regimes, minlength=n_states) / regimes.size
    return EmpiricalDistribution(edges, counts, marginals)


def total_variation(a: EmpiricalDistribution, b: EmpiricalDistribution) -> float:
    return 0.5 * float(np.abs(a.joint - b.joint).sum())


def lyapunov(
    V: GriddedFunction,
    policy: GriddedFunction,
    spec: ModelSpec,
    x: ArrayLike,
    theta: ArrayLike,
) -> NDArray[np.float64]:
    """W(x, theta) = sqrt(u'(c*) exp(-gamma V)) + x; +inf where c* vanishes."""
    x = np.asarray(x, dtype=np.float64)
    consumption = x - policy.evaluate(x, theta)
    out = np.full(np.broadcast(x, np.asarray(theta)).shape, np.inf)
    positive = consumption > 0
    if np.any(positive):
        marginal = utility_derivative(spec, consumption[positive])
        value = V.evaluate(x, theta)[positive]
        out[positive] = np.sqrt(marginal * np.exp(-spec.gamma * value)) + np.broadcast_to(x, out.shape)[positive]
    return out


def drift_check(
    V: GriddedFunction,
    policy: GriddedFunction,
    spec: ModelSpec,
    grid: IncomeGrid,
    rule: QuadratureRule,
    y_count: Optional[int] = None,
) -> DriftReport:
    """Fit E[W(next)] <= lambda W + kappa over the interior-policy nodes."""
    z, q = rule.probabilities(spec.shock)
    xs, thetas, ws, expectations = [], [], [], []

    for theta in range(spec.n_states):
        row = spec.chain.row(theta)
        for i in range(1, grid.count):
            x = float(grid.nodes[i])
            y = float(policy.values[i, theta])
            if near_boundary(x, y, y_count):
                continue
            incomes = production(spec, theta, y, z)
            following = np.column_stack([lyapunov(V, policy, spec, incomes, nxt) for nxt in range(spec.n_states)])
            weights = q[:, None] * row[None, :]
            expected = float(np.sum(np.where(weights > 0, weights * following, 0.0)))
            xs.append(x)
            thetas.append(theta)
            ws.append(float(lyapunov(V, policy, spec, x, theta)))
            expectations.append(expected)

    if not xs:
        _raise_error(BoundaryPolicy, custom_error="no node with an interior policy to test")

    W = np.array(ws)
    E = np.array(expectations)
    finite = np.isfinite(W) & np.isfinite(E)

    # first lambda in the scan whose fitted kappa leaves a non-negative margin
    lam, kappa = LAMBDA_SCAN[-1], np.inf
    if finite.any():
        for candidate in LAMBDA_SCAN:
            fitted = max(0.0, float(np.max(E[finite] - candidate * W[finite])))
            slack = candidate * W[finite] + fitted - E[finite]
            if np.isfinite(fitted) and np.all(slack >= -1e-12 * (1 + np.abs(E[finite]))):
                lam, kappa = candidate, fitted
                break

    bound = lam * W + kappa
    margin = np.where(finite, bound - E, -np.inf)
    worst = int(np.argmin(margin))
    satisfied = bool(lam < 1 and np.isfinite(kappa) and finite.all() and np.all(margin >= -1e-12 * (1 + np.abs(E))))

    report = DriftReport(
        lambda_hat=lam,
        kappa_hat=kappa,
        satisfied=satisfied,
        worst_node=(xs[worst], thetas[worst]),
        nodes=[DriftNode(x, s, w, e, b) for x, s, w, e, b in zip(xs, thetas, W, E, bound)],
    )
    logger.info(
        f"Drift fit lambda={lam:.2f} kappa={kappa:.4g} satisfied={satisfied}",
        extra={"lambda_hat": lam, "kappa_hat": kappa, "satisfied": satisfied},
    )
    return report
