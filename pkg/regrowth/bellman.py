"""Value functions on an income grid and the risk-sensitive Bellman operator.

A field is stored as a ``(grid.count, n_states)`` matrix and read off-grid by
piecewise-linear interpolation, continued past the last node with the slope
of the last segment. The operator maximizes over ``y_count`` equi-spaced
investments in ``[0, x]`` at every node and regime.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import minimize_scalar

from core.errors import (
    ConfigError,
    GridMismatch,
    InfeasiblePolicy,
    InvalidValueTag,
    NonFiniteIntegrand,
    _raise_error,
)
from core.metrics import BELLMAN_SWEEPS, SWEEP_LATENCY, increment_counter, observe_histogram
from core.settings import settings
from regrowth.model import ModelSpec, production, utility, weight
from regrowth.shock import QuadratureRule, entropic_aggregate

logger = logging.getLogger(__name__)

__all__ = (
    "IncomeGrid",
    "GriddedFunction",
    "SolveReport",
    "StopRule",
    "w_norm_distance",
    "apply_bellman_operator",
    "solve_value_function",
    "evaluate_value",
    "evaluate_policy",
    "validate_value_field",
    "concave_majorant",
)

SHAPE_TOL = 1e-9


@dataclass(frozen=True)
class IncomeGrid:
    nodes: NDArray[np.float64]
    spacing: str = "linear"

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=np.float64)
        if nodes.ndim != 1 or nodes.size < 2:
            _raise_error(ConfigError, custom_error="income grid needs at least 2 nodes")
        if nodes[0] != 0 or np.any(np.diff(nodes) <= 0):
            _raise_error(ConfigError, custom_error="income grid must start at 0 and increase strictly")
        nodes.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def linear(cls, x_max: float, count: int) -> "IncomeGrid":
        return cls(np.linspace(0.0, x_max, count), spacing="linear")

    @classmethod
    def log_linear(cls, x_max: float, count: int, x_min: Optional[float] = None) -> "IncomeGrid":
        """Explicit 0 node followed by ``count - 1`` geometrically spaced nodes."""
        x_min = x_min if x_min is not None else x_max * 1e-3
        if not 0 < x_min < x_max or count < 3:
            _raise_error(ConfigError, custom_error="log-linear grid needs 0 < x_min < x_max and count >= 3")
        nodes = np.concatenate([[0.0], np.geomspace(x_min, x_max, count - 1)])
        return cls(nodes, spacing="log-linear")

    @property
    def count(self) -> int:
        return self.nodes.size

    @property
    def x_max(self) -> float:
        return float(self.nodes[-1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, IncomeGrid):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.nodes, other.nodes)

    def __hash__(self) -> int:
        return hash((self.spacing, self.nodes.tobytes()))


def _interpolate(x: ArrayLike, nodes: NDArray[np.float64], column: NDArray[np.float64]) -> NDArray[np.float64]:
    x = np.asarray(x, dtype=np.float64)
    out = np.interp(x, nodes, column)
    beyond = x > nodes[-1]
    if np.any(beyond):
        slope = (column[-1] - column[-2]) / (nodes[-1] - nodes[-2])
        out = np.where(beyond, column[-1] + slope * (x - nodes[-1]), out)
    return out


@dataclass(frozen=True)
class GriddedFunction:
    """Per-regime function of income; ``kind`` tags what it holds."""

    grid: IncomeGrid
    values: NDArray[np.float64]
    kind: str = "value"

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != self.grid.count:
            _raise_error(GridMismatch, custom_error=f"{values.shape[0]} rows for a {self.grid.count}-node grid")
        if not np.all(np.isfinite(values)):
            _raise_error(NonFiniteIntegrand, custom_error=f"{self.kind} field has non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def n_states(self) -> int:
        return self.values.shape[1]

    def column(self, theta: int) -> NDArray[np.float64]:
        return self.values[:, theta]

    def evaluate(self, x: ArrayLike, theta: Union[int, ArrayLike]) -> NDArray[np.float64]:
        if np.ndim(theta) == 0:
            return _interpolate(x, self.grid.nodes, self.values[:, int(theta)])

        x, theta = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(theta))
        out = np.empty(x.shape)
        for state in np.unique(theta):
            mask = theta == state
            out[mask] = _interpolate(x[mask], self.grid.nodes, self.values[:, int(state)])
        return out

    def with_values(self, values: ArrayLike, kind: Optional[str] = None) -> "GriddedFunction":
        return GriddedFunction(self.grid, values, kind or self.kind)


@dataclass
class SolveReport:
    iterations: int = 0
    sup_w_deltas: List[float] = field(default_factory=list)
    converged: bool = False
    ratios: List[float] = field(default_factory=list)


@dataclass(frozen=True)
class StopRule:
    max_iters: int = 500
    tol_w: float = 1e-8

    def __post_init__(self):
        if self.max_iters < 1:
            _raise_error(ConfigError, custom_error="max_iters must be at least 1")
        if self.tol_w < 0:
            _raise_error(ConfigError, custom_error="tol_w must be non-negative")


def evaluate_value(V: GriddedFunction, x: ArrayLike, theta: Union[int, ArrayLike]) -> NDArray[np.float64]:
    return V.evaluate(x, theta)


def _slopes(grid: IncomeGrid, values: NDArray[np.float64]) -> NDArray[np.float64]:
    return np.diff(values, axis=0) / np.diff(grid.nodes)[:, None]


def validate_value_field(V: GriddedFunction, concavity: bool = True, tol: float = SHAPE_TOL) -> None:
    """Raise InvalidValueTag unless V is non-negative, non-decreasing and (optionally) concave."""
    errors = {}
    values = V.values
    scale = 1.0 + np.abs(values).max()

    if np.any(values < -tol * scale):
        errors["negative"] = [f"min value {values.min():.6g}"]
    if np.any(np.diff(values, axis=0) < -tol * scale):
        errors["decreasing"] = [f"largest drop {-np.diff(values, axis=0).max():.6g}"]
    if concavity and V.grid.count > 2:
        slopes = _slopes(V.grid, values)
        increase = np.diff(slopes, axis=0) - tol * (1.0 + np.abs(slopes[:-1]))
        if np.any(increase > 0):
            node, state = np.unravel_index(np.argmax(increase), increase.shape)
            errors["concave"] = [f"slope increases at node {node + 1}, regime {state + 1}"]

    if errors:
        _raise_error(InvalidValueTag, error_details=errors)


def concave_majorant(nodes: NDArray[np.float64], column: NDArray[np.float64]) -> NDArray[np.float64]:
    """Least concave majorant of nodal data, read back on the nodes (upper hull)."""
    hull: List[int] = []
    for i in range(nodes.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (nodes[b] - nodes[a]) * (column[i] - column[a]) - (column[b] - column[a]) * (nodes[i] - nodes[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)

    out = np.interp(nodes, nodes[hull], column[hull])
    out[hull] = column[hull]
    return out


def w_norm_distance(a: GriddedFunction, b: GriddedFunction, spec: ModelSpec) -> float:
    if a.grid != b.grid or a.values.shape != b.values.shape:
        _raise_error(GridMismatch)
    w = weight(spec, a.grid.nodes)[:, None]
    return float(np.max(np.abs(a.values - b.values) / w))


def _joint_weights(spec: ModelSpec, theta: int, q: NDArray[np.float64]) -> NDArray[np.float64]:
    return (spec.chain.row(theta)[:, None] * q[None, :]).ravel()


def _next_values(
    field_: GriddedFunction,
    spec: ModelSpec,
    theta: int,
    y: NDArray[np.float64],
    z: NDArray[np.float64],
) -> NDArray[np.float64]:
    """``field_`` at next income f(theta, y, z) for every next regime.

    Shape ``y.shape + (n_states * z.size,)``, next regime major.
    """
    incomes = production(spec, theta, np.asarray(y)[..., None], z)
    return np.concatenate([field_.evaluate(incomes, nxt) for nxt in range(spec.n_states)], axis=-1)


def _objective(
    V: GriddedFunction,
    spec: ModelSpec,
    theta: int,
    x: NDArray[np.float64],
    y: NDArray[np.float64],
    z: NDArray[np.float64],
    weights: NDArray[np.float64],
) -> NDArray[np.float64]:
    continuation = entropic_aggregate(_next_values(V, spec, theta, y, z), weights, spec.gamma)
    return utility(spec, np.maximum(x - y, 0.0)) + spec.beta * continuation


def _refine(
    V: GriddedFunction,
    spec: ModelSpec,
    theta: int,
    x: float,
    lo: float,
    hi: float,
    best_y: float,
    best: float,
    z: NDArray[np.float64],
    weights: NDArray[np.float64],
) -> Tuple[float, float]:
    def negated(y: float) -> float:
        return -float(_objective(V, spec, theta, np.array(x), np.array(y), z, weights))

    result = minimize_scalar(negated, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10 * max(x, 1.0)})
    if result.success and -result.fun > best:
        return float(result.x), float(-result.fun)
    return best_y, best


def _sweep_regime(
    V: GriddedFunction,
    spec: ModelSpec,
    theta: int,
    y_count: int,
    rule: QuadratureRule,
    refine: bool,
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    x = V.grid.nodes
    y = x[:, None] * np.linspace(0.0, 1.0, y_count)[None, :]
    z, q = rule.probabilities(spec.shock)
    weights = _joint_weights(spec, theta, q)

    objective = _objective(V, spec, theta, x[:, None], y, z, weights)
    # argmax returns the first maximizer, i.e. the smallest y on ties
    best_index = np.argmax(objective, axis=1)
    rows = np.arange(x.size)
    best = objective[rows, best_index]
    best_y = y[rows, best_index]

    if refine:
        for i in range(1, x.size):
            j = best_index[i]
            lo = y[i, max(j - 1, 0)]
            hi = y[i, min(j + 1, y_count - 1)]
            best_y[i], best[i] = _refine(V, spec, theta, x[i], lo, hi, best_y[i], best[i], z, weights)

    return best, best_y


def apply_bellman_operator(
    V: GriddedFunction,
    spec: ModelSpec,
    y_count: int,
    rule: QuadratureRule,
    refine: bool = False,
    concave_projection: bool = True,
    threads: Optional[int] = None,
) -> Tuple[GriddedFunction, GriddedFunction]:
    """One application of L; returns (LV, argmax policy)."""
    if y_count < 2:
        _raise_error(ConfigError, custom_error="y_count must be at least 2")
    if V.n_states != spec.n_states:
        _raise_error(GridMismatch, custom_error=f"field has {V.n_states} regimes, model has {spec.n_states}")
    validate_value_field(V, concavity=concave_projection)

    start_time = time.time()
    workers = max(1, min(threads or settings.REGROWTH_THREADS, spec.n_states))

    if workers == 1:
        results = [_sweep_regime(V, spec, theta, y_count, rule, refine) for theta in range(spec.n_states)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(
                lambda theta: _sweep_regime(V, spec, theta, y_count, rule, refine),
                range(spec.n_states),
            ))

    values = np.column_stack([best for best, _ in results])
    policy = np.column_stack([best_y for _, best_y in results])

    if concave_projection:
        nodes = V.grid.nodes
        values = np.column_stack([concave_majorant(nodes, values[:, s]) for s in range(spec.n_states)])

    increment_counter(BELLMAN_SWEEPS, n_states=spec.n_states)
    observe_histogram(SWEEP_LATENCY, time.time() - start_time, n_states=spec.n_states)

    return (
        GriddedFunction(V.grid, values, kind="value"),
        GriddedFunction(V.grid, policy, kind="policy"),
    )


def solve_value_function(
    spec: ModelSpec,
    grid: IncomeGrid,
    y_count: int,
    rule: QuadratureRule,
    stop: StopRule,
    refine: bool = False,
    concave_projection: bool = True,
    threads: Optional[int] = None,
) -> Tuple[GriddedFunction, GriddedFunction, SolveReport]:
    """Value iteration from the zero function."""
    V = GriddedFunction(grid, np.zeros((grid.count, spec.n_states)), kind="value")
    policy = None
    report = SolveReport()

    for k in range(1, stop.max_iters + 1):
        V_next, policy = apply_bellman_operator(V, spec, y_count, rule, refine, concave_projection, threads)
        delta = w_norm_distance(V_next, V, spec)

        if report.sup_w_deltas and report.sup_w_deltas[-1] > 0:
            report.ratios.append(delta / report.sup_w_deltas[-1])
        report.sup_w_deltas.append(delta)
        report.iterations = k
        V = V_next

        logger.debug(f"Bellman sweep {k}: delta_w={delta:.3e}", extra={"iteration": k, "delta_w": delta})

        if delta <= stop.tol_w:
            report.converged = True
            break

    logger.info(
        f"Value iteration stopped after {report.iterations} sweeps (converged={report.converged})",
        extra={"iterations": report.iterations, "converged": report.converged},
    )
    return V, policy, report


def evaluate_policy(
    phi: GriddedFunction,
    spec: ModelSpec,
    grid: IncomeGrid,
    rule: QuadratureRule,
    T: int,
) -> GriddedFunction:
    """T-stage risk-sensitive value J_T of the stationary policy ``phi``."""
    if T < 1:
        _raise_error(ConfigError, custom_error="T must be at least 1")
    if phi.grid != grid or phi.n_states != spec.n_states:
        _raise_error(GridMismatch)

    x = grid.nodes[:, None]
    slack = 1e-12 * (1.0 + x)
    if np.any(phi.values < -slack) or np.any(phi.values > x + slack):
        _raise_error(InfeasiblePolicy)

    invest = np.clip(phi.values, 0.0, x)
    reward = utility(spec, x - invest)
    J = GriddedFunction(grid, reward, kind="stage_value")
    z, q = rule.probabilities(spec.shock)

    for _ in range(T - 1):
        values = np.empty_like(reward)
        for theta in range(spec.n_states):
            nxt = _next_values(J, spec, theta, invest[:, theta], z)
            values[:, theta] = reward[:, theta] + spec.beta * entropic_aggregate(
                nxt, _joint_weights(spec, theta, q), spec.gamma
            )
        J = GriddedFunction(grid, values, kind="stage_value")

    return J
